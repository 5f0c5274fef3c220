//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so the verdicts always print. The process fails
//! when the set of red criteria differs from `KNOWN_RED`, so a criterion can
//! neither silently regress nor silently recover.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gridstorm::cascade::{overloaded, run_cascade};
use gridstorm::experiments::{
    run_experiment, run_sweep, summarize, ExperimentConfig, Scenario, SummaryRow, SweepParam,
};
use gridstorm::fixtures::{triangle, two_bus};
use gridstorm::model::synthetic::{random_grid, SyntheticSpec};
use gridstorm::model::{BranchId, BusId, GridCase};
use gridstorm::planner::{plan_bl, pma, random_baseline, Simulation};
use gridstorm::powerflow::{sensitivities, solve_state};
use gridstorm::pricing::{mcb, AttackVector, Tariff, OVERLOAD_MARGIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PHYSICS_GRIDS: usize = 200;
const PHYSICS_RESIDUAL: f64 = 1e-9;
const PHYSICS_TIME: Duration = Duration::from_secs(5);
const SENSITIVITY_TOL: f64 = 1e-6;
const SENSITIVITY_TIME: Duration = Duration::from_secs(1);
const CASCADE_TIME: Duration = Duration::from_secs(1);
const MCB_CLOSED_FORM: f64 = 1.0 / 3.0;
const MCB_CLOSED_FORM_TOL: f64 = 1e-3;
const MCB_CASES: usize = 50;
const MCB_GRID_STEP: f64 = 1e-3;
const MCB_ORACLE_SLACK: f64 = 1e-2;
const MCB_TIME: Duration = Duration::from_secs(30);
const BL_BUDGETS: usize = 10;
const BL_LEVELS: usize = 21;
const BL_TIME: Duration = Duration::from_secs(30);
const DOMINANCE_RUNS: usize = 50;
const SWEEP_TIME: Duration = Duration::from_secs(60);

/// Criteria that cannot hold under this model; the reasons are in the README.
const KNOWN_RED: &[u8] = &[7];

struct Verdict {
    id: u8,
    pass: bool,
    detail: String,
}

fn verdict(id: u8, pass: bool, detail: String) -> Verdict {
    Verdict { id, pass, detail }
}

fn physics() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_k, mut worst_a) = (0.0f64, 0.0f64);
    for _ in 0..PHYSICS_GRIDS {
        let n = rng.random_range(4..=32);
        let gens = rng.random_range(1..=(n / 3).max(1));
        let loads = rng.random_range(1..=n - gens);
        let g: GridCase<f64> = random_grid(&mut rng, SyntheticSpec::new(n, gens, loads));
        let s = solve_state(&g, &g.nominal_demands(), &[]).expect("connected grid solves");
        worst_k = worst_k.max(s.flows.kirchhoff_residual(&g));
        worst_a = worst_a.max(s.flows.angle_residual(&g));
    }
    let t = start.elapsed();
    verdict(
        1,
        worst_k <= PHYSICS_RESIDUAL && worst_a <= PHYSICS_RESIDUAL && t < PHYSICS_TIME,
        format!("{PHYSICS_GRIDS} grids, kirchhoff {worst_k:.1e}, angle {worst_a:.1e}, {t:.2?}"),
    )
}

fn sensitivity() -> Verdict {
    let sc = Scenario::from_config(&ExperimentConfig::default()).unwrap();
    let start = Instant::now();
    let g = &sc.composed.merged;
    let demand = g.nominal_demands();
    let sens = sensitivities(g, &demand, &[]).unwrap();
    let mut worst = 0.0f64;
    let mut entries = 0;
    for &load in &sens.loads {
        let h = 1e-4 * demand[&load].max(1.0);
        let flows_at = |d: f64| {
            let mut dm = demand.clone();
            *dm.get_mut(&load).unwrap() += d;
            solve_state(g, &dm, &[]).unwrap().flows.flows
        };
        let (up, down) = (flows_at(h), flows_at(-h));
        for &br in &sens.branches {
            let p = g.branch_position(br).unwrap();
            let fd = (up[p] - down[p]) / (2.0 * h);
            worst = worst.max((fd - sens.get(br, load).unwrap()).abs());
            entries += 1;
        }
    }
    let t = start.elapsed();
    verdict(
        2,
        worst <= SENSITIVITY_TOL && t < SENSITIVITY_TIME,
        format!("{entries} entries, max |Δ| {worst:.1e}, {t:.2?}"),
    )
}

fn cascade() -> Verdict {
    let start = Instant::now();
    let g = triangle::<f64>([Some(0.9), Some(1.5), Some(1.0)]);
    let one = run_cascade(&g, &g.nominal_demands(), 1.0).unwrap();
    let half = run_cascade(&g, &g.nominal_demands(), 0.5).unwrap();
    let first = |o: &gridstorm::Outcome| o.steps.iter().find(|s| !s.failed.is_empty()).map(|s| s.step);
    let ends = |o: &gridstorm::Outcome| -> Vec<(u32, u32)> {
        o.s1.iter().map(|id| g.branch(*id).map(|b| (b.from.0, b.to.0)).unwrap()).collect()
    };
    let t = start.elapsed();
    let exact = ends(&one) == vec![(1, 2), (1, 3)]
        && one.s2 == [BusId(2), BusId(3)].into_iter().collect()
        && one.steps.len() == 3;
    let delayed = matches!((first(&one), first(&half)), (Some(a), Some(b)) if b > a);
    verdict(
        3,
        exact && delayed && t < CASCADE_TIME,
        format!(
            "S1 {:?}, S2 {:?}, {} steps; first failure α=1 step {:?}, α=0.5 step {:?}, {t:.2?}",
            ends(&one),
            one.s2.iter().map(|b| b.0).collect::<Vec<_>>(),
            one.steps.len(),
            first(&one),
            first(&half)
        ),
    )
}

/// Cheapest attack on the grid `{0, step, …, 1}` for the leading loads, with
/// the last load set to the smallest grid value that reaches the threshold.
/// Line response per load comes from finite differences of the true solve.
fn grid_search_mcb(g: &GridCase<f64>, line: BranchId, tariff: &Tariff<f64>) -> Option<f64> {
    let pos = g.branch_position(line).unwrap();
    let demand = g.nominal_demands();
    let f0 = solve_state(g, &demand, &[]).unwrap().flows.flows[pos];
    let loads: Vec<BusId> = tariff.loads.keys().copied().collect();
    let slopes: Vec<f64> = loads
        .iter()
        .map(|b| {
            let mut d = demand.clone();
            *d.get_mut(b).unwrap() += 1e-3;
            (solve_state(g, &d, &[]).unwrap().flows.flows[pos] - f0) / 1e-3
        })
        .collect();
    let threshold = g.branches[pos].limit() * (1.0 + OVERLOAD_MARGIN);
    let steps = (1.0 / MCB_GRID_STEP).round() as usize;
    let t: Vec<_> = loads.iter().map(|b| tariff.loads[b]).collect();
    let gain = |i: usize, z: f64| {
        slopes[i]
            * ((1.0 + t[i].sensitivity) * t[i].bill_target / (t[i].rate - z * t[i].max_rate_change) - demand[&loads[i]])
    };
    let last = loads.len() - 1;

    let mut best: Option<f64> = None;
    let lead = last;
    let combos = (steps + 1).pow(lead as u32);
    for code in 0..combos {
        let mut rest = code;
        let mut cost = 0.0;
        let mut flow = f0;
        for (i, ti) in t.iter().enumerate().take(lead) {
            let z = (rest % (steps + 1)) as f64 * MCB_GRID_STEP;
            rest /= steps + 1;
            cost += ti.cost_weight * z;
            flow += gain(i, z);
        }
        for sign in [1.0, -1.0] {
            let need = threshold - sign * flow;
            let z = if need <= 0.0 {
                0.0
            } else {
                let s = sign * slopes[last];
                if s <= 0.0 {
                    continue;
                }
                let lt = &t[last];
                let target = demand[&loads[last]] + need / s;
                let exact = (lt.rate - (1.0 + lt.sensitivity) * lt.bill_target / target) / lt.max_rate_change;
                let mut k = (exact.max(0.0) / MCB_GRID_STEP - 1e-9).ceil() as usize;
                while k <= steps && sign * (flow + gain(last, k as f64 * MCB_GRID_STEP)) < threshold {
                    k += 1;
                }
                if k > steps {
                    continue;
                }
                k as f64 * MCB_GRID_STEP
            };
            let total = cost + t[last].cost_weight * z;
            if best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
    }
    best
}

fn mcb_exactness() -> Verdict {
    let start = Instant::now();
    let g2 = two_bus::<f64>(Some(1.2));
    let closed = mcb(BranchId(1), &g2, &AttackVector::zero(), &[], &Tariff::defaults(&g2)).unwrap();
    let closed_ok = closed.feasible && (closed.cost - MCB_CLOSED_FORM).abs() <= MCB_CLOSED_FORM_TOL;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut cases, mut feasible, mut bad) = (0, 0, Vec::new());
    let mut worst_gap = f64::NEG_INFINITY;
    while cases < MCB_CASES {
        let gens = rng.random_range(1..=2);
        let loads = rng.random_range(1..=3);
        let mut g: GridCase<f64> = random_grid(&mut rng, SyntheticSpec::new(5, gens, loads));
        let base = solve_state(&g, &g.nominal_demands(), &[]).unwrap();
        let pos = rng.random_range(0..g.branches.len());
        let f0 = base.flows.flows[pos].abs();
        if f0 < 1e-3 {
            continue;
        }
        g.branches[pos].capacity = Some(f0 * rng.random_range(1.05..1.9));
        let mut tariff = Tariff::defaults(&g);
        for lt in tariff.loads.values_mut() {
            lt.max_rate_change = rng.random_range(0.3..0.6);
            lt.cost_weight = rng.random_range(0.5..2.0);
        }
        cases += 1;
        let line = g.branches[pos].id;
        let got = mcb(line, &g, &AttackVector::zero(), &[], &tariff).unwrap();
        let oracle = grid_search_mcb(&g, line, &tariff);
        match (oracle, got.feasible) {
            (None, false) => {}
            (Some(o), true) => {
                feasible += 1;
                worst_gap = worst_gap.max(got.cost - o);
                let f = solve_state(&g, &tariff.demands(&got.z), &[]).unwrap().flows.flows[pos];
                if got.cost > o + MCB_ORACLE_SLACK || f.abs() <= g.branches[pos].limit() {
                    bad.push(cases);
                }
            }
            (Some(_), false) => bad.push(cases),
            // The grid oracle may miss a sliver of the feasible set near z = 1.
            (None, true) => {
                let f = solve_state(&g, &tariff.demands(&got.z), &[]).unwrap().flows.flows[pos];
                if f.abs() <= g.branches[pos].limit() {
                    bad.push(cases);
                }
            }
        }
    }
    let t = start.elapsed();
    verdict(
        4,
        closed_ok && bad.is_empty() && t < MCB_TIME,
        format!(
            "2-bus cost {:.4}; {cases} cases, {feasible} feasible, worst cost − oracle {worst_gap:.2e}, mismatches {bad:?}, {t:.2?}",
            closed.cost
        ),
    )
}

fn bl_exactness() -> Verdict {
    let sc = Scenario::from_config(&ExperimentConfig::default()).unwrap();
    let start = Instant::now();
    let mut sim = Simulation::new(&sc.composed, &sc.ctx, 100.0).unwrap();
    for tie in &sc.composed.microgrid(1).unwrap().tie_lines {
        sim.grid.kill_branch(*tie).unwrap();
    }
    sim.settle().unwrap();
    let spec = sc.composed.microgrid(1).unwrap();
    let loads = sim.live_loads(1);
    let lines: Vec<usize> = (0..sim.grid.branches.len())
        .filter(|&p| {
            let b = &sim.grid.branches[p];
            b.alive && spec.member_buses.contains(&b.from) && spec.member_buses.contains(&b.to)
        })
        .collect();

    // Every level combination, solved exactly: (cost, overload count).
    let levels = BL_LEVELS - 1;
    let mut table = Vec::new();
    let mut pick = vec![0usize; loads.len()];
    loop {
        let mut z = AttackVector::zero();
        let mut cost = 0.0;
        for (b, &k) in loads.iter().zip(&pick) {
            let v = k as f64 / levels as f64;
            z.set(*b, v);
            cost += sc.ctx.tariff.loads[b].cost_weight * v;
        }
        let s = solve_state(&sim.grid, &sc.ctx.tariff.demands(&z), &[]).unwrap();
        let count = lines.iter().filter(|&&p| overloaded(s.flows.flows[p], sim.grid.branches[p].limit())).count();
        table.push((cost, count));
        let mut i = 0;
        while i < pick.len() && pick[i] == levels {
            pick[i] = 0;
            i += 1;
        }
        if i == pick.len() {
            break;
        }
        pick[i] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut results = Vec::new();
    let mut ok = true;
    for _ in 0..BL_BUDGETS {
        let budget: f64 = rng.random_range(0.0..3.0);
        let best = table.iter().filter(|(c, _)| *c <= budget + 1e-12).map(|(_, n)| *n).max().unwrap_or(0);
        let got = plan_bl(&sim, 1, budget).unwrap();
        ok &= got.overloaded.len() == best && got.cost <= budget + 1e-12;
        results.push(format!("{budget:.2}:{}/{best}", got.overloaded.len()));
    }
    let t = start.elapsed();
    verdict(
        5,
        ok && t < BL_TIME,
        format!("{} loads, {} states; budget:bl/oracle {}, {t:.2?}", loads.len(), table.len(), results.join(" ")),
    )
}

fn end_to_end() -> Verdict {
    let cfg = ExperimentConfig::default();
    let sc = Scenario::from_config(&cfg).unwrap();
    let plan = pma(&sc.composed, sc.budget, &sc.ctx).unwrap();
    let zero = Scenario::at(&cfg, SweepParam::Resource, 0.0).unwrap();
    let idle = [
        pma(&zero.composed, zero.budget, &zero.ctx).unwrap(),
        random_baseline(&zero.composed, zero.budget, &zero.ctx, 1).unwrap(),
    ];
    let quiet =
        idle.iter().all(|p| p.s1.is_empty() && p.s2.is_empty() && p.s3.is_empty() && p.total_node_failures == 0);
    verdict(
        6,
        !plan.s2.is_empty() && !plan.s3.is_empty() && quiet,
        format!(
            "defaults: islanded {}, microgrid node failures {}, total {}; resource 0 all zero: {quiet}",
            plan.s2.len(),
            plan.s3.len(),
            plan.total_node_failures
        ),
    )
}

/// Default sweeps with 50 random runs, computed once.
fn summaries() -> &'static BTreeMap<SweepParam, Vec<SummaryRow>> {
    static CELL: OnceLock<BTreeMap<SweepParam, Vec<SummaryRow>>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ExperimentConfig { runs: DOMINANCE_RUNS, ..ExperimentConfig::default() };
        SweepParam::ALL.iter().map(|&p| (p, summarize(&run_sweep(&cfg, p, &p.default_values()).unwrap()))).collect()
    })
}

const METRIC_NAMES: [&str; 3] = ["total", "islanded", "mg-nodes"];

fn metrics(r: &SummaryRow) -> [f64; 3] {
    [r.mean_total_node_failures, r.mean_microgrids_islanded, r.mean_microgrid_node_failures]
}

fn dominance() -> Verdict {
    let mut misses = Vec::new();
    let mut points = 0;
    for (param, rows) in summaries() {
        for pair in rows.chunks(2) {
            let (p, r) = (&pair[0], &pair[1]);
            assert_eq!((p.algorithm.as_str(), r.algorithm.as_str()), ("pma", "random"));
            points += 1;
            for (k, (a, b)) in metrics(p).iter().zip(metrics(r)).enumerate() {
                if b > *a {
                    misses.push(format!("{}={} {} {b:.2}>{a:.2}", param.as_str(), p.value, METRIC_NAMES[k]));
                }
            }
        }
    }
    let cap = &summaries()[&SweepParam::Capacity];
    let default = cap.chunks(2).find(|c| (c[0].value - 0.6).abs() < 1e-12).unwrap();
    let strict = default[1].mean_microgrids_islanded < default[0].mean_microgrids_islanded;
    verdict(
        7,
        misses.is_empty() && strict,
        format!(
            "{points} points, default islanded random {:.2} < pma {:.2}: {strict}; random ahead at {} metric-points: {}",
            default[1].mean_microgrids_islanded,
            default[0].mean_microgrids_islanded,
            misses.len(),
            misses.join(", ")
        ),
    )
}

fn trends() -> Verdict {
    let mut breaks = Vec::new();
    for (param, rows) in summaries() {
        let pma: Vec<&SummaryRow> = rows.iter().filter(|r| r.algorithm == "pma").collect();
        for w in pma.windows(2) {
            for (k, (a, b)) in metrics(w[0]).iter().zip(metrics(w[1])).enumerate() {
                if b < *a {
                    breaks.push(format!("{} {}→{} {}", param.as_str(), w[0].value, w[1].value, METRIC_NAMES[k]));
                }
            }
        }
    }
    let curve = |p: SweepParam| {
        summaries()[&p]
            .iter()
            .filter(|r| r.algorithm == "pma")
            .map(|r| format!("{}", r.mean_total_node_failures))
            .collect::<Vec<_>>()
            .join(",")
    };
    verdict(
        8,
        breaks.is_empty(),
        format!(
            "pma total failures: capacity [{}], resource [{}], mgload [{}]; decreases {breaks:?}",
            curve(SweepParam::Capacity),
            curve(SweepParam::Resource),
            curve(SweepParam::MgLoad)
        ),
    )
}

fn read_csvs(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism_and_speed() -> (Verdict, Verdict) {
    let cfg = ExperimentConfig::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let start = Instant::now();
    run_experiment(&cfg, a.path()).unwrap();
    let t = start.elapsed();
    run_experiment(&cfg, b.path()).unwrap();
    let (ca, cb) = (read_csvs(a.path()), read_csvs(b.path()));
    let svgs = std::fs::read_dir(a.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    (
        verdict(
            9,
            ca == cb && ca.len() == 7,
            format!("{} CSV files byte-identical across two runs: {}", ca.len(), ca == cb),
        ),
        verdict(10, t < SWEEP_TIME, format!("3 sweeps × 50 random runs + outputs ({} charts) in {t:.2?}", svgs)),
    )
}

fn main() -> ExitCode {
    let (det, speed) = determinism_and_speed();
    let verdicts = [
        physics(),
        sensitivity(),
        cascade(),
        mcb_exactness(),
        bl_exactness(),
        end_to_end(),
        dominance(),
        trends(),
        det,
        speed,
    ];
    for v in &verdicts {
        println!("criterion {:>2}: {} {}", v.id, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let red: Vec<u8> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    if red == KNOWN_RED {
        println!(
            "acceptance: {} of {} pass; red as documented: {KNOWN_RED:?}",
            verdicts.len() - red.len(),
            verdicts.len()
        );
        ExitCode::SUCCESS
    } else {
        println!("acceptance: red {red:?}, documented {KNOWN_RED:?}");
        ExitCode::FAILURE
    }
}
