//! Attack planning on a composed grid.
//!
//! The price-modification attack first islands microgrids by overloading the
//! lines that connect them (IM), then breaks each islanded microgrid from the
//! inside (BM): it cheapens one local unit at a time and overloads as many
//! internal lines as the remaining budget allows (BL). Every attack acts on
//! the network only through demand and dispatch changes followed by a
//! cascade run. A blind random baseline spends the same budget on random
//! load nudges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascade::{overloaded, run, CascadeState};
use crate::error::Result;
use crate::model::{BranchId, BusId, ComposedGrid, GenId, GridCase, Islands};
use crate::powerflow::{sensitivities, solve_state};
use crate::pricing::{mcb, AttackVector, McbResult, Tariff};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    BreakLine(BranchId),
    CheapenGenerator(GenId),
    OverloadMicrogrid(u32),
    RaiseLoad(BusId),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::BreakLine(b) => write!(f, "break-line {b}"),
            Action::CheapenGenerator(g) => write!(f, "cheapen {g}"),
            Action::OverloadMicrogrid(m) => write!(f, "overload mg{m}"),
            Action::RaiseLoad(b) => write!(f, "raise-load {b}"),
        }
    }
}

/// Attacker budget `A` and running spend `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetLedger<T> {
    pub total: T,
    pub spent: T,
    pub entries: Vec<(Action, T)>,
}

impl<T: Scalar> BudgetLedger<T> {
    pub fn new(total: T) -> Self {
        BudgetLedger { total, spent: T::zero(), entries: Vec::new() }
    }

    pub fn remaining(&self) -> T {
        (self.total - self.spent).max(T::zero())
    }

    /// Budget left (`T < A`) and the action fits in it.
    pub fn can_afford(&self, cost: T) -> bool {
        self.spent < self.total && self.spent + cost <= self.total
    }

    pub fn charge(&mut self, action: Action, cost: T) -> bool {
        if !self.can_afford(cost) {
            return false;
        }
        self.spent += cost;
        self.entries.push((action, cost));
        true
    }
}

/// Price cut offered to one generating unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenPriceAttack<T> {
    pub generator: GenId,
    pub cost: T,
}

/// Search settings for line breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlOptions {
    /// Discrete `z` levels on [0, 1], endpoints included.
    pub levels: usize,
    /// Largest load count searched exhaustively.
    pub exhaustive_max_loads: usize,
    /// Random restarts of the coordinate ascent used above that size.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for BlOptions {
    fn default() -> Self {
        BlOptions { levels: 21, exhaustive_max_loads: 6, restarts: 3, seed: 0x5eed }
    }
}

/// Everything an attack plan needs besides the grid and the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext<T> {
    pub tariff: Tariff<T>,
    pub gen_attacks: Vec<GenPriceAttack<T>>,
    /// Moving-average weight of the cascade model.
    pub alpha: T,
    pub bl: BlOptions,
}

impl<T: Scalar> PlanContext<T> {
    /// Default tariffs, unit price-attack cost per generator, `α = 1`.
    pub fn defaults(grid: &GridCase<T>) -> Self {
        PlanContext {
            tariff: Tariff::defaults(grid),
            gen_attacks: (0..grid.generators.len())
                .map(|k| GenPriceAttack { generator: GenId(k), cost: T::one() })
                .collect(),
            alpha: T::one(),
            bl: BlOptions::default(),
        }
    }

    pub fn gen_cost(&self, g: GenId) -> T {
        self.gen_attacks.iter().find(|a| a.generator == g).map_or_else(T::one, |a| a.cost)
    }

    /// Cost of the largest attack: `z ≡ 1` everywhere plus every unit price cut.
    pub fn max_attack_cost(&self) -> T {
        self.tariff.total_weight() + self.gen_attacks.iter().map(|a| a.cost).sum::<T>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent<T> {
    /// Cascade on the unattacked grid.
    Settle {
        failed: Vec<BranchId>,
    },
    Islanding {
        line: BranchId,
        potential: T,
        cost: T,
        /// `z` increase per load.
        moves: Vec<(BusId, T)>,
        failed: Vec<BranchId>,
        islanded: Vec<u32>,
    },
    GeneratorPrice {
        microgrid: u32,
        generator: GenId,
        cost: T,
        failed: Vec<BranchId>,
    },
    LineBreaking {
        microgrid: u32,
        cost: T,
        moves: Vec<(BusId, T)>,
        overloaded: Vec<BranchId>,
        failed: Vec<BranchId>,
    },
    RandomRaise {
        load: BusId,
        dz: T,
        cost: T,
        failed: Vec<BranchId>,
    },
}

fn ids<D: fmt::Display>(xs: &[D]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn moves_str<T: Scalar>(moves: &[(BusId, T)]) -> String {
    moves.iter().map(|(b, dz)| format!("{b}+{dz:.4}")).collect::<Vec<_>>().join(" ")
}

impl<T: Scalar> fmt::Display for TraceEvent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Settle { failed } => write!(f, "settle failed=[{}]", ids(failed)),
            TraceEvent::Islanding { line, potential, cost, moves, failed, islanded } => write!(
                f,
                "im line={line} potential={potential:.6} cost={cost:.6} z=[{}] failed=[{}] islanded=[{}]",
                moves_str(moves),
                ids(failed),
                ids(islanded)
            ),
            TraceEvent::GeneratorPrice { microgrid, generator, cost, failed } => {
                write!(f, "bm mg={microgrid} cheapen={generator} cost={cost:.6} failed=[{}]", ids(failed))
            }
            TraceEvent::LineBreaking { microgrid, cost, moves, overloaded, failed } => write!(
                f,
                "bl mg={microgrid} cost={cost:.6} z=[{}] overloaded=[{}] failed=[{}]",
                moves_str(moves),
                ids(overloaded),
                ids(failed)
            ),
            TraceEvent::RandomRaise { load, dz, cost, failed } => {
                write!(f, "random load={load} dz={dz:.1} cost={cost:.6} failed=[{}]", ids(failed))
            }
        }
    }
}

/// Metrics and logs of one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult<T> {
    /// Failed lines.
    pub s1: Vec<BranchId>,
    /// Islanded microgrids.
    pub s2: BTreeSet<u32>,
    /// Failed load buses inside microgrids.
    pub s3: BTreeSet<BusId>,
    pub total_node_failures: usize,
    pub ledger: BudgetLedger<T>,
    pub trace: Vec<TraceEvent<T>>,
    pub attack: AttackVector<T>,
}

/// Live attack state: topology, attack vector, price cuts and spend.
#[derive(Debug, Clone)]
pub struct Simulation<'a, T> {
    pub composed: &'a ComposedGrid<T>,
    pub ctx: &'a PlanContext<T>,
    pub grid: GridCase<T>,
    pub z: AttackVector<T>,
    pub cheapened: Vec<GenId>,
    pub failed_lines: Vec<BranchId>,
    pub failed_nodes: BTreeSet<BusId>,
    /// Stable flows of the current state, per branch position.
    pub flows: Vec<T>,
    pub ledger: BudgetLedger<T>,
    pub trace: Vec<TraceEvent<T>>,
}

impl<'a, T: Scalar> Simulation<'a, T> {
    /// Starts from `composed.merged` and lets it settle.
    pub fn new(composed: &'a ComposedGrid<T>, ctx: &'a PlanContext<T>, budget: T) -> Result<Self> {
        let grid = composed.merged.clone();
        let z = AttackVector::zero();
        let base = solve_state(&grid, &ctx.tariff.demands(&z), &[])?;
        let mut sim = Simulation {
            composed,
            ctx,
            grid,
            z,
            cheapened: Vec::new(),
            failed_lines: Vec::new(),
            failed_nodes: BTreeSet::new(),
            flows: base.flows.flows,
            ledger: BudgetLedger::new(budget),
            trace: Vec::new(),
        };
        let failed = sim.settle()?;
        sim.trace.push(TraceEvent::Settle { failed });
        Ok(sim)
    }

    /// Cascades the current state to stability; returns newly failed lines.
    pub fn settle(&mut self) -> Result<Vec<BranchId>> {
        let state = CascadeState::new(self.grid.clone(), self.ctx.tariff.demands(&self.z))
            .with_priority(self.cheapened.clone())
            .with_memory(&self.flows);
        let out = run(state, self.ctx.alpha)?;
        self.grid = out.final_grid;
        self.flows = out.final_solve.flows.flows;
        self.failed_lines.extend(out.s1.iter().copied());
        self.failed_nodes.extend(out.s2);
        Ok(out.s1)
    }

    pub fn islanded(&self) -> BTreeSet<u32> {
        self.composed.islanded_microgrids(&self.grid)
    }

    /// Member loads of a microgrid that still have a source.
    pub fn live_loads(&self, mg: u32) -> Vec<BusId> {
        let Some(spec) = self.composed.microgrid(mg) else { return Vec::new() };
        self.grid
            .load_buses()
            .filter(|b| spec.member_buses.contains(&b.id) && !self.failed_nodes.contains(&b.id))
            .map(|b| b.id)
            .collect()
    }

    pub fn finish(self) -> PlanResult<T> {
        let s2 = self.islanded();
        let s3 = self.failed_nodes.iter().copied().filter(|b| self.composed.microgrid_of(*b).is_some()).collect();
        PlanResult {
            s1: self.failed_lines,
            s2,
            s3,
            total_node_failures: self.failed_nodes.len(),
            ledger: self.ledger,
            trace: self.trace,
            attack: self.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IslandingPotential<T> {
    pub line: BranchId,
    /// Microgrids not yet islanded that this line's loss would island.
    pub microgrids: usize,
    pub mcb: Option<McbResult<T>>,
    /// `microgrids / cost`; 0 when nothing would be islanded or no attack
    /// exists, +inf when the overload is free.
    pub value: T,
}

pub fn islanding_potential<T: Scalar>(sim: &Simulation<'_, T>, line: BranchId) -> Result<IslandingPotential<T>> {
    let count = sim.composed.islanded_by_removal(&sim.grid, line).len();
    if count == 0 {
        return Ok(IslandingPotential { line, microgrids: 0, mcb: None, value: T::zero() });
    }
    let res = mcb(line, &sim.grid, &sim.z, &sim.cheapened, &sim.ctx.tariff)?;
    let value = if !res.feasible {
        T::zero()
    } else if res.cost <= T::zero() {
        T::infinity()
    } else {
        T::lit(count as f64) / res.cost
    };
    Ok(IslandingPotential { line, microgrids: count, mcb: Some(res), value })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImOutcome {
    pub failed_lines: Vec<BranchId>,
    pub islanded: BTreeSet<u32>,
}

/// Islands microgrids, best islanding potential first.
///
/// Candidates are ranked by decreasing potential (ties by line id) and the
/// best affordable one is attacked; repeats until every microgrid is
/// islanded or no affordable candidate is left.
pub fn im<T: Scalar>(sim: &mut Simulation<'_, T>) -> Result<ImOutcome> {
    let mut out = ImOutcome::default();
    let total = sim.composed.microgrids.len();
    for _ in 0..=sim.grid.branches.len() {
        if sim.ledger.remaining() <= T::zero() || sim.islanded().len() == total {
            break;
        }
        // Highest potential first; potentials within a relative 1e-12 tie
        // and go to the lower line id (candidates arrive in id order).
        let mut pick: Option<IslandingPotential<T>> = None;
        let mut lines: Vec<BranchId> = sim.grid.alive_branches().map(|b| b.id).collect();
        lines.sort();
        for line in lines {
            let p = islanding_potential(sim, line)?;
            let cost = p.mcb.as_ref().map_or(T::zero(), |m| m.cost);
            if !(p.value > T::zero()) || !sim.ledger.can_afford(cost) {
                continue;
            }
            let beats = pick.as_ref().is_none_or(|b| {
                if b.value.is_infinite() {
                    false
                } else {
                    p.value > b.value * (T::one() + T::lit(1e-12))
                }
            });
            if beats {
                pick = Some(p);
            }
        }
        let Some(pick) = pick else { break };
        let attack = pick.mcb.expect("ranked candidates carry an attack");
        let before = sim.islanded();
        sim.ledger.charge(Action::BreakLine(pick.line), attack.cost);
        let moves = attack.z.increase_over(&sim.z);
        sim.z = attack.z;
        let failed = sim.settle()?;
        let newly: Vec<u32> = sim.islanded().difference(&before).copied().collect();
        out.failed_lines.extend(failed.iter().copied());
        out.islanded.extend(newly.iter().copied());
        sim.trace.push(TraceEvent::Islanding {
            line: pick.line,
            potential: pick.value,
            cost: attack.cost,
            moves,
            failed: failed.clone(),
            islanded: newly,
        });
        if failed.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Attack vector chosen by the line-breaking search.
#[derive(Debug, Clone, PartialEq)]
pub struct BlChoice<T> {
    pub z: AttackVector<T>,
    pub cost: T,
    /// Lines above capacity at `z`, by re-simulation.
    pub overloaded: Vec<BranchId>,
}

/// Candidate `z` levels of one load, with the cost and demand change of each.
struct LoadLevels<T> {
    bus: BusId,
    z: Vec<T>,
    cost: Vec<T>,
    delta: Vec<T>,
}

/// Picks the `z` over the microgrid's live loads that overloads the most of
/// its lines within `budget` (ties: cheaper first). Flows are evaluated with
/// the sensitivity model and the winner is checked by re-simulation; if the
/// two disagree the search is repeated on re-simulated flows.
pub fn plan_bl<T: Scalar>(sim: &Simulation<'_, T>, mg: u32, budget: T) -> Result<BlChoice<T>> {
    let nothing = BlChoice { z: sim.z.clone(), cost: T::zero(), overloaded: Vec::new() };
    let Some(spec) = sim.composed.microgrid(mg) else { return Ok(nothing) };
    let tariff = &sim.ctx.tariff;
    let opts = sim.ctx.bl;

    let lines: Vec<usize> = (0..sim.grid.branches.len())
        .filter(|&p| {
            let br = &sim.grid.branches[p];
            br.alive && spec.member_buses.contains(&br.from) && spec.member_buses.contains(&br.to)
        })
        .collect();
    let steps = opts.levels.max(2) - 1;
    let loads: Vec<LoadLevels<T>> = sim
        .live_loads(mg)
        .into_iter()
        .filter_map(|bus| {
            let t = tariff.loads.get(&bus)?;
            let z0 = sim.z.get(bus);
            let mut z = vec![z0];
            z.extend((1..=steps).map(|k| T::lit(k as f64 / steps as f64)).filter(|&l| l > z0));
            let cost = z.iter().map(|&l| t.cost_weight * (l - z0)).collect();
            let delta = z.iter().map(|&l| t.demand(l) - t.demand(z0)).collect();
            Some(LoadLevels { bus, z, cost, delta })
        })
        .collect();
    if lines.is_empty() || loads.is_empty() {
        return Ok(nothing);
    }

    let demand = tariff.demands(&sim.z);
    let sens = sensitivities(&sim.grid, &demand, &sim.cheapened)?;
    let slopes: Vec<Vec<T>> = lines
        .iter()
        .map(|&p| {
            let row = sens.row(sim.grid.branches[p].id).expect("alive line");
            loads.iter().map(|l| sens.loads.iter().position(|&b| b == l.bus).map_or(T::zero(), |c| row[c])).collect()
        })
        .collect();
    let base: Vec<T> = lines.iter().map(|&p| sim.flows[p]).collect();
    let limits: Vec<T> = lines.iter().map(|&p| sim.grid.branches[p].limit()).collect();

    let model_count = |pick: &[usize]| -> usize {
        (0..lines.len())
            .filter(|&r| {
                let f = base[r] + (0..loads.len()).map(|i| slopes[r][i] * loads[i].delta[pick[i]]).sum::<T>();
                overloaded(f, limits[r])
            })
            .count()
    };
    let to_vector = |pick: &[usize]| {
        let mut z = sim.z.clone();
        for (l, &k) in loads.iter().zip(pick) {
            z.set(l.bus, l.z[k]);
        }
        z
    };
    let true_overloads = |pick: &[usize]| -> Result<Vec<BranchId>> {
        let s = solve_state(&sim.grid, &tariff.demands(&to_vector(pick)), &sim.cheapened)?;
        Ok(lines
            .iter()
            .filter(|&&p| overloaded(s.flows.flows[p], sim.grid.branches[p].limit()))
            .map(|&p| sim.grid.branches[p].id)
            .collect())
    };

    let best = search_levels(&loads, budget, &opts, &model_count);
    let (count, _, pick) = best;
    if count == 0 {
        return Ok(nothing);
    }
    let mut verified = true_overloads(&pick)?;
    let mut pick = pick;
    if verified.len() != count {
        let true_count = |p: &[usize]| true_overloads(p).map(|v| v.len()).unwrap_or(0);
        let (_, _, p) = search_levels(&loads, budget, &opts, &true_count);
        pick = p;
        verified = true_overloads(&pick)?;
    }
    if verified.is_empty() {
        return Ok(nothing);
    }
    let cost = pick.iter().zip(&loads).map(|(&k, l)| l.cost[k]).sum();
    Ok(BlChoice { z: to_vector(&pick), cost, overloaded: verified })
}

/// Best `(count, cost, level indices)`: exhaustive for small load sets,
/// coordinate ascent with random restarts otherwise.
fn search_levels<T: Scalar>(
    loads: &[LoadLevels<T>],
    budget: T,
    opts: &BlOptions,
    count: &dyn Fn(&[usize]) -> usize,
) -> (usize, T, Vec<usize>) {
    let n = loads.len();
    let cost_of = |pick: &[usize]| -> T { pick.iter().zip(loads).map(|(&k, l)| l.cost[k]).sum() };
    let better = |c: usize, cost: T, best: &(usize, T, Vec<usize>)| c > best.0 || (c == best.0 && cost < best.1);
    let mut best = (count(&vec![0; n]), T::zero(), vec![0; n]);

    if n <= opts.exhaustive_max_loads {
        fn walk<T: Scalar>(
            k: usize,
            spent: T,
            pick: &mut Vec<usize>,
            loads: &[LoadLevels<T>],
            budget: T,
            visit: &mut dyn FnMut(&[usize], T),
        ) {
            if k == loads.len() {
                visit(pick, spent);
                return;
            }
            for level in 0..loads[k].z.len() {
                let c = spent + loads[k].cost[level];
                if c > budget {
                    break;
                }
                pick[k] = level;
                walk(k + 1, c, pick, loads, budget, visit);
            }
            pick[k] = 0;
        }
        let mut pick = vec![0; n];
        walk(0, T::zero(), &mut pick, loads, budget, &mut |p, spent| {
            let c = count(p);
            if better(c, spent, &best) {
                best = (c, spent, p.to_vec());
            }
        });
        return best;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![vec![0; n]];
    for _ in 0..opts.restarts {
        let mut p: Vec<usize> = loads.iter().map(|l| rng.random_range(0..l.z.len())).collect();
        while cost_of(&p) > budget {
            let i = rng.random_range(0..n);
            p[i] /= 2;
        }
        starts.push(p);
    }
    for mut p in starts {
        let mut current = (count(&p), cost_of(&p));
        loop {
            let mut improved = false;
            for i in 0..n {
                let keep = p[i];
                let mut best_level = keep;
                for level in 0..loads[i].z.len() {
                    p[i] = level;
                    let cost = cost_of(&p);
                    if cost > budget {
                        continue;
                    }
                    let c = count(&p);
                    if c > current.0 || (c == current.0 && cost < current.1) {
                        current = (c, cost);
                        best_level = level;
                        improved = true;
                    }
                }
                p[i] = best_level;
            }
            if !improved {
                break;
            }
        }
        if better(current.0, current.1, &best) {
            best = (current.0, current.1, p.clone());
        }
    }
    best
}

/// Overloads lines inside an islanded microgrid with the remaining budget,
/// then lets the grid settle. Returns the lines that were overloaded.
pub fn bl<T: Scalar>(sim: &mut Simulation<'_, T>, mg: u32) -> Result<Vec<BranchId>> {
    if sim.ledger.remaining() <= T::zero() {
        return Ok(Vec::new());
    }
    let choice = plan_bl(sim, mg, sim.ledger.remaining())?;
    if choice.overloaded.is_empty() || !sim.ledger.charge(Action::OverloadMicrogrid(mg), choice.cost) {
        return Ok(Vec::new());
    }
    let moves = choice.z.increase_over(&sim.z);
    sim.z = choice.z;
    let failed = sim.settle()?;
    sim.trace.push(TraceEvent::LineBreaking {
        microgrid: mg,
        cost: choice.cost,
        moves,
        overloaded: choice.overloaded.clone(),
        failed,
    });
    Ok(choice.overloaded)
}

/// Breaks an islanded microgrid: cheapens its units in increasing order of
/// capacity and runs line breaking after each. Returns the member loads that
/// failed during the call.
pub fn bm<T: Scalar>(sim: &mut Simulation<'_, T>, mg: u32) -> Result<BTreeSet<BusId>> {
    let Some(spec) = sim.composed.microgrid(mg) else { return Ok(BTreeSet::new()) };
    let before: BTreeSet<BusId> = sim.failed_nodes.clone();
    let mut units: Vec<GenId> = (0..sim.grid.generators.len())
        .map(GenId)
        .filter(|g| spec.member_buses.contains(&sim.grid.generators[g.0].bus))
        .collect();
    units.sort_by(|a, b| {
        let (pa, pb) = (sim.grid.generators[a.0].p_max, sim.grid.generators[b.0].p_max);
        pa.partial_cmp(&pb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(b))
    });

    for g in units {
        let live = sim.live_loads(mg);
        if live.is_empty() {
            break;
        }
        let islands = Islands::of(&sim.grid);
        let index = sim.grid.bus_index();
        let slot = islands.of_bus[index[&sim.grid.generators[g.0].bus]];
        if !live.iter().any(|b| islands.of_bus[index[b]] == slot) {
            continue;
        }
        let cost = sim.ctx.gen_cost(g);
        if !sim.ledger.charge(Action::CheapenGenerator(g), cost) {
            break;
        }
        sim.cheapened.push(g);
        let failed = sim.settle()?;
        sim.trace.push(TraceEvent::GeneratorPrice { microgrid: mg, generator: g, cost, failed });
        bl(sim, mg)?;
    }
    Ok(sim.failed_nodes.difference(&before).copied().filter(|b| spec.member_buses.contains(b)).collect())
}

/// Two-stage price-modification attack with one shared budget.
pub fn pma<T: Scalar>(composed: &ComposedGrid<T>, budget: T, ctx: &PlanContext<T>) -> Result<PlanResult<T>> {
    let mut sim = Simulation::new(composed, ctx, budget)?;
    let mut broken = BTreeSet::new();
    loop {
        let actions = sim.ledger.entries.len();
        im(&mut sim)?;
        for mg in sim.islanded() {
            if broken.insert(mg) {
                bm(&mut sim, mg)?;
            }
        }
        if sim.ledger.entries.len() == actions {
            break;
        }
    }
    Ok(sim.finish())
}

/// Spends the budget on uniformly random loads with random `z` increments
/// of 0.1 to 1.0, settling after each.
pub fn random_baseline<T: Scalar>(
    composed: &ComposedGrid<T>,
    budget: T,
    ctx: &PlanContext<T>,
    seed: u64,
) -> Result<PlanResult<T>> {
    let mut sim = Simulation::new(composed, ctx, budget)?;
    let loads: Vec<BusId> = ctx.tariff.loads.keys().copied().collect();
    if loads.is_empty() {
        return Ok(sim.finish());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut misses = 0;
    while sim.ledger.remaining() > T::zero() && misses < 200 {
        if loads.iter().all(|&b| sim.z.get(b) >= T::one()) {
            break;
        }
        let load = loads[rng.random_range(0..loads.len())];
        let tenths = rng.random_range(1..=10u32);
        let z0 = sim.z.get(load);
        let z1 = (z0 + T::lit(tenths as f64 / 10.0)).min(T::one());
        let dz = z1 - z0;
        let cost = ctx.tariff.loads[&load].cost_weight * dz;
        if dz <= T::zero() || !sim.ledger.charge(Action::RaiseLoad(load), cost) {
            misses += 1;
            continue;
        }
        misses = 0;
        sim.z.set(load, z1);
        let failed = sim.settle()?;
        sim.trace.push(TraceEvent::RandomRaise { load, dz, cost, failed });
    }
    Ok(sim.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticalRole {
    Islanding,
    Internal,
    Both,
}

impl CriticalRole {
    pub fn as_str(self) -> &'static str {
        match self {
            CriticalRole::Islanding => "islanding",
            CriticalRole::Internal => "internal",
            CriticalRole::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalNode<T> {
    pub bus: BusId,
    pub role: CriticalRole,
    /// Total `Δz · w` the attack put on this load.
    pub weight: T,
}

/// Loads the attack leaned on, heaviest first.
pub fn critical_nodes_of<T: Scalar>(plan: &PlanResult<T>, tariff: &Tariff<T>) -> Vec<CriticalNode<T>> {
    let mut acc: BTreeMap<BusId, (bool, bool, T)> = BTreeMap::new();
    for ev in &plan.trace {
        let (moves, islanding) = match ev {
            TraceEvent::Islanding { moves, .. } => (moves, true),
            TraceEvent::LineBreaking { moves, .. } => (moves, false),
            _ => continue,
        };
        for &(bus, dz) in moves {
            let w = tariff.loads.get(&bus).map_or(T::one(), |t| t.cost_weight);
            let e = acc.entry(bus).or_insert((false, false, T::zero()));
            if islanding {
                e.0 = true;
            } else {
                e.1 = true;
            }
            e.2 += dz * w;
        }
    }
    let mut out: Vec<CriticalNode<T>> = acc
        .into_iter()
        .filter(|(_, (_, _, w))| *w > T::zero())
        .map(|(bus, (isl, int, weight))| CriticalNode {
            bus,
            role: match (isl, int) {
                (true, true) => CriticalRole::Both,
                (true, false) => CriticalRole::Islanding,
                _ => CriticalRole::Internal,
            },
            weight,
        })
        .collect();
    out.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal).then(a.bus.cmp(&b.bus)));
    out
}

/// Runs the attack and reports the loads it relied on.
pub fn critical_nodes<T: Scalar>(
    composed: &ComposedGrid<T>,
    budget: T,
    ctx: &PlanContext<T>,
) -> Result<Vec<CriticalNode<T>>> {
    let plan = pma(composed, budget, ctx)?;
    Ok(critical_nodes_of(&plan, &ctx.tariff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{compose_with, parse_case, TieSpec};
    use proptest::prelude::*;

    const MAIN: &str = "BUS\n1 generator 0\n2 load 1\nGEN\n1 0 10\nBRANCH\n1 1 2 0.1 5\n";
    const MG: &str =
        "BUS\n1 generator 0\n2 load 0.5\n3 generator 0\nGEN\n1 0 0.4\n3 0 0.6\nBRANCH\n1 1 2 0.1 2\n2 3 2 0.1 2\n";

    /// Main grid of buses 1 and 2 with the microgrid hanging off bus 2 through tie 100
    /// (rated 0.75); the tie imports 0.5 − 1.5·1/11 at base.
    fn toy() -> ComposedGrid<f64> {
        let main = parse_case("main", MAIN).unwrap();
        let mg = parse_case("mg", MG).unwrap();
        compose_with(&main, &[(BusId(2), mg)], TieSpec { reactance: 0.01, rating_factor: 1.5 }).unwrap()
    }

    #[test]
    fn ledger_refuses_overspend() {
        let mut l = BudgetLedger::new(1.0);
        assert!(l.charge(Action::RaiseLoad(BusId(1)), 0.6));
        assert!(!l.charge(Action::RaiseLoad(BusId(1)), 0.6));
        assert!(l.charge(Action::RaiseLoad(BusId(1)), 0.4));
        assert_eq!(l.remaining(), 0.0);
        assert!(!l.can_afford(0.0));
        assert_eq!(l.entries.len(), 2);
    }

    #[test]
    fn zero_budget_does_nothing() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        for plan in [pma(&c, 0.0, &ctx).unwrap(), random_baseline(&c, 0.0, &ctx, 7).unwrap()] {
            assert!(plan.s1.is_empty() && plan.s2.is_empty() && plan.s3.is_empty());
            assert_eq!(plan.total_node_failures, 0);
            assert!(plan.ledger.entries.is_empty());
        }
        assert!(critical_nodes(&c, 0.0, &ctx).unwrap().is_empty());
    }

    #[test]
    fn tie_potential_is_inverse_mcb() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let sim = Simulation::new(&c, &ctx, 10.0).unwrap();
        let p = islanding_potential(&sim, BranchId(100)).unwrap();
        let m = p.mcb.clone().unwrap();
        assert!(m.feasible);
        assert_eq!(p.microgrids, 1);
        assert!((p.value - 1.0 / m.cost).abs() < 1e-12);
        // Internal microgrid line: removal leaves the load fed through the tie.
        assert_eq!(islanding_potential(&sim, BranchId(102)).unwrap().value, 0.0);
    }

    #[test]
    fn pma_islands_then_breaks() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let plan = pma(&c, 10.0, &ctx).unwrap();
        assert_eq!(plan.s2, [1].into_iter().collect());
        assert!(plan.ledger.spent <= plan.ledger.total);
        let first_island = plan
            .trace
            .iter()
            .position(|e| matches!(e, TraceEvent::Islanding { islanded, .. } if islanded.contains(&1)));
        let first_break = plan
            .trace
            .iter()
            .position(|e| matches!(e, TraceEvent::GeneratorPrice { .. } | TraceEvent::LineBreaking { .. }));
        if let (Some(i), Some(b)) = (first_island, first_break) {
            assert!(i < b);
        }
        assert!(plan.s3.iter().all(|b| c.microgrid_of(*b) == Some(1)));
        assert!(plan.total_node_failures >= plan.s3.len());
    }

    #[test]
    fn bm_needs_a_unit_price() {
        let c = toy();
        let mut ctx = PlanContext::defaults(&c.merged);
        for a in &mut ctx.gen_attacks {
            a.cost = 5.0;
        }
        let mut sim = Simulation::new(&c, &ctx, 1.0).unwrap();
        sim.grid.kill_branch(BranchId(100)).unwrap();
        sim.settle().unwrap();
        assert!(bm(&mut sim, 1).unwrap().is_empty());
        assert!(sim.ledger.entries.is_empty());
    }

    #[test]
    fn bm_cheapens_smallest_unit_first() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let mut sim = Simulation::new(&c, &ctx, 1.0).unwrap();
        sim.grid.kill_branch(BranchId(100)).unwrap();
        sim.settle().unwrap();
        bm(&mut sim, 1).unwrap();
        let first = sim.ledger.entries.first().map(|e| e.0);
        // Generators: 0 main, 1 at bus 101 (0.4), 2 at bus 103 (0.6).
        assert_eq!(first, Some(Action::CheapenGenerator(GenId(1))));
    }

    #[test]
    fn bl_with_no_budget_changes_nothing() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let mut sim = Simulation::new(&c, &ctx, 0.0).unwrap();
        sim.grid.kill_branch(BranchId(100)).unwrap();
        sim.settle().unwrap();
        let choice = plan_bl(&sim, 1, 0.0).unwrap();
        assert_eq!(choice.cost, 0.0);
        assert!(choice.overloaded.is_empty());
        assert!(bl(&mut sim, 1).unwrap().is_empty());
    }

    #[test]
    fn bl_finds_cheapest_overload() {
        // Islanded microgrid: units at 101 (0.4) and 103 (0.6) share load 0.5
        // as 0.2 / 0.3. Line 102 rated 0.35 trips once the load reaches 0.5834.
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let mut sim = Simulation::new(&c, &ctx, 5.0).unwrap();
        sim.grid.kill_branch(BranchId(100)).unwrap();
        let pos = sim.grid.branch_position(BranchId(102)).unwrap();
        sim.grid.branches[pos].capacity = Some(0.35);
        sim.settle().unwrap();
        let choice = plan_bl(&sim, 1, 5.0).unwrap();
        assert_eq!(choice.overloaded, vec![BranchId(102)]);
        // D = 0.5 / (1 − 0.5 z) ≥ 0.35 / 0.6 needs z ≥ 0.2857: first level 0.3.
        assert!((choice.z.get(BusId(102)) - 0.3).abs() < 1e-12);
        assert!((choice.cost - 0.3).abs() < 1e-12);
    }

    #[test]
    fn random_is_seeded() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let a = random_baseline(&c, 1.3, &ctx, 11).unwrap();
        let b = random_baseline(&c, 1.3, &ctx, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.ledger.spent <= 1.3);
        for (action, cost) in &a.ledger.entries {
            assert!(matches!(action, Action::RaiseLoad(_)));
            let tenths = cost * 10.0;
            assert!((tenths - tenths.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn critical_nodes_name_the_microgrid_load() {
        let c = toy();
        let ctx = PlanContext::defaults(&c.merged);
        let nodes = critical_nodes(&c, 10.0, &ctx).unwrap();
        assert!(nodes.iter().any(|n| n.bus == BusId(102) && n.role != CriticalRole::Internal));
        assert!(nodes.windows(2).all(|w| w[0].weight >= w[1].weight));
    }

    #[test]
    fn trace_lines_render() {
        let ev = TraceEvent::Islanding {
            line: BranchId(100),
            potential: 2.0,
            cost: 0.5,
            moves: vec![(BusId(102), 0.5)],
            failed: vec![BranchId(100)],
            islanded: vec![1],
        };
        assert_eq!(
            ev.to_string(),
            "im line=100 potential=2.000000 cost=0.500000 z=[102+0.5000] failed=[100] islanded=[1]"
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn budgets_are_never_exceeded(budget in 0.0f64..3.0, seed in any::<u64>()) {
            let c = toy();
            let ctx = PlanContext::defaults(&c.merged);
            for plan in [pma(&c, budget, &ctx).unwrap(), random_baseline(&c, budget, &ctx, seed).unwrap()] {
                prop_assert!(plan.ledger.spent <= budget + 1e-12);
                let sum: f64 = plan.ledger.entries.iter().map(|e| e.1).sum();
                prop_assert!((sum - plan.ledger.spent).abs() < 1e-9);
                prop_assert!(plan.attack.is_valid());
                prop_assert!(plan.s3.iter().all(|b| c.microgrid_of(*b).is_some()));
            }
        }
    }
}
