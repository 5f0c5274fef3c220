//! Experiment configuration, scenario construction and the seeded sweep
//! harness with its CSV, chart and log outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::model::{compose_with, parse_case, BusId, ComposedGrid, GridCase, TieSpec, DEFAULT_TIE_RATING};
use crate::planner::{critical_nodes_of, pma, random_baseline, PlanContext, PlanResult};
use crate::powerflow::solve_state;

pub const DEFAULT_HEADROOM: f64 = 5.0;
pub const DEFAULT_REDUCTION: f64 = 0.6;
pub const DEFAULT_RESOURCE: f64 = 0.2;
pub const DEFAULT_MICROGRID_LOAD: f64 = 13.5;
pub const MAX_REDUCTION: f64 = 0.78;
pub const MAX_RESOURCE: f64 = 0.65;
/// Smallest base flow used when rating a line.
pub const FLOW_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SweepParam {
    Capacity,
    Resource,
    MgLoad,
}

impl SweepParam {
    pub const ALL: [SweepParam; 3] = [SweepParam::Capacity, SweepParam::Resource, SweepParam::MgLoad];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Capacity => "capacity",
            SweepParam::Resource => "resource",
            SweepParam::MgLoad => "mgload",
        }
    }

    /// Default grid: capacity reduction and resource as fractions, microgrid
    /// load in power units.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::Capacity => (0..=7).map(|k| k as f64 / 10.0).chain([MAX_REDUCTION]).collect(),
            SweepParam::Resource => (0..=13).map(|k| k as f64 * 5.0 / 100.0).collect(),
            SweepParam::MgLoad => (0..=4).map(|k| DEFAULT_MICROGRID_LOAD + 2.0 * k as f64).collect(),
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity" => Ok(SweepParam::Capacity),
            "resource" => Ok(SweepParam::Resource),
            "mgload" => Ok(SweepParam::MgLoad),
            other => Err(Error::Config(format!("unknown sweep parameter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Pma,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Pma, Algorithm::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Pma => "pma",
            Algorithm::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub struct TariffOverride {
    pub r: Option<f64>,
    pub rho: Option<f64>,
    pub k: Option<f64>,
}

/// Experiment settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Embedded fixture name or path of the main grid case.
    pub main_case: String,
    /// Embedded fixture name or path of the case attached at each host.
    pub microgrid_case: String,
    pub attachments: Vec<u32>,
    pub capacity_headroom: f64,
    pub capacity_reduction: f64,
    pub resource_fraction: f64,
    /// Summed nominal load of all microgrids.
    pub microgrid_load_total: f64,
    /// Tie capacity in units of the attached microgrid's nominal load.
    pub tie_rating: f64,
    pub alpha: f64,
    pub runs: usize,
    pub seed: u64,
    /// Parameter to sweep; all three when absent.
    pub sweep: Option<String>,
    /// Sweep values; the parameter's default grid when absent.
    pub sweep_values: Option<Vec<f64>>,
    /// Per-load overrides keyed by merged bus id.
    pub tariff: BTreeMap<String, TariffOverride>,
    /// Generator price-attack cost keyed by merged bus id.
    pub genattack: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            main_case: "ieee14".into(),
            microgrid_case: "ieee9".into(),
            attachments: fixtures::DEFAULT_HOSTS.to_vec(),
            capacity_headroom: DEFAULT_HEADROOM,
            capacity_reduction: DEFAULT_REDUCTION,
            resource_fraction: DEFAULT_RESOURCE,
            microgrid_load_total: DEFAULT_MICROGRID_LOAD,
            tie_rating: DEFAULT_TIE_RATING,
            alpha: 1.0,
            runs: 50,
            seed: 42,
            sweep: None,
            sweep_values: None,
            tariff: BTreeMap::new(),
            genattack: BTreeMap::new(),
        }
    }
}

fn bus_key(key: &str) -> Result<BusId> {
    key.trim().parse().map(BusId).map_err(|_| Error::Config(format!("'{key}' is not a bus id")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=MAX_REDUCTION).contains(&self.capacity_reduction) {
            return bad(format!("capacity_reduction {} outside [0, {MAX_REDUCTION}]", self.capacity_reduction));
        }
        if !(0.0..=MAX_RESOURCE).contains(&self.resource_fraction) {
            return bad(format!("resource_fraction {} outside [0, {MAX_RESOURCE}]", self.resource_fraction));
        }
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if !(self.capacity_headroom > 0.0) {
            return bad(format!("capacity_headroom {} must be positive", self.capacity_headroom));
        }
        if !(self.microgrid_load_total > 0.0) {
            return bad(format!("microgrid_load_total {} must be positive", self.microgrid_load_total));
        }
        if !(self.tie_rating > 0.0) {
            return bad(format!("tie_rating {} must be positive", self.tie_rating));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha {} outside (0, 1]", self.alpha));
        }
        if let Some(s) = &self.sweep {
            let param: SweepParam = s.parse()?;
            for &v in self.sweep_values.iter().flatten() {
                let ok = match param {
                    SweepParam::Capacity => (0.0..=MAX_REDUCTION).contains(&v),
                    SweepParam::Resource => (0.0..=MAX_RESOURCE).contains(&v),
                    SweepParam::MgLoad => v > 0.0,
                };
                if !ok {
                    return bad(format!("{s} sweep value {v} out of range"));
                }
            }
        }
        for key in self.tariff.keys().chain(self.genattack.keys()) {
            bus_key(key)?;
        }
        if self.genattack.values().any(|&c| !(c >= 0.0)) {
            return bad("generator attack costs must be non-negative".into());
        }
        Ok(())
    }

    /// Sweeps to run, each with its value list.
    pub fn sweeps(&self) -> Result<Vec<(SweepParam, Vec<f64>)>> {
        match &self.sweep {
            None => Ok(SweepParam::ALL.iter().map(|&p| (p, p.default_values())).collect()),
            Some(s) => {
                let p: SweepParam = s.parse()?;
                Ok(vec![(p, self.sweep_values.clone().unwrap_or_else(|| p.default_values()))])
            }
        }
    }
}

/// Parses an embedded fixture by name, or else a case file at that path.
pub fn load_case(name_or_path: &str) -> Result<GridCase<f64>> {
    if let Some(text) = fixtures::embedded(name_or_path) {
        return parse_case(name_or_path, text);
    }
    let path = Path::new(name_or_path);
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name_or_path);
    parse_case(name, &text)
}

/// Rates every unrated branch at `β · max(|f⁰|, floor)` from the nominal
/// dispatch, then scales every rating by `1 − reduction`.
pub fn assign_capacities(grid: &GridCase<f64>, headroom: f64, reduction: f64) -> Result<GridCase<f64>> {
    let base = solve_state(grid, &grid.nominal_demands(), &[])?;
    let mut out = grid.clone();
    for (pos, br) in out.branches.iter_mut().enumerate() {
        let u = br.capacity.unwrap_or_else(|| headroom * base.flows.flows[pos].abs().max(FLOW_FLOOR));
        br.capacity = Some(u * (1.0 - reduction));
    }
    Ok(out)
}

/// Scales every microgrid's loads by one factor so their nominal total is
/// `target`.
pub fn scale_microgrid_load(composed: &mut ComposedGrid<f64>, target: f64) -> Result<()> {
    if !(target > 0.0) {
        return Err(Error::Validation(format!("microgrid load target {target} must be positive")));
    }
    let members = composed.microgrid_loads();
    let current: f64 = composed.merged.buses.iter().filter(|b| members.contains(&b.id)).map(|b| b.nominal_demand).sum();
    if members.is_empty() || current <= 0.0 {
        return Err(Error::Validation("no microgrid loads to scale".into()));
    }
    let factor = target / current;
    for bus in composed.merged.buses.iter_mut().filter(|b| members.contains(&b.id)) {
        bus.nominal_demand *= factor;
    }
    for mg in &mut composed.microgrids {
        for bus in &mut mg.internal_case.buses {
            bus.nominal_demand *= factor;
        }
    }
    Ok(())
}

/// Rescales a case so its nominal load totals `target`; generator limits
/// follow so the case keeps its own reserve margin.
fn scale_case(case: &mut GridCase<f64>, target: f64) {
    let total = case.total_nominal_demand();
    if total > 0.0 {
        let factor = target / total;
        for bus in &mut case.buses {
            bus.nominal_demand *= factor;
        }
        for g in &mut case.generators {
            g.p_min *= factor;
            g.p_max *= factor;
        }
    }
}

/// A ready-to-attack grid with tariffs and budget.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub composed: ComposedGrid<f64>,
    pub ctx: PlanContext<f64>,
    pub budget: f64,
}

/// Builds the composite grid for one parameter setting.
///
/// Attached cases are scaled to an equal share of the configured microgrid
/// load before rating, so line ratings depend only on the base settings;
/// `microgrid_load` then rescales the microgrid loads on the rated grid.
pub fn build_scenario(cfg: &ExperimentConfig, reduction: f64, resource: f64, microgrid_load: f64) -> Result<Scenario> {
    let main = load_case(&cfg.main_case)?;
    let mut attached = load_case(&cfg.microgrid_case)?;
    if !cfg.attachments.is_empty() {
        scale_case(&mut attached, cfg.microgrid_load_total / cfg.attachments.len() as f64);
    }
    let attachments: Vec<_> = cfg.attachments.iter().map(|&h| (BusId(h), attached.clone())).collect();
    let tie = TieSpec { rating_factor: cfg.tie_rating, ..TieSpec::default() };
    let mut composed = compose_with(&main, &attachments, tie)?;
    composed.merged = assign_capacities(&composed.merged, cfg.capacity_headroom, reduction)?;
    if !cfg.attachments.is_empty() && (microgrid_load - cfg.microgrid_load_total).abs() > 1e-12 {
        scale_microgrid_load(&mut composed, microgrid_load)?;
    }

    let mut ctx = PlanContext::defaults(&composed.merged);
    ctx.alpha = cfg.alpha;
    ctx.bl.seed = cfg.seed;
    for (key, o) in &cfg.tariff {
        let bus = bus_key(key)?;
        let t = ctx.tariff.loads.get_mut(&bus).ok_or(Error::UnknownBus(bus))?;
        t.rate = o.r.unwrap_or(t.rate);
        t.max_rate_change = o.rho.unwrap_or(t.max_rate_change);
        t.sensitivity = o.k.unwrap_or(t.sensitivity);
    }
    ctx.tariff.rebase_bills(&composed.merged);
    ctx.tariff.validate()?;
    for (key, &cost) in &cfg.genattack {
        let bus = bus_key(key)?;
        let mut found = false;
        for a in ctx.gen_attacks.iter_mut().filter(|a| composed.merged.generators[a.generator.0].bus == bus) {
            a.cost = cost;
            found = true;
        }
        if !found {
            return Err(Error::Config(format!("no generator at bus {bus}")));
        }
    }
    let budget = resource * ctx.max_attack_cost();
    Ok(Scenario { composed, ctx, budget })
}

impl Scenario {
    /// Scenario at the configured settings.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        build_scenario(cfg, cfg.capacity_reduction, cfg.resource_fraction, cfg.microgrid_load_total)
    }

    /// Scenario with one parameter replaced by a sweep value.
    pub fn at(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<Self> {
        let (mut red, mut res, mut load) = (cfg.capacity_reduction, cfg.resource_fraction, cfg.microgrid_load_total);
        match param {
            SweepParam::Capacity => red = value,
            SweepParam::Resource => res = value,
            SweepParam::MgLoad => load = value,
        }
        build_scenario(cfg, red, res, load)
    }

    pub fn run(&self, algorithm: Algorithm, seed: u64) -> Result<PlanResult<f64>> {
        match algorithm {
            Algorithm::Pma => pma(&self.composed, self.budget, &self.ctx),
            Algorithm::Random => random_baseline(&self.composed, self.budget, &self.ctx, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub algorithm: String,
    pub run: usize,
    pub seed: u64,
    pub total_node_failures: usize,
    pub microgrids_islanded: usize,
    pub microgrid_node_failures: usize,
    pub lines_failed: usize,
    pub budget_spent: f64,
}

impl SweepRow {
    fn new(param: SweepParam, value: f64, algorithm: Algorithm, run: usize, seed: u64, plan: &PlanResult<f64>) -> Self {
        SweepRow {
            parameter: param.as_str().into(),
            value,
            algorithm: algorithm.as_str().into(),
            run,
            seed,
            total_node_failures: plan.total_node_failures,
            microgrids_islanded: plan.s2.len(),
            microgrid_node_failures: plan.s3.len(),
            lines_failed: plan.s1.len(),
            budget_spent: plan.ledger.spent,
        }
    }
}

/// Per-value means of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub value: f64,
    pub algorithm: String,
    pub runs: usize,
    pub mean_total_node_failures: f64,
    pub mean_microgrids_islanded: f64,
    pub mean_microgrid_node_failures: f64,
    pub mean_lines_failed: f64,
    pub mean_budget_spent: f64,
}

/// File suffix, axis label and accessor of a charted metric.
pub type Metric = (&'static str, &'static str, fn(&SummaryRow) -> f64);

pub const METRICS: [Metric; 3] = [
    ("total_node_failures", "node failures", |r| r.mean_total_node_failures),
    ("microgrids_islanded", "microgrids islanded", |r| r.mean_microgrids_islanded),
    ("microgrid_node_failures", "node failures in microgrids", |r| r.mean_microgrid_node_failures),
];

/// Rows for every (value, algorithm, run), sorted by that key. The
/// deterministic algorithm runs once per value and its row is replicated.
pub fn run_sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let scenarios: Vec<Scenario> = values.iter().map(|&v| Scenario::at(cfg, param, v)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, Algorithm, usize)> = (0..values.len())
        .flat_map(|i| {
            std::iter::once((i, Algorithm::Pma, 0)).chain((0..cfg.runs).map(move |r| (i, Algorithm::Random, r)))
        })
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .map(|&(i, alg, run)| {
            let seed = cfg.seed.wrapping_add(run as u64);
            let plan = scenarios[i].run(alg, seed)?;
            Ok((i, SweepRow::new(param, values[i], alg, run, seed, &plan)))
        })
        .collect::<Result<_>>()?;
    let pma_rows: Vec<(usize, SweepRow)> = rows.iter().filter(|(_, r)| r.algorithm == "pma").cloned().collect();
    rows.retain(|(_, r)| r.algorithm != "pma");
    for (i, row) in pma_rows {
        rows.extend(
            (0..cfg.runs).map(|run| (i, SweepRow { run, seed: cfg.seed.wrapping_add(run as u64), ..row.clone() })),
        );
    }
    rows.sort_by(|(ia, a), (ib, b)| ia.cmp(ib).then(a.algorithm.cmp(&b.algorithm)).then(a.run.cmp(&b.run)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Means per (value, algorithm), in row order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for row in rows {
        let same = out.last().is_some_and(|s| s.value == row.value && s.algorithm == row.algorithm);
        if !same {
            out.push(SummaryRow {
                parameter: row.parameter.clone(),
                value: row.value,
                algorithm: row.algorithm.clone(),
                runs: 0,
                mean_total_node_failures: 0.0,
                mean_microgrids_islanded: 0.0,
                mean_microgrid_node_failures: 0.0,
                mean_lines_failed: 0.0,
                mean_budget_spent: 0.0,
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.runs += 1;
        s.mean_total_node_failures += row.total_node_failures as f64;
        s.mean_microgrids_islanded += row.microgrids_islanded as f64;
        s.mean_microgrid_node_failures += row.microgrid_node_failures as f64;
        s.mean_lines_failed += row.lines_failed as f64;
        s.mean_budget_spent += row.budget_spent;
    }
    for s in &mut out {
        let n = s.runs as f64;
        s.mean_total_node_failures /= n;
        s.mean_microgrids_islanded /= n;
        s.mean_microgrid_node_failures /= n;
        s.mean_lines_failed /= n;
        s.mean_budget_spent /= n;
    }
    out
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Line chart of one metric: mean against sweep value, one series per algorithm.
pub fn render_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const L: f64 = 70.0;
    const R: f64 = 130.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(x, y) in points {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let y1 = if y1 <= 0.0 { 1.0 } else { y1 * 1.1 };
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (W - L - R);
    let py = |y: f64| H - B - y / y1 * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, (L + W - R) / 2.0);
    let _ = writeln!(s, r#"<line x1="{L}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, H - B, W - R);
    let _ = writeln!(s, r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#, H - B);
    for k in 0..=5 {
        let y = y1 * k as f64 / 5.0;
        let _ = writeln!(s, r#"<line x1="{}" y1="{1:.1}" x2="{L}" y2="{1:.1}" stroke="black"/>"#, L - 4.0, py(y));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{y:.2}</text>"#, L - 8.0, py(y) + 4.0);
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="black"/>"#,
            px(x),
            H - B,
            H - B + 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x:.2}</text>"#, px(x), H - B + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (L + W - R) / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{y_label}</text>"#,
        (T + H - B) / 2.0
    );
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = T + 20.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            W - R + 15.0,
            W - R + 35.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, W - R + 40.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn axis_label(param: SweepParam) -> &'static str {
    match param {
        SweepParam::Capacity => "capacity reduction",
        SweepParam::Resource => "maximum resource",
        SweepParam::MgLoad => "microgrid load",
    }
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentOutputs {
    pub sweeps: Vec<PathBuf>,
    pub summaries: Vec<PathBuf>,
    pub charts: Vec<PathBuf>,
    pub critical_nodes: PathBuf,
    pub trace: PathBuf,
}

/// Runs every configured sweep and writes all outputs into `out`. The
/// critical-node table and trace come from the attack at the configured
/// settings.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutputs> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut files = ExperimentOutputs::default();
    for (param, values) in cfg.sweeps()? {
        let rows = run_sweep(cfg, param, &values)?;
        let path = out.join(format!("sweep_{}.csv", param.as_str()));
        write_csv(&path, &rows)?;
        files.sweeps.push(path);
        let summary = summarize(&rows);
        let path = out.join(format!("summary_{}.csv", param.as_str()));
        write_csv(&path, &summary)?;
        files.summaries.push(path);
        for (key, label, metric) in METRICS {
            let series: Vec<(&str, Vec<(f64, f64)>)> = Algorithm::ALL
                .iter()
                .map(|a| {
                    let pts =
                        summary.iter().filter(|s| s.algorithm == a.as_str()).map(|s| (s.value, metric(s))).collect();
                    (a.as_str(), pts)
                })
                .collect();
            let svg = render_chart(&format!("{label} vs {}", axis_label(param)), axis_label(param), label, &series);
            let path = out.join(format!("{}_{key}.svg", param.as_str()));
            write_text(&path, &svg)?;
            files.charts.push(path);
        }
    }

    let scenario = Scenario::from_config(cfg)?;
    let plan = scenario.run(Algorithm::Pma, cfg.seed)?;
    let mut table = String::from("bus,role,weight\n");
    for n in critical_nodes_of(&plan, &scenario.ctx.tariff) {
        let _ = writeln!(table, "{},{},{}", n.bus, n.role.as_str(), n.weight);
    }
    files.critical_nodes = out.join("critical_nodes.csv");
    write_text(&files.critical_nodes, &table)?;
    let mut log = String::new();
    for ev in &plan.trace {
        let _ = writeln!(log, "{ev}");
    }
    for (action, cost) in &plan.ledger.entries {
        let _ = writeln!(log, "ledger {action} cost={cost:.6}");
    }
    let _ = writeln!(
        log,
        "result lines_failed={} microgrids_islanded={} microgrid_node_failures={} total_node_failures={} spent={:.6} budget={:.6}",
        plan.s1.len(),
        plan.s2.len(),
        plan.s3.len(),
        plan.total_node_failures,
        plan.ledger.spent,
        plan.ledger.total
    );
    files.trace = out.join("trace.log");
    write_text(&files.trace, &log)?;
    Ok(files)
}
