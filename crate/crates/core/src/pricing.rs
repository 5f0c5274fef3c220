//! Demand response to rate changes, attack cost, and the minimum-cost
//! line overload (MCB) solver.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{BranchId, BusId, Demand, GenId, GridCase};
use crate::powerflow::{sensitivities, solve_state};
use crate::Scalar;

/// Margin that turns the strict overload `f > u` into `f >= u (1 + ε)`.
pub const OVERLOAD_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadTariff<T> {
    /// Electricity rate `r`.
    pub rate: T,
    /// Largest rate cut available to the attacker, `ρ < r`.
    pub max_rate_change: T,
    /// Bill sensitivity `k ∈ [0, 1]`.
    pub sensitivity: T,
    /// Targeted bill `B`.
    pub bill_target: T,
    /// Attacker cost per unit of `z`.
    pub cost_weight: T,
}

impl<T: Scalar> LoadTariff<T> {
    /// `r = 1`, `ρ = r / 2`, `k = 0`, `B = D_nom · r`, `w = 1`.
    pub fn defaults(nominal_demand: T) -> Self {
        let rate = T::one();
        LoadTariff {
            rate,
            max_rate_change: T::lit(0.5) * rate,
            sensitivity: T::zero(),
            bill_target: nominal_demand * rate,
            cost_weight: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rate > T::zero()
            && self.max_rate_change >= T::zero()
            && self.max_rate_change < self.rate
            && self.sensitivity >= T::zero()
            && self.sensitivity <= T::one()
            && self.bill_target >= T::zero()
            && self.cost_weight >= T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tariff {self:?}")))
        }
    }

    /// Largest demand whose bill at the attacked rate stays within the
    /// tolerated bill: `(1 + k) B / (r − z ρ)`.
    pub fn demand(&self, z: T) -> T {
        (T::one() + self.sensitivity) * self.bill_target / (self.rate - z * self.max_rate_change)
    }

    /// Inverse of [`demand`](Self::demand) on `ρ > 0`.
    fn z_for_demand(&self, demand: T) -> T {
        (self.rate - (T::one() + self.sensitivity) * self.bill_target / demand) / self.max_rate_change
    }
}

/// Per-load tariffs of a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tariff<T> {
    pub loads: BTreeMap<BusId, LoadTariff<T>>,
}

impl<T: Scalar> Tariff<T> {
    pub fn defaults(grid: &GridCase<T>) -> Self {
        Tariff { loads: grid.load_buses().map(|b| (b.id, LoadTariff::defaults(b.nominal_demand))).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        self.loads.values().try_for_each(LoadTariff::validate)
    }

    /// Resets every bill target to `D_nom · r` for the grid's current nominal demands.
    pub fn rebase_bills(&mut self, grid: &GridCase<T>) {
        for bus in grid.load_buses() {
            if let Some(t) = self.loads.get_mut(&bus.id) {
                t.bill_target = bus.nominal_demand * t.rate;
            }
        }
    }

    pub fn demand_response(&self, load: BusId, z: T) -> Option<T> {
        self.loads.get(&load).map(|t| t.demand(z))
    }

    /// Requested demand of every tariffed load under attack `z`.
    pub fn demands(&self, z: &AttackVector<T>) -> Demand<T> {
        self.loads.iter().map(|(&bus, t)| (bus, t.demand(z.get(bus)))).collect()
    }

    /// `Σ w_i z_i`.
    pub fn attack_cost(&self, z: &AttackVector<T>) -> T {
        z.z.iter().map(|(bus, &v)| self.loads.get(bus).map_or(T::zero(), |t| t.cost_weight) * v).sum()
    }

    pub fn total_weight(&self) -> T {
        self.loads.values().map(|t| t.cost_weight).sum()
    }
}

/// Attack fractions `z ∈ [0, 1]` per load; absent loads are at 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackVector<T> {
    pub z: BTreeMap<BusId, T>,
}

impl<T: Scalar> AttackVector<T> {
    pub fn zero() -> Self {
        AttackVector { z: BTreeMap::new() }
    }

    pub fn get(&self, bus: BusId) -> T {
        self.z.get(&bus).copied().unwrap_or_else(T::zero)
    }

    pub fn set(&mut self, bus: BusId, value: T) {
        assert!(value >= T::zero() && value <= T::one(), "z must lie in [0, 1]");
        if value == T::zero() {
            self.z.remove(&bus);
        } else {
            self.z.insert(bus, value);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.z.values().all(|&v| v >= T::zero() && v <= T::one())
    }

    /// Loads where `self` exceeds `base`, with the increase.
    pub fn increase_over(&self, base: &AttackVector<T>) -> Vec<(BusId, T)> {
        self.z
            .iter()
            .filter_map(|(&b, &v)| {
                let d = v - base.get(b);
                (d > T::zero()).then_some((b, d))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McbResult<T> {
    pub feasible: bool,
    /// Full attack vector (starting vector plus the increase).
    pub z: AttackVector<T>,
    /// Cost of the increase over the starting vector.
    pub cost: T,
    /// `|f|` on the target line, re-simulated at `z`.
    pub achieved_flow: T,
}

/// One attackable load in the linearized cover problem.
#[derive(Debug, Clone, Copy)]
struct CoverItem<T> {
    bus: BusId,
    /// Flow change per unit of demand, sign-adjusted to the target direction.
    slope: T,
    lo: T,
    tariff: LoadTariff<T>,
    full_gain: T,
    full_cost: T,
}

impl<T: Scalar> CoverItem<T> {
    /// Smallest z reaching `need` from this load alone, with its cost.
    fn partial(&self, need: T) -> Option<(T, T)> {
        if need > self.full_gain {
            return None;
        }
        let target = self.tariff.demand(self.lo) + need / self.slope;
        let z = self.tariff.z_for_demand(target).max(self.lo).min(T::one());
        Some((z, self.tariff.cost_weight * (z - self.lo)))
    }
}

/// Cheapest way to raise the sum of item gains to at least `need`.
///
/// Each gain `slope · (D(z) − D(lo))` is convex in `z`, so along any curve of
/// constant total gain the cost is concave and an optimum has at most one
/// load strictly between its bounds. The search enumerates saturated sets
/// (branch and bound on cost) and closes each with one exact partial load.
fn cheapest_cover<T: Scalar>(items: &[CoverItem<T>], need: T) -> Option<(T, Vec<(BusId, T)>)> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = items[a].full_gain / items[a].full_cost.max(T::min_positive_value());
        let rb = items[b].full_gain / items[b].full_cost.max(T::min_positive_value());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut suffix = vec![T::zero(); order.len() + 1];
    for k in (0..order.len()).rev() {
        suffix[k] = suffix[k + 1] + items[order[k]].full_gain;
    }

    /// Cost, saturated items, and the partial item with its `z`.
    type Cover<T> = (T, Vec<bool>, Option<(usize, T)>);

    struct Search<'a, T> {
        items: &'a [CoverItem<T>],
        order: Vec<usize>,
        suffix: Vec<T>,
        need: T,
        chosen: Vec<bool>,
        best: Option<Cover<T>>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn better(&self, cost: T) -> bool {
            self.best.as_ref().is_none_or(|(c, _, _)| cost < *c)
        }

        fn close(&mut self, gain: T, cost: T) {
            if gain >= self.need {
                if self.better(cost) {
                    self.best = Some((cost, self.chosen.clone(), None));
                }
                return;
            }
            let rest = self.need - gain;
            for j in 0..self.items.len() {
                if self.chosen[j] {
                    continue;
                }
                if let Some((z, c)) = self.items[j].partial(rest) {
                    if self.better(cost + c) {
                        self.best = Some((cost + c, self.chosen.clone(), Some((j, z))));
                    }
                }
            }
        }

        /// `skipped` is the largest full gain among excluded items, any of
        /// which may still close the cover as the partial load.
        fn dfs(&mut self, k: usize, gain: T, cost: T, skipped: T, fresh: bool) {
            if !self.better(cost) {
                return;
            }
            if fresh {
                self.close(gain, cost);
            }
            if gain >= self.need || k == self.order.len() || gain + self.suffix[k] + skipped < self.need {
                return;
            }
            let item = self.order[k];
            let (g, c) = (self.items[item].full_gain, self.items[item].full_cost);
            self.chosen[item] = true;
            self.dfs(k + 1, gain + g, cost + c, skipped, true);
            self.chosen[item] = false;
            self.dfs(k + 1, gain, cost, skipped.max(g), false);
        }
    }

    let mut search = Search { items, order, suffix, need, chosen: vec![false; items.len()], best: None };
    search.dfs(0, T::zero(), T::zero(), T::zero(), true);

    search.best.map(|(cost, chosen, partial)| {
        let mut moves: Vec<(BusId, T)> =
            items.iter().zip(&chosen).filter(|(_, &c)| c).map(|(it, _)| (it.bus, T::one())).collect();
        if let Some((j, z)) = partial {
            moves.push((items[j].bus, z));
        }
        (cost, moves)
    })
}

/// Minimum-cost attack that pushes `|f|` on `target` to at least `u (1 + ε)`.
///
/// The attack only raises `z` above `start`. Flows are modelled as the
/// current flow plus sensitivities times demand change, which is exact for
/// DC flow until an island runs out of capacity; in that case the model is
/// re-linearized at the candidate point, at most once per generator.
pub fn mcb<T: Scalar>(
    target: BranchId,
    grid: &GridCase<T>,
    start: &AttackVector<T>,
    priority: &[GenId],
    tariff: &Tariff<T>,
) -> Result<McbResult<T>> {
    let pos = grid.branch_position(target).ok_or(Error::UnknownBranch(target))?;
    let branch = &grid.branches[pos];
    let infeasible = |flow: T| McbResult { feasible: false, z: start.clone(), cost: T::zero(), achieved_flow: flow };

    let base = solve_state(grid, &tariff.demands(start), priority)?;
    let f_start = base.flows.flows[pos];
    if !branch.alive || !branch.limit().is_finite() {
        return Ok(infeasible(f_start.abs()));
    }
    let threshold = branch.limit() * (T::one() + T::lit(OVERLOAD_MARGIN));
    if f_start.abs() >= threshold {
        return Ok(McbResult { feasible: true, z: start.clone(), cost: T::zero(), achieved_flow: f_start.abs() });
    }
    // Must clear rounding in the verifying solve at this precision.
    let cushion = T::lit(1e-10).max(T::lit(256.0) * T::epsilon()) * T::one().max(threshold);

    let mut point = start.clone();
    let mut f_point = f_start;
    let rounds = grid.generators.len().max(1) + 1;
    for _ in 0..rounds {
        let sens = sensitivities(grid, &tariff.demands(&point), priority)?;
        let row = sens.row(target).expect("alive branch has a sensitivity row");
        let slope_of: BTreeMap<BusId, T> = sens.loads.iter().copied().zip(row.iter().copied()).collect();

        // Linear model around `point`, re-expressed relative to `start`.
        let mut f_lin = f_point;
        for (&bus, t) in &tariff.loads {
            let m = slope_of.get(&bus).copied().unwrap_or_else(T::zero);
            f_lin -= m * (t.demand(point.get(bus)) - t.demand(start.get(bus)));
        }

        let mut best: Option<(T, Vec<(BusId, T)>)> = None;
        for sign in [T::one(), -T::one()] {
            let need = threshold + cushion - sign * f_lin;
            let items: Vec<CoverItem<T>> = tariff
                .loads
                .iter()
                .filter_map(|(&bus, &t)| {
                    let slope = sign * slope_of.get(&bus).copied().unwrap_or_else(T::zero);
                    let lo = start.get(bus);
                    if !(slope > T::zero()) || t.max_rate_change <= T::zero() || lo >= T::one() {
                        return None;
                    }
                    let full_gain = slope * (t.demand(T::one()) - t.demand(lo));
                    let full_cost = t.cost_weight * (T::one() - lo);
                    Some(CoverItem { bus, slope, lo, tariff: t, full_gain, full_cost })
                })
                .collect();
            let found = if need <= T::zero() { Some((T::zero(), Vec::new())) } else { cheapest_cover(&items, need) };
            if let Some(c) = found {
                if best.as_ref().is_none_or(|b| c.0 < b.0) {
                    best = Some(c);
                }
            }
        }
        let Some((_, moves)) = best else {
            return Ok(infeasible(f_start.abs()));
        };

        let mut z = start.clone();
        for (bus, v) in moves {
            z.set(bus, v.max(start.get(bus)).min(T::one()));
        }
        let check = solve_state(grid, &tariff.demands(&z), priority)?;
        let f = check.flows.flows[pos];
        if f.abs() >= threshold {
            let cost = tariff.attack_cost(&z) - tariff.attack_cost(start);
            return Ok(McbResult { feasible: true, z, cost, achieved_flow: f.abs() });
        }
        if !check.dispatch.islands.iter().any(|i| i.saturated) || z == point {
            return Ok(infeasible(f.abs()));
        }
        point = z;
        f_point = f;
    }
    Ok(infeasible(f_start.abs()))
}
