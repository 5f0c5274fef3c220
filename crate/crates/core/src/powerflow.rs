//! Linearized (DC) power flow, island balancing and demand sensitivities.
//!
//! Per bus `i`: `Σ_out f − Σ_in f = P_i − D_i`; per branch `(i, j)`:
//! `θ_i − θ_j = x_ij · f_ij`. Each island's lowest bus id is its angle
//! reference.

use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::model::{BranchId, BusId, Demand, GenId, Generator, GridCase, Islands};
use crate::Scalar;

/// Outcome of balancing one island.
#[derive(Debug, Clone, PartialEq)]
pub struct Balance<T> {
    /// Output per generator, in the order given.
    pub outputs: Vec<T>,
    /// Served demand per load, in the order given.
    pub served: Vec<T>,
    /// d(output)/d(total demand) per generator; zero when saturated or unsourced.
    pub marginal: Vec<T>,
    pub has_source: bool,
    /// Requested demand exceeded the island's capacity and was scaled down.
    pub saturated: bool,
    /// Some running unit sits below its `p_min`.
    pub pmin_relaxed: bool,
}

/// Balances supply and demand inside one island.
///
/// Units in `priority` (positions into `generators`) are filled to `p_max`
/// first, in order; the remainder is shared in proportion to `p_max`. Standby
/// units take part only when no regular unit in the island can produce.
/// When demand exceeds capacity every unit runs at `p_max` and each demand
/// is scaled by capacity / demand. Without any source all demand is shed.
pub fn balance_island<T: Scalar>(generators: &[&Generator<T>], priority: &[usize], demands: &[T]) -> Balance<T> {
    let n = generators.len();
    let mut outputs = vec![T::zero(); n];
    let mut marginal = vec![T::zero(); n];
    let total: T = demands.iter().copied().sum();

    let regular = generators.iter().any(|g| !g.standby && g.p_max > T::zero());
    let runs: Vec<bool> = generators.iter().map(|g| g.p_max > T::zero() && g.standby != regular).collect();
    let capacity: T = generators.iter().zip(&runs).filter(|(_, &r)| r).map(|(g, _)| g.p_max).sum();

    if capacity <= T::zero() {
        return Balance {
            outputs,
            served: vec![T::zero(); demands.len()],
            marginal,
            has_source: false,
            saturated: false,
            pmin_relaxed: false,
        };
    }

    let (served, saturated) = if total > capacity {
        for (k, g) in generators.iter().enumerate() {
            if runs[k] {
                outputs[k] = g.p_max;
            }
        }
        let scale = capacity / total;
        (demands.iter().map(|&d| d * scale).collect(), true)
    } else {
        let mut remaining = total;
        let mut marginal_set = false;
        let mut is_priority = vec![false; n];
        for &k in priority {
            if k >= n || !runs[k] || is_priority[k] {
                continue;
            }
            is_priority[k] = true;
            let take = remaining.min(generators[k].p_max);
            outputs[k] = take;
            remaining -= take;
            if !marginal_set && take < generators[k].p_max {
                marginal[k] = T::one();
                marginal_set = true;
            }
        }
        let rest: T = (0..n).filter(|&k| runs[k] && !is_priority[k]).map(|k| generators[k].p_max).sum();
        if rest > T::zero() {
            for k in (0..n).filter(|&k| runs[k] && !is_priority[k]) {
                outputs[k] = generators[k].p_max * (remaining / rest);
                if !marginal_set {
                    marginal[k] = generators[k].p_max / rest;
                }
            }
        }
        (demands.to_vec(), false)
    };

    let pmin_relaxed = generators.iter().zip(&outputs).zip(&runs).any(|((g, &out), &r)| r && out < g.p_min);

    Balance { outputs, served, marginal, has_source: true, saturated, pmin_relaxed }
}

/// Per-island summary of a dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct IslandBalance<T> {
    pub buses: Vec<BusId>,
    pub generation: T,
    pub requested: T,
    pub served: T,
    pub has_source: bool,
    pub saturated: bool,
    pub pmin_relaxed: bool,
}

/// Balanced operating point of a whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch<T> {
    /// Output per generator position.
    pub output: Vec<T>,
    /// Served demand per bus position.
    pub served: Vec<T>,
    /// Requested demand per bus position.
    pub requested: Vec<T>,
    /// d(output)/d(island demand) per generator position.
    pub marginal: Vec<T>,
    pub islands: Vec<IslandBalance<T>>,
    /// Island of each bus, as an index into `islands`.
    pub island_of: Vec<usize>,
}

impl<T: Scalar> Dispatch<T> {
    /// Net injection per bus position: generation minus served demand.
    pub fn injection<G: std::borrow::Borrow<GridCase<T>>>(&self, grid: G) -> Vec<T> {
        let grid = grid.borrow();
        let index = grid.bus_index();
        let mut inj: Vec<T> = self.served.iter().map(|&d| -d).collect();
        for (g, &out) in grid.generators.iter().zip(&self.output) {
            inj[index[&g.bus]] += out;
        }
        inj
    }

    /// Load buses whose island has no source.
    pub fn unsourced_loads<'a>(&'a self, grid: &'a GridCase<T>) -> impl Iterator<Item = BusId> + 'a {
        grid.buses
            .iter()
            .enumerate()
            .filter(move |(i, b)| b.kind == crate::model::BusKind::Load && !self.islands[self.island_of[*i]].has_source)
            .map(|(_, b)| b.id)
    }
}

/// Balances every island of `grid` for the requested `demand`.
/// Loads missing from `demand` request nothing.
pub fn dispatch<T: Scalar>(grid: &GridCase<T>, demand: &Demand<T>, priority: &[GenId]) -> Dispatch<T> {
    let islands = Islands::of(grid);
    let index = grid.bus_index();
    let requested: Vec<T> = grid.buses.iter().map(|b| demand.get(&b.id).copied().unwrap_or_else(T::zero)).collect();
    let mut output = vec![T::zero(); grid.generators.len()];
    let mut marginal = vec![T::zero(); grid.generators.len()];
    let mut served = vec![T::zero(); grid.buses.len()];
    let mut summaries = Vec::with_capacity(islands.len());

    let mut gens_by_island: Vec<Vec<usize>> = vec![Vec::new(); islands.len()];
    for (k, g) in grid.generators.iter().enumerate() {
        gens_by_island[islands.of_bus[index[&g.bus]]].push(k);
    }

    for (slot, members) in islands.components.iter().enumerate() {
        let gen_pos = &gens_by_island[slot];
        let gens: Vec<&Generator<T>> = gen_pos.iter().map(|&k| &grid.generators[k]).collect();
        let local_priority: Vec<usize> =
            priority.iter().filter_map(|p| gen_pos.iter().position(|&k| k == p.0)).collect();
        let demands: Vec<T> = members.iter().map(|&i| requested[i]).collect();
        let bal = balance_island(&gens, &local_priority, &demands);
        for (j, &k) in gen_pos.iter().enumerate() {
            output[k] = bal.outputs[j];
            marginal[k] = bal.marginal[j];
        }
        for (j, &i) in members.iter().enumerate() {
            served[i] = bal.served[j];
        }
        summaries.push(IslandBalance {
            buses: members.iter().map(|&i| grid.buses[i].id).collect(),
            generation: bal.outputs.iter().copied().sum(),
            requested: demands.iter().copied().sum(),
            served: bal.served.iter().copied().sum(),
            has_source: bal.has_source,
            saturated: bal.saturated,
            pmin_relaxed: bal.pmin_relaxed,
        });
    }

    Dispatch { output, served, requested, marginal, islands: summaries, island_of: islands.of_bus }
}

/// Branch flows and bus angles for one topology state.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution<T> {
    /// Signed flow per branch position, `from → to` positive. Dead branches carry 0.
    pub flows: Vec<T>,
    /// Phase angle per bus position, radians.
    pub angles: Vec<T>,
    /// Net injection per bus position used for the solve.
    pub injection: Vec<T>,
}

impl<T: Scalar> FlowSolution<T> {
    pub fn flow(&self, grid: &GridCase<T>, id: BranchId) -> Option<T> {
        grid.branch_position(id).map(|p| self.flows[p])
    }

    /// Largest per-bus mismatch between net outflow and injection.
    pub fn kirchhoff_residual(&self, grid: &GridCase<T>) -> T {
        let index = grid.bus_index();
        let mut net = vec![T::zero(); grid.buses.len()];
        for (br, &f) in grid.branches.iter().zip(&self.flows) {
            if br.alive {
                net[index[&br.from]] += f;
                net[index[&br.to]] -= f;
            }
        }
        net.iter().zip(&self.injection).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    /// Largest `|θ_i − θ_j − x f|` over alive branches.
    pub fn angle_residual(&self, grid: &GridCase<T>) -> T {
        let index = grid.bus_index();
        grid.branches.iter().zip(&self.flows).filter(|(br, _)| br.alive).fold(T::zero(), |m, (br, &f)| {
            let d = self.angles[index[&br.from]] - self.angles[index[&br.to]] - br.reactance * f;
            m.max(d.abs())
        })
    }
}

/// Reduced susceptance system for one island, reference bus removed.
struct IslandSystem<T> {
    /// Bus positions of the island; `members[0]` is the reference.
    members: Vec<usize>,
    /// Position within `members` for each bus position in the grid.
    local: Vec<usize>,
    lu: Option<Lu<T>>,
}

impl<T: Scalar> IslandSystem<T> {
    fn build(
        grid: &GridCase<T>,
        index: &std::collections::HashMap<BusId, usize>,
        members: &[usize],
        local: &mut [usize],
    ) -> Result<Self> {
        for (j, &i) in members.iter().enumerate() {
            local[i] = j;
        }
        let m = members.len();
        if m <= 1 {
            return Ok(IslandSystem { members: members.to_vec(), local: local.to_vec(), lu: None });
        }
        let n = m - 1;
        let mut b = vec![T::zero(); n * n];
        for br in grid.alive_branches() {
            let (a, c) = (index[&br.from], index[&br.to]);
            if local[a] >= m || members[local[a]] != a || members[local[c]] != c {
                continue;
            }
            let y = T::one() / br.reactance;
            let (la, lc) = (local[a], local[c]);
            if la > 0 {
                b[(la - 1) * n + la - 1] += y;
            }
            if lc > 0 {
                b[(lc - 1) * n + lc - 1] += y;
            }
            if la > 0 && lc > 0 {
                b[(la - 1) * n + lc - 1] -= y;
                b[(lc - 1) * n + la - 1] -= y;
            }
        }
        let lu = Lu::factor(n, b)
            .map_err(|_| Error::Singular { island: members.iter().map(|&i| grid.buses[i].id).collect() })?;
        Ok(IslandSystem { members: members.to_vec(), local: local.to_vec(), lu: Some(lu) })
    }

    /// Angles for the island's buses (reference at 0) given per-bus injections.
    fn angles(&self, injection: impl Fn(usize) -> T) -> Vec<T> {
        let mut theta = vec![T::zero(); self.members.len()];
        if let Some(lu) = &self.lu {
            let rhs: Vec<T> = self.members[1..].iter().map(|&i| injection(i)).collect();
            let x = lu.solve(&rhs);
            theta[1..].copy_from_slice(&x);
        }
        theta
    }
}

/// Solves the DC flow equations for a balanced injection.
pub fn solve_dc<T: Scalar>(grid: &GridCase<T>, injection: &[T]) -> Result<FlowSolution<T>> {
    assert_eq!(injection.len(), grid.buses.len(), "injection must cover every bus");
    let islands = Islands::of(grid);
    let index = grid.bus_index();
    let mut angles = vec![T::zero(); grid.buses.len()];
    let mut local = vec![usize::MAX; grid.buses.len()];
    for members in &islands.components {
        let sys = IslandSystem::build(grid, &index, members, &mut local)?;
        let theta = sys.angles(|i| injection[i]);
        for (j, &i) in members.iter().enumerate() {
            angles[i] = theta[j];
        }
    }
    let flows = grid
        .branches
        .iter()
        .map(|br| if br.alive { (angles[index[&br.from]] - angles[index[&br.to]]) / br.reactance } else { T::zero() })
        .collect();
    Ok(FlowSolution { flows, angles, injection: injection.to_vec() })
}

/// Balanced dispatch together with its flow solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solved<T> {
    pub dispatch: Dispatch<T>,
    pub flows: FlowSolution<T>,
}

/// Balances and solves in one go.
pub fn solve_state<T: Scalar>(grid: &GridCase<T>, demand: &Demand<T>, priority: &[GenId]) -> Result<Solved<T>> {
    let dispatch = dispatch(grid, demand, priority);
    let injection = dispatch.injection(grid);
    let flows = solve_dc(grid, &injection)?;
    Ok(Solved { dispatch, flows })
}

/// `∂f_branch / ∂D_load` under the balancing rule of [`balance_island`].
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix<T> {
    /// Alive branches, one row each.
    pub branches: Vec<BranchId>,
    /// Load buses, one column each.
    pub loads: Vec<BusId>,
    entries: Vec<T>,
}

impl<T: Scalar> SensitivityMatrix<T> {
    pub fn get(&self, branch: BranchId, load: BusId) -> Option<T> {
        let r = self.branches.iter().position(|&b| b == branch)?;
        let c = self.loads.iter().position(|&l| l == load)?;
        Some(self.entries[r * self.loads.len() + c])
    }

    pub fn row(&self, branch: BranchId) -> Option<&[T]> {
        let r = self.branches.iter().position(|&b| b == branch)?;
        let n = self.loads.len();
        Some(&self.entries[r * n..(r + 1) * n])
    }

    pub fn iter(&self) -> impl Iterator<Item = (BranchId, BusId, T)> + '_ {
        let n = self.loads.len();
        self.entries.iter().enumerate().map(move |(k, &v)| (self.branches[k / n], self.loads[k % n], v))
    }
}

/// Flow sensitivities to every load's requested demand at the given operating point.
pub fn sensitivities<T: Scalar>(
    grid: &GridCase<T>,
    demand: &Demand<T>,
    priority: &[GenId],
) -> Result<SensitivityMatrix<T>> {
    let disp = dispatch(grid, demand, priority);
    let islands = Islands::of(grid);
    let index = grid.bus_index();
    let alive: Vec<usize> = (0..grid.branches.len()).filter(|&p| grid.branches[p].alive).collect();
    let loads: Vec<usize> =
        (0..grid.buses.len()).filter(|&i| grid.buses[i].kind == crate::model::BusKind::Load).collect();
    let n_loads = loads.len();
    let mut entries = vec![T::zero(); alive.len() * n_loads];

    let mut local = vec![usize::MAX; grid.buses.len()];
    let mut systems = Vec::with_capacity(islands.len());
    for members in &islands.components {
        systems.push(IslandSystem::build(grid, &index, members, &mut local)?);
    }

    for (c, &li) in loads.iter().enumerate() {
        let slot = islands.of_bus[li];
        let summary = &disp.islands[slot];
        if !summary.has_source {
            continue;
        }
        let sys = &systems[slot];
        let mut dinj = vec![T::zero(); grid.buses.len()];
        if summary.saturated {
            let total = summary.requested;
            let cap = summary.generation;
            for &j in &sys.members {
                let delta = if j == li { T::one() } else { T::zero() };
                dinj[j] = -(cap / total) * (delta - disp.requested[j] / total);
            }
        } else {
            dinj[li] -= T::one();
            for (k, g) in grid.generators.iter().enumerate() {
                let gi = index[&g.bus];
                if islands.of_bus[gi] == slot {
                    dinj[gi] += disp.marginal[k];
                }
            }
        }
        let theta_local = sys.angles(|i| dinj[i]);
        for (r, &p) in alive.iter().enumerate() {
            let br = &grid.branches[p];
            let (a, b) = (index[&br.from], index[&br.to]);
            if islands.of_bus[a] != slot {
                continue;
            }
            let d = (theta_local[sys.local[a]] - theta_local[sys.local[b]]) / br.reactance;
            entries[r * n_loads + c] = d;
        }
    }

    Ok(SensitivityMatrix {
        branches: alive.iter().map(|&p| grid.branches[p].id).collect(),
        loads: loads.iter().map(|&i| grid.buses[i].id).collect(),
        entries,
    })
}
