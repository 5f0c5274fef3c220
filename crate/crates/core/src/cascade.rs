//! Cascading line failures driven by a moving average of branch flows.
//!
//! Each step balances every island, solves the DC flow, updates
//! `f̃ = α f + (1 − α) f̃`, and removes every line with `|f̃| > u` at once.
//! Load buses left without any generator in their island are failed nodes.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{BranchId, BusId, BusKind, Demand, GenId, GridCase, Islands};
use crate::powerflow::{solve_state, IslandBalance, Solved};
use crate::Scalar;

/// Relative slack below which a flow counts as exactly at capacity.
pub const TRIP_TOLERANCE: f64 = 1e-9;

/// `|f| > u`, with flows within [`TRIP_TOLERANCE`] of the limit surviving.
#[inline]
pub fn overloaded<T: Scalar>(flow: T, limit: T) -> bool {
    flow.abs() > limit * (T::one() + T::lit(TRIP_TOLERANCE))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub failed: Vec<BranchId>,
    pub islands: Vec<IslandBalance<T>>,
}

impl<T: Scalar> fmt::Display for StepRecord<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: failed [", self.step)?;
        for (k, b) in self.failed.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "]; islands")?;
        for isl in &self.islands {
            write!(
                f,
                " {{buses={} gen={:.4} served={:.4}/{:.4}{}}}",
                isl.buses.len(),
                isl.generation,
                isl.served,
                isl.requested,
                if isl.has_source { "" } else { " dark" }
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CascadeState<T> {
    pub grid: GridCase<T>,
    pub demand: Demand<T>,
    pub priority: Vec<GenId>,
    /// Moving-average flow per branch position.
    pub moving_avg: Vec<T>,
    pub step: usize,
    pub failed_lines: Vec<BranchId>,
    pub failed_nodes: BTreeSet<BusId>,
    pub trace: Vec<StepRecord<T>>,
    last: Option<Solved<T>>,
}

impl<T: Scalar> CascadeState<T> {
    /// Starts with cold lines (`f̃ = 0`).
    pub fn new(grid: GridCase<T>, demand: Demand<T>) -> Self {
        let n = grid.branches.len();
        CascadeState {
            grid,
            demand,
            priority: Vec::new(),
            moving_avg: vec![T::zero(); n],
            step: 0,
            failed_lines: Vec::new(),
            failed_nodes: BTreeSet::new(),
            trace: Vec::new(),
            last: None,
        }
    }

    pub fn with_priority(mut self, priority: Vec<GenId>) -> Self {
        self.priority = priority;
        self
    }

    /// Seeds the moving average with flows from a previous operating point.
    pub fn with_memory(mut self, flows: &[T]) -> Self {
        assert_eq!(flows.len(), self.moving_avg.len());
        self.moving_avg.copy_from_slice(flows);
        self
    }

    /// The most recent balanced solve.
    pub fn last_solve(&self) -> Option<&Solved<T>> {
        self.last.as_ref()
    }

    /// Loads in islands without any producing unit.
    fn dark_loads(&self) -> BTreeSet<BusId> {
        let islands = Islands::of(&self.grid);
        let index = self.grid.bus_index();
        let mut lit = vec![false; islands.len()];
        for g in &self.grid.generators {
            if g.p_max > T::zero() {
                lit[islands.of_bus[index[&g.bus]]] = true;
            }
        }
        self.grid
            .buses
            .iter()
            .enumerate()
            .filter(|(i, b)| b.kind == BusKind::Load && !lit[islands.of_bus[*i]])
            .map(|(_, b)| b.id)
            .collect()
    }
}

/// One pass of the cascade loop. Returns the lines removed in this step.
pub fn cascade_step<T: Scalar>(state: &mut CascadeState<T>, alpha: T) -> Result<Vec<BranchId>> {
    assert!(alpha > T::zero() && alpha <= T::one(), "alpha must lie in (0, 1]");
    let solved = solve_state(&state.grid, &state.demand, &state.priority)?;
    state.step += 1;

    let mut failed = Vec::new();
    for (p, br) in state.grid.branches.iter_mut().enumerate() {
        if !br.alive {
            continue;
        }
        let f = solved.flows.flows[p];
        let avg = alpha * f + (T::one() - alpha) * state.moving_avg[p];
        state.moving_avg[p] = avg;
        if overloaded(avg, br.limit()) {
            br.alive = false;
            failed.push(br.id);
        }
    }
    state.failed_lines.extend(failed.iter().copied());
    let dark = state.dark_loads();
    state.failed_nodes.extend(dark);
    state.trace.push(StepRecord { step: state.step, failed: failed.clone(), islands: solved.dispatch.islands.clone() });
    state.last = Some(solved);
    Ok(failed)
}

#[derive(Debug, Clone)]
pub struct CascadeOutcome<T> {
    /// Failed lines, in failure order.
    pub s1: Vec<BranchId>,
    /// Failed load buses.
    pub s2: BTreeSet<BusId>,
    pub steps: Vec<StepRecord<T>>,
    /// Stable topology.
    pub final_grid: GridCase<T>,
    /// Balanced solve of the stable topology.
    pub final_solve: Solved<T>,
}

/// Step limit: every non-final step removes a branch when `α = 1`; with
/// memory, a failure may take `ln(tol) / ln(1 − α)` extra steps to surface.
pub fn step_limit(branches: usize, alpha: f64) -> usize {
    let per_failure = if alpha >= 1.0 { 1 } else { ((1e-16f64).ln() / (1.0 - alpha).ln()).ceil() as usize + 2 };
    (branches + 1) * per_failure
}

/// Runs `cascade_step` until the network is stable.
///
/// A step with no failures is final once every alive line either carries
/// `|f| <= u` or has a moving average that has caught up with its flow.
pub fn run<T: Scalar>(mut state: CascadeState<T>, alpha: T) -> Result<CascadeOutcome<T>> {
    let limit = step_limit(state.grid.branches.len(), alpha.as_f64());
    loop {
        if state.step >= limit {
            return Err(Error::NoConvergence { steps: state.step });
        }
        let failed = cascade_step(&mut state, alpha)?;
        if !failed.is_empty() {
            continue;
        }
        let solved = state.last.as_ref().expect("solved at least once");
        let settled = state.grid.branches.iter().enumerate().filter(|(_, b)| b.alive).all(|(p, br)| {
            let f = solved.flows.flows[p];
            let tol = T::lit(1e-12) * T::one().max(f.abs());
            !overloaded(f, br.limit()) || (f - state.moving_avg[p]).abs() <= tol
        });
        if settled {
            break;
        }
    }
    let final_solve = state.last.take().expect("solved at least once");
    Ok(CascadeOutcome {
        s1: state.failed_lines,
        s2: state.failed_nodes,
        steps: state.trace,
        final_grid: state.grid,
        final_solve,
    })
}

/// Cascade from a cold start with plain proportional dispatch.
pub fn run_cascade<T: Scalar>(grid: &GridCase<T>, demand: &Demand<T>, alpha: T) -> Result<CascadeOutcome<T>> {
    run(CascadeState::new(grid.clone(), demand.clone()), alpha)
}
