//! Network description: buses, generators, branches, and microgrid composition.

mod case;
mod compose;
pub mod synthetic;
mod topology;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::Scalar;

pub use case::parse_case;
pub use compose::{compose, compose_with, ComposedGrid, MicrogridSpec, TieSpec, DEFAULT_TIE_RATING};
pub use topology::{islands, Islands};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BusId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId(pub u32);

/// Position of a generator in [`GridCase::generators`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenId(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for GenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusKind {
    Generator,
    Load,
    Junction,
}

impl BusKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BusKind::Generator => "generator",
            BusKind::Load => "load",
            BusKind::Junction => "junction",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus<T> {
    pub id: BusId,
    pub kind: BusKind,
    /// Zero unless `kind` is [`BusKind::Load`].
    pub nominal_demand: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub bus: BusId,
    pub p_min: T,
    pub p_max: T,
    /// Last dispatched output.
    pub output: T,
    /// Standby units only run when their island has no other source.
    /// Runs only in islands without a regular unit.
    pub standby: bool,
}

impl<T: Scalar> Generator<T> {
    pub fn new(bus: BusId, p_min: T, p_max: T) -> Self {
        Generator { bus, p_min, p_max, output: T::zero(), standby: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub id: BranchId,
    pub from: BusId,
    pub to: BusId,
    pub reactance: T,
    /// `None` until capacities are assigned from a base flow.
    pub capacity: Option<T>,
    pub alive: bool,
}

impl<T: Scalar> Branch<T> {
    pub fn new(id: u32, from: u32, to: u32, reactance: T, capacity: Option<T>) -> Self {
        Branch { id: BranchId(id), from: BusId(from), to: BusId(to), reactance, capacity, alive: true }
    }

    /// Capacity, or +inf when unassigned.
    pub fn limit(&self) -> T {
        self.capacity.unwrap_or_else(T::infinity)
    }
}

/// Static network description plus the alive flag of each branch.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCase<T = f64> {
    pub name: String,
    pub buses: Vec<Bus<T>>,
    pub generators: Vec<Generator<T>>,
    pub branches: Vec<Branch<T>>,
}

impl<T: Scalar> GridCase<T> {
    /// Builds and validates a case.
    pub fn new(
        name: impl Into<String>,
        buses: Vec<Bus<T>>,
        generators: Vec<Generator<T>>,
        branches: Vec<Branch<T>>,
    ) -> Result<Self> {
        let case = GridCase { name: name.into(), buses, generators, branches };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::Validation(m));
        if self.buses.is_empty() {
            return invalid("bus table is empty".into());
        }
        let mut seen = HashMap::with_capacity(self.buses.len());
        for bus in &self.buses {
            if seen.insert(bus.id, ()).is_some() {
                return invalid(format!("duplicate bus id {}", bus.id));
            }
            if !(bus.nominal_demand >= T::zero()) {
                return invalid(format!("bus {} has negative demand", bus.id));
            }
            if bus.kind != BusKind::Load && bus.nominal_demand != T::zero() {
                return invalid(format!("{} bus {} carries demand", bus.kind.as_str(), bus.id));
            }
        }
        for g in &self.generators {
            if !seen.contains_key(&g.bus) {
                return Err(Error::UnknownBus(g.bus));
            }
            if !(g.p_min >= T::zero() && g.p_min <= g.p_max) {
                return invalid(format!("generator at bus {} violates 0 <= p_min <= p_max", g.bus));
            }
        }
        let mut branch_ids = HashMap::with_capacity(self.branches.len());
        for br in &self.branches {
            if branch_ids.insert(br.id, ()).is_some() {
                return invalid(format!("duplicate branch id {}", br.id));
            }
            for end in [br.from, br.to] {
                if !seen.contains_key(&end) {
                    return Err(Error::UnknownBus(end));
                }
            }
            if br.from == br.to {
                return invalid(format!("branch {} is a self loop", br.id));
            }
            if !(br.reactance > T::zero()) {
                return invalid(format!("branch {} has non-positive reactance", br.id));
            }
            if let Some(u) = br.capacity {
                if !(u > T::zero()) {
                    return invalid(format!("branch {} has non-positive capacity", br.id));
                }
            }
        }
        Ok(())
    }

    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus<T>> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch_position(&self, id: BranchId) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch<T>> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn kill_branch(&mut self, id: BranchId) -> Result<()> {
        let pos = self.branch_position(id).ok_or(Error::UnknownBranch(id))?;
        self.branches[pos].alive = false;
        Ok(())
    }

    pub fn alive_branches(&self) -> impl Iterator<Item = &Branch<T>> {
        self.branches.iter().filter(|b| b.alive)
    }

    pub fn load_buses(&self) -> impl Iterator<Item = &Bus<T>> {
        self.buses.iter().filter(|b| b.kind == BusKind::Load)
    }

    pub fn total_nominal_demand(&self) -> T {
        self.load_buses().map(|b| b.nominal_demand).sum()
    }

    /// Demand vector at nominal values, keyed by bus id.
    pub fn nominal_demands(&self) -> Demand<T> {
        self.load_buses().map(|b| (b.id, b.nominal_demand)).collect()
    }
}

/// Requested demand per load bus (before island balancing).
pub type Demand<T> = std::collections::BTreeMap<BusId, T>;
