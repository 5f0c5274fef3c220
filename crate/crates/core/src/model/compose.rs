use std::collections::BTreeSet;

use super::{Branch, BranchId, BusId, BusKind, GridCase, Islands};
use crate::error::{Error, Result};
use crate::Scalar;

/// Electrical parameters of the branch joining a microgrid to its host bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieSpec<T> {
    pub reactance: T,
    /// Tie capacity as a multiple of the attached case's nominal load.
    pub rating_factor: T,
}

impl<T: Scalar> Default for TieSpec<T> {
    fn default() -> Self {
        TieSpec { reactance: T::lit(0.01), rating_factor: T::lit(DEFAULT_TIE_RATING) }
    }
}

/// Tie rating in units of microgrid nominal load. Local units carry most of
/// the microgrid demand, so the base import stays far below this rating.
pub const DEFAULT_TIE_RATING: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MicrogridSpec<T> {
    /// 1-based, in attachment order.
    pub id: u32,
    pub host: BusId,
    pub member_buses: BTreeSet<BusId>,
    pub tie_lines: Vec<BranchId>,
    pub internal_case: GridCase<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedGrid<T = f64> {
    pub main: GridCase<T>,
    pub microgrids: Vec<MicrogridSpec<T>>,
    pub merged: GridCase<T>,
}

/// Attaches each case to its host bus with default tie parameters.
pub fn compose<T: Scalar>(main: &GridCase<T>, attachments: &[(BusId, GridCase<T>)]) -> Result<ComposedGrid<T>> {
    compose_with(main, attachments, TieSpec::default())
}

/// Attachment `k` (0-based) has its bus and branch ids shifted by
/// `100 * (k + 1)`; its tie branch gets id `100 * (k + 1)` and runs from the
/// host bus to the attached case's bus 1.
pub fn compose_with<T: Scalar>(
    main: &GridCase<T>,
    attachments: &[(BusId, GridCase<T>)],
    tie: TieSpec<T>,
) -> Result<ComposedGrid<T>> {
    let mut merged = main.clone();
    merged.name = if attachments.is_empty() {
        main.name.clone()
    } else {
        let parts: Vec<String> = attachments.iter().map(|(host, c)| format!("{}@{}", c.name, host)).collect();
        format!("{}+{}", main.name, parts.join("+"))
    };
    let mut microgrids = Vec::with_capacity(attachments.len());

    for (k, (host, case)) in attachments.iter().enumerate() {
        if main.bus(*host).is_none() {
            return Err(Error::UnknownBus(*host));
        }
        case.validate()?;
        let offset = 100 * (k as u32 + 1);
        let shift = |b: BusId| BusId(b.0 + offset);
        let entry = BusId(1);
        if case.bus(entry).is_none() {
            return Err(Error::Validation(format!("attached case {} has no bus 1", case.name)));
        }

        let mut members = BTreeSet::new();
        for bus in &case.buses {
            let id = shift(bus.id);
            if merged.bus(id).is_some() {
                return Err(Error::IdCollision(id));
            }
            members.insert(id);
            merged.buses.push(super::Bus { id, ..bus.clone() });
        }
        for g in &case.generators {
            let mut g = g.clone();
            g.bus = shift(g.bus);
            merged.generators.push(g);
        }
        for br in &case.branches {
            let id = BranchId(br.id.0 + offset);
            if merged.branch(id).is_some() {
                return Err(Error::Validation(format!("branch id {id} collides after remapping")));
            }
            merged.branches.push(Branch { id, from: shift(br.from), to: shift(br.to), ..br.clone() });
        }
        let tie_id = BranchId(offset);
        if merged.branch(tie_id).is_some() {
            return Err(Error::Validation(format!("tie branch id {tie_id} already in use")));
        }
        let rating = tie.rating_factor * case.total_nominal_demand();
        merged.branches.push(Branch {
            id: tie_id,
            from: *host,
            to: shift(entry),
            reactance: tie.reactance,
            capacity: (rating > T::zero()).then_some(rating),
            alive: true,
        });

        microgrids.push(MicrogridSpec {
            id: k as u32 + 1,
            host: *host,
            member_buses: members,
            tie_lines: vec![tie_id],
            internal_case: case.clone(),
        });
    }
    merged.validate()?;
    Ok(ComposedGrid { main: main.clone(), microgrids, merged })
}

impl<T: Scalar> ComposedGrid<T> {
    pub fn microgrid(&self, id: u32) -> Option<&MicrogridSpec<T>> {
        self.microgrids.iter().find(|m| m.id == id)
    }

    pub fn microgrid_of(&self, bus: BusId) -> Option<u32> {
        self.microgrids.iter().find(|m| m.member_buses.contains(&bus)).map(|m| m.id)
    }

    /// Microgrids whose load buses (all members if it has none) have no path
    /// to a main-grid generator in `state`, which must share the bus set of
    /// `self.merged`.
    pub fn islanded_microgrids(&self, state: &GridCase<T>) -> BTreeSet<u32> {
        let islands = Islands::of(state);
        let index = state.bus_index();
        let fed: BTreeSet<usize> = state
            .generators
            .iter()
            .filter(|g| !g.standby && g.p_max > T::zero() && self.microgrid_of(g.bus).is_none())
            .map(|g| islands.of_bus[index[&g.bus]])
            .collect();
        self.microgrids
            .iter()
            .filter(|m| {
                let loads: Vec<&BusId> =
                    m.member_buses.iter().filter(|b| state.bus(**b).is_some_and(|x| x.kind == BusKind::Load)).collect();
                let probe = if loads.is_empty() { m.member_buses.iter().collect() } else { loads };
                probe.into_iter().all(|b| !fed.contains(&islands.of_bus[index[b]]))
            })
            .map(|m| m.id)
            .collect()
    }

    /// Microgrids, not already islanded in `state`, that losing `branch` would island.
    pub fn islanded_by_removal(&self, state: &GridCase<T>, branch: BranchId) -> BTreeSet<u32> {
        let before = self.islanded_microgrids(state);
        let mut probe = state.clone();
        if probe.kill_branch(branch).is_err() {
            return BTreeSet::new();
        }
        self.islanded_microgrids(&probe).difference(&before).copied().collect()
    }

    /// Load buses belonging to any microgrid.
    pub fn microgrid_loads(&self) -> BTreeSet<BusId> {
        self.merged.load_buses().filter(|b| self.microgrid_of(b.id).is_some()).map(|b| b.id).collect()
    }
}
