//! Random connected test networks.

use rand::Rng;

use super::{Branch, Bus, BusId, BusKind, Generator, GridCase};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub buses: usize,
    /// Extra branches on top of the spanning tree, as a fraction of `buses`.
    pub mesh: f64,
    pub generators: usize,
    pub loads: usize,
    /// Total generation capacity over total demand.
    pub reserve: f64,
}

impl SyntheticSpec {
    pub fn new(buses: usize, generators: usize, loads: usize) -> Self {
        SyntheticSpec { buses, mesh: 0.5, generators, loads, reserve: 3.0 }
    }
}

/// A connected grid: random spanning tree plus extra chords, distinct bus
/// roles, reactances in [0.05, 0.5], demands in [0.2, 2].
pub fn random_grid<T: Scalar, R: Rng + ?Sized>(rng: &mut R, spec: SyntheticSpec) -> GridCase<T> {
    let n = spec.buses.max(2);
    let n_gen = spec.generators.clamp(1, n - 1);
    let n_load = spec.loads.clamp(1, n - n_gen);

    let mut roles: Vec<BusKind> = (0..n)
        .map(|i| {
            if i < n_gen {
                BusKind::Generator
            } else if i < n_gen + n_load {
                BusKind::Load
            } else {
                BusKind::Junction
            }
        })
        .collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        roles.swap(i, j);
    }

    let buses: Vec<Bus<T>> = roles
        .iter()
        .enumerate()
        .map(|(i, &kind)| Bus {
            id: BusId(i as u32 + 1),
            kind,
            nominal_demand: if kind == BusKind::Load { T::lit(rng.random_range(0.2..2.0)) } else { T::zero() },
        })
        .collect();
    let total: f64 = buses.iter().map(|b| b.nominal_demand.as_f64()).sum();

    let gen_buses: Vec<BusId> = buses.iter().filter(|b| b.kind == BusKind::Generator).map(|b| b.id).collect();
    let weights: Vec<f64> = gen_buses.iter().map(|_| rng.random_range(0.5..1.5)).collect();
    let wsum: f64 = weights.iter().sum();
    let generators = gen_buses
        .iter()
        .zip(&weights)
        .map(|(&bus, w)| Generator::new(bus, T::zero(), T::lit(spec.reserve * total * w / wsum)))
        .collect();

    let mut branches = Vec::new();
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    let extra = (spec.mesh * n as f64).round() as usize;
    for _ in 0..extra * 4 {
        if edges.len() >= n - 1 + extra {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    for (k, (a, b)) in edges.into_iter().enumerate() {
        branches.push(Branch::new(k as u32 + 1, a as u32 + 1, b as u32 + 1, T::lit(rng.random_range(0.05..0.5)), None));
    }

    GridCase::new(format!("synthetic-{n}"), buses, generators, branches).expect("synthetic grid is valid")
}
