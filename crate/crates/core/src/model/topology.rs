use petgraph::unionfind::UnionFind;

use super::{BusId, GridCase};
use crate::Scalar;

/// Connected components over alive branches, as bus positions.
///
/// Components are ordered by their smallest bus id and each component lists
/// its buses in ascending id order, so the first entry is the island's
/// angle reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Islands {
    pub components: Vec<Vec<usize>>,
    pub of_bus: Vec<usize>,
}

impl Islands {
    pub fn of<T: Scalar>(grid: &GridCase<T>) -> Self {
        let n = grid.buses.len();
        let index = grid.bus_index();
        let mut uf = UnionFind::<usize>::new(n);
        for br in grid.alive_branches() {
            uf.union(index[&br.from], index[&br.to]);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| grid.buses[i].id);

        let mut root_slot = vec![usize::MAX; n];
        let mut components: Vec<Vec<usize>> = Vec::new();
        let mut of_bus = vec![0; n];
        for i in order {
            let root = uf.find(i);
            if root_slot[root] == usize::MAX {
                root_slot[root] = components.len();
                components.push(Vec::new());
            }
            let slot = root_slot[root];
            components[slot].push(i);
            of_bus[i] = slot;
        }
        Islands { components, of_bus }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.of_bus[a] == self.of_bus[b]
    }
}

/// Partition of bus ids into connected components over alive branches.
pub fn islands<T: Scalar>(grid: &GridCase<T>) -> Vec<Vec<BusId>> {
    Islands::of(grid).components.into_iter().map(|c| c.into_iter().map(|i| grid.buses[i].id).collect()).collect()
}
