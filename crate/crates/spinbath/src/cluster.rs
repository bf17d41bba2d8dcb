//! Enumeration of bath-spin clusters up to a truncation order under a
//! dipole-distance cutoff, with the subcluster lattice needed for the
//! recursive factorization of irreducible coherence contributions.

use crate::structure::BathSpin;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Default cap on the total number of enumerated clusters.
pub const DEFAULT_CLUSTER_CAP: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error(
        "cluster enumeration overflow: {count} clusters exceed cap {cap} \
         ({n_spins} spins, {n_edges} cutoff edges; reduce bath radius, cutoff, or order)"
    )]
    Overflow {
        count: usize,
        cap: usize,
        n_spins: usize,
        n_edges: usize,
    },
}

/// A sorted index set into the bath list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cluster {
    pub members: Vec<u32>,
}

impl Cluster {
    pub fn order(&self) -> usize {
        self.members.len()
    }
}

/// Undirected cutoff graph as adjacency lists, vertices sorted ascending.
#[derive(Debug, Clone)]
pub struct Connectivity {
    pub neighbors: Vec<Vec<u32>>,
}

impl Connectivity {
    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(|n| n.len()).sum::<usize>() / 2
    }
}

/// Edge between two spins iff their distance is at most `r_dipole`.
pub fn build_connectivity(bath: &[BathSpin], r_dipole: f64) -> Connectivity {
    assert!(r_dipole > 0.0, "r_dipole must be positive");
    let n = bath.len();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (bath[i].position - bath[j].position).norm() <= r_dipole {
                neighbors[i].push(j as u32);
                neighbors[j].push(i as u32);
            }
        }
    }
    Connectivity { neighbors }
}

/// All clusters up to order `max_order`, grouped with their subcluster lists.
///
/// Clusters are the connected subsets of the cutoff graph, closed downward:
/// every proper subset of an included cluster is itself included (subsets of
/// a connected set may be disconnected, so closure can add clusters beyond
/// the connected family at order three and above). Ordering is deterministic:
/// (order, lexicographic members).
#[derive(Debug, Clone)]
pub struct ClusterSet {
    pub clusters: Vec<Cluster>,
    index: HashMap<Vec<u32>, usize>,
    subclusters: Vec<Vec<usize>>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn position(&self, members: &[u32]) -> Option<usize> {
        self.index.get(members).copied()
    }

    /// Indices of every proper nonempty subcluster of cluster `id`.
    pub fn subclusters(&self, id: usize) -> &[usize] {
        &self.subclusters[id]
    }

    pub fn max_order(&self) -> usize {
        self.clusters.last().map_or(0, |c| c.order())
    }
}

/// Enumerates connected subsets of the cutoff graph up to `max_order`,
/// closes the family downward, and builds the subcluster map.
pub fn enumerate_clusters(
    graph: &Connectivity,
    max_order: usize,
    cap: usize,
) -> Result<ClusterSet, ClusterError> {
    assert!(max_order >= 1, "cluster order must be at least 1");
    let n = graph.neighbors.len();
    let mut found: BTreeSet<Vec<u32>> = BTreeSet::new();

    // Singletons always enter, isolated spins included.
    for v in 0..n as u32 {
        found.insert(vec![v]);
    }

    // Connected subsets containing root v using only vertices > v, grown by
    // an extension frontier so each subset appears exactly once.
    let mut stack: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    for v in 0..n as u32 {
        if max_order < 2 {
            break;
        }
        let ext: Vec<u32> = graph.neighbors[v as usize]
            .iter()
            .copied()
            .filter(|&u| u > v)
            .collect();
        stack.push((vec![v], ext));
        while let Some((subset, ext)) = stack.pop() {
            for (k, &u) in ext.iter().enumerate() {
                let mut next = subset.clone();
                next.push(u);
                next.sort_unstable();
                let grown = found.insert(next.clone());
                if found.len() > cap {
                    return Err(overflow(found.len(), cap, graph));
                }
                if next.len() < max_order && grown {
                    // Extension inherits the untried part of the frontier plus
                    // the new vertex's neighbors beyond the root, minus members.
                    let mut next_ext: Vec<u32> = ext[k + 1..].to_vec();
                    for &w in &graph.neighbors[u as usize] {
                        if w > subset[0] && !next.contains(&w) && !next_ext.contains(&w) {
                            next_ext.push(w);
                        }
                    }
                    stack.push((next, next_ext));
                }
            }
        }
    }

    // Downward closure by repeated single-member removal.
    let mut frontier: Vec<Vec<u32>> = found.iter().filter(|c| c.len() >= 3).cloned().collect();
    while let Some(cluster) = frontier.pop() {
        if cluster.len() < 2 {
            continue;
        }
        for skip in 0..cluster.len() {
            let mut sub: Vec<u32> = cluster.clone();
            sub.remove(skip);
            if found.insert(sub.clone()) {
                if found.len() > cap {
                    return Err(overflow(found.len(), cap, graph));
                }
                if sub.len() >= 3 {
                    frontier.push(sub);
                }
            }
        }
    }

    let mut clusters: Vec<Cluster> = found.into_iter().map(|members| Cluster { members }).collect();
    clusters.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.members.cmp(&b.members)));

    let index: HashMap<Vec<u32>, usize> = clusters
        .iter()
        .enumerate()
        .map(|(i, c)| (c.members.clone(), i))
        .collect();

    let subclusters = clusters
        .iter()
        .map(|c| {
            let k = c.order();
            let mut subs = Vec::new();
            // Proper nonempty subsets via bitmask; k is small.
            for mask in 1..(1u32 << k) - 1 {
                let members: Vec<u32> = (0..k)
                    .filter(|&b| mask & (1 << b) != 0)
                    .map(|b| c.members[b])
                    .collect();
                subs.push(*index.get(&members).expect("downward closure guarantees presence"));
            }
            subs.sort_unstable();
            subs
        })
        .collect();

    Ok(ClusterSet {
        clusters,
        index,
        subclusters,
    })
}

fn overflow(count: usize, cap: usize, graph: &Connectivity) -> ClusterError {
    ClusterError::Overflow {
        count,
        cap,
        n_spins: graph.neighbors.len(),
        n_edges: graph.n_edges(),
    }
}
