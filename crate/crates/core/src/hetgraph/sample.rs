use std::collections::HashSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{build_adjacency, AdjTensor, HetGraph, NodeKind, NodeRef, Relation};
use crate::{Error, Result};

/// Neighbour budget of an ego-graph expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FanoutPlan {
    pub hops: usize,
    /// Per hop, fanouts for `[ppi, go, anno]`; the last entry repeats.
    pub per_hop: Vec<[usize; 3]>,
    pub node_cap: usize,
}

impl Default for FanoutPlan {
    fn default() -> Self {
        Self { hops: 2, per_hop: vec![[3, 1, 3], [1, 1, 1]], node_cap: 32 }
    }
}

impl FanoutPlan {
    pub fn fanout(&self, hop: usize, r: Relation) -> usize {
        let row = self.per_hop.get(hop).or(self.per_hop.last()).copied().unwrap_or([0; 3]);
        row.get(r.index()).copied().unwrap_or(0)
    }
}

/// A sampled neighbourhood; local node 0 is the centre.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EgoGraph {
    pub center: NodeRef,
    /// Local index to global id.
    pub nodes: Vec<usize>,
    pub kinds: Vec<NodeKind>,
    pub adj: AdjTensor,
}

impl EgoGraph {
    /// An ego-graph detached from any store; node ids are local indices.
    pub fn from_parts(kinds: Vec<NodeKind>, adj: AdjTensor) -> Result<Self> {
        if kinds.is_empty() || kinds.len() != adj.node_count() {
            return Err(Error::contract("ego-graph needs one kind per adjacency node"));
        }
        Ok(Self {
            center: NodeRef { id: 0, kind: kinds[0] },
            nodes: (0..kinds.len()).collect(),
            kinds,
            adj,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Local indices of nodes of `kind`, ascending.
    pub fn local_of_kind(&self, kind: NodeKind) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| self.kinds[i] == kind).collect()
    }

    /// Relabels local nodes: node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let n = self.node_count();
        let mut nodes = vec![0; n];
        let mut kinds = vec![NodeKind::Protein; n];
        for i in 0..n {
            nodes[perm[i]] = self.nodes[i];
            kinds[perm[i]] = self.kinds[i];
        }
        Self { center: self.center, nodes, kinds, adj: self.adj.permute(perm) }
    }
}

/// Breadth-wise neighbour sampling around a protein.
///
/// At every hop and for every explicit relation, up to `fanout` not yet
/// sampled neighbours of each frontier node are drawn uniformly without
/// replacement, until `node_cap` nodes are collected.
pub fn sample_ego(graph: &HetGraph, center: usize, plan: &FanoutPlan, seed: u64) -> Result<EgoGraph> {
    if center >= graph.node_count() || graph.kind(center) != NodeKind::Protein {
        return Err(Error::contract(format!("ego centre {center} is not a protein")));
    }
    if plan.hops == 0 || plan.node_cap == 0 {
        return Err(Error::contract("ego sampling needs hops ≥ 1 and a positive node cap"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![center];
    let mut seen = HashSet::from([center]);
    let mut frontier = vec![center];
    'hops: for hop in 0..plan.hops {
        let mut next = Vec::new();
        for &u in &frontier {
            for r in Relation::EXPLICIT {
                let fanout = plan.fanout(hop, r);
                if fanout == 0 {
                    continue;
                }
                let candidates: Vec<usize> =
                    graph.neighbours(u, r).iter().copied().filter(|v| !seen.contains(v)).collect();
                let take = fanout.min(candidates.len());
                let mut picked: Vec<usize> =
                    index::sample(&mut rng, candidates.len(), take).into_iter().map(|k| candidates[k]).collect();
                picked.sort_unstable();
                for v in picked {
                    if nodes.len() == plan.node_cap {
                        break 'hops;
                    }
                    seen.insert(v);
                    nodes.push(v);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    let kinds = nodes.iter().map(|&v| graph.kind(v)).collect();
    let adj = build_adjacency(graph, &nodes);
    Ok(EgoGraph { center: graph.node(center), nodes, kinds, adj })
}
