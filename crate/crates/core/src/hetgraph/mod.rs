//! Heterogeneous protein/GO graph.
//!
//! Nodes are proteins or GO terms with dense ids in `[0, |V|)`. Explicit
//! edges are ordered triplets `(u, v, relation)`:
//!
//! * `ppi`: protein to protein, stored in both directions;
//! * `go`: parent term to child term, acyclic;
//! * `anno`: protein to GO term.
//!
//! Every other ordered pair implicitly carries `noedge`.

mod io;
mod sample;

pub use io::{load_edges, load_labels, parse_edges, parse_nodes, parse_splits, write_graph, LoadReport};
pub use sample::{sample_ego, EgoGraph, FanoutPlan};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Ppi = 0,
    Go = 1,
    Anno = 2,
    NoEdge = 3,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Ppi, Relation::Go, Relation::Anno, Relation::NoEdge];
    pub const EXPLICIT: [Relation; 3] = [Relation::Ppi, Relation::Go, Relation::Anno];
    pub const COUNT: usize = 4;

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Ppi => "ppi",
            Relation::Go => "go",
            Relation::Anno => "anno",
            Relation::NoEdge => "noedge",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppi" => Ok(Relation::Ppi),
            "go" => Ok(Relation::Go),
            "anno" => Ok(Relation::Anno),
            "noedge" => Ok(Relation::NoEdge),
            other => Err(Error::data(format!("unknown relation `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Protein,
    Go,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Protein => "protein",
            NodeKind::Go => "go",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub id: usize,
    pub kind: NodeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split `{other}`"))),
        }
    }
}

/// Immutable heterogeneous graph; see the module docs for edge semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct HetGraph {
    kinds: Vec<NodeKind>,
    /// Position of each node among the nodes of its kind.
    kind_index: Vec<usize>,
    proteins: Vec<usize>,
    terms: Vec<usize>,
    splits: Vec<Option<Split>>,
    edges: Vec<(usize, usize, Relation)>,
    pair_relation: HashMap<(usize, usize), Relation>,
    /// Undirected neighbour lists per explicit relation, sorted.
    neighbours: Vec<[Vec<usize>; 3]>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo_terms: Vec<usize>,
}

impl HetGraph {
    /// Validates and normalises a raw edge list.
    ///
    /// Duplicates collapse, self-loops are dropped, ppi edges are symmetrised,
    /// endpoint kinds are checked per relation, conflicting relations for one
    /// ordered pair are rejected and the GO hierarchy must be acyclic. Test
    /// annotations are allowed here; see [`HetGraph::check_leakage`].
    pub fn from_parts(
        kinds: Vec<NodeKind>,
        splits: Vec<Option<Split>>,
        raw_edges: &[(usize, usize, Relation)],
    ) -> Result<(Self, LoadReport)> {
        let n = kinds.len();
        if splits.len() != n {
            return Err(Error::contract("split vector must cover every node"));
        }
        let mut report = LoadReport::default();
        let mut set = BTreeSet::new();
        for &(u, v, r) in raw_edges {
            if u >= n || v >= n {
                return Err(Error::data(format!("edge ({u}, {v}, {r}) references an unregistered node")));
            }
            let (ku, kv) = (kinds[u], kinds[v]);
            let ok = match r {
                Relation::Ppi => ku == NodeKind::Protein && kv == NodeKind::Protein,
                Relation::Go => ku == NodeKind::Go && kv == NodeKind::Go,
                Relation::Anno => ku == NodeKind::Protein && kv == NodeKind::Go,
                Relation::NoEdge => {
                    return Err(Error::data(format!("edge ({u}, {v}) uses the implicit `noedge` relation")))
                }
            };
            if !ok {
                return Err(Error::data(format!(
                    "edge ({u}, {v}, {r}) joins a {} and a {}",
                    ku.name(),
                    kv.name()
                )));
            }
            if u == v {
                report.self_loops_dropped += 1;
                continue;
            }
            if !set.insert((u, v, r)) {
                report.duplicates_collapsed += 1;
            }
            if r == Relation::Ppi {
                set.insert((v, u, r));
            }
        }
        for (i, k) in kinds.iter().enumerate() {
            match (k, splits[i]) {
                (NodeKind::Go, Some(_)) => {
                    return Err(Error::data(format!("GO term {i} has a split assignment")));
                }
                (NodeKind::Protein, None) => {
                    return Err(Error::data(format!("protein {i} has no split assignment")));
                }
                _ => {}
            }
        }

        let edges: Vec<_> = set.into_iter().collect();
        let mut pair_relation = HashMap::with_capacity(edges.len());
        for &(u, v, r) in &edges {
            if let Some(prev) = pair_relation.insert((u, v), r) {
                return Err(Error::data(format!("pair ({u}, {v}) carries both {prev} and {r}")));
            }
        }

        let mut neighbours: Vec<[Vec<usize>; 3]> = vec![Default::default(); n];
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for &(u, v, r) in &edges {
            let k = r.index();
            neighbours[u][k].push(v);
            if r != Relation::Ppi {
                neighbours[v][k].push(u);
            }
            if r == Relation::Go {
                children[u].push(v);
                parents[v].push(u);
            }
        }
        for lists in &mut neighbours {
            for l in lists.iter_mut() {
                l.sort_unstable();
                l.dedup();
            }
        }

        let mut kind_index = vec![0; n];
        let mut proteins = Vec::new();
        let mut terms = Vec::new();
        for (i, k) in kinds.iter().enumerate() {
            match k {
                NodeKind::Protein => {
                    kind_index[i] = proteins.len();
                    proteins.push(i);
                }
                NodeKind::Go => {
                    kind_index[i] = terms.len();
                    terms.push(i);
                }
            }
        }
        let topo_terms = topological_order(&terms, &parents, &children)?;

        Ok((
            Self {
                kinds,
                kind_index,
                proteins,
                terms,
                splits,
                edges,
                pair_relation,
                neighbours,
                parents,
                children,
                topo_terms,
            },
            report,
        ))
    }

    pub fn node_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.kinds[id]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn node(&self, id: usize) -> NodeRef {
        NodeRef { id, kind: self.kinds[id] }
    }

    /// Row of node `id` in its kind's feature matrix.
    pub fn kind_index(&self, id: usize) -> usize {
        self.kind_index[id]
    }

    pub fn proteins(&self) -> &[usize] {
        &self.proteins
    }

    pub fn terms(&self) -> &[usize] {
        &self.terms
    }

    pub fn split(&self, id: usize) -> Option<Split> {
        self.splits[id]
    }

    pub fn splits(&self) -> &[Option<Split>] {
        &self.splits
    }

    pub fn proteins_in(&self, split: Split) -> Vec<usize> {
        self.proteins.iter().copied().filter(|&p| self.splits[p] == Some(split)).collect()
    }

    pub fn edges(&self) -> &[(usize, usize, Relation)] {
        &self.edges
    }

    pub fn edge_count(&self, r: Relation) -> usize {
        self.edges.iter().filter(|e| e.2 == r).count()
    }

    pub fn relation(&self, u: usize, v: usize) -> Relation {
        self.pair_relation.get(&(u, v)).copied().unwrap_or(Relation::NoEdge)
    }

    pub fn neighbours(&self, u: usize, r: Relation) -> &[usize] {
        &self.neighbours[u][r.index()]
    }

    pub fn parents(&self, term: usize) -> &[usize] {
        &self.parents[term]
    }

    pub fn children(&self, term: usize) -> &[usize] {
        &self.children[term]
    }

    /// GO term ids, parents before children.
    pub fn topological_terms(&self) -> &[usize] {
        &self.topo_terms
    }

    /// The GO hierarchy restricted to term indices (`kind_index` space).
    pub fn go_dag(&self) -> GoDag {
        let children = self
            .terms
            .iter()
            .map(|&t| self.children[t].iter().map(|&c| self.kind_index[c]).collect())
            .collect();
        GoDag::new(children).expect("hierarchy validated at construction")
    }

    /// Annotation edges that touch a test-split protein.
    pub fn leaking_annotations(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter(|&&(u, _, r)| r == Relation::Anno && self.splits[u] == Some(Split::Test))
            .map(|&(u, v, _)| (u, v))
            .collect()
    }

    pub fn check_leakage(&self) -> Result<()> {
        match self.leaking_annotations().first() {
            None => Ok(()),
            Some(&(p, t)) => Err(Error::data(format!(
                "annotation edge ({p}, {t}) touches test protein {p} (label leakage)"
            ))),
        }
    }
}

/// Removes every annotation edge incident to a test protein; other edges are kept.
pub fn strip_test_annotations(graph: &HetGraph) -> HetGraph {
    let kept: Vec<_> = graph
        .edges
        .iter()
        .copied()
        .filter(|&(u, _, r)| !(r == Relation::Anno && graph.splits[u] == Some(Split::Test)))
        .collect();
    HetGraph::from_parts(graph.kinds.clone(), graph.splits.clone(), &kept)
        .expect("subset of a valid graph is valid")
        .0
}

/// Distribution of relations over all ordered pairs of distinct nodes.
pub fn relation_marginals(graph: &HetGraph) -> Result<[f64; 4]> {
    let n = graph.node_count();
    let pairs = n * n.saturating_sub(1);
    if pairs == 0 {
        return Err(Error::contract("relation marginals need at least one ordered pair"));
    }
    let mut counts = [0usize; 4];
    for &(_, _, r) in &graph.edges {
        counts[r.index()] += 1;
    }
    counts[3] = pairs - counts[0] - counts[1] - counts[2];
    Ok(counts.map(|c| c as f64 / pairs as f64))
}

/// Relation distribution pooled over the ordered pairs of several ego-graphs.
pub fn ego_relation_marginals(egos: &[EgoGraph]) -> Result<[f64; 4]> {
    let mut counts = [0usize; 4];
    for ego in egos {
        for r in ego.adj.relations() {
            counts[r.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::contract("relation marginals need at least one ordered pair"));
    }
    Ok(counts.map(|c| c as f64 / total as f64))
}

/// One relation per ordered pair `(i, j)`, `i ≠ j`, of an `n`-node graph.
///
/// Pairs are laid out row-major with the diagonal skipped, so pair `(i, j)`
/// sits at `i·(n−1) + j − [j > i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AdjTensor {
    n: usize,
    rels: Vec<Relation>,
}

impl AdjTensor {
    pub fn empty(n: usize) -> Self {
        Self { n, rels: vec![Relation::NoEdge; n * n.saturating_sub(1)] }
    }

    pub fn from_relations(n: usize, rels: Vec<Relation>) -> Result<Self> {
        if rels.len() != n * n.saturating_sub(1) {
            return Err(Error::contract(format!(
                "{n} nodes need {} ordered pairs, got {}",
                n * n.saturating_sub(1),
                rels.len()
            )));
        }
        Ok(Self { n, rels })
    }

    /// Builds the tensor from explicit ordered edges; unlisted pairs get `noedge`.
    pub fn from_edges(n: usize, edges: &[(usize, usize, Relation)]) -> Result<Self> {
        let mut adj = Self::empty(n);
        let mut seen = vec![false; adj.rels.len()];
        for &(i, j, r) in edges {
            if i >= n || j >= n || i == j {
                return Err(Error::data(format!("edge ({i}, {j}) is not an ordered pair of {n} nodes")));
            }
            let k = adj.pair_index(i, j);
            if seen[k] && adj.rels[k] != r {
                return Err(Error::data(format!(
                    "pair ({i}, {j}) carries both {} and {r}",
                    adj.rels[k]
                )));
            }
            seen[k] = true;
            adj.rels[k] = r;
        }
        Ok(adj)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn pair_count(&self) -> usize {
        self.rels.len()
    }

    #[inline]
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i != j);
        i * (self.n - 1) + j - usize::from(j > i)
    }

    /// `(i, j)` for every pair index, in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
    }

    pub fn get(&self, i: usize, j: usize) -> Relation {
        self.rels[self.pair_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, r: Relation) {
        let k = self.pair_index(i, j);
        self.rels[k] = r;
    }

    pub fn relations(&self) -> &[Relation] {
        &self.rels
    }

    pub fn relations_mut(&mut self) -> &mut [Relation] {
        &mut self.rels
    }

    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.rels {
            c[r.index()] += 1;
        }
        c
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.n);
        for (i, j) in self.pairs() {
            out.set(perm[i], perm[j], self.get(i, j));
        }
        out
    }
}

/// The induced adjacency over `nodes` (global ids, local order preserved).
pub fn build_adjacency(graph: &HetGraph, nodes: &[usize]) -> AdjTensor {
    let n = nodes.len();
    let mut adj = AdjTensor::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = graph.relation(nodes[i], nodes[j]);
                if r != Relation::NoEdge {
                    adj.set(i, j, r);
                }
            }
        }
    }
    adj
}

/// GO hierarchy over term indices `0..n`, edges parent → child.
#[derive(Clone, Debug, PartialEq)]
pub struct GoDag {
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl GoDag {
    pub fn new(children: Vec<Vec<usize>>) -> Result<Self> {
        let n = children.len();
        let mut parents = vec![Vec::new(); n];
        for (p, cs) in children.iter().enumerate() {
            for &c in cs {
                if c >= n {
                    return Err(Error::data(format!("term {p} lists unknown child {c}")));
                }
                parents[c].push(p);
            }
        }
        let ids: Vec<usize> = (0..n).collect();
        let topo = topological_order(&ids, &parents, &children)?;
        Ok(Self { children, parents, topo })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut children = vec![Vec::new(); n];
        for &(p, c) in edges {
            if p >= n || c >= n {
                return Err(Error::data(format!("hierarchy edge ({p}, {c}) outside {n} terms")));
            }
            children[p].push(c);
        }
        Self::new(children)
    }

    pub fn len(&self) -> usize {
        self.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.children.is_empty()
    }

    pub fn children(&self, t: usize) -> &[usize] {
        &self.children[t]
    }

    pub fn parents(&self, t: usize) -> &[usize] {
        &self.parents[t]
    }

    /// Parents before children.
    pub fn topological(&self) -> &[usize] {
        &self.topo
    }

    /// All strict ancestors of `t`.
    pub fn ancestors(&self, t: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = self.parents[t].clone();
        while let Some(p) = stack.pop() {
            if out.insert(p) {
                stack.extend_from_slice(&self.parents[p]);
            }
        }
        out
    }

    /// All strict descendants of `t`.
    pub fn descendants(&self, t: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = self.children[t].clone();
        while let Some(c) = stack.pop() {
            if out.insert(c) {
                stack.extend_from_slice(&self.children[c]);
            }
        }
        out
    }

    pub fn depth(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for &t in &self.topo {
            for &c in &self.children[t] {
                depth[c] = depth[c].max(depth[t] + 1);
            }
        }
        depth
    }
}

/// Kahn's algorithm over `ids`; a cycle is reported by one of its members.
fn topological_order(ids: &[usize], parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indeg: HashMap<usize, usize> = ids.iter().map(|&t| (t, parents[t].len())).collect();
    let mut ready: Vec<usize> = ids.iter().copied().filter(|t| indeg[t] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(ids.len());
    while let Some(t) = ready.pop() {
        order.push(t);
        for &c in children[t].iter().rev() {
            let d = indeg.get_mut(&c).expect("child registered");
            *d -= 1;
            if *d == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() != ids.len() {
        let member = ids.iter().copied().find(|t| indeg[t] > 0).expect("cycle member exists");
        return Err(Error::data(format!("GO hierarchy has a cycle through term {member}")));
    }
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proteins_and_terms(np: usize, nt: usize) -> (Vec<NodeKind>, Vec<Option<Split>>) {
        let mut kinds = vec![NodeKind::Protein; np];
        kinds.extend(std::iter::repeat_n(NodeKind::Go, nt));
        let mut splits = vec![Some(Split::Train); np];
        splits.extend(std::iter::repeat_n(None, nt));
        (kinds, splits)
    }

    #[test]
    fn duplicate_ppi_is_one_symmetric_edge() {
        let (k, s) = proteins_and_terms(2, 0);
        let (g, report) =
            HetGraph::from_parts(k, s, &[(0, 1, Relation::Ppi), (0, 1, Relation::Ppi), (1, 0, Relation::Ppi)]).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.relation(1, 0), Relation::Ppi);
        assert_eq!(report.duplicates_collapsed, 2);
    }

    #[test]
    fn self_loops_are_dropped_and_counted() {
        let (k, s) = proteins_and_terms(2, 0);
        let (g, report) = HetGraph::from_parts(k, s, &[(1, 1, Relation::Ppi)]).unwrap();
        assert!(g.edges().is_empty());
        assert_eq!(report.self_loops_dropped, 1);
    }

    #[test]
    fn go_cycle_is_rejected() {
        let (k, s) = proteins_and_terms(0, 2);
        let err = HetGraph::from_parts(k, s, &[(0, 1, Relation::Go), (1, 0, Relation::Go)]).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains("cycle")));
    }

    #[test]
    fn kind_mismatch_is_a_data_fault() {
        let (k, s) = proteins_and_terms(1, 1);
        assert!(HetGraph::from_parts(k.clone(), s.clone(), &[(1, 0, Relation::Anno)]).is_err());
        assert!(HetGraph::from_parts(k, s, &[(0, 1, Relation::Ppi)]).is_err());
    }

    #[test]
    fn marginals_count_ordered_pairs() {
        let (k, s) = proteins_and_terms(3, 0);
        let (g, _) = HetGraph::from_parts(k, s, &[(0, 1, Relation::Ppi)]).unwrap();
        let m = relation_marginals(&g).unwrap();
        assert_eq!(m, [2.0 / 6.0, 0.0, 0.0, 4.0 / 6.0]);

        let (k, s) = proteins_and_terms(2, 2);
        let (g, _) = HetGraph::from_parts(k, s, &[]).unwrap();
        assert_eq!(relation_marginals(&g).unwrap(), [0.0, 0.0, 0.0, 1.0]);

        let (k, s) = proteins_and_terms(1, 0);
        let (g, _) = HetGraph::from_parts(k, s, &[]).unwrap();
        assert!(relation_marginals(&g).is_err());
    }

    #[test]
    fn adjacency_directedness() {
        let adj = AdjTensor::from_edges(2, &[(0, 1, Relation::Anno)]).unwrap();
        assert_eq!(adj.get(0, 1), Relation::Anno);
        assert_eq!(adj.get(1, 0), Relation::NoEdge);
        let ppi = AdjTensor::from_edges(2, &[(0, 1, Relation::Ppi), (1, 0, Relation::Ppi)]).unwrap();
        assert_eq!(ppi.relations(), &[Relation::Ppi, Relation::Ppi]);
    }

    #[test]
    fn adjacency_conflict_is_a_data_fault() {
        let err = AdjTensor::from_edges(2, &[(0, 1, Relation::Ppi), (0, 1, Relation::Anno)]).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn pair_index_layout() {
        let adj = AdjTensor::empty(4);
        for (k, (i, j)) in adj.pairs().enumerate() {
            assert_eq!(adj.pair_index(i, j), k);
        }
        assert_eq!(adj.pair_count(), 12);
    }

    #[test]
    fn strip_removes_only_test_annotations() {
        let mut kinds = vec![NodeKind::Protein; 3];
        kinds.extend([NodeKind::Go, NodeKind::Go]);
        let splits = vec![Some(Split::Train), Some(Split::Test), Some(Split::Test), None, None];
        let edges = [
            (0, 3, Relation::Anno),
            (1, 3, Relation::Anno),
            (1, 4, Relation::Anno),
            (2, 4, Relation::Anno),
            (0, 1, Relation::Ppi),
            (3, 4, Relation::Go),
        ];
        let (g, _) = HetGraph::from_parts(kinds, splits, &edges).unwrap();
        assert_eq!(g.leaking_annotations().len(), 3);
        assert!(g.check_leakage().is_err());
        let stripped = strip_test_annotations(&g);
        assert_eq!(stripped.edge_count(Relation::Anno), g.edge_count(Relation::Anno) - 3);
        assert_eq!(stripped.edge_count(Relation::Ppi), 2);
        assert_eq!(stripped.edge_count(Relation::Go), 1);
        assert!(stripped.leaking_annotations().is_empty());
        assert_eq!(strip_test_annotations(&stripped), stripped);
    }

    #[test]
    fn dag_queries() {
        let dag = GoDag::from_edges(4, &[(0, 1), (1, 2), (0, 3), (3, 2)]).unwrap();
        assert_eq!(dag.ancestors(2), BTreeSet::from([0, 1, 3]));
        assert_eq!(dag.descendants(0), BTreeSet::from([1, 2, 3]));
        assert_eq!(dag.depth(), vec![0, 1, 2, 1]);
        assert!(GoDag::from_edges(2, &[(0, 1), (1, 0)]).is_err());
    }
}
