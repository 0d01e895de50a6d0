use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{HetGraph, NodeKind, Relation, Split};
use crate::{Error, Result};

/// Counts of silently repaired input lines.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicates_collapsed: usize,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i, l.split('\t').map(str::trim).collect()))
}

fn field<'a>(fields: &[&'a str], k: usize, line: usize, what: &str) -> Result<&'a str> {
    fields
        .get(k)
        .copied()
        .ok_or_else(|| Error::data(format!("line {line}: missing {what}")))
}

fn id(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::data(format!("line {line}: `{s}` is not a node id")))
}

/// Node file: `id<TAB>kind` with ids dense in `[0, n)`.
pub fn parse_nodes(text: &str) -> Result<Vec<NodeKind>> {
    let mut kinds: Vec<Option<NodeKind>> = Vec::new();
    for (line, f) in records(text) {
        let i = id(field(&f, 0, line, "id")?, line)?;
        let kind = match field(&f, 1, line, "kind")? {
            "protein" => NodeKind::Protein,
            "go" => NodeKind::Go,
            other => return Err(Error::data(format!("line {line}: unknown node kind `{other}`"))),
        };
        if i >= kinds.len() {
            kinds.resize(i + 1, None);
        }
        if kinds[i].replace(kind).is_some() {
            return Err(Error::data(format!("line {line}: node {i} registered twice")));
        }
    }
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, k)| k.ok_or_else(|| Error::data(format!("node ids are not dense: {i} missing"))))
        .collect()
}

/// Split file: `protein_id<TAB>{train|valid|test}`.
pub fn parse_splits(text: &str, node_count: usize) -> Result<Vec<Option<Split>>> {
    let mut splits = vec![None; node_count];
    for (line, f) in records(text) {
        let i = id(field(&f, 0, line, "protein id")?, line)?;
        if i >= node_count {
            return Err(Error::data(format!("line {line}: split for unregistered node {i}")));
        }
        splits[i] = Some(field(&f, 1, line, "split")?.parse()?);
    }
    Ok(splits)
}

/// Edge file: `src<TAB>dst<TAB>relation` with relation in `{ppi, go, anno}`.
pub fn parse_edges(text: &str) -> Result<Vec<(usize, usize, Relation)>> {
    records(text)
        .map(|(line, f)| {
            let u = id(field(&f, 0, line, "source")?, line)?;
            let v = id(field(&f, 1, line, "target")?, line)?;
            let r: Relation = field(&f, 2, line, "relation")?
                .parse()
                .map_err(|e| Error::data(format!("line {line}: {e}")))?;
            Ok((u, v, r))
        })
        .collect()
}

/// Loads and validates a graph; annotation edges touching test proteins are
/// rejected as label leakage.
pub fn load_edges(edge_path: &Path, node_path: &Path, split_path: &Path) -> Result<(HetGraph, LoadReport)> {
    let kinds = parse_nodes(&read(node_path)?)?;
    let splits = parse_splits(&read(split_path)?, kinds.len())?;
    let edges = parse_edges(&read(edge_path)?)?;
    let (graph, report) = HetGraph::from_parts(kinds, splits, &edges)?;
    if report.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loop edge(s) from {}", report.self_loops_dropped, edge_path.display());
    }
    if report.duplicates_collapsed > 0 {
        log::warn!(
            "collapsed {} duplicate edge(s) from {}",
            report.duplicates_collapsed,
            edge_path.display()
        );
    }
    graph.check_leakage()?;
    Ok((graph, report))
}

/// Label file: `protein_id<TAB>go_id`, validated against the graph's kinds.
pub fn load_labels(path: &Path, graph: &HetGraph) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    records(&text)
        .map(|(line, f)| {
            let p = id(field(&f, 0, line, "protein id")?, line)?;
            let t = id(field(&f, 1, line, "GO id")?, line)?;
            let ok = p < graph.node_count()
                && t < graph.node_count()
                && graph.kind(p) == NodeKind::Protein
                && graph.kind(t) == NodeKind::Go;
            if !ok {
                return Err(Error::data(format!("{}:{line}: ({p}, {t}) is not a protein/GO pair", path.display())));
            }
            Ok((p, t))
        })
        .collect()
}

/// Writes `nodes.tsv`, `splits.tsv` and `edges.tsv` into `dir`; ppi edges are
/// written once per unordered pair.
pub fn write_graph(dir: &Path, graph: &HetGraph) -> Result<()> {
    let mut nodes = String::new();
    let mut splits = String::new();
    for (i, k) in graph.kinds().iter().enumerate() {
        writeln!(nodes, "{i}\t{}", k.name()).expect("string write");
        if let Some(s) = graph.split(i) {
            writeln!(splits, "{i}\t{}", s.name()).expect("string write");
        }
    }
    let mut edges = String::new();
    for &(u, v, r) in graph.edges() {
        if r == Relation::Ppi && u > v {
            continue;
        }
        writeln!(edges, "{u}\t{v}\t{r}").expect("string write");
    }
    for (name, body) in [("nodes.tsv", nodes), ("splits.tsv", splits), ("edges.tsv", edges)] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
