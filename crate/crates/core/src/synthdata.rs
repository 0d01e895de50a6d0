//! Seeded synthetic benchmark with planted structure.
//!
//! Proteins draw latents from a cluster mixture. Sequence embeddings are a
//! noisy linear image of the latent; structure embeddings apply a configured
//! cross-modal map to the same clean image, then a scale, an offset and
//! independent noise. Labels follow clusters over a random GO hierarchy and
//! interactions prefer same-cluster pairs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::hetgraph::{self, GoDag, HetGraph, NodeKind, Relation, Split};
use crate::numerics::DenseMatrix;
use crate::otalign::TransportPlan;
use crate::predictor::LabelMatrix;
use crate::{Error, Result};

/// Minimum share of `noedge` among ordered node pairs.
pub const MIN_NOEDGE_FRACTION: f64 = 0.98;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapKind {
    Identity,
    Permutation,
    Rotation,
    RandomLinear,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Identity => "identity",
            MapKind::Permutation => "permutation",
            MapKind::Rotation => "rotation",
            MapKind::RandomLinear => "random-linear",
        }
    }
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(MapKind::Identity),
            "permutation" => Ok(MapKind::Permutation),
            "rotation" => Ok(MapKind::Rotation),
            "random-linear" => Ok(MapKind::RandomLinear),
            other => Err(Error::Config(format!("unknown cross-modal map `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub proteins: usize,
    pub terms: usize,
    pub d_seq: usize,
    pub d_struc: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    /// Standard deviation of cluster centres in latent space.
    pub cluster_spread: f64,
    pub noise_seq: f64,
    pub noise_struc: f64,
    pub map: MapKind,
    pub struc_scale: f64,
    pub struc_offset: f64,
    /// Same-cluster over cross-cluster interaction probability.
    pub homophily: f64,
    /// Expected interaction partners per protein.
    pub ppi_degree: f64,
    pub go_dim: usize,
    pub max_depth: usize,
    pub roots: usize,
    /// Probability that a non-root term gains a second, shallower parent.
    pub cross_link_prob: f64,
    pub terms_per_cluster: usize,
    /// Probability that a protein carries one extra random term.
    pub extra_label_prob: f64,
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            proteins: 300,
            terms: 40,
            d_seq: 16,
            d_struc: 16,
            latent_dim: 8,
            clusters: 8,
            cluster_spread: 1.75,
            noise_seq: 1.0,
            noise_struc: 1.0,
            map: MapKind::Permutation,
            struc_scale: 1.0,
            struc_offset: 20.0,
            homophily: 5.0,
            ppi_degree: 2.5,
            go_dim: 8,
            max_depth: 4,
            roots: 3,
            cross_link_prob: 0.15,
            terms_per_cluster: 1,
            extra_label_prob: 0.5,
            train_fraction: 0.6,
            valid_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.d_seq < 2 || self.d_struc < 2 || self.latent_dim < 2 || self.go_dim < 2 {
            return bad("embedding and latent dimensions must be at least 2".into());
        }
        if self.proteins < self.clusters || self.clusters == 0 {
            return bad("need at least one protein per cluster".into());
        }
        if self.roots == 0 || self.terms <= self.roots || self.max_depth < 2 {
            return bad("GO hierarchy needs roots, non-root terms and depth ≥ 2".into());
        }
        if self.terms_per_cluster == 0 || self.terms_per_cluster > self.terms - self.roots {
            return bad("terms per cluster must lie in 1..=non-root terms".into());
        }
        if !(self.homophily >= 1.0) {
            return bad(format!("homophily ratio {} must be ≥ 1", self.homophily));
        }
        if !(self.ppi_degree >= 0.0)
            || !(0.0..=1.0).contains(&self.extra_label_prob)
            || !(0.0..=1.0).contains(&self.cross_link_prob)
        {
            return bad("interaction degree must be ≥ 0 and probabilities in [0, 1]".into());
        }
        let noise = [self.noise_seq, self.noise_struc, self.cluster_spread];
        if noise.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !self.struc_scale.is_finite() || !self.struc_offset.is_finite() {
            return bad("noise scales must be finite and non-negative".into());
        }
        let splits = self.train_fraction + self.valid_fraction;
        if !(self.train_fraction > 0.0) || !(self.valid_fraction >= 0.0) || splits >= 1.0 {
            return bad("split fractions must leave a non-empty test share".into());
        }
        if matches!(self.map, MapKind::Identity | MapKind::Permutation | MapKind::Rotation) && self.d_seq != self.d_struc {
            return bad(format!("map `{}` needs d_seq == d_struc", self.map.name()));
        }
        Ok(())
    }
}

/// A generated benchmark. Protein `p` has node id `p`; term `τ` has node id
/// `proteins + τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub e_seq: DenseMatrix,
    pub e_struc: DenseMatrix,
    pub z: DenseMatrix,
    pub graph: HetGraph,
    pub dag: GoDag,
    /// Labels of every protein, including the test split.
    pub labels: LabelMatrix,
    pub latents: DenseMatrix,
    pub clusters: Vec<usize>,
    /// For permutation maps, the sequence dimension copied by each structure dimension.
    pub map_target: Option<Vec<usize>>,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        std * x
    })
}

/// Orthonormal columns by Gram–Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut impl Rng) -> DenseMatrix {
    let g = gaussian(d, d, 1.0, rng);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = g.col(j);
        for u in &cols {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        cols.push(v);
    }
    DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
}

fn generate_dag(config: &SynthConfig, rng: &mut impl Rng) -> (GoDag, Vec<usize>) {
    let n = config.terms;
    let levels = config.max_depth;
    let mut level = vec![0; n];
    let rest = n - config.roots;
    for (k, l) in level.iter_mut().skip(config.roots).enumerate() {
        *l = 1 + k * (levels - 1) / rest;
    }
    let mut edges = Vec::new();
    for t in config.roots..n {
        let prev: Vec<usize> = (0..t).filter(|&u| level[u] + 1 == level[t]).collect();
        let first = prev[rng.random_range(0..prev.len())];
        edges.push((first, t));
        if rng.random_bool(config.cross_link_prob) {
            let shallower: Vec<usize> = (0..t).filter(|&u| level[u] < level[t] && u != first).collect();
            if !shallower.is_empty() {
                edges.push((shallower[rng.random_range(0..shallower.len())], t));
            }
        }
    }
    let dag = GoDag::from_edges(n, &edges).expect("levels increase along every edge");
    (dag, level)
}

/// Generates a dataset; fails when the graph would be denser than the
/// `noedge` floor allows.
pub fn gen_dataset(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let np = config.proteins;
    let nt = config.terms;

    let mut clusters: Vec<usize> = (0..np).map(|p| p % config.clusters).collect();
    clusters.shuffle(&mut rng);
    let centres = gaussian(config.clusters, config.latent_dim, config.cluster_spread, &mut rng);
    let latents = DenseMatrix::from_fn(np, config.latent_dim, |p, k| {
        let x: f64 = StandardNormal.sample(&mut rng);
        centres.get(clusters[p], k) + x
    });
    let w_seq = gaussian(config.latent_dim, config.d_seq, 1.0 / (config.latent_dim as f64).sqrt(), &mut rng);
    let clean = latents.matmul(&w_seq);
    let e_seq = clean.add(&gaussian(np, config.d_seq, config.noise_seq, &mut rng));

    let mut map_target = None;
    let mapped = match config.map {
        MapKind::Identity => {
            map_target = Some((0..config.d_struc).collect());
            clean.clone()
        }
        MapKind::Permutation => {
            let mut target: Vec<usize> = (0..config.d_struc).collect();
            target.shuffle(&mut rng);
            let m = DenseMatrix::from_fn(np, config.d_struc, |p, i| clean.get(p, target[i]));
            map_target = Some(target);
            m
        }
        MapKind::Rotation => clean.matmul(&random_orthogonal(config.d_seq, &mut rng)),
        MapKind::RandomLinear => {
            clean.matmul(&gaussian(config.d_seq, config.d_struc, 1.0 / (config.d_seq as f64).sqrt(), &mut rng))
        }
    };
    let noise = gaussian(np, config.d_struc, config.noise_struc, &mut rng);
    let e_struc = mapped.map(|x| x * config.struc_scale + config.struc_offset).add(&noise);

    let (dag, level) = generate_dag(config, &mut rng);
    let depth_scale = (config.max_depth - 1) as f64;
    let z = DenseMatrix::from_fn(nt, config.go_dim, |t, k| {
        if k == 0 {
            level[t] as f64 / depth_scale
        } else {
            StandardNormal.sample(&mut rng)
        }
    });

    let non_roots: Vec<usize> = (config.roots..nt).collect();
    let cluster_terms: Vec<Vec<usize>> = (0..config.clusters)
        .map(|_| non_roots.choose_multiple(&mut rng, config.terms_per_cluster).copied().collect())
        .collect();
    let mut label_pairs = Vec::new();
    for p in 0..np {
        let mut terms: Vec<usize> = cluster_terms[clusters[p]].clone();
        if rng.random_bool(config.extra_label_prob) {
            terms.push(non_roots[rng.random_range(0..non_roots.len())]);
        }
        let mut closed = std::collections::BTreeSet::new();
        for t in terms {
            closed.insert(t);
            closed.extend(dag.ancestors(t));
        }
        label_pairs.extend(closed.into_iter().map(|t| (p, t)));
    }
    let labels = LabelMatrix::from_pairs(np, &dag, &label_pairs)?;

    let mut splits = vec![Split::Test; np];
    for c in 0..config.clusters {
        let mut members: Vec<usize> = (0..np).filter(|&p| clusters[p] == c).collect();
        members.shuffle(&mut rng);
        let n_train = (members.len() as f64 * config.train_fraction).round() as usize;
        let n_valid = (members.len() as f64 * config.valid_fraction).round() as usize;
        for (k, &p) in members.iter().enumerate() {
            splits[p] = if k < n_train {
                Split::Train
            } else if k < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            };
        }
    }

    let same_pairs: usize = (0..config.clusters)
        .map(|c| {
            let k = clusters.iter().filter(|&&x| x == c).count();
            k * k.saturating_sub(1) / 2
        })
        .sum();
    let cross_pairs = np * (np - 1) / 2 - same_pairs;
    let expected_edges = config.ppi_degree * np as f64 / 2.0;
    let p_in = (expected_edges / (same_pairs as f64 + cross_pairs as f64 / config.homophily)).min(1.0);
    let p_out = p_in / config.homophily;
    let mut edges = Vec::new();
    for p in 0..np {
        for q in p + 1..np {
            let prob = if clusters[p] == clusters[q] { p_in } else { p_out };
            if rng.random_bool(prob) {
                edges.push((p, q, Relation::Ppi));
            }
        }
    }
    for t in 0..nt {
        for &c in dag.children(t) {
            edges.push((np + t, np + c, Relation::Go));
        }
    }
    for &(p, t) in &label_pairs {
        if splits[p] != Split::Test {
            edges.push((p, np + t, Relation::Anno));
        }
    }
    let mut kinds = vec![NodeKind::Protein; np];
    kinds.extend(std::iter::repeat_n(NodeKind::Go, nt));
    let mut split_col: Vec<Option<Split>> = splits.into_iter().map(Some).collect();
    split_col.extend(std::iter::repeat_n(None, nt));
    let (graph, _) = HetGraph::from_parts(kinds, split_col, &edges)?;
    let noedge = hetgraph::relation_marginals(&graph)?[Relation::NoEdge.index()];
    if noedge < MIN_NOEDGE_FRACTION {
        return Err(Error::contract(format!(
            "generated graph has noedge fraction {noedge:.4} below {MIN_NOEDGE_FRACTION}; lower the interaction degree or label density"
        )));
    }

    Ok(SynthDataset {
        config: config.clone(),
        e_seq,
        e_struc,
        z,
        graph,
        dag,
        labels,
        latents,
        clusters,
        map_target,
    })
}

/// Fraction of structure dimensions whose plan-row argmax is the planted target.
pub fn planted_map_check(dataset: &SynthDataset, plan: &TransportPlan) -> Result<f64> {
    let target = match (&dataset.map_target, dataset.config.map) {
        (Some(t), MapKind::Identity | MapKind::Permutation) => t,
        _ => return Err(Error::contract("planted map check needs a permutation map")),
    };
    let values = plan.values();
    if values.rows() != target.len() || values.cols() != dataset.config.d_seq {
        return Err(Error::contract("plan shape does not match the planted map"));
    }
    let hits = (0..values.rows())
        .filter(|&i| {
            let row = values.row(i);
            let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            best == target[i]
        })
        .count();
    Ok(hits as f64 / target.len() as f64)
}

/// Inputs of the pipeline, whether generated or read from files.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub graph: HetGraph,
    pub e_seq: DenseMatrix,
    pub e_struc: DenseMatrix,
    pub z: DenseMatrix,
    /// Rows follow protein order, columns GO term order.
    pub labels: LabelMatrix,
}

const FILES: [&str; 7] = ["nodes.tsv", "edges.tsv", "splits.tsv", "labels.tsv", "e_seq.mat", "e_struc.mat", "z.mat"];

/// Writes every input file plus `manifest.txt` with the configuration and
/// SHA-256 checksums.
pub fn write_dataset(dir: &Path, ds: &SynthDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    hetgraph::write_graph(dir, &ds.graph)?;
    let np = ds.config.proteins;
    let mut labels = String::new();
    for p in 0..np {
        for t in 0..ds.config.terms {
            if ds.labels.matrix().get(p, t) == 1.0 {
                writeln!(labels, "{p}\t{}", np + t).expect("string write");
            }
        }
    }
    let path = dir.join("labels.tsv");
    fs::write(&path, labels).map_err(|e| Error::io(path, e))?;
    ds.e_seq.save(dir.join("e_seq.mat"))?;
    ds.e_struc.save(dir.join("e_struc.mat"))?;
    ds.z.save(dir.join("z.mat"))?;

    let c = &ds.config;
    let mut manifest = String::new();
    let fields: [(&str, String); 24] = [
        ("proteins", c.proteins.to_string()),
        ("terms", c.terms.to_string()),
        ("d_seq", c.d_seq.to_string()),
        ("d_struc", c.d_struc.to_string()),
        ("latent_dim", c.latent_dim.to_string()),
        ("clusters", c.clusters.to_string()),
        ("cluster_spread", c.cluster_spread.to_string()),
        ("noise_seq", c.noise_seq.to_string()),
        ("noise_struc", c.noise_struc.to_string()),
        ("map", c.map.name().to_string()),
        ("struc_scale", c.struc_scale.to_string()),
        ("struc_offset", c.struc_offset.to_string()),
        ("homophily", c.homophily.to_string()),
        ("ppi_degree", c.ppi_degree.to_string()),
        ("go_dim", c.go_dim.to_string()),
        ("max_depth", c.max_depth.to_string()),
        ("roots", c.roots.to_string()),
        ("cross_link_prob", c.cross_link_prob.to_string()),
        ("terms_per_cluster", c.terms_per_cluster.to_string()),
        ("extra_label_prob", c.extra_label_prob.to_string()),
        ("train_fraction", c.train_fraction.to_string()),
        ("valid_fraction", c.valid_fraction.to_string()),
        ("seed", c.seed.to_string()),
        ("noedge_fraction", hetgraph::relation_marginals(&ds.graph)?[3].to_string()),
    ];
    for (k, v) in fields {
        writeln!(manifest, "{k}={v}").expect("string write");
    }
    for name in FILES {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(manifest, "sha256.{name}={}", hex::encode(Sha256::digest(&bytes))).expect("string write");
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(path, e))
}

/// Reads the files written by [`write_dataset`] (or supplied by hand).
pub fn load_dataset(dir: &Path) -> Result<LoadedData> {
    let (graph, _) =
        hetgraph::load_edges(&dir.join("edges.tsv"), &dir.join("nodes.tsv"), &dir.join("splits.tsv"))?;
    let pairs = hetgraph::load_labels(&dir.join("labels.tsv"), &graph)?;
    let local: Vec<(usize, usize)> = pairs.iter().map(|&(p, t)| (graph.kind_index(p), graph.kind_index(t))).collect();
    let labels = LabelMatrix::from_pairs(graph.proteins().len(), &graph.go_dag(), &local)?;
    let e_seq = DenseMatrix::load(dir.join("e_seq.mat"))?;
    let e_struc = DenseMatrix::load(dir.join("e_struc.mat"))?;
    let z = DenseMatrix::load(dir.join("z.mat"))?;
    let np = graph.proteins().len();
    if e_seq.rows() != np || e_struc.rows() != np {
        return Err(Error::data(format!("embedding files must have one row per protein ({np})")));
    }
    if z.rows() != graph.terms().len() {
        return Err(Error::data(format!("GO feature file must have one row per term ({})", graph.terms().len())));
    }
    Ok(LoadedData { graph, e_seq, e_struc, z, labels })
}

impl SynthDataset {
    pub fn as_loaded(&self) -> LoadedData {
        LoadedData {
            graph: self.graph.clone(),
            e_seq: self.e_seq.clone(),
            e_struc: self.e_struc.clone(),
            z: self.z.clone(),
            labels: self.labels.clone(),
        }
    }
}
