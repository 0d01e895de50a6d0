//! Graph-transformer denoiser predicting clean relation distributions.
//!
//! Nodes carry condition tokens (fused protein embeddings or projected GO
//! features, plus a node-kind embedding), every ordered pair carries an
//! embedded relation, and the timestep enters each layer as a scale-and-shift
//! of node and edge states. Attention scores receive an additive per-head
//! bias from the edge token of the pair; edges are updated from both endpoint
//! states. A two-layer head maps final edge tokens to four logits.

use rand::Rng;

use crate::hetgraph::{AdjTensor, EgoGraph, NodeKind, Relation};
use crate::numerics::{fan_in_normal, softmax_rows, DenseMatrix, ParamSet, Tape, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub d_model: usize,
    pub d_edge: usize,
    pub heads: usize,
    /// Width of protein condition rows (the encoder output).
    pub d_cond: usize,
    /// Width of GO feature rows.
    pub d_go: usize,
    pub d_time: usize,
}

impl DenoiserConfig {
    pub fn with_inputs(d_cond: usize, d_go: usize) -> Self {
        Self { layers: 2, d_model: 64, d_edge: 32, heads: 4, d_cond, d_go, d_time: 16 }
    }

    fn validate(&self) -> Result<()> {
        let dims = [self.layers, self.d_model, self.d_edge, self.heads, self.d_cond, self.d_go, self.d_time];
        if dims.contains(&0) {
            return Err(Error::contract("denoiser dimensions and layer count must be positive"));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::contract(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.d_time % 2 != 0 {
            return Err(Error::contract("time embedding width must be even"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerSlots {
    film_w: usize,
    film_b: usize,
    q: Vec<usize>,
    k: Vec<usize>,
    v: Vec<usize>,
    o: Vec<usize>,
    edge_bias: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
    edge_src: usize,
    edge_dst: usize,
    edge_self: usize,
    edge_b1: usize,
    edge_w2: usize,
    edge_b2: usize,
}

#[derive(Clone, Debug, PartialEq)]
struct Slots {
    proj_h: usize,
    proj_z: usize,
    kind: usize,
    null_h: usize,
    null_z: usize,
    edge_emb: usize,
    time_w: usize,
    time_b: usize,
    layers: Vec<LayerSlots>,
    head_w1: usize,
    head_b1: usize,
    head_w2: usize,
    head_b2: usize,
}

/// Condition rows for one ego-graph, in local node order per kind.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures {
    /// One row per protein node.
    pub h: DenseMatrix,
    /// One row per GO node.
    pub z: DenseMatrix,
}

/// Node conditions recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub enum Condition {
    Present { h_tilde: Var, z: Var },
    Dropped,
}

/// Per ordered pair, four relation logits (rows in pair order).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLogits {
    pub logits: DenseMatrix,
}

impl EdgeLogits {
    pub fn probs(&self) -> DenseMatrix {
        softmax_rows(&self.logits)
    }

    pub fn argmax(&self) -> Vec<Relation> {
        (0..self.logits.rows())
            .map(|k| {
                let row = self.logits.row(k);
                let best = (0..4).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                Relation::from_index(best).expect("four relations")
            })
            .collect()
    }
}

/// Classifier-free guidance: `(1 + w)·cond − w·uncond`.
pub fn cfg_logits(cond: &EdgeLogits, uncond: &EdgeLogits, w: f64) -> Result<EdgeLogits> {
    if cond.logits.shape() != uncond.logits.shape() {
        return Err(Error::contract("guidance needs logits of equal shape"));
    }
    if !(w >= 0.0) {
        return Err(Error::contract(format!("guidance weight {w} must be ≥ 0")));
    }
    Ok(EdgeLogits { logits: cond.logits.zip_map(&uncond.logits, |c, u| (1.0 + w) * c - w * u) })
}

/// Sinusoidal embedding of a timestep.
pub fn time_embedding(t: usize, dim: usize) -> DenseMatrix {
    let half = dim / 2;
    let mut row = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let x = t as f64 * freq;
        row[k] = x.sin();
        row[half + k] = x.cos();
    }
    DenseMatrix::from_raw(1, dim, row)
}

/// Index maps of the ordered pairs of an `n`-node graph.
struct PairIndex {
    src: Vec<usize>,
    dst: Vec<usize>,
    flat: Vec<usize>,
}

impl PairIndex {
    fn new(adj: &AdjTensor) -> Self {
        let n = adj.node_count();
        let (mut src, mut dst, mut flat) = (Vec::new(), Vec::new(), Vec::new());
        for (i, j) in adj.pairs() {
            src.push(i);
            dst.push(j);
            flat.push(i * n + j);
        }
        Self { src, dst, flat }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: ParamSet,
    slots: Slots,
}

impl Denoiser {
    /// Random fan-in initialisation; time modulation and the final head layer
    /// start at zero, so a fresh model predicts uniform relations.
    pub fn new(config: DenoiserConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (dm, de, dh) = (config.d_model, config.d_edge, config.d_model / config.heads);
        let mut p = ParamSet::new();
        let proj_h = p.push("den.proj_h", fan_in_normal(config.d_cond, dm, rng));
        let proj_z = p.push("den.proj_z", fan_in_normal(config.d_go, dm, rng));
        let kind = p.push("den.kind", normal(2, dm, 0.5, rng));
        let null_h = p.push("den.null_h", normal(1, dm, 0.5, rng));
        let null_z = p.push("den.null_z", normal(1, dm, 0.5, rng));
        let edge_emb = p.push("den.edge_emb", normal(4, de, 1.0, rng));
        let time_w = p.push("den.time_w", fan_in_normal(config.d_time, dm, rng));
        let time_b = p.push("den.time_b", DenseMatrix::zeros(1, dm));
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let pre = format!("den.l{l}");
            let film_w = p.push(format!("{pre}.film_w"), DenseMatrix::zeros(dm, 2 * dm + 2 * de));
            let film_b = p.push(format!("{pre}.film_b"), DenseMatrix::zeros(1, 2 * dm + 2 * de));
            let mut q = Vec::new();
            let mut k = Vec::new();
            let mut v = Vec::new();
            let mut o = Vec::new();
            for h in 0..config.heads {
                q.push(p.push(format!("{pre}.h{h}.q"), fan_in_normal(dm, dh, rng)));
                k.push(p.push(format!("{pre}.h{h}.k"), fan_in_normal(dm, dh, rng)));
                v.push(p.push(format!("{pre}.h{h}.v"), fan_in_normal(dm, dh, rng)));
                o.push(p.push(format!("{pre}.h{h}.o"), fan_in_normal(dh, dm, rng).scale(0.5)));
            }
            let edge_bias = p.push(format!("{pre}.edge_bias"), fan_in_normal(de, config.heads, rng));
            let ffn_w1 = p.push(format!("{pre}.ffn_w1"), fan_in_normal(dm, 2 * dm, rng));
            let ffn_b1 = p.push(format!("{pre}.ffn_b1"), DenseMatrix::zeros(1, 2 * dm));
            let ffn_w2 = p.push(format!("{pre}.ffn_w2"), fan_in_normal(2 * dm, dm, rng).scale(0.5));
            let ffn_b2 = p.push(format!("{pre}.ffn_b2"), DenseMatrix::zeros(1, dm));
            let edge_src = p.push(format!("{pre}.edge_src"), fan_in_normal(dm, de, rng));
            let edge_dst = p.push(format!("{pre}.edge_dst"), fan_in_normal(dm, de, rng));
            let edge_self = p.push(format!("{pre}.edge_self"), fan_in_normal(de, de, rng));
            let edge_b1 = p.push(format!("{pre}.edge_b1"), DenseMatrix::zeros(1, de));
            let edge_w2 = p.push(format!("{pre}.edge_w2"), fan_in_normal(de, de, rng).scale(0.5));
            let edge_b2 = p.push(format!("{pre}.edge_b2"), DenseMatrix::zeros(1, de));
            layers.push(LayerSlots {
                film_w,
                film_b,
                q,
                k,
                v,
                o,
                edge_bias,
                ffn_w1,
                ffn_b1,
                ffn_w2,
                ffn_b2,
                edge_src,
                edge_dst,
                edge_self,
                edge_b1,
                edge_w2,
                edge_b2,
            });
        }
        let head_w1 = p.push("den.head_w1", fan_in_normal(de, de, rng));
        let head_b1 = p.push("den.head_b1", DenseMatrix::zeros(1, de));
        let head_w2 = p.push("den.head_w2", DenseMatrix::zeros(de, 4));
        let head_b2 = p.push("den.head_b2", DenseMatrix::zeros(1, 4));
        let slots = Slots {
            proj_h,
            proj_z,
            kind,
            null_h,
            null_z,
            edge_emb,
            time_w,
            time_b,
            layers,
            head_w1,
            head_b1,
            head_w2,
            head_b2,
        };
        Ok(Self { config, params: p, slots })
    }

    pub fn config(&self) -> DenoiserConfig {
        self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Checks that `features` cover every node of `ego`.
    pub fn check_features(&self, ego: &EgoGraph, features: &NodeFeatures) -> Result<()> {
        let np = ego.kinds.iter().filter(|&&k| k == NodeKind::Protein).count();
        let ng = ego.kinds.len() - np;
        if features.h.rows() != np || features.z.rows() != ng {
            return Err(Error::contract(format!(
                "condition rows ({}, {}) do not cover {np} proteins and {ng} GO terms",
                features.h.rows(),
                features.z.rows()
            )));
        }
        if features.z.cols() != self.config.d_go {
            return Err(Error::contract(format!(
                "GO feature width {} differs from configured {}",
                features.z.cols(),
                self.config.d_go
            )));
        }
        Ok(())
    }

    /// Node tokens (`n × d_model`).
    pub fn node_tokens(&self, tape: &mut Tape, vars: &[Var], kinds: &[NodeKind], cond: Condition) -> Var {
        let s = &self.slots;
        let n = kinds.len();
        let prot: Vec<usize> = (0..n).filter(|&i| kinds[i] == NodeKind::Protein).collect();
        let go: Vec<usize> = (0..n).filter(|&i| kinds[i] == NodeKind::Go).collect();
        let (xp, xg) = match cond {
            Condition::Present { h_tilde, z } => (tape.matmul(h_tilde, vars[s.proj_h]), tape.matmul(z, vars[s.proj_z])),
            Condition::Dropped => (
                tape.gather_rows(vars[s.null_h], &vec![0; prot.len()]),
                tape.gather_rows(vars[s.null_z], &vec![0; go.len()]),
            ),
        };
        let xp = tape.scatter_rows(xp, &prot, n);
        let xg = tape.scatter_rows(xg, &go, n);
        let kind_idx: Vec<usize> = kinds.iter().map(|k| usize::from(*k == NodeKind::Go)).collect();
        let kind = tape.gather_rows(vars[s.kind], &kind_idx);
        let x = tape.add(xp, xg);
        tape.add(x, kind)
    }

    /// Edge tokens (`n(n−1) × d_edge`).
    pub fn edge_tokens(&self, tape: &mut Tape, vars: &[Var], at: &AdjTensor) -> Var {
        let idx: Vec<usize> = at.relations().iter().map(|r| r.index()).collect();
        tape.gather_rows(vars[self.slots.edge_emb], &idx)
    }

    /// Graph token (`1 × d_model`).
    pub fn time_token(&self, tape: &mut Tape, vars: &[Var], t: usize) -> Var {
        let e = tape.constant(time_embedding(t, self.config.d_time));
        let h = tape.matmul(e, vars[self.slots.time_w]);
        let h = tape.add_row(h, vars[self.slots.time_b]);
        tape.silu(h)
    }

    fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    /// Normalises rows and applies the time modulation `(1 + scale)·x + shift`.
    fn modulate(tape: &mut Tape, x: Var, film: Var, offset: usize, width: usize) -> Var {
        let xn = tape.layer_norm(x);
        let ones = tape.constant(DenseMatrix::filled(1, width, 1.0));
        let scale = tape.slice_cols(film, offset, width);
        let scale = tape.add(scale, ones);
        let shift = tape.slice_cols(film, offset + width, width);
        let y = tape.mul_row(xn, scale);
        tape.add_row(y, shift)
    }

    /// One transformer layer over node states `x`, edge states `e` and graph token `g`.
    pub fn transformer_layer(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        layer: usize,
        adj: &AdjTensor,
        x: Var,
        e: Var,
        g: Var,
    ) -> (Var, Var) {
        let c = &self.config;
        let ls = &self.slots.layers[layer];
        let (dm, de) = (c.d_model, c.d_edge);
        let n = adj.node_count();
        let pairs = PairIndex::new(adj);

        let film = Self::affine(tape, g, vars[ls.film_w], vars[ls.film_b]);
        let xn = Self::modulate(tape, x, film, 0, dm);
        let en = Self::modulate(tape, e, film, 2 * dm, de);

        let bias_all = tape.matmul(en, vars[ls.edge_bias]);
        let inv_sqrt = 1.0 / ((dm / c.heads) as f64).sqrt();
        let mut attn = None;
        for h in 0..c.heads {
            let q = tape.matmul(xn, vars[ls.q[h]]);
            let k = tape.matmul(xn, vars[ls.k[h]]);
            let v = tape.matmul(xn, vars[ls.v[h]]);
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt);
            let scores = tape.scale(scores, inv_sqrt);
            let b = tape.slice_cols(bias_all, h, 1);
            let b = tape.scatter_rows(b, &pairs.flat, n * n);
            let b = tape.reshape(b, n, n);
            let scores = tape.add(scores, b);
            let weights = tape.softmax_rows(scores);
            let ctx = tape.matmul_sorted(weights, v);
            let out = tape.matmul(ctx, vars[ls.o[h]]);
            attn = Some(match attn {
                None => out,
                Some(acc) => tape.add(acc, out),
            });
        }
        let x = tape.add(x, attn.expect("at least one head"));

        let xf = tape.layer_norm(x);
        let hdn = Self::affine(tape, xf, vars[ls.ffn_w1], vars[ls.ffn_b1]);
        let hdn = tape.silu(hdn);
        let ffn = Self::affine(tape, hdn, vars[ls.ffn_w2], vars[ls.ffn_b2]);
        let x = tape.add(x, ffn);

        let xe = tape.layer_norm(x);
        let a = tape.matmul(xe, vars[ls.edge_src]);
        let a = tape.gather_rows(a, &pairs.src);
        let b = tape.matmul(xe, vars[ls.edge_dst]);
        let b = tape.gather_rows(b, &pairs.dst);
        let s = tape.matmul(en, vars[ls.edge_self]);
        let u = tape.add(a, b);
        let u = tape.add(u, s);
        let u = tape.add_row(u, vars[ls.edge_b1]);
        let u = tape.silu(u);
        let upd = Self::affine(tape, u, vars[ls.edge_w2], vars[ls.edge_b2]);
        let e = tape.add(e, upd);
        (x, e)
    }

    /// Full stack: tokens, layers and head. Returns `n(n−1) × 4` logits.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], kinds: &[NodeKind], at: &AdjTensor, t: usize, cond: Condition) -> Var {
        let s = &self.slots;
        let mut x = self.node_tokens(tape, vars, kinds, cond);
        let mut e = self.edge_tokens(tape, vars, at);
        let g = self.time_token(tape, vars, t);
        for l in 0..self.config.layers {
            (x, e) = self.transformer_layer(tape, vars, l, at, x, e, g);
        }
        let h = Self::affine(tape, e, vars[s.head_w1], vars[s.head_b1]);
        let h = tape.silu(h);
        Self::affine(tape, h, vars[s.head_w2], vars[s.head_b2])
    }

    /// Clean-relation logits for `ego` observed at `A^(t)`; `features` are
    /// already-encoded protein conditions and GO features, or `None` when the
    /// conditions are dropped.
    pub fn predict_clean(
        &self,
        ego: &EgoGraph,
        at: &AdjTensor,
        features: Option<&NodeFeatures>,
        t: usize,
    ) -> Result<EdgeLogits> {
        if at.node_count() != ego.node_count() {
            return Err(Error::contract("noisy adjacency does not match the ego-graph"));
        }
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let cond = match features {
            Some(f) => {
                self.check_features(ego, f)?;
                if f.h.cols() != self.config.d_cond {
                    return Err(Error::contract("protein condition width differs from configuration"));
                }
                Condition::Present { h_tilde: tape.constant(f.h.clone()), z: tape.constant(f.z.clone()) }
            }
            None => Condition::Dropped,
        };
        let out = self.forward(&mut tape, &vars, &ego.kinds, at, t, cond);
        tape.check()?;
        Ok(EdgeLogits { logits: tape.value(out).clone() })
    }
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> DenseMatrix {
    fan_in_normal(rows, cols, rng).scale(std * (rows as f64).sqrt())
}
