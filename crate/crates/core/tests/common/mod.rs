#![allow(dead_code)]

use dampe::denoiser::{Denoiser, NodeFeatures};
use dampe::hetgraph::{AdjTensor, EgoGraph, GoDag, NodeKind, Relation};
use dampe::numerics::DenseMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}

/// Entropic OT on `C / max(C)` with uniform marginals, solved by damped
/// Newton ascent on the semi-dual in the column potential.
pub fn newton_entropic_ot(cost: &DenseMatrix, epsilon: f64) -> DenseMatrix {
    let (n, m) = cost.shape();
    let max = cost.data().iter().copied().fold(0.0, f64::max);
    let c = cost.map(|v| if max > 0.0 { v / max } else { v });
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let objective = |g: &[f64]| -> f64 {
        let mut v: f64 = g.iter().map(|x| b * x).sum();
        for i in 0..n {
            let e: Vec<f64> = (0..m).map(|j| (g[j] - c.get(i, j)) / epsilon).collect();
            let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            v -= epsilon * a * (mx + e.iter().map(|x| (x - mx).exp()).sum::<f64>().ln());
        }
        v
    };
    let conditionals = |g: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let e: Vec<f64> = (0..m).map(|j| (g[j] - c.get(i, j)) / epsilon).collect();
                let mx = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = e.iter().map(|x| (x - mx).exp()).collect();
                let s: f64 = w.iter().sum();
                w.into_iter().map(|x| x / s).collect()
            })
            .collect()
    };
    let mut g = vec![0.0; m];
    for _ in 0..500 {
        let pi = conditionals(&g);
        let grad: Vec<f64> = (0..m).map(|j| b - a * (0..n).map(|i| pi[i][j]).sum::<f64>()).collect();
        if grad.iter().map(|x| x.abs()).sum::<f64>() < 1e-15 {
            break;
        }
        // Negative Hessian restricted to the first m−1 coordinates (g_{m−1} pinned at 0).
        let k = m - 1;
        let mut h = vec![vec![0.0; k]; k];
        for row in &pi {
            for p in 0..k {
                for q in 0..k {
                    let d = if p == q { row[p] } else { 0.0 };
                    h[p][q] += a * (d - row[p] * row[q]) / epsilon;
                }
            }
        }
        let step = solve(h, grad[..k].to_vec());
        let base = objective(&g);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = (0..m).map(|j| if j < k { g[j] + t * step[j] } else { g[j] }).collect();
            if objective(&trial) >= base || t < 1e-12 {
                g = trial;
                break;
            }
            t *= 0.5;
        }
    }
    let pi = conditionals(&g);
    DenseMatrix::from_fn(n, m, |i, j| a * pi[i][j])
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Fmax by direct enumeration of the 101 thresholds.
pub fn fmax_oracle(preds: &DenseMatrix, labels: &DenseMatrix) -> f64 {
    let mut best = 0.0f64;
    for k in 0..=100 {
        let tau = k as f64 / 100.0;
        let (mut ps, mut pc, mut rs, mut rc) = (0.0, 0usize, 0.0, 0usize);
        for r in 0..preds.rows() {
            let mut predicted = 0usize;
            let mut hits = 0usize;
            let mut truth = 0usize;
            for c in 0..preds.cols() {
                let on = preds.get(r, c) > 0.0 && preds.get(r, c) >= tau;
                let y = labels.get(r, c) > 0.5;
                predicted += on as usize;
                truth += y as usize;
                hits += (on && y) as usize;
            }
            if predicted > 0 {
                ps += hits as f64 / predicted as f64;
                pc += 1;
            }
            if truth > 0 {
                rs += hits as f64 / truth as f64;
                rc += 1;
            }
        }
        if pc == 0 || rc == 0 {
            continue;
        }
        let (p, r) = (ps / pc as f64, rs / rc as f64);
        if p + r > 0.0 {
            best = best.max(2.0 * p * r / (p + r));
        }
    }
    best
}

/// Step-wise AUPR by rescanning all pairs at every distinct score.
pub fn aupr_oracle(preds: &DenseMatrix, labels: &DenseMatrix) -> f64 {
    let mut thresholds: Vec<f64> = preds.data().to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let positives = labels.data().iter().filter(|&&y| y > 0.5).count();
    let mut area = 0.0;
    let mut prev = 0.0;
    for thr in thresholds {
        let (mut tp, mut fp) = (0usize, 0usize);
        for (s, y) in preds.data().iter().zip(labels.data()) {
            if *s >= thr {
                if *y > 0.5 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev) * precision;
        prev = recall;
    }
    area
}

pub fn random_dag(n: usize, rng: &mut impl Rng) -> GoDag {
    let mut edges = Vec::new();
    for child in 1..n {
        for parent in 0..child {
            if rng.random_bool(0.3) {
                edges.push((parent, child));
            }
        }
    }
    GoDag::from_edges(n, &edges).unwrap()
}

pub fn random_ego(n: usize, rng: &mut impl Rng) -> EgoGraph {
    let mut kinds = vec![NodeKind::Protein];
    kinds.extend((1..n).map(|_| if rng.random_bool(0.5) { NodeKind::Protein } else { NodeKind::Go }));
    let rels = (0..n * (n - 1)).map(|_| Relation::from_index(rng.random_range(0..4)).unwrap()).collect();
    EgoGraph::from_parts(kinds, AdjTensor::from_relations(n, rels).unwrap()).unwrap()
}

pub fn random_features(ego: &EgoGraph, d_cond: usize, d_go: usize, rng: &mut impl Rng) -> NodeFeatures {
    let np = ego.local_of_kind(NodeKind::Protein).len();
    NodeFeatures { h: gaussian(np, d_cond, 1.0, rng), z: gaussian(ego.node_count() - np, d_go, 1.0, rng) }
}

/// Gives the zero-initialised time modulation and output head random values.
pub fn randomize_zero_init(den: &mut Denoiser, rng: &mut impl Rng) {
    let p = den.params_mut();
    for i in 0..p.len() {
        let name = p.name(i).to_string();
        if name.contains("film") || name.contains("head_w2") || name.contains("head_b2") {
            let (r, c) = p.get(i).shape();
            *p.get_mut(i) = gaussian(r, c, 0.3, rng);
        }
    }
}

/// Feature rows reordered to follow `ego.permute(perm)`.
pub fn permute_features(ego: &EgoGraph, f: &NodeFeatures, perm: &[usize]) -> NodeFeatures {
    let reorder = |kind: NodeKind, m: &DenseMatrix| {
        let mut moved: Vec<(usize, usize)> =
            ego.local_of_kind(kind).iter().enumerate().map(|(row, &i)| (perm[i], row)).collect();
        moved.sort();
        m.select_rows(&moved.iter().map(|&(_, row)| row).collect::<Vec<_>>())
    };
    NodeFeatures { h: reorder(NodeKind::Protein, &f.h), z: reorder(NodeKind::Go, &f.z) }
}

pub fn random_permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
