//! Categorical diffusion over the four edge relations.
//!
//! One step keeps a relation with probability `α_t` and otherwise resamples
//! it from the relation marginal `m`, so `Q^(t) = α_t·I + (1 − α_t)·𝟙mᵀ` and
//! the `t`-step kernel has the same form with `ᾱ_t = Π_{τ≤t} α_τ`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rand::Rng;

use crate::hetgraph::{AdjTensor, Relation};
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

pub const DEFAULT_SHIFT: f64 = 0.008;
pub const ALPHA_MIN: f64 = 1e-5;

/// Per-step retention `α_t` and cumulative `ᾱ_t` for `t = 1..=T`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit retention coefficients in `(0, 1]`.
    pub fn from_alphas(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::contract("noise schedule needs at least one step"));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
            return Err(Error::contract(format!("retention coefficient {a} outside (0, 1]")));
        }
        let mut alpha_bar = Vec::with_capacity(alpha.len());
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        Ok(Self { alpha, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// `α_t` for `1 ≤ t ≤ T`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    /// `ᾱ_t` for `0 ≤ t ≤ T`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::contract(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// `t,alpha,alpha_bar` rows with a header; values print losslessly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,alpha,alpha_bar\n");
        for t in 1..=self.steps() {
            writeln!(out, "{t},{},{}", self.alpha(t), self.alpha_bar(t)).expect("string write");
        }
        out
    }
}

/// Shifted cosine schedule: `ᾱ_t = f(t)/f(0)` with
/// `f(t) = cos²(((t/T + s)/(1 + s))·π/2)`, each `α_t` clamped to `[1e-5, 1]`
/// and `ᾱ` recomputed as the running product of the clamped values.
pub fn cosine_schedule(steps: usize, shift: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::contract("cosine schedule needs T ≥ 1"));
    }
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::contract(format!("schedule shift {shift} must be finite and ≥ 0")));
    }
    let f = |t: usize| {
        let x = ((t as f64 / steps as f64 + shift) / (1.0 + shift)) * FRAC_PI_2;
        x.cos().powi(2)
    };
    let f0 = f(0);
    let mut prev = 1.0;
    let mut alpha = Vec::with_capacity(steps);
    for t in 1..=steps {
        let bar = f(t) / f0;
        alpha.push((bar / prev).clamp(ALPHA_MIN, 1.0));
        prev = bar;
    }
    NoiseSchedule::from_alphas(alpha)
}

/// Validates a relation marginal.
pub fn check_marginal(m: &[f64; 4]) -> Result<()> {
    let sum: f64 = m.iter().sum();
    if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("relation marginal {m:?} is not a distribution")));
    }
    Ok(())
}

/// A 4×4 row-stochastic matrix over relations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionMatrix(pub [[f64; 4]; 4]);

impl TransitionMatrix {
    /// `a·I + (1 − a)·𝟙mᵀ`.
    pub fn retain_or_resample(a: f64, m: &[f64; 4]) -> Self {
        let mut q = [[0.0; 4]; 4];
        for (i, row) in q.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (1.0 - a) * m[j] + if i == j { a } else { 0.0 };
            }
        }
        Self(q)
    }

    pub fn get(&self, from: Relation, to: Relation) -> f64 {
        self.0[from.index()][to.index()]
    }

    pub fn row(&self, from: Relation) -> [f64; 4] {
        self.0[from.index()]
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..4).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        Self(out)
    }

    pub fn identity() -> Self {
        Self::retain_or_resample(1.0, &[0.25; 4])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One-step kernel `Q^(t)`.
pub fn transition_matrix(schedule: &NoiseSchedule, t: usize, m: &[f64; 4]) -> Result<TransitionMatrix> {
    schedule.check_t(t)?;
    check_marginal(m)?;
    Ok(TransitionMatrix::retain_or_resample(schedule.alpha(t), m))
}

/// `t`-step kernel `Q̄^(t)`.
pub fn cumulative_transition(schedule: &NoiseSchedule, t: usize, m: &[f64; 4]) -> Result<TransitionMatrix> {
    schedule.check_t(t)?;
    check_marginal(m)?;
    Ok(TransitionMatrix::retain_or_resample(schedule.alpha_bar(t), m))
}

/// An adjacency tensor corrupted to timestep `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoisyAdj {
    pub adj: AdjTensor,
    pub t: usize,
}

pub fn sample_categorical(p: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return k;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Draws `A^(t)` pairwise independently from the rows `Q̄^(t)[A^(0)_{ij}, ·]`.
pub fn forward_sample(
    a0: &AdjTensor,
    schedule: &NoiseSchedule,
    t: usize,
    m: &[f64; 4],
    rng: &mut impl Rng,
) -> Result<NoisyAdj> {
    let q = cumulative_transition(schedule, t, m)?;
    let mut adj = a0.clone();
    for r in adj.relations_mut() {
        let row = q.row(*r);
        *r = Relation::from_index(sample_categorical(&row, rng)).expect("four relations");
    }
    Ok(NoisyAdj { adj, t })
}

fn posterior_unnormalized(r0: Relation, rt: Relation, schedule: &NoiseSchedule, t: usize, m: &[f64; 4]) -> [f64; 4] {
    let q = TransitionMatrix::retain_or_resample(schedule.alpha(t), m);
    let qbar = TransitionMatrix::retain_or_resample(schedule.alpha_bar(t - 1), m);
    let mut p = [0.0; 4];
    for (k, r) in Relation::ALL.into_iter().enumerate() {
        p[k] = q.get(r, rt) * qbar.get(r0, r);
    }
    p
}

/// `q(r_{t−1} | r_t, r_0) ∝ Q^(t)[r', r_t]·Q̄^(t−1)[r_0, r']`; a point mass
/// at `r_0` when `t = 1`.
pub fn posterior_distribution(
    r0: Relation,
    rt: Relation,
    schedule: &NoiseSchedule,
    t: usize,
    m: &[f64; 4],
) -> Result<[f64; 4]> {
    schedule.check_t(t)?;
    check_marginal(m)?;
    if t == 1 {
        let mut p = [0.0; 4];
        p[r0.index()] = 1.0;
        return Ok(p);
    }
    let p = posterior_unnormalized(r0, rt, schedule, t, m);
    let z: f64 = p.iter().sum();
    if !(z > 0.0) {
        return Err(Error::numeric(
            "posterior_distribution",
            format!("zero normaliser for r0={r0}, rt={rt}, t={t}"),
        ));
    }
    Ok(p.map(|x| x / z))
}

/// One ancestral step `A^(t) → A^(t−1)`.
///
/// `p0_hat` holds one predicted clean distribution per ordered pair (rows in
/// pair order). Each pair samples from the `p0_hat`-weighted mixture of exact
/// posteriors; candidates incompatible with the observed relation carry no
/// mass. At `t = 1` the prediction is sampled directly.
pub fn reverse_step(
    p0_hat: &DenseMatrix,
    at: &NoisyAdj,
    schedule: &NoiseSchedule,
    m: &[f64; 4],
    rng: &mut impl Rng,
) -> Result<AdjTensor> {
    let t = at.t;
    schedule.check_t(t)?;
    check_marginal(m)?;
    if p0_hat.shape() != (at.adj.pair_count(), 4) {
        return Err(Error::contract(format!(
            "clean prediction has shape {:?}, expected ({}, 4)",
            p0_hat.shape(),
            at.adj.pair_count()
        )));
    }
    for k in 0..p0_hat.rows() {
        let s: f64 = p0_hat.row(k).iter().sum();
        if (s - 1.0).abs() > 1e-6 || p0_hat.row(k).iter().any(|&x| x < 0.0) {
            return Err(Error::contract(format!("clean prediction row {k} sums to {s}")));
        }
    }
    let mut out = at.adj.clone();
    for (k, slot) in out.relations_mut().iter_mut().enumerate() {
        let w = p0_hat.row(k);
        let rt = *slot;
        let mix = if t == 1 {
            [w[0], w[1], w[2], w[3]]
        } else {
            let mut mix = [0.0; 4];
            for r0 in Relation::ALL {
                let wr = w[r0.index()];
                if wr == 0.0 {
                    continue;
                }
                let p = posterior_unnormalized(r0, rt, schedule, t, m);
                let z: f64 = p.iter().sum();
                if z > 0.0 {
                    for (x, y) in mix.iter_mut().zip(p) {
                        *x += wr * y / z;
                    }
                }
            }
            mix
        };
        if !(mix.iter().sum::<f64>() > 0.0) {
            return Err(Error::numeric("reverse_step", format!("pair {k} has no reachable predecessor")));
        }
        *slot = Relation::from_index(sample_categorical(&mix, rng)).expect("four relations");
    }
    Ok(out)
}

/// Total-variation distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
