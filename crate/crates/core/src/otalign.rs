//! Alignment of structure embeddings into the sequence embedding space.
//!
//! Embedding *dimensions* are the transport samples: each column of the
//! structure matrix is a point in `R^{N_p}` carrying mass `1/d_struc`, each
//! column of the sequence matrix carries `1/d_seq`. The entropic plan between
//! them is applied to every protein by barycentric projection, and the
//! projected block is concatenated with the sequence block.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::numerics::DenseMatrix;
use crate::{Error, Result};

/// Pairwise RMSE between structure columns (rows of the cost) and sequence
/// columns (columns of the cost).
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    values: DenseMatrix,
}

impl CostMatrix {
    pub fn from_matrix(values: DenseMatrix) -> Result<Self> {
        if values.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("cost entries must be finite and non-negative"));
        }
        if values.is_empty() {
            return Err(Error::contract("cost matrix is empty"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn d_struc(&self) -> usize {
        self.values.rows()
    }

    pub fn d_seq(&self) -> usize {
        self.values.cols()
    }
}

/// `C_ij = sqrt(mean_p (E_struc[p,i] - E_seq[p,j])^2)`.
pub fn build_cost(e_struc: &DenseMatrix, e_seq: &DenseMatrix) -> Result<CostMatrix> {
    let n = e_struc.rows();
    if n != e_seq.rows() {
        return Err(Error::contract(format!(
            "structure embeddings cover {n} proteins, sequence embeddings {}",
            e_seq.rows()
        )));
    }
    if n == 0 {
        return Err(Error::contract("no proteins to build a cost from"));
    }
    let us = e_struc.transpose();
    let vs = e_seq.transpose();
    let values = DenseMatrix::from_fn(us.rows(), vs.rows(), |i, j| {
        let ss: f64 = us.row(i).iter().zip(vs.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        (ss / n as f64).sqrt()
    });
    CostMatrix::from_matrix(values)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic weight applied to the max-normalised cost.
    pub epsilon: f64,
    /// Stop once the transport cost moves by less than this between iterations.
    pub cost_tol: f64,
    /// Marginal L1 error required alongside the cost criterion.
    pub marginal_tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 1e-3, cost_tol: 1e-6, marginal_tol: 1e-6, max_iter: 1_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    values: DenseMatrix,
    pub epsilon: f64,
    pub iterations: usize,
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn d_struc(&self) -> usize {
        self.values.rows()
    }

    pub fn d_seq(&self) -> usize {
        self.values.cols()
    }

    /// `⟨T, C⟩`.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.values.data().iter().zip(cost.values().data()).map(|(t, c)| t * c).sum()
    }

    /// Builds a plan from an explicit matrix (persisted plans, tests).
    pub fn from_parts(values: DenseMatrix, epsilon: f64, iterations: usize, marginal_error: f64) -> Result<Self> {
        if values.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::contract("plan entries must be finite and non-negative"));
        }
        Ok(Self { values, epsilon, iterations, marginal_error })
    }

    /// Writes `plan.mat` plus `plan.meta` (key=value lines) into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.values.save(dir.join("plan.mat"))?;
        let mut meta = String::new();
        let _ = writeln!(meta, "epsilon={:e}", self.epsilon);
        let _ = writeln!(meta, "iterations={}", self.iterations);
        let _ = writeln!(meta, "marginal_error={:e}", self.marginal_error);
        let path = dir.join("plan.meta");
        fs::write(&path, meta).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let values = DenseMatrix::load(dir.join("plan.mat"))?;
        let path = dir.join("plan.meta");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut epsilon = None;
        let mut iterations = None;
        let mut marginal_error = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::data(format!("{}: malformed line `{line}`", path.display())))?;
            let bad = |e: &dyn std::fmt::Display| Error::data(format!("{}: `{k}`: {e}", path.display()));
            match k.trim() {
                "epsilon" => epsilon = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "iterations" => iterations = Some(v.trim().parse::<usize>().map_err(|e| bad(&e))?),
                "marginal_error" => marginal_error = Some(v.trim().parse::<f64>().map_err(|e| bad(&e))?),
                other => return Err(Error::data(format!("{}: unknown key `{other}`", path.display()))),
            }
        }
        let missing = |k: &str| Error::data(format!("{}: missing `{k}`", path.display()));
        Self::from_parts(
            values,
            epsilon.ok_or_else(|| missing("epsilon"))?,
            iterations.ok_or_else(|| missing("iterations"))?,
            marginal_error.ok_or_else(|| missing("marginal_error"))?,
        )
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Marginal L1 errors `(‖T𝟙 − a‖₁, ‖Tᵀ𝟙 − b‖₁)` for uniform `a`, `b`.
pub fn marginal_errors(plan: &DenseMatrix) -> (f64, f64) {
    let (n, m) = plan.shape();
    let a = 1.0 / n as f64;
    let b = 1.0 / m as f64;
    let row = plan.row_sums().iter().map(|s| (s - a).abs()).sum();
    let col = plan.col_sums().iter().map(|s| (s - b).abs()).sum();
    (row, col)
}

/// Per-iteration trace of a Sinkhorn solve.
#[derive(Clone, Debug, Default)]
pub struct SinkhornTrace {
    pub costs: Vec<f64>,
    pub marginal_errors: Vec<f64>,
    /// Entropic dual objective `ε(⟨a, f⟩ + ⟨b, g⟩)` on the normalised cost.
    pub duals: Vec<f64>,
}

/// Entropic OT between uniform marginals, solved with log-domain Sinkhorn on
/// `C / max(C)`.
///
/// Each iteration updates the row potential then the column potential; the
/// plan after an iteration therefore matches the column marginal exactly and
/// the row marginal error measures progress. The solve stops when both the
/// change in `⟨T, C⟩` falls below `cost_tol` and the summed marginal L1 error
/// falls below `marginal_tol`.
pub fn sinkhorn_solve(cost: &CostMatrix, config: &SinkhornConfig) -> Result<TransportPlan> {
    sinkhorn_solve_traced(cost, config, None)
}

pub fn sinkhorn_solve_traced(
    cost: &CostMatrix,
    config: &SinkhornConfig,
    mut trace: Option<&mut SinkhornTrace>,
) -> Result<TransportPlan> {
    let SinkhornConfig { epsilon, cost_tol, marginal_tol, max_iter } = *config;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::contract(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(cost_tol > 0.0) || !(marginal_tol > 0.0) {
        return Err(Error::contract("Sinkhorn tolerances must be positive"));
    }
    let c = cost.values();
    let (n, m) = c.shape();
    let max = c.data().iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 1.0 };
    // kernel exponent -C/(max·ε)
    let k = c.map(|v| -v * scale / epsilon);
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut prev_cost = f64::INFINITY;
    let mut plan = DenseMatrix::zeros(n, m);
    let mut last_err = f64::INFINITY;

    for it in 1..=max_iter {
        for i in 0..n {
            let row = k.row(i);
            f[i] = log_a - log_sum_exp(row.iter().zip(&g).map(|(kij, gj)| kij + gj));
        }
        for j in 0..m {
            g[j] = log_b - log_sum_exp((0..n).map(|i| k.get(i, j) + f[i]));
        }
        for i in 0..n {
            let fi = f[i];
            for (j, t) in plan.row_mut(i).iter_mut().enumerate() {
                *t = (k.get(i, j) + fi + g[j]).exp();
            }
        }
        let (row_err, col_err) = marginal_errors(&plan);
        last_err = row_err + col_err;
        let cur_cost: f64 = plan.data().iter().zip(c.data()).map(|(t, c)| t * c).sum();
        if let Some(tr) = trace.as_deref_mut() {
            tr.costs.push(cur_cost);
            tr.marginal_errors.push(last_err);
            let fa = f.iter().sum::<f64>() / n as f64;
            let gb = g.iter().sum::<f64>() / m as f64;
            tr.duals.push(epsilon * (fa + gb));
        }
        if !cur_cost.is_finite() {
            return Err(Error::numeric("sinkhorn_solve", format!("transport cost became {cur_cost}")));
        }
        let delta = (cur_cost - prev_cost).abs();
        prev_cost = cur_cost;
        if delta < cost_tol && last_err < marginal_tol {
            return TransportPlan::from_parts(plan, epsilon, it, last_err);
        }
    }
    Err(Error::Convergence { iterations: max_iter, marginal_error: last_err })
}

/// `Ẽ = E_struc · T`; with `normalize`, column `j` is divided by its plan mass.
pub fn barycentric_project(e_struc: &DenseMatrix, plan: &TransportPlan, normalize: bool) -> Result<DenseMatrix> {
    if e_struc.cols() != plan.d_struc() {
        return Err(Error::contract(format!(
            "structure embeddings have {} dims, plan expects {}",
            e_struc.cols(),
            plan.d_struc()
        )));
    }
    let mut out = e_struc.matmul(plan.values());
    if normalize {
        let mass = plan.values().col_sums();
        if mass.iter().any(|m| *m <= 0.0) {
            return Err(Error::numeric("barycentric_project", "plan column with zero mass"));
        }
        for r in 0..out.rows() {
            for (v, m) in out.row_mut(r).iter_mut().zip(&mass) {
                *v /= m;
            }
        }
    }
    Ok(out)
}

/// `H = [E_seq ; Ẽ_struc]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntrinsicFeatures {
    h: DenseMatrix,
    d_seq: usize,
}

impl IntrinsicFeatures {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.h
    }

    pub fn sequence_block(&self) -> DenseMatrix {
        self.h.slice_cols(0, self.d_seq)
    }

    pub fn aligned_block(&self) -> DenseMatrix {
        self.h.slice_cols(self.d_seq, self.h.cols() - self.d_seq)
    }
}

pub fn concat_intrinsic(e_seq: &DenseMatrix, aligned: &DenseMatrix) -> Result<IntrinsicFeatures> {
    if aligned.cols() != e_seq.cols() {
        return Err(Error::contract(format!(
            "aligned block has {} columns, sequence block {}",
            aligned.cols(),
            e_seq.cols()
        )));
    }
    Ok(IntrinsicFeatures { h: e_seq.hstack(aligned)?, d_seq: e_seq.cols() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_matrix(cols: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_fn(cols[0].len(), cols.len(), |r, c| cols[c][r])
    }

    #[test]
    fn cost_is_column_rmse() {
        let u = col_matrix(&[vec![0.0, 0.0]]);
        let v = col_matrix(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        let c = build_cost(&u, &v).unwrap();
        assert!((c.values().get(0, 0) - (12.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(c.values().get(0, 1), 0.0);
    }

    #[test]
    fn cost_is_shift_invariant() {
        let u = col_matrix(&[vec![1.0, -2.0, 0.5]]);
        let v = col_matrix(&[vec![0.3, 0.1, 2.0]]);
        let c0 = build_cost(&u, &v).unwrap().values().get(0, 0);
        let c1 = build_cost(&u.map(|x| x + 7.0), &v.map(|x| x + 7.0)).unwrap().values().get(0, 0);
        assert!((c0 - c1).abs() < 1e-12);
    }

    #[test]
    fn cost_rejects_row_mismatch() {
        let u = DenseMatrix::zeros(3, 2);
        let v = DenseMatrix::zeros(4, 2);
        assert!(matches!(build_cost(&u, &v), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_cost_gives_uniform_plan() {
        let c = CostMatrix::from_matrix(DenseMatrix::zeros(3, 5)).unwrap();
        let plan = sinkhorn_solve(&c, &SinkhornConfig::default()).unwrap();
        for v in plan.values().data() {
            assert!((v - 1.0 / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_by_two_concentrates_on_diagonal() {
        let c = CostMatrix::from_matrix(DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let cfg = SinkhornConfig { epsilon: 0.05, ..SinkhornConfig::default() };
        let plan = sinkhorn_solve(&c, &cfg).unwrap();
        // closed form: T_01 = 1/(2(1+e^{1/ε}))
        let closed = 0.5 / (1.0 + (1.0f64 / 0.05).exp());
        assert!(plan.values().get(0, 1) < 1e-4);
        assert!((plan.values().get(0, 1) - closed).abs() < 1e-12);
        assert!((plan.values().get(0, 0) - (0.5 - closed)).abs() < 1e-12);
    }

    #[test]
    fn exhausted_iterations_report_marginal_error() {
        let c = CostMatrix::from_matrix(DenseMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64)).unwrap();
        let cfg = SinkhornConfig { epsilon: 1e-3, max_iter: 1, ..SinkhornConfig::default() };
        match sinkhorn_solve(&c, &cfg) {
            Err(Error::Convergence { iterations, marginal_error }) => {
                assert_eq!(iterations, 1);
                assert!(marginal_error.is_finite());
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }

    #[test]
    fn projection_with_identity_plan() {
        let e = DenseMatrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64);
        let plan = TransportPlan::from_parts(DenseMatrix::identity(4).scale(0.25), 1.0, 0, 0.0).unwrap();
        let out = barycentric_project(&e, &plan, false).unwrap();
        assert!(out.max_abs_diff(&e.scale(0.25)) < 1e-15);
        let norm = barycentric_project(&e, &plan, true).unwrap();
        assert!(norm.max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn projection_of_ones_is_row_mass() {
        let c = CostMatrix::from_matrix(DenseMatrix::from_fn(5, 3, |i, j| ((i + 2 * j) % 4) as f64 * 0.3)).unwrap();
        let plan = sinkhorn_solve(&c, &SinkhornConfig { epsilon: 0.1, ..Default::default() }).unwrap();
        let out = barycentric_project(&DenseMatrix::filled(2, 5, 1.0), &plan, false).unwrap();
        // column sums of the plan equal 1/d_seq exactly after the column update
        for v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_rejects_dimension_mismatch() {
        let plan = TransportPlan::from_parts(DenseMatrix::filled(3, 2, 1.0 / 6.0), 1.0, 0, 0.0).unwrap();
        assert!(barycentric_project(&DenseMatrix::zeros(2, 4), &plan, false).is_err());
    }

    #[test]
    fn concat_and_slice_back() {
        let seq = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let ali = DenseMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let h = concat_intrinsic(&seq, &ali).unwrap();
        assert_eq!(h.matrix().row(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.sequence_block(), seq);
        assert_eq!(h.aligned_block(), ali);
        let zero = concat_intrinsic(&seq, &DenseMatrix::zeros(1, 2)).unwrap();
        assert_eq!(&zero.matrix().row(0)[2..], &[0.0, 0.0]);
        assert!(concat_intrinsic(&seq, &DenseMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn plan_persists_with_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let c = CostMatrix::from_matrix(DenseMatrix::from_fn(3, 3, |i, j| (i as f64 - j as f64).abs())).unwrap();
        let plan = sinkhorn_solve(&c, &SinkhornConfig { epsilon: 0.2, ..Default::default() }).unwrap();
        plan.save(dir.path()).unwrap();
        assert_eq!(TransportPlan::load(dir.path()).unwrap(), plan);
    }
}
