//! Downstream multi-label function prediction: classifier, fine-tuning of
//! classifier and condition encoder, hierarchy propagation and metrics.

mod metrics;

pub use metrics::{aupr, fmax};

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hetgraph::GoDag;
use crate::moe::MoeEncoder;
use crate::numerics::{fan_in_normal, AdamW, AdamWConfig, DenseMatrix, OneCycle, ParamSet, Tape, Var};
use crate::{Error, Result};

/// Two-layer perceptron with sigmoid outputs, one per candidate term.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    params: ParamSet,
}

impl Classifier {
    pub fn new(input_dim: usize, hidden: usize, terms: usize, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || terms == 0 {
            return Err(Error::contract("classifier dimensions must be positive"));
        }
        let mut params = ParamSet::new();
        params.push("clf.w1", fan_in_normal(input_dim, hidden, rng));
        params.push("clf.b1", DenseMatrix::zeros(1, hidden));
        params.push("clf.w2", fan_in_normal(hidden, terms, rng));
        params.push("clf.b2", DenseMatrix::zeros(1, terms));
        Ok(Self { params })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn terms(&self) -> usize {
        self.params.get(3).cols()
    }

    pub fn input_dim(&self) -> usize {
        self.params.get(0).rows()
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        let h = tape.matmul(x, vars[0]);
        let h = tape.add_row(h, vars[1]);
        let h = tape.silu(h);
        let o = tape.matmul(h, vars[2]);
        let o = tape.add_row(o, vars[3]);
        tape.sigmoid(o)
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::contract("classifier input width mismatch"));
        }
        let mut tape = Tape::new();
        let vars = self.params.bind_frozen(&mut tape);
        let xv = tape.constant(x.clone());
        let out = self.forward(&mut tape, &vars, xv);
        tape.check()?;
        Ok(tape.value(out).clone())
    }
}

/// Binary protein × term labels closed under the true-path rule.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMatrix {
    y: DenseMatrix,
}

impl LabelMatrix {
    /// Builds labels from `(row, term)` pairs and verifies ancestor closure.
    pub fn from_pairs(rows: usize, dag: &GoDag, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut y = DenseMatrix::zeros(rows, dag.len());
        for &(r, t) in pairs {
            if r >= rows || t >= dag.len() {
                return Err(Error::data(format!("label ({r}, {t}) outside {rows} × {}", dag.len())));
            }
            y.set(r, t, 1.0);
        }
        let labels = Self { y };
        labels.check_closure(dag)?;
        Ok(labels)
    }

    pub fn from_matrix(y: DenseMatrix, dag: &GoDag) -> Result<Self> {
        if y.cols() != dag.len() || y.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::data("label matrix must be binary with one column per term"));
        }
        let labels = Self { y };
        labels.check_closure(dag)?;
        Ok(labels)
    }

    fn check_closure(&self, dag: &GoDag) -> Result<()> {
        for r in 0..self.y.rows() {
            for t in 0..dag.len() {
                if self.y.get(r, t) == 1.0 {
                    if let Some(&p) = dag.parents(t).iter().find(|&&p| self.y.get(r, p) != 1.0) {
                        return Err(Error::data(format!(
                            "labels of row {r} include term {t} but not its parent {p}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.y
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { y: self.y.select_rows(rows) }
    }
}

/// `p̂(τ) ← max(p̂(τ), max over descendants)`, one reverse-topological sweep.
pub fn true_path_propagate(preds: &DenseMatrix, dag: &GoDag) -> Result<DenseMatrix> {
    if preds.cols() != dag.len() {
        return Err(Error::contract(format!(
            "{} prediction columns for {} terms",
            preds.cols(),
            dag.len()
        )));
    }
    let mut out = preds.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        for &t in dag.topological().iter().rev() {
            let best = dag.children(t).iter().map(|&c| row[c]).fold(row[t], f64::max);
            row[t] = best;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 16, peak_lr: 8e-4, warmup: 0.1, weight_decay: 1e-4, seed: 0 }
    }
}

/// Mean binary cross-entropy of the classifier over encoded rows.
pub fn finetune_loss(moe: &MoeEncoder, clf: &Classifier, h: &DenseMatrix, y: &DenseMatrix) -> Result<f64> {
    let mut tape = Tape::new();
    let mv = moe.params().bind_frozen(&mut tape);
    let cv = clf.params().bind_frozen(&mut tape);
    let x = tape.constant(h.clone());
    let e = moe.forward(&mut tape, &mv, x);
    let p = clf.forward(&mut tape, &cv, e);
    let loss = tape.binary_cross_entropy(p, y);
    tape.check()?;
    Ok(tape.scalar(loss))
}

/// Joint optimiser state for fine-tuning.
pub struct Finetuner {
    opt_moe: AdamW,
    opt_clf: AdamW,
}

impl Finetuner {
    pub fn new(moe: &MoeEncoder, clf: &Classifier, weight_decay: f64) -> Self {
        let c = AdamWConfig { weight_decay, ..AdamWConfig::default() };
        Self { opt_moe: AdamW::new(c, moe.params().values()), opt_clf: AdamW::new(c, clf.params().values()) }
    }

    /// One step on a batch; gradients reach both the classifier and the encoder.
    pub fn step(
        &mut self,
        moe: &mut MoeEncoder,
        clf: &mut Classifier,
        h: &DenseMatrix,
        y: &DenseMatrix,
        lr: f64,
    ) -> Result<f64> {
        if h.rows() != y.rows() || y.cols() != clf.terms() {
            return Err(Error::contract("fine-tuning batch shapes disagree"));
        }
        let mut tape = Tape::new();
        let mv = moe.params().bind(&mut tape);
        let cv = clf.params().bind(&mut tape);
        let x = tape.constant(h.clone());
        let e = moe.forward(&mut tape, &mv, x);
        let p = clf.forward(&mut tape, &cv, e);
        let loss = tape.binary_cross_entropy(p, y);
        let mut grads = tape.backward(loss)?;
        let gm = grads.collect(&mv);
        let gc = grads.collect(&cv);
        self.opt_moe.update_with_lr(moe.params_mut().values_mut(), &gm, lr)?;
        self.opt_clf.update_with_lr(clf.params_mut().values_mut(), &gc, lr)?;
        Ok(tape.scalar(loss))
    }
}

/// Fine-tunes on `(h, y)` with shuffled mini-batches and a one-cycle rate;
/// returns the mean loss of every epoch.
pub fn finetune(
    moe: &mut MoeEncoder,
    clf: &mut Classifier,
    h: &DenseMatrix,
    y: &DenseMatrix,
    config: &FinetuneConfig,
) -> Result<Vec<f64>> {
    if h.rows() == 0 || config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("fine-tuning needs rows, a positive batch size and epochs".into()));
    }
    let per_epoch = h.rows().div_ceil(config.batch_size);
    let total = (per_epoch * config.epochs).max(3);
    let schedule = OneCycle::new(config.peak_lr, config.warmup, total)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Finetuner::new(moe, clf, config.weight_decay);
    let mut order: Vec<usize> = (0..h.rows()).collect();
    let mut step = 0;
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let lr = schedule.rate(step.min(total - 1))?;
            sum += opt.step(moe, clf, &h.select_rows(chunk), &y.select_rows(chunk), lr)?;
            step += 1;
        }
        history.push(sum / per_epoch as f64);
    }
    Ok(history)
}

/// Propagated scores for encoded rows.
pub fn predict(moe: &MoeEncoder, clf: &Classifier, h: &DenseMatrix, dag: &GoDag) -> Result<DenseMatrix> {
    let raw = clf.predict(&moe.encode(h)?)?;
    true_path_propagate(&raw, dag)
}

/// Writes `protein_id<TAB>go_id<TAB>score` lines.
pub fn write_predictions(path: &Path, proteins: &[usize], terms: &[usize], preds: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for (r, p) in proteins.iter().enumerate() {
        for (c, t) in terms.iter().enumerate() {
            writeln!(out, "{p}\t{t}\t{:.17e}", preds.get(r, c)).expect("string write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a predictions file back into a matrix over the given ids.
pub fn read_predictions(path: &Path, proteins: &[usize], terms: &[usize]) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows: HashMap<usize, usize> = proteins.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let cols: HashMap<usize, usize> = terms.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let mut out = DenseMatrix::zeros(proteins.len(), terms.len());
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split('\t').collect();
        let parse = || -> Option<(usize, usize, f64)> {
            Some((f.first()?.parse().ok()?, f.get(1)?.parse().ok()?, f.get(2)?.parse().ok()?))
        };
        let (p, t, s) = parse().ok_or_else(|| Error::data(format!("{}:{}: malformed line", path.display(), n + 1)))?;
        match (rows.get(&p), cols.get(&t)) {
            (Some(&r), Some(&c)) => out.set(r, c, s),
            _ => return Err(Error::data(format!("{}:{}: unknown pair ({p}, {t})", path.display(), n + 1))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_propagation() {
        let dag = GoDag::from_edges(2, &[(0, 1)]).unwrap();
        let p = DenseMatrix::from_rows(&[vec![0.2, 0.9]]).unwrap();
        let out = true_path_propagate(&p, &dag).unwrap();
        assert_eq!(out.row(0), &[0.9, 0.9]);
        assert_eq!(true_path_propagate(&out, &dag).unwrap(), out);
    }

    #[test]
    fn label_closure_is_verified() {
        let dag = GoDag::from_edges(2, &[(0, 1)]).unwrap();
        assert!(LabelMatrix::from_pairs(1, &dag, &[(0, 1)]).is_err());
        assert!(LabelMatrix::from_pairs(1, &dag, &[(0, 1), (0, 0)]).is_ok());
    }

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(DenseMatrix::filled(2, 3, 0.5));
        let l = tape.binary_cross_entropy(p, &DenseMatrix::from_fn(2, 3, |i, j| ((i + j) % 2) as f64));
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-15);

        let mut tape = Tape::new();
        let p = tape.constant(DenseMatrix::from_rows(&[vec![0.8, 0.3]]).unwrap());
        let l = tape.binary_cross_entropy(p, &DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let expect = -(0.8f64.ln() + 0.7f64.ln()) / 2.0;
        assert!((tape.scalar(l) - expect).abs() < 1e-15);

        let mut tape = Tape::new();
        let p = tape.constant(DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let l = tape.binary_cross_entropy(p, &DenseMatrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        assert!(tape.scalar(l) < 1e-6);
    }
}
