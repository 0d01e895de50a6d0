use crate::numerics::DenseMatrix;
use crate::{Error, Result};

fn check_shapes(preds: &DenseMatrix, labels: &DenseMatrix) -> Result<()> {
    if preds.shape() != labels.shape() {
        return Err(Error::contract(format!(
            "predictions {:?} and labels {:?} differ in shape",
            preds.shape(),
            labels.shape()
        )));
    }
    Ok(())
}

/// Protein-centric maximum F-measure over thresholds `0.00, 0.01, …, 1.00`.
///
/// A term counts as predicted when its score is positive and at or above the
/// threshold. Precision averages over proteins with at least one predicted
/// term, recall over proteins with at least one true label. Returns the best
/// F-measure and the first threshold attaining it.
pub fn fmax(preds: &DenseMatrix, labels: &DenseMatrix) -> Result<(f64, f64)> {
    check_shapes(preds, labels)?;
    let labelled: Vec<usize> = (0..labels.rows()).filter(|&r| labels.row(r).iter().any(|&y| y > 0.5)).collect();
    if labelled.is_empty() {
        return Err(Error::contract("Fmax needs at least one labelled protein"));
    }
    let mut best = (0.0, 0.0);
    for k in 0..=100 {
        let tau = k as f64 / 100.0;
        let mut prec_sum = 0.0;
        let mut covered = 0usize;
        let mut rec_sum = 0.0;
        for r in 0..preds.rows() {
            let (p, y) = (preds.row(r), labels.row(r));
            let predicted = p.iter().filter(|&&s| s > 0.0 && s >= tau).count();
            let truth = y.iter().filter(|&&v| v > 0.5).count();
            let hits = p.iter().zip(y).filter(|&(&s, &v)| s > 0.0 && s >= tau && v > 0.5).count();
            if predicted > 0 {
                covered += 1;
                prec_sum += hits as f64 / predicted as f64;
            }
            if truth > 0 {
                rec_sum += hits as f64 / truth as f64;
            }
        }
        if covered == 0 {
            continue;
        }
        let precision = prec_sum / covered as f64;
        let recall = rec_sum / labelled.len() as f64;
        let f = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        if f > best.0 {
            best = (f, tau);
        }
    }
    Ok(best)
}

/// Area under the micro-averaged precision–recall curve.
///
/// Pairs are ranked by descending score; tied scores enter together and the
/// curve is integrated step-wise, `Σ (R_k − R_{k−1})·P_k`.
pub fn aupr(preds: &DenseMatrix, labels: &DenseMatrix) -> Result<f64> {
    check_shapes(preds, labels)?;
    let mut pairs: Vec<(f64, bool)> = preds.data().iter().zip(labels.data()).map(|(&s, &y)| (s, y > 0.5)).collect();
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 {
        return Err(Error::contract("AUPR needs at least one positive pair"));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let s = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == s {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}
