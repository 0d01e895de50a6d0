//! WebAssembly bindings behind `www/index.html`.

use dampe::diffusion::{cosine_schedule, forward_sample};
use dampe::hetgraph::{AdjTensor, Relation};
use dampe::numerics::DenseMatrix;
use dampe::otalign::{build_cost, sinkhorn_solve, SinkhornConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wasm_bindgen::prelude::*;

fn js_err(e: dampe::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Transport plan between a sequence embedding and a column-permuted noisy
/// copy of it, flattened row-major as `d × d`.
#[wasm_bindgen]
pub fn sinkhorn_plan(proteins: usize, dim: usize, noise: f64, epsilon: f64, seed: u64) -> Result<Vec<f64>, JsValue> {
    plan_for(proteins, dim, noise, epsilon, seed).map_err(js_err)
}

pub fn plan_for(proteins: usize, dim: usize, noise: f64, epsilon: f64, seed: u64) -> dampe::Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let e_seq = DenseMatrix::from_fn(proteins, dim, |_, _| draw());
    let shifted = DenseMatrix::from_fn(proteins, dim, |i, j| e_seq.get(i, (j + 1) % dim) + noise * draw());
    let cost = build_cost(&shifted, &e_seq)?;
    let config = SinkhornConfig { epsilon, ..SinkhornConfig::default() };
    Ok(sinkhorn_solve(&cost, &config)?.values().data().to_vec())
}

/// `ᾱ_t` for `t = 0..=steps`.
#[wasm_bindgen]
pub fn schedule_curve(steps: usize, shift: f64) -> Result<Vec<f64>, JsValue> {
    let s = cosine_schedule(steps, shift).map_err(js_err)?;
    Ok((0..=steps).map(|t| s.alpha_bar(t)).collect())
}

/// Relation counts before and after noising a random clean graph to step `t`.
///
/// The clean graph draws relations from `clean`; noise resamples toward
/// `marginal`. Returns eight counts: clean ppi/go/anno/noedge, then noisy.
#[wasm_bindgen]
pub fn forward_noise_counts(
    nodes: usize,
    t: usize,
    steps: usize,
    shift: f64,
    clean: Vec<f64>,
    marginal: Vec<f64>,
    seed: u64,
) -> Result<Vec<u32>, JsValue> {
    noise_counts(nodes, t, steps, shift, &clean, &marginal, seed).map_err(js_err)
}

pub fn noise_counts(
    nodes: usize,
    t: usize,
    steps: usize,
    shift: f64,
    clean: &[f64],
    marginal: &[f64],
    seed: u64,
) -> dampe::Result<Vec<u32>> {
    let as4 = |v: &[f64]| -> dampe::Result<[f64; 4]> {
        v.try_into().map_err(|_| dampe::Error::Contract("expected four relation weights".into()))
    };
    let (clean, marginal) = (as4(clean)?, as4(marginal)?);
    let schedule = cosine_schedule(steps, shift)?;
    if t > steps {
        return Err(dampe::Error::Contract(format!("t = {t} exceeds {steps} steps")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a0 = AdjTensor::empty(nodes);
    for r in a0.relations_mut() {
        *r = Relation::from_index(dampe::diffusion::sample_categorical(&clean, &mut rng)).expect("four relations");
    }
    let noisy = forward_sample(&a0, &schedule, t, &marginal, &mut rng)?;
    Ok(a0.counts().into_iter().chain(noisy.adj.counts()).map(|c| c as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_concentrates_on_the_shift() {
        let plan = plan_for(200, 6, 0.05, 1e-3, 1).unwrap();
        for i in 0..6 {
            let row = &plan[i * 6..(i + 1) * 6];
            let best = (0..6).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(best, (i + 1) % 6);
        }
    }

    #[test]
    fn curve_starts_at_one_and_decreases() {
        let c = schedule_curve(20, 1.0).unwrap();
        assert_eq!(c[0], 1.0);
        assert!(c.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noise_counts_cover_all_pairs() {
        let c = noise_counts(12, 10, 20, 1.0, &[0.3, 0.2, 0.2, 0.3], &[0.01, 0.01, 0.01, 0.97], 3).unwrap();
        assert_eq!(c[..4].iter().sum::<u32>(), 12 * 11);
        assert_eq!(c[4..].iter().sum::<u32>(), 12 * 11);
        assert!(noise_counts(4, 30, 20, 1.0, &[1.0, 0.0, 0.0, 0.0], &[0.25; 4], 0).is_err());
    }
}
