use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Example, Pretrainer, TrainConfig};
use crate::denoiser::{Denoiser, NodeFeatures};
use crate::diffusion::{cumulative_transition, forward_sample, NoiseSchedule, TransitionMatrix};
use crate::hetgraph::{AdjTensor, EgoGraph, NodeKind, Relation};
use crate::moe::MoeEncoder;
use crate::numerics::DenseMatrix;
use crate::{Error, Result};

const MAX_NODES: usize = 3;
const MAX_CONDITIONS: usize = 4;

/// One discrete condition value and the clean graphs it generates.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyCondition {
    pub prob: f64,
    pub features: NodeFeatures,
    /// Clean adjacencies with their probabilities under this condition.
    pub support: Vec<(AdjTensor, f64)>,
}

/// A joint over (condition, `A^(0)`) small enough to enumerate every `A^(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyInstance {
    pub kinds: Vec<NodeKind>,
    pub conditions: Vec<TinyCondition>,
    pub schedule: NoiseSchedule,
    pub t: usize,
    pub marginal: [f64; 4],
}

impl TinyInstance {
    pub fn pair_count(&self) -> usize {
        self.kinds.len() * (self.kinds.len() - 1)
    }

    fn validate(&self) -> Result<()> {
        let n = self.kinds.len();
        if !(2..=MAX_NODES).contains(&n) {
            return Err(Error::contract(format!("instance with {n} nodes cannot be enumerated")));
        }
        if self.conditions.is_empty() || self.conditions.len() > MAX_CONDITIONS {
            return Err(Error::contract("instance needs between 1 and 4 condition values"));
        }
        let total: f64 = self.conditions.iter().map(|c| c.prob).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::contract("condition probabilities must sum to 1"));
        }
        for c in &self.conditions {
            let s: f64 = c.support.iter().map(|(_, p)| p).sum();
            if (s - 1.0).abs() > 1e-12 || c.support.iter().any(|(a, _)| a.node_count() != n) {
                return Err(Error::contract("each condition needs a normalised support over the instance nodes"));
            }
        }
        Ok(())
    }

    /// Every `A^(t)` over the instance pairs.
    fn noisy_space(&self) -> impl Iterator<Item = AdjTensor> + '_ {
        let n = self.kinds.len();
        let pairs = self.pair_count();
        (0..4usize.pow(pairs as u32)).map(move |code| {
            let rels = (0..pairs)
                .map(|k| Relation::from_index((code >> (2 * k)) & 3).expect("four relations"))
                .collect();
            AdjTensor::from_relations(n, rels).expect("pair count matches")
        })
    }

    pub fn ego(&self, a0: &AdjTensor) -> EgoGraph {
        EgoGraph::from_parts(self.kinds.clone(), a0.clone()).expect("instance kinds match adjacency")
    }
}

fn likelihood(q: &TransitionMatrix, a0: &AdjTensor, at: &AdjTensor) -> f64 {
    a0.relations().iter().zip(at.relations()).map(|(r0, rt)| q.get(*r0, *rt)).product()
}

/// A model of `p(A^(0) | A^(t), condition)` over whole adjacencies.
pub trait JointPredictor {
    /// `log p(A^(0) = a | A^(t) = at, condition)` for every `a` in `candidates`.
    fn log_probs(&self, at: &AdjTensor, condition: usize, candidates: &[AdjTensor]) -> Result<Vec<f64>>;
}

/// The exact posterior of an instance.
pub struct ExactPosterior<'a>(pub &'a TinyInstance);

impl JointPredictor for ExactPosterior<'_> {
    fn log_probs(&self, at: &AdjTensor, condition: usize, candidates: &[AdjTensor]) -> Result<Vec<f64>> {
        let inst = self.0;
        let q = cumulative_transition(&inst.schedule, inst.t, &inst.marginal)?;
        let c = &inst.conditions[condition];
        let evidence: f64 = c.support.iter().map(|(a, p)| p * likelihood(&q, a, at)).sum();
        Ok(candidates
            .iter()
            .map(|cand| {
                let prior: f64 = c.support.iter().filter(|(a, _)| a == cand).map(|(_, p)| p).sum();
                (prior * likelihood(&q, cand, at) / evidence).ln()
            })
            .collect())
    }
}

/// The encoder and denoiser read as a factorised joint over pairs.
pub struct ModelPredictor<'a> {
    pub moe: &'a MoeEncoder,
    pub denoiser: &'a Denoiser,
    pub instance: &'a TinyInstance,
}

impl JointPredictor for ModelPredictor<'_> {
    fn log_probs(&self, at: &AdjTensor, condition: usize, candidates: &[AdjTensor]) -> Result<Vec<f64>> {
        let inst = self.instance;
        let f = &inst.conditions[condition].features;
        let features = NodeFeatures { h: self.moe.encode(&f.h)?, z: f.z.clone() };
        let ego = inst.ego(at);
        let logits = self.denoiser.predict_clean(&ego, at, Some(&features), inst.t)?;
        let log_p = log_softmax_rows(&logits.logits);
        Ok(candidates
            .iter()
            .map(|a| a.relations().iter().enumerate().map(|(k, r)| log_p.get(k, r.index())).sum())
            .collect())
    }
}

fn log_softmax_rows(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|x| *x -= lse);
    }
    out
}

/// Expected reconstruction loss and exact conditional entropy, both per ordered pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyReport {
    pub loss: f64,
    pub entropy: f64,
}

/// Evaluates `E[−log p̂(A^(0) | A^(t), c)]` and `H(A^(0) | A^(t), c)` by
/// enumerating every condition, clean support graph and noisy adjacency.
///
/// For a per-pair factorised predictor the first value equals the mean
/// pairwise cross-entropy at timestep `t`.
pub fn entropy_bound_check(instance: &TinyInstance, predictor: &dyn JointPredictor) -> Result<EntropyReport> {
    instance.validate()?;
    let q = cumulative_transition(&instance.schedule, instance.t, &instance.marginal)?;
    let mut loss = 0.0;
    let mut entropy = 0.0;
    for (ci, c) in instance.conditions.iter().enumerate() {
        let candidates: Vec<AdjTensor> = c.support.iter().map(|(a, _)| a.clone()).collect();
        for at in instance.noisy_space() {
            let joint: Vec<f64> = c.support.iter().map(|(a, p)| c.prob * p * likelihood(&q, a, &at)).collect();
            let evidence: f64 = joint.iter().sum();
            if evidence == 0.0 {
                continue;
            }
            let model = predictor.log_probs(&at, ci, &candidates)?;
            for (j, lp) in joint.iter().zip(model) {
                if *j > 0.0 {
                    entropy -= j * (j / evidence).ln();
                    loss -= j * lp;
                }
            }
        }
    }
    let pairs = instance.pair_count() as f64;
    Ok(EntropyReport { loss: loss / pairs, entropy: entropy / pairs })
}

/// A random enumerable instance: 2 or 3 nodes, up to four discrete condition
/// values and a sparse clean support per value.
pub fn random_instance(
    rng: &mut impl Rng,
    input_dim: usize,
    go_dim: usize,
    schedule: NoiseSchedule,
    t: usize,
) -> TinyInstance {
    let n = rng.random_range(2..=MAX_NODES);
    let mut kinds = vec![NodeKind::Protein];
    for _ in 1..n {
        kinds.push(if rng.random_bool(0.5) { NodeKind::Protein } else { NodeKind::Go });
    }
    let np = kinds.iter().filter(|&&k| k == NodeKind::Protein).count();
    let pairs = n * (n - 1);
    let levels = [-1.0, -0.3, 0.4, 1.2];
    let conditions = rng.random_range(1..=MAX_CONDITIONS);
    let weights = random_simplex(rng, conditions);
    let z = DenseMatrix::from_fn(n - np, go_dim, |_, _| levels[rng.random_range(0..4)]);
    let conditions = weights
        .into_iter()
        .map(|prob| {
            let h = DenseMatrix::from_fn(np, input_dim, |_, _| levels[rng.random_range(0..4)]);
            let size = rng.random_range(1..=4);
            let probs = random_simplex(rng, size);
            let mut support: Vec<(AdjTensor, f64)> = Vec::new();
            for p in probs {
                let rels = (0..pairs)
                    .map(|_| {
                        if rng.random_bool(0.6) {
                            Relation::NoEdge
                        } else {
                            Relation::from_index(rng.random_range(0..3)).expect("explicit relation")
                        }
                    })
                    .collect();
                let a = AdjTensor::from_relations(n, rels).expect("pair count matches");
                match support.iter_mut().find(|(b, _)| *b == a) {
                    Some(entry) => entry.1 += p,
                    None => support.push((a, p)),
                }
            }
            TinyCondition { prob, features: NodeFeatures { h, z: z.clone() }, support }
        })
        .collect();
    let marginal = {
        let mut m = random_simplex(rng, 4);
        m.iter_mut().for_each(|x| *x = 0.5 * *x + 0.125);
        [m[0], m[1], m[2], m[3]]
    };
    TinyInstance { kinds, conditions, schedule, t, marginal }
}

fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    let mut out: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = out[..k - 1].iter().sum();
    out[k - 1] = 1.0 - head;
    out
}

/// Fits the models to samples of the instance at its timestep.
pub fn train_on_instance(
    moe: MoeEncoder,
    den: Denoiser,
    instance: &TinyInstance,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<(MoeEncoder, Denoiser)> {
    let config = TrainConfig {
        lr,
        drop_prob: 0.0,
        diffusion_steps: instance.schedule.steps(),
        batch_size: 8,
        seed,
        ..TrainConfig::default()
    };
    let mut trainer = Pretrainer::new(moe, den, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for _ in 0..steps {
        let mut batch = Vec::new();
        let mut noisy = Vec::new();
        for _ in 0..8 {
            let c = pick(&mut rng, instance.conditions.iter().map(|c| c.prob));
            let cond = &instance.conditions[c];
            let s = pick(&mut rng, cond.support.iter().map(|(_, p)| *p));
            let a0 = cond.support[s].0.clone();
            noisy.push(forward_sample(&a0, &instance.schedule, instance.t, &instance.marginal, &mut rng)?.adj);
            batch.push(Example { ego: instance.ego(&a0), h: cond.features.h.clone(), z: cond.features.z.clone() });
        }
        trainer.update(&batch, &noisy, instance.t, true)?;
    }
    Ok(trainer.into_models())
}

fn pick(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let p: Vec<f64> = probs.collect();
    crate::diffusion::sample_categorical(&p, rng)
}
