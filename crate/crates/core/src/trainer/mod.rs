//! Conditional graph-generation pre-training of the condition encoder and
//! denoiser, plus an exact entropy-bound verifier on enumerable instances.

mod entropy;

pub use entropy::{
    entropy_bound_check, random_instance, train_on_instance, EntropyReport, ExactPosterior, JointPredictor,
    ModelPredictor, TinyCondition, TinyInstance,
};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::denoiser::{Condition, Denoiser, EdgeLogits};
use crate::diffusion::{cosine_schedule, forward_sample, NoiseSchedule};
use crate::hetgraph::{sample_ego, AdjTensor, EgoGraph, FanoutPlan, HetGraph, NodeKind};
use crate::moe::MoeEncoder;
use crate::numerics::{AdamW, AdamWConfig, DenseMatrix, Tape};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub drop_prob: f64,
    pub diffusion_steps: usize,
    pub shift: f64,
    pub fanouts: FanoutPlan,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 8,
            lr: 1e-3,
            weight_decay: 1e-12,
            drop_prob: 0.1,
            diffusion_steps: 50,
            shift: crate::diffusion::DEFAULT_SHIFT,
            fanouts: FanoutPlan::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.diffusion_steps == 0 {
            return Err(Error::Config("batch size and diffusion steps must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!("drop probability {} outside [0, 1)", self.drop_prob)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub t: usize,
    pub loss: f64,
    pub conditioned: bool,
}

/// Writes `step,t,loss,conditioned` rows.
pub fn write_log(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut out = String::from("step,t,loss,conditioned\n");
    for r in records {
        writeln!(out, "{},{},{:.17e},{}", r.step, r.t, r.loss, u8::from(r.conditioned)).expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mean cross-entropy over ordered pairs between `A^(0)` and `softmax(P̂)`.
pub fn reconstruction_loss(p_hat: &EdgeLogits, a0: &AdjTensor) -> Result<f64> {
    if p_hat.logits.shape() != (a0.pair_count(), 4) {
        return Err(Error::contract(format!(
            "logits of shape {:?} do not cover {} pairs",
            p_hat.logits.shape(),
            a0.pair_count()
        )));
    }
    let mut tape = Tape::new();
    let x = tape.constant(p_hat.logits.clone());
    let targets: Vec<usize> = a0.relations().iter().map(|r| r.index()).collect();
    let loss = tape.softmax_cross_entropy(x, &targets);
    tape.check()?;
    Ok(tape.scalar(loss))
}

/// An ego-graph with its condition rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub ego: EgoGraph,
    /// Intrinsic features of the protein nodes, in local order.
    pub h: DenseMatrix,
    /// GO features of the term nodes, in local order.
    pub z: DenseMatrix,
}

/// Graph plus per-node feature stores used to build examples.
#[derive(Clone, Copy, Debug)]
pub struct PretrainData<'a> {
    pub graph: &'a HetGraph,
    /// Rows indexed by protein position (`HetGraph::kind_index`).
    pub h: &'a DenseMatrix,
    /// Rows indexed by GO term position.
    pub z: &'a DenseMatrix,
    pub marginal: [f64; 4],
}

impl PretrainData<'_> {
    pub fn example(&self, ego: EgoGraph) -> Example {
        let rows = |kind: NodeKind| -> Vec<usize> {
            ego.nodes
                .iter()
                .zip(&ego.kinds)
                .filter(|(_, k)| **k == kind)
                .map(|(&g, _)| self.graph.kind_index(g))
                .collect()
        };
        let h = self.h.select_rows(&rows(NodeKind::Protein));
        let z = self.z.select_rows(&rows(NodeKind::Go));
        Example { ego, h, z }
    }
}

/// Loss and gradients of one batch, observed at timestep `t`.
pub struct BatchGradients {
    pub loss: f64,
    pub moe: Vec<DenseMatrix>,
    pub denoiser: Vec<DenseMatrix>,
    /// Examples that contributed (at least one ordered pair).
    pub used: usize,
}

/// Mean reconstruction loss over the examples with at least one pair, and
/// its gradients with respect to both models.
pub fn batch_gradients(
    moe: &MoeEncoder,
    den: &Denoiser,
    batch: &[Example],
    noisy: &[AdjTensor],
    t: usize,
    conditioned: bool,
) -> Result<BatchGradients> {
    if batch.len() != noisy.len() {
        return Err(Error::contract("one noisy adjacency per example is required"));
    }
    let mut tape = Tape::new();
    let mv = moe.params().bind(&mut tape);
    let dv = den.params().bind(&mut tape);
    let mut total = None;
    let mut used = 0;
    for (ex, at) in batch.iter().zip(noisy) {
        if ex.ego.adj.pair_count() == 0 {
            continue;
        }
        den.check_features(&ex.ego, &crate::denoiser::NodeFeatures { h: ex.h.clone(), z: ex.z.clone() })?;
        let cond = if conditioned {
            let h = tape.constant(ex.h.clone());
            let h_tilde = moe.forward(&mut tape, &mv, h);
            Condition::Present { h_tilde, z: tape.constant(ex.z.clone()) }
        } else {
            Condition::Dropped
        };
        let logits = den.forward(&mut tape, &dv, &ex.ego.kinds, at, t, cond);
        let targets: Vec<usize> = ex.ego.adj.relations().iter().map(|r| r.index()).collect();
        let loss = tape.softmax_cross_entropy(logits, &targets);
        used += 1;
        total = Some(match total {
            None => loss,
            Some(acc) => tape.add(acc, loss),
        });
    }
    let Some(total) = total else {
        return Ok(BatchGradients {
            loss: 0.0,
            moe: moe.params().values().iter().map(|m| DenseMatrix::zeros(m.rows(), m.cols())).collect(),
            denoiser: den.params().values().iter().map(|m| DenseMatrix::zeros(m.rows(), m.cols())).collect(),
            used: 0,
        });
    };
    let mean = tape.scale(total, 1.0 / used as f64);
    let mut grads = tape.backward(mean)?;
    Ok(BatchGradients { loss: tape.scalar(mean), moe: grads.collect(&mv), denoiser: grads.collect(&dv), used })
}

/// Joint optimiser state for the condition encoder and the denoiser.
pub struct Pretrainer {
    moe: MoeEncoder,
    den: Denoiser,
    opt_moe: AdamW,
    opt_den: AdamW,
    schedule: NoiseSchedule,
    config: TrainConfig,
    rng: ChaCha8Rng,
    step: usize,
}

impl Pretrainer {
    pub fn new(moe: MoeEncoder, den: Denoiser, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let opt = AdamWConfig { lr: config.lr, weight_decay: config.weight_decay, ..AdamWConfig::default() };
        let schedule = cosine_schedule(config.diffusion_steps, config.shift)?;
        Ok(Self {
            opt_moe: AdamW::new(opt, moe.params().values()),
            opt_den: AdamW::new(opt, den.params().values()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            moe,
            den,
            schedule,
            config,
            step: 0,
        })
    }

    pub fn moe(&self) -> &MoeEncoder {
        &self.moe
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.den
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn into_models(self) -> (MoeEncoder, Denoiser) {
        (self.moe, self.den)
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Samples a batch of ego-graphs around uniformly drawn proteins and takes
    /// one optimisation step.
    pub fn step(&mut self, data: &PretrainData<'_>) -> Result<LossRecord> {
        let proteins = data.graph.proteins();
        if proteins.is_empty() {
            return Err(Error::data("graph has no proteins to sample"));
        }
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let center = proteins[self.rng.random_range(0..proteins.len())];
            let seed = self.rng.random::<u64>();
            let ego = sample_ego(data.graph, center, &self.config.fanouts, seed)?;
            batch.push(data.example(ego));
        }
        self.step_on(&batch, &data.marginal)
    }

    /// One optimisation step on a fixed batch: draws `t` and the condition
    /// drop, corrupts every example and updates both models.
    pub fn step_on(&mut self, batch: &[Example], marginal: &[f64; 4]) -> Result<LossRecord> {
        let t = self.rng.random_range(1..=self.schedule.steps());
        let conditioned = self.rng.random::<f64>() >= self.config.drop_prob;
        let mut noisy = Vec::with_capacity(batch.len());
        for ex in batch {
            noisy.push(forward_sample(&ex.ego.adj, &self.schedule, t, marginal, &mut self.rng)?.adj);
        }
        self.update(batch, &noisy, t, conditioned)
    }

    /// Applies one AdamW update from explicitly corrupted examples.
    pub fn update(&mut self, batch: &[Example], noisy: &[AdjTensor], t: usize, conditioned: bool) -> Result<LossRecord> {
        let step = self.step + 1;
        let g = batch_gradients(&self.moe, &self.den, batch, noisy, t, conditioned).map_err(|e| match e {
            Error::Numeric { op, detail } => Error::numeric(op, format!("pre-training step {step}: {detail}")),
            other => other,
        })?;
        if g.used > 0 {
            self.opt_moe.update(self.moe.params_mut().values_mut(), &g.moe)?;
            self.opt_den.update(self.den.params_mut().values_mut(), &g.denoiser)?;
        }
        self.step = step;
        Ok(LossRecord { step, t, loss: g.loss, conditioned })
    }

    pub fn run(&mut self, data: &PretrainData<'_>) -> Result<Vec<LossRecord>> {
        (0..self.config.steps).map(|_| self.step(data)).collect()
    }
}
