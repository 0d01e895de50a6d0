//! End-to-end driver: data → align → pretrain → finetune → evaluate.
//!
//! Every stage writes into `<out>/<stage>-<digest>`, where the digest covers
//! the configuration keys the stage depends on plus the digest of the stage
//! before it. A stage directory holding a `.complete` marker is reused as is,
//! so reruns resume and ablation variants share their common prefix.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::bench::{bench_encoder, BenchReport};
use crate::config::RunConfig;
use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::cosine_schedule;
use crate::hetgraph::{ego_relation_marginals, sample_ego, strip_test_annotations, HetGraph, Split};
use crate::moe::{MoeConfig, MoeEncoder};
use crate::numerics::DenseMatrix;
use crate::otalign::{barycentric_project, build_cost, concat_intrinsic, sinkhorn_solve, SinkhornConfig};
use crate::predictor::{aupr, finetune, fmax, predict, write_predictions, Classifier, FinetuneConfig};
use crate::synthdata::{gen_dataset, load_dataset, write_dataset, LoadedData};
use crate::trainer::{write_log, PretrainData, Pretrainer, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Data,
    Align,
    Pretrain,
    Finetune,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Align => "align",
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
            Stage::Evaluate => "evaluate",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Stage::Data => &["seed", "data", "synth"],
            Stage::Align => &["ot"],
            Stage::Pretrain => &["diffusion", "model", "pretrain"],
            Stage::Finetune => &["finetune"],
            Stage::Evaluate => &[],
        }
    }
}

const ALL_STAGES: [Stage; 5] = [Stage::Data, Stage::Align, Stage::Pretrain, Stage::Finetune, Stage::Evaluate];
const COMPLETE: &str = ".complete";

/// Headline metrics of one evaluated run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub fmax: f64,
    pub threshold: f64,
    pub aupr: f64,
    pub seed: u64,
}

impl Metrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,seed\n");
        for (k, v) in [("fmax", self.fmax), ("fmax_threshold", self.threshold), ("aupr", self.aupr)] {
            writeln!(out, "{k},{v},{}", self.seed).expect("string write");
        }
        out
    }
}

/// Stage directories produced by a run and, when evaluated, its metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub dirs: Vec<(Stage, PathBuf)>,
    pub metrics: Option<Metrics>,
}

impl RunSummary {
    pub fn dir(&self, stage: Stage) -> Option<&Path> {
        self.dirs.iter().find(|(s, _)| *s == stage).map(|(_, d)| d.as_path())
    }
}

/// Process exit status for an error: 2 configuration, 3 data, 4 numeric.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io { .. } => 3,
        Error::Numeric { .. } | Error::Convergence { .. } => 4,
        Error::Contract(_) => 1,
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn derived_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn data_digest(config: &RunConfig) -> Result<String> {
    let base = config.digest("", Stage::Data.keys());
    if config.get("data.source") != "files" {
        return Ok(base);
    }
    let dir = PathBuf::from(config.get("data.dir"));
    let mut h = Sha256::new();
    h.update(base.as_bytes());
    for name in ["nodes.tsv", "edges.tsv", "splits.tsv", "labels.tsv", "e_seq.mat", "e_struc.mat", "z.mat"] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(Sha256::digest(&bytes));
    }
    Ok(hex::encode(h.finalize()))
}

/// Runs (or reuses) every stage up to and including `last`.
pub fn run_until(config: &RunConfig, out: &Path, last: Stage) -> Result<RunSummary> {
    validate(config)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("config.resolved"), &config.snapshot())?;
    let mut digest = String::new();
    let mut dirs: Vec<(Stage, PathBuf)> = Vec::new();
    let mut metrics = None;
    for stage in ALL_STAGES.into_iter().filter(|s| *s <= last) {
        digest = match stage {
            Stage::Data => data_digest(config)?,
            _ => config.digest(&digest, stage.keys()),
        };
        let dir = out.join(format!("{}-{}", stage.name(), &digest[..16]));
        let prev = |s: Stage| dirs.iter().find(|(x, _)| *x == s).map(|(_, d)| d.clone()).expect("earlier stage");
        if dir.join(COMPLETE).exists() {
            log::info!("{} stage reused from {}", stage.name(), dir.display());
        } else {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            log::info!("{} stage running in {}", stage.name(), dir.display());
            match stage {
                Stage::Data => stage_data(config, &dir)?,
                Stage::Align => stage_align(config, &prev(Stage::Data), &dir)?,
                Stage::Pretrain => stage_pretrain(config, &prev(Stage::Data), &prev(Stage::Align), &dir)?,
                Stage::Finetune => {
                    stage_finetune(config, &prev(Stage::Data), &prev(Stage::Align), &prev(Stage::Pretrain), &dir)?
                }
                Stage::Evaluate => stage_evaluate(
                    config,
                    &prev(Stage::Data),
                    &prev(Stage::Align),
                    &prev(Stage::Finetune),
                    &dir,
                )?,
            }
            write(&dir.join("config.resolved"), &config.snapshot())?;
            write(&dir.join(COMPLETE), "")?;
        }
        if stage == Stage::Evaluate {
            let csv = fs::read_to_string(dir.join("metrics.csv")).map_err(|e| Error::io(dir.join("metrics.csv"), e))?;
            write(&out.join("metrics.csv"), &csv)?;
            metrics = Some(parse_metrics(&csv)?);
        }
        dirs.push((stage, dir));
    }
    Ok(RunSummary { dirs, metrics })
}

fn parse_metrics(csv: &str) -> Result<Metrics> {
    let mut m = Metrics { fmax: f64::NAN, threshold: f64::NAN, aupr: f64::NAN, seed: 0 };
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::data(format!("malformed metrics line `{line}`"));
        let v: f64 = f.get(1).and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        m.seed = f.get(2).and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        match f[0] {
            "fmax" => m.fmax = v,
            "fmax_threshold" => m.threshold = v,
            "aupr" => m.aupr = v,
            _ => return Err(bad()),
        }
    }
    Ok(m)
}

/// Checks every typed key up front so bad values fail before any work.
pub fn validate(config: &RunConfig) -> Result<()> {
    config.seed()?;
    match config.get("data.source") {
        "synthetic" => {
            config.synth()?;
        }
        "files" => {
            if config.get("data.dir").is_empty() {
                return Err(Error::Config("data.source=files needs data.dir".into()));
            }
        }
        other => return Err(Error::Config(format!("unknown data.source `{other}`"))),
    }
    config.bool("ot.enabled")?;
    config.bool("ot.normalize")?;
    sinkhorn_config(config)?;
    cosine_schedule(config.usize("diffusion.steps")?, config.f64("diffusion.shift")?)
        .map_err(|e| Error::Config(e.to_string()))?;
    config.usize("diffusion.marginal_egos")?;
    for key in ["model.experts", "model.hidden", "model.classifier_hidden"] {
        if config.usize(key)? == 0 {
            return Err(Error::Config(format!("`{key}` must be positive")));
        }
    }
    let dc = denoiser_config(config, 1, 1)?;
    if dc.d_model % dc.heads != 0 || dc.d_time % 2 != 0 || dc.layers == 0 || dc.d_edge == 0 {
        return Err(Error::Config("model dims: heads must divide d_model, d_time even, layers ≥ 1".into()));
    }
    config.bool("pretrain.enabled")?;
    train_config(config)?.validate()?;
    config.usize("pretrain.checkpoint_every")?;
    let ft = finetune_config(config)?;
    if ft.epochs == 0 || ft.batch_size == 0 || !(ft.peak_lr > 0.0) || !(0.0 < ft.warmup && ft.warmup < 1.0) {
        return Err(Error::Config("finetune needs epochs, batch size, a positive rate and warmup in (0, 1)".into()));
    }
    config.usize("bench.repeats")?;
    if config.usize("bench.batch")? == 0 {
        return Err(Error::Config("bench.batch must be positive".into()));
    }
    Ok(())
}

fn sinkhorn_config(config: &RunConfig) -> Result<SinkhornConfig> {
    let c = SinkhornConfig {
        epsilon: config.f64("ot.epsilon")?,
        cost_tol: config.f64("ot.cost_tol")?,
        marginal_tol: config.f64("ot.marginal_tol")?,
        max_iter: config.usize("ot.max_iter")?,
    };
    if !(c.epsilon > 0.0 && c.cost_tol > 0.0 && c.marginal_tol > 0.0) || c.max_iter == 0 {
        return Err(Error::Config("ot.epsilon, tolerances and max_iter must be positive".into()));
    }
    Ok(c)
}

fn denoiser_config(config: &RunConfig, d_cond: usize, d_go: usize) -> Result<DenoiserConfig> {
    Ok(DenoiserConfig {
        layers: config.usize("model.layers")?,
        d_model: config.usize("model.d_model")?,
        d_edge: config.usize("model.d_edge")?,
        heads: config.usize("model.heads")?,
        d_cond,
        d_go,
        d_time: config.usize("model.d_time")?,
    })
}

fn train_config(config: &RunConfig) -> Result<TrainConfig> {
    Ok(TrainConfig {
        steps: config.usize("pretrain.steps")?,
        batch_size: config.usize("pretrain.batch_size")?,
        lr: config.f64("pretrain.lr")?,
        weight_decay: config.f64("pretrain.weight_decay")?,
        drop_prob: config.f64("pretrain.drop_prob")?,
        diffusion_steps: config.usize("diffusion.steps")?,
        shift: config.f64("diffusion.shift")?,
        fanouts: config.fanouts()?,
        seed: derived_seed(config.seed()?, 2),
    })
}

fn finetune_config(config: &RunConfig) -> Result<FinetuneConfig> {
    Ok(FinetuneConfig {
        epochs: config.usize("finetune.epochs")?,
        batch_size: config.usize("finetune.batch_size")?,
        peak_lr: config.f64("finetune.peak_lr")?,
        warmup: config.f64("finetune.warmup")?,
        weight_decay: config.f64("finetune.weight_decay")?,
        seed: derived_seed(config.seed()?, 5),
    })
}

fn stage_data(config: &RunConfig, dir: &Path) -> Result<()> {
    if config.get("data.source") == "files" {
        let src = PathBuf::from(config.get("data.dir"));
        load_dataset(&src)?;
        for name in ["nodes.tsv", "edges.tsv", "splits.tsv", "labels.tsv", "e_seq.mat", "e_struc.mat", "z.mat"] {
            fs::copy(src.join(name), dir.join(name)).map_err(|e| Error::io(src.join(name), e))?;
        }
        return Ok(());
    }
    let ds = gen_dataset(&config.synth()?)?;
    write_dataset(dir, &ds)
}

/// Kind-index rows of the proteins in `split`.
fn split_rows(graph: &HetGraph, split: Split) -> Vec<usize> {
    graph.proteins_in(split).into_iter().map(|p| graph.kind_index(p)).collect()
}

fn stage_align(config: &RunConfig, data_dir: &Path, dir: &Path) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let features = if config.bool("ot.enabled")? {
        let train = split_rows(&data.graph, Split::Train);
        if train.is_empty() {
            return Err(Error::data("no training proteins to align on"));
        }
        let cost = build_cost(&data.e_struc.select_rows(&train), &data.e_seq.select_rows(&train))?;
        let plan = sinkhorn_solve(&cost, &sinkhorn_config(config)?)?;
        log::info!(
            "transport plan converged after {} iterations (marginal error {:e})",
            plan.iterations,
            plan.marginal_error
        );
        plan.save(dir)?;
        let aligned = barycentric_project(&data.e_struc, &plan, config.bool("ot.normalize")?)?;
        concat_intrinsic(&data.e_seq, &aligned)?.into_matrix()
    } else {
        data.e_seq.hstack(&data.e_struc)?
    };
    features.save(dir.join("features.mat"))
}

fn models(config: &RunConfig, data: &LoadedData, features: &DenseMatrix) -> Result<(MoeEncoder, Denoiser)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed()?, 1));
    let hidden = config.usize("model.hidden")?;
    let moe = MoeEncoder::new(
        MoeConfig { input_dim: features.cols(), hidden_dim: hidden, experts: config.usize("model.experts")? },
        &mut rng,
    )?;
    let den = Denoiser::new(denoiser_config(config, hidden, data.z.cols())?, &mut rng)?;
    Ok((moe, den))
}

fn stage_pretrain(config: &RunConfig, data_dir: &Path, align_dir: &Path, dir: &Path) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let features = DenseMatrix::load(align_dir.join("features.mat"))?;
    let (moe, den) = models(config, &data, &features)?;
    if !config.bool("pretrain.enabled")? {
        moe.params().save(dir.join("moe"))?;
        den.params().save(dir.join("denoiser"))?;
        return Ok(());
    }
    let graph = strip_test_annotations(&data.graph);
    let tc = train_config(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed()?, 3));
    let proteins = graph.proteins();
    let egos = (0..config.usize("diffusion.marginal_egos")?.max(1))
        .map(|_| {
            let c = proteins[rng.random_range(0..proteins.len())];
            sample_ego(&graph, c, &tc.fanouts, rng.random())
        })
        .collect::<Result<Vec<_>>>()?;
    let marginal = ego_relation_marginals(&egos)?;
    write(
        &dir.join("marginal.csv"),
        &format!("ppi,go,anno,noedge\n{},{},{},{}\n", marginal[0], marginal[1], marginal[2], marginal[3]),
    )?;
    let pd = PretrainData { graph: &graph, h: &features, z: &data.z, marginal };
    let every = config.usize("pretrain.checkpoint_every")?;
    let steps = tc.steps;
    let mut trainer = Pretrainer::new(moe, den, tc)?;
    let mut log = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rec = trainer.step(&pd)?;
        if every > 0 && rec.step % every == 0 {
            let ck = dir.join(format!("checkpoint-{}", rec.step));
            trainer.moe().params().save(ck.join("moe"))?;
            trainer.denoiser().params().save(ck.join("denoiser"))?;
        }
        log.push(rec);
    }
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        log::info!("pre-training loss {:.4} at step 1, {:.4} at step {}", first.loss, last.loss, last.step);
    }
    write_log(&dir.join("train_log.csv"), &log)?;
    let (moe, den) = trainer.into_models();
    moe.params().save(dir.join("moe"))?;
    den.params().save(dir.join("denoiser"))
}

fn load_encoder(config: &RunConfig, data: &LoadedData, features: &DenseMatrix, dir: &Path) -> Result<MoeEncoder> {
    let (mut moe, _) = models(config, data, features)?;
    moe.params_mut().load_into(dir.join("moe"))?;
    Ok(moe)
}

fn new_classifier(config: &RunConfig, data: &LoadedData) -> Result<Classifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(derived_seed(config.seed()?, 4));
    Classifier::new(
        config.usize("model.hidden")?,
        config.usize("model.classifier_hidden")?,
        data.graph.terms().len(),
        &mut rng,
    )
}

fn stage_finetune(config: &RunConfig, data_dir: &Path, align_dir: &Path, pre_dir: &Path, dir: &Path) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let features = DenseMatrix::load(align_dir.join("features.mat"))?;
    let mut moe = load_encoder(config, &data, &features, pre_dir)?;
    let mut clf = new_classifier(config, &data)?;
    let train = split_rows(&data.graph, Split::Train);
    if train.is_empty() {
        return Err(Error::data("no training proteins to fine-tune on"));
    }
    let history = finetune(
        &mut moe,
        &mut clf,
        &features.select_rows(&train),
        &data.labels.matrix().select_rows(&train),
        &finetune_config(config)?,
    )?;
    let mut log = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        writeln!(log, "{},{l:.17e}", e + 1).expect("string write");
    }
    write(&dir.join("finetune_log.csv"), &log)?;
    moe.params().save(dir.join("moe"))?;
    clf.params().save(dir.join("classifier"))
}

fn stage_evaluate(config: &RunConfig, data_dir: &Path, align_dir: &Path, ft_dir: &Path, dir: &Path) -> Result<()> {
    let data = load_dataset(data_dir)?;
    let features = DenseMatrix::load(align_dir.join("features.mat"))?;
    let moe = load_encoder(config, &data, &features, ft_dir)?;
    let mut clf = new_classifier(config, &data)?;
    clf.params_mut().load_into(ft_dir.join("classifier"))?;
    let test = split_rows(&data.graph, Split::Test);
    if test.is_empty() {
        return Err(Error::data("no test proteins to evaluate"));
    }
    let dag = data.graph.go_dag();
    let preds = predict(&moe, &clf, &features.select_rows(&test), &dag)?;
    let labels = data.labels.matrix().select_rows(&test);
    let (f, threshold) = fmax(&preds, &labels)?;
    let a = aupr(&preds, &labels)?;
    write_predictions(&dir.join("predictions.tsv"), &data.graph.proteins_in(Split::Test), data.graph.terms(), &preds)?;
    let metrics = Metrics { fmax: f, threshold, aupr: a, seed: config.seed()? };
    log::info!("evaluation: Fmax {f:.4} at threshold {threshold:.2}, AUPR {a:.4}");
    write(&dir.join("metrics.csv"), &metrics.to_csv())
}

/// `t,alpha,alpha_bar` rows of the shifted cosine schedule.
pub fn inspect_schedule(steps: usize, shift: f64) -> Result<String> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    Ok(cosine_schedule(steps, shift).map_err(|e| Error::Config(e.to_string()))?.to_csv())
}

/// Benchmarks the pre-trained encoder on a fixed batch of test proteins.
pub fn run_bench(config: &RunConfig, out: &Path) -> Result<BenchReport> {
    let repeats = config.usize("bench.repeats")?;
    if repeats < crate::bench::MIN_REPEATS {
        return Err(Error::Config(format!("bench.repeats must be at least {}", crate::bench::MIN_REPEATS)));
    }
    let summary = run_until(config, out, Stage::Pretrain)?;
    let data = load_dataset(summary.dir(Stage::Data).expect("data stage"))?;
    let features = DenseMatrix::load(summary.dir(Stage::Align).expect("align stage").join("features.mat"))?;
    let moe = load_encoder(config, &data, &features, summary.dir(Stage::Pretrain).expect("pretrain stage"))?;
    let rows: Vec<usize> = (0..config.usize("bench.batch")?.min(features.rows())).collect();
    let report = bench_encoder(&moe, &features.select_rows(&rows), repeats)?;
    write(&out.join("bench.csv"), &report.to_csv())?;
    Ok(report)
}
