mod common;

use std::io::Write;
use std::time::Instant;

use dampe::config::RunConfig;
use dampe::denoiser::{Condition, Denoiser, DenoiserConfig, NodeFeatures};
use dampe::diffusion::{cosine_schedule, cumulative_transition, forward_sample, total_variation, transition_matrix, TransitionMatrix};
use dampe::hetgraph::{relation_marginals, sample_ego, FanoutPlan, Relation, Split};
use dampe::moe::{MoeConfig, MoeEncoder};
use dampe::numerics::{finite_diff_check, DenseMatrix};
use dampe::otalign::{build_cost, marginal_errors, sinkhorn_solve, CostMatrix, SinkhornConfig};
use dampe::pipeline::{run_until, Stage};
use dampe::predictor::{aupr, fmax, true_path_propagate, Classifier};
use dampe::synthdata::{gen_dataset, planted_map_check, SynthConfig};
use dampe::trainer::{entropy_bound_check, random_instance, train_on_instance, ExactPosterior, ModelPredictor, PretrainData, Pretrainer, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    writeln!(std::io::stdout().lock(), "criterion {id:>2} {verdict} {name}: {detail}").unwrap();
}

#[test]
fn criterion_01_sinkhorn_matches_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_marginal = 0.0f64;
    let mut worst_entry = 0.0f64;
    for _ in 0..50 {
        let (n, m) = (rng.random_range(2..=16), rng.random_range(2..=16));
        let cost = DenseMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
        let epsilon = [0.01, 0.05, 0.1, 1.0][rng.random_range(0..4)];
        let plan = sinkhorn_solve(&CostMatrix::from_matrix(cost.clone()).unwrap(), &SinkhornConfig { epsilon, ..SinkhornConfig::default() }).unwrap();
        let (r, c) = marginal_errors(plan.values());
        worst_marginal = worst_marginal.max(r).max(c);
        let oracle = common::newton_entropic_ot(&cost, epsilon);
        worst_entry = worst_entry.max(plan.values().max_abs_diff(&oracle));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_marginal < 1e-6 && worst_entry < 1e-5 && secs < 10.0;
    report(1, "OT correctness", pass, format!("max marginal L1 {worst_marginal:.2e}, max entry gap {worst_entry:.2e}, {secs:.2}s"));
    assert!(pass);
}

#[test]
fn criterion_02_planted_map_recovery() {
    let mut scores = Vec::new();
    for seed in 0..5 {
        let config = SynthConfig { noise_seq: 0.01, noise_struc: 0.01, seed, ..SynthConfig::default() };
        let ds = gen_dataset(&config).unwrap();
        let plan = sinkhorn_solve(&build_cost(&ds.e_struc, &ds.e_seq).unwrap(), &SinkhornConfig::default()).unwrap();
        scores.push(planted_map_check(&ds, &plan).unwrap());
    }
    let pass = scores.iter().all(|&s| s >= 0.9);
    report(2, "planted-map recovery", pass, format!("scores {scores:?}"));
    assert!(pass);
}

#[test]
fn criterion_03_diffusion_kernel_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let schedule = cosine_schedule(64, 0.008).unwrap();
    let mut worst_ck = 0.0f64;
    let mut worst_closed = 0.0f64;
    for _ in 0..5 {
        let raw: Vec<f64> = (0..4).map(|_| 0.05 + rng.random::<f64>()).collect();
        let s: f64 = raw.iter().sum();
        let m = [raw[0] / s, raw[1] / s, raw[2] / s, 1.0 - (raw[0] + raw[1] + raw[2]) / s];
        let mut product = TransitionMatrix::identity();
        for t in 1..=64 {
            let q = transition_matrix(&schedule, t, &m).unwrap();
            let prev = if t == 1 { TransitionMatrix::identity() } else { cumulative_transition(&schedule, t - 1, &m).unwrap() };
            let cur = cumulative_transition(&schedule, t, &m).unwrap();
            for a in Relation::ALL {
                for c in Relation::ALL {
                    let sum: f64 = Relation::ALL.iter().map(|&b| prev.get(a, b) * q.get(b, c)).sum();
                    worst_ck = worst_ck.max((sum - cur.get(a, c)).abs());
                }
            }
            product = product.matmul(&q);
            worst_closed = worst_closed.max(product.max_abs_diff(&cur));
        }
    }
    let mut worst_tv = 0.0f64;
    let m = [0.02, 0.015, 0.09, 0.875];
    for steps in [50, 64, 100, 500] {
        let s = cosine_schedule(steps, 0.008).unwrap();
        let q = cumulative_transition(&s, steps, &m).unwrap();
        for r in Relation::ALL {
            worst_tv = worst_tv.max(total_variation(&q.row(r), &m));
        }
    }
    let pass = worst_ck < 1e-10 && worst_closed < 1e-10 && worst_tv < 0.05;
    report(3, "diffusion kernel exactness", pass, format!("CK {worst_ck:.2e}, closed form {worst_closed:.2e}, TV {worst_tv:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_04_loss_bounds_conditional_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (input_dim, go_dim, hidden) = (3, 2, 4);
    let dc = DenoiserConfig { layers: 1, d_model: 8, d_edge: 6, heads: 2, d_cond: hidden, d_go: go_dim, d_time: 4 };
    let mut worst_gap = f64::INFINITY;
    let mut worst_oracle = 0.0f64;
    let mut count = 0;
    for k in 0..30 {
        let steps = rng.random_range(5..=20);
        let t = rng.random_range(1..=steps);
        let inst = random_instance(&mut rng, input_dim, go_dim, cosine_schedule(steps, 0.008).unwrap(), t);
        let moe = MoeEncoder::new(MoeConfig { input_dim, hidden_dim: hidden, experts: 2 }, &mut rng).unwrap();
        let mut den = Denoiser::new(dc, &mut rng).unwrap();
        common::randomize_zero_init(&mut den, &mut rng);
        let (moe, den) = if k % 3 == 2 { train_on_instance(moe, den, &inst, 40, 1e-2, k).unwrap() } else { (moe, den) };
        let model = entropy_bound_check(&inst, &ModelPredictor { moe: &moe, denoiser: &den, instance: &inst }).unwrap();
        let exact = entropy_bound_check(&inst, &ExactPosterior(&inst)).unwrap();
        worst_gap = worst_gap.min(model.loss - model.entropy);
        worst_oracle = worst_oracle.max((exact.loss - exact.entropy).abs());
        count += 1;
    }
    let pass = count >= 20 && worst_gap >= -1e-9 && worst_oracle < 1e-9;
    report(4, "loss bounds conditional entropy", pass, format!("{count} instances, min loss−entropy {worst_gap:.3e}, oracle gap {worst_oracle:.2e}"));
    assert!(pass);
}

fn denoiser_gradcheck(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dc = DenoiserConfig { layers: 1, d_model: 4, d_edge: 4, heads: 2, d_cond: 3, d_go: 2, d_time: 4 };
    let mut den = Denoiser::new(dc, &mut rng).unwrap();
    common::randomize_zero_init(&mut den, &mut rng);
    let n = rng.random_range(2..=4);
    let ego = common::random_ego(n, &mut rng);
    let f = common::random_features(&ego, 3, 2, &mut rng);
    let at = common::random_ego(n, &mut rng).adj;
    let targets: Vec<usize> = ego.adj.relations().iter().map(|r| r.index()).collect();
    let t = rng.random_range(1..=10);
    finite_diff_check(den.params(), 1e-4, |tape, vars| {
        let cond = Condition::Present { h_tilde: tape.constant(f.h.clone()), z: tape.constant(f.z.clone()) };
        let logits = den.forward(tape, vars, &ego.kinds, &at, t, cond);
        tape.softmax_cross_entropy(logits, &targets)
    })
    .unwrap()
}

fn moe_gradcheck(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut moe = MoeEncoder::new(MoeConfig { input_dim: 5, hidden_dim: 4, experts: 3 }, &mut rng).unwrap();
    *moe.gate_weight_mut() = common::gaussian(5, 3, 0.5, &mut rng);
    let h = common::gaussian(6, 5, 1.0, &mut rng);
    let w = common::gaussian(6, 4, 1.0, &mut rng);
    finite_diff_check(moe.params(), 1e-5, |tape, vars| {
        let x = tape.constant(h.clone());
        let y = moe.forward(tape, vars, x);
        let wv = tape.constant(w.clone());
        let prod = tape.mul(y, wv);
        tape.sum(prod)
    })
    .unwrap()
}

fn classifier_gradcheck(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clf = Classifier::new(5, 6, 4, &mut rng).unwrap();
    let x = common::gaussian(7, 5, 1.0, &mut rng);
    let y = DenseMatrix::from_fn(7, 4, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
    finite_diff_check(clf.params(), 1e-5, |tape, vars| {
        let xv = tape.constant(x.clone());
        let p = clf.forward(tape, vars, xv);
        tape.binary_cross_entropy(p, &y)
    })
    .unwrap()
}

#[test]
fn criterion_05_gradient_integrity() {
    let mut worst = [0.0f64; 3];
    for seed in 0..20 {
        worst[0] = worst[0].max(moe_gradcheck(seed));
        worst[1] = worst[1].max(denoiser_gradcheck(seed));
        worst[2] = worst[2].max(classifier_gradcheck(seed));
    }
    let pass = worst.iter().all(|&w| w < 1e-4);
    report(5, "gradient integrity", pass, format!("max relative error moe {:.2e}, denoiser {:.2e}, classifier {:.2e}", worst[0], worst[1], worst[2]));
    assert!(pass);
}

#[test]
fn criterion_06_permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let dc = DenoiserConfig { layers: 2, d_model: 8, d_edge: 6, heads: 2, d_cond: 5, d_go: 3, d_time: 4 };
    let mut mismatches = 0;
    for _ in 0..50 {
        let mut den = Denoiser::new(dc, &mut rng).unwrap();
        common::randomize_zero_init(&mut den, &mut rng);
        let n = rng.random_range(2..=6);
        let ego = common::random_ego(n, &mut rng);
        let f = common::random_features(&ego, 5, 3, &mut rng);
        let perm = common::random_permutation(n, &mut rng);
        let pego = ego.permute(&perm);
        let pf = common::permute_features(&ego, &f, &perm);
        let t = rng.random_range(1..=50);
        let a = den.predict_clean(&ego, &ego.adj, Some(&f), t).unwrap().probs();
        let b = den.predict_clean(&pego, &pego.adj, Some(&pf), t).unwrap().probs();
        for (k, (i, j)) in ego.adj.pairs().enumerate() {
            if a.row(k) != b.row(pego.adj.pair_index(perm[i], perm[j])) {
                mismatches += 1;
            }
        }
    }
    let pass = mismatches == 0;
    report(6, "permutation equivariance", pass, format!("{mismatches} mismatching pair rows over 50 instances"));
    assert!(pass);
}

#[test]
fn criterion_07_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut aupr_mismatch = 0;
    let mut fmax_gap = 0.0f64;
    let mut fixtures = 0;
    while fixtures < 100 {
        let (r, c) = (rng.random_range(1..=20), rng.random_range(1..=30));
        let levels = rng.random_range(2..=20) as f64;
        let preds = DenseMatrix::from_fn(r, c, |_, _| (rng.random::<f64>() * levels).floor() / levels);
        let labels = DenseMatrix::from_fn(r, c, |_, _| if rng.random_bool(0.3) { 1.0 } else { 0.0 });
        if labels.sum() == 0.0 {
            continue;
        }
        fixtures += 1;
        if (aupr(&preds, &labels).unwrap() - common::aupr_oracle(&preds, &labels)).abs() > 1e-12 {
            aupr_mismatch += 1;
        }
        fmax_gap = fmax_gap.max((fmax(&preds, &labels).unwrap().0 - common::fmax_oracle(&preds, &labels)).abs());
    }
    let mut propagation_failures = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let dag = common::random_dag(n, &mut rng);
        let preds = DenseMatrix::from_fn(3, n, |_, _| rng.random::<f64>());
        let once = true_path_propagate(&preds, &dag).unwrap();
        let twice = true_path_propagate(&once, &dag).unwrap();
        let consistent = (0..n).all(|t| dag.descendants(t).iter().all(|&d| (0..3).all(|r| once.get(r, t) >= once.get(r, d))));
        if once != twice || !consistent {
            propagation_failures += 1;
        }
    }
    let pass = aupr_mismatch == 0 && fmax_gap < 1e-12 && propagation_failures == 0;
    report(7, "metric oracles", pass, format!("AUPR mismatches {aupr_mismatch}, max Fmax gap {fmax_gap:.2e}, propagation failures {propagation_failures}"));
    assert!(pass);
}

#[test]
fn criterion_08_directional_ablation() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let variants: [(&str, &[(&str, &str)]); 3] =
        [("full", &[]), ("no-cgg", &[("pretrain.enabled", "false")]), ("concat", &[("ot.enabled", "false")])];
    let mut means = [[0.0f64; 2]; 3];
    for seed in 0..5u64 {
        for (v, (_, sets)) in variants.iter().enumerate() {
            let mut config = RunConfig::default();
            config.set("seed", &seed.to_string()).unwrap();
            for (k, val) in sets.iter() {
                config.set(k, val).unwrap();
            }
            let m = run_until(&config, dir.path(), Stage::Evaluate).unwrap().metrics.unwrap();
            means[v][0] += m.fmax / 5.0;
            means[v][1] += m.aupr / 5.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ordered = (0..2).all(|k| means[0][k] >= means[1][k] && means[1][k] >= means[2][k]);
    let gap = means[0][1] - means[2][1];
    let pass = ordered && gap > 0.01 && secs < 1800.0;
    let detail = variants
        .iter()
        .zip(&means)
        .map(|((name, _), m)| format!("{name} Fmax {:.4} AUPR {:.4}", m[0], m[1]))
        .collect::<Vec<_>>()
        .join("; ");
    report(8, "directional ablation", pass, format!("{detail}; full−concat AUPR {gap:.4}; {secs:.0}s"));
    assert!(pass);
}

#[test]
fn criterion_09_overfit_single_ego_graph() {
    let start = Instant::now();
    let ds = gen_dataset(&SynthConfig::default()).unwrap();
    let h = ds.e_seq.hstack(&ds.e_struc).unwrap();
    let marginal = relation_marginals(&ds.graph).unwrap();
    let data = PretrainData { graph: &ds.graph, h: &h, z: &ds.z, marginal };
    let center = ds.graph.proteins_in(Split::Train)[0];
    let ego = sample_ego(&ds.graph, center, &FanoutPlan::default(), 0).unwrap();
    let ex = data.example(ego);
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let moe = MoeEncoder::new(MoeConfig { input_dim: h.cols(), hidden_dim: 64, experts: 4 }, &mut rng).unwrap();
    let den = Denoiser::new(DenoiserConfig::with_inputs(64, ds.z.cols()), &mut rng).unwrap();
    let config = TrainConfig { seed: 9, ..TrainConfig::default() };
    let mut trainer = Pretrainer::new(moe, den, config).unwrap();
    let first = trainer.step_on(std::slice::from_ref(&ex), &marginal).unwrap().loss;
    let mut last = first;
    for _ in 1..500 {
        last = trainer.step_on(std::slice::from_ref(&ex), &marginal).unwrap().loss;
    }
    let (moe, den) = trainer.into_models();
    let features = NodeFeatures { h: moe.encode(&ex.h).unwrap(), z: ex.z.clone() };
    let schedule = cosine_schedule(50, 0.008).unwrap();
    let (mut hits, mut total) = (0usize, 0usize);
    let mut sensitive = false;
    for t in 1..=50 {
        let at = forward_sample(&ex.ego.adj, &schedule, t, &marginal, &mut rng).unwrap().adj;
        let pred = den.predict_clean(&ex.ego, &at, Some(&features), t).unwrap();
        hits += pred.argmax().iter().zip(ex.ego.adj.relations()).filter(|(a, b)| a == b).count();
        total += at.pair_count();
        let dropped = den.predict_clean(&ex.ego, &at, None, t).unwrap();
        sensitive |= pred.probs().max_abs_diff(&dropped.probs()) > 0.0;
    }
    let accuracy = hits as f64 / total as f64;
    let secs = start.elapsed().as_secs_f64();
    let pass = accuracy >= 0.95 && last < first && sensitive && secs < 120.0;
    report(9, "overfit sanity", pass, format!("{} nodes, accuracy {accuracy:.4}, loss {first:.4} → {last:.4}, conditioning live {sensitive}, {secs:.1}s", ex.ego.node_count()));
    assert!(pass);
}

#[test]
fn criterion_10_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &std::path::Path| {
        let output = std::process::Command::new(env!("CARGO_BIN_EXE_dampe"))
            .args(["pipeline", "--seed", "3", "--out"])
            .arg(out)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(output.status.success());
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    let pass = a == b && !a.is_empty();
    report(10, "pipeline determinism", pass, format!("metrics.csv {} bytes, identical {}", a.len(), a == b));
    assert!(pass);
}
