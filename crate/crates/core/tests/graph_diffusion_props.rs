use std::sync::OnceLock;

use dampe::diffusion::{
    cosine_schedule, cumulative_transition, forward_sample, posterior_distribution, reverse_step, transition_matrix,
    NoisyAdj,
};
use dampe::hetgraph::{build_adjacency, sample_ego, strip_test_annotations, FanoutPlan, NodeKind, Relation, Split};
use dampe::numerics::DenseMatrix;
use dampe::synthdata::{gen_dataset, SynthConfig, SynthDataset};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset() -> &'static SynthDataset {
    static DS: OnceLock<SynthDataset> = OnceLock::new();
    DS.get_or_init(|| gen_dataset(&SynthConfig::default()).unwrap())
}

fn marginal() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.01f64..1.0).prop_map(|w| {
        let s: f64 = w.iter().sum();
        let m = [w[0] / s, w[1] / s, w[2] / s, 0.0];
        [m[0], m[1], m[2], 1.0 - m[0] - m[1] - m[2]]
    })
}

fn fanout() -> impl Strategy<Value = FanoutPlan> {
    (1usize..4, prop::collection::vec(prop::array::uniform3(0usize..4), 1..3), 1usize..40)
        .prop_map(|(hops, per_hop, node_cap)| FanoutPlan { hops, per_hop, node_cap })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ego_graphs_are_typed_and_symmetric(centre in 0usize..300, plan in fanout(), seed in any::<u64>()) {
        let ds = dataset();
        let ego = sample_ego(&ds.graph, centre, &plan, seed).unwrap();
        let adj = &ego.adj;
        prop_assert!(ego.node_count() <= plan.node_cap.max(1));
        prop_assert_eq!(adj.counts().iter().sum::<usize>(), adj.pair_count());
        prop_assert_eq!(adj.pair_count(), ego.node_count() * ego.node_count().saturating_sub(1));
        for (i, j) in adj.pairs() {
            let (ki, kj) = (ego.kinds[i], ego.kinds[j]);
            match adj.get(i, j) {
                Relation::Ppi => {
                    prop_assert_eq!(adj.get(j, i), Relation::Ppi);
                    prop_assert!(ki == NodeKind::Protein && kj == NodeKind::Protein);
                }
                Relation::Go => prop_assert!(ki == NodeKind::Go && kj == NodeKind::Go),
                Relation::Anno => prop_assert!(ki == NodeKind::Protein && kj == NodeKind::Go),
                Relation::NoEdge => {}
            }
        }
        prop_assert_eq!(sample_ego(&ds.graph, centre, &plan, seed).unwrap(), ego);
    }

    #[test]
    fn adjacency_agrees_with_graph(nodes in prop::collection::btree_set(0usize..400, 1..12)) {
        let ds = dataset();
        let nodes: Vec<usize> = nodes.into_iter().filter(|&u| u < ds.graph.node_count()).collect();
        let adj = build_adjacency(&ds.graph, &nodes);
        for (i, j) in adj.pairs() {
            prop_assert_eq!(adj.get(i, j), ds.graph.relation(nodes[i], nodes[j]));
        }
    }

    #[test]
    fn transition_rows_are_distributions(m in marginal(), steps in 1usize..200, shift in 0.001f64..0.1, frac in 0.0f64..1.0) {
        let s = cosine_schedule(steps, shift).unwrap();
        let t = 1 + ((steps - 1) as f64 * frac) as usize;
        for q in [transition_matrix(&s, t, &m).unwrap(), cumulative_transition(&s, t, &m).unwrap()] {
            for r in Relation::ALL {
                let row = q.row(r);
                prop_assert!(row.iter().all(|&x| x >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(s.alpha_bars().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn posterior_matches_bayes_rule(m in marginal(), steps in 2usize..100, frac in 0.0f64..1.0, r0 in 0usize..4, rt in 0usize..4) {
        let s = cosine_schedule(steps, 0.008).unwrap();
        let t = 2 + ((steps - 2) as f64 * frac) as usize;
        let (r0, rt) = (Relation::from_index(r0).unwrap(), Relation::from_index(rt).unwrap());
        let post = posterior_distribution(r0, rt, &s, t, &m).unwrap();
        let q = transition_matrix(&s, t, &m).unwrap();
        let prev = cumulative_transition(&s, t - 1, &m).unwrap();
        let evidence = cumulative_transition(&s, t, &m).unwrap().get(r0, rt);
        for r in Relation::ALL {
            let oracle = q.get(r, rt) * prev.get(r0, r) / evidence;
            prop_assert!((post[r.index()] - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_clean_prediction_is_recovered_at_t1(centre in 0usize..300, seed in any::<u64>(), m in marginal()) {
        let ds = dataset();
        let ego = sample_ego(&ds.graph, centre, &FanoutPlan::default(), seed).unwrap();
        let s = cosine_schedule(10, 0.008).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = forward_sample(&ego.adj, &s, 1, &m, &mut rng).unwrap();
        let onehot = DenseMatrix::from_fn(ego.adj.pair_count(), 4, |k, r| if ego.adj.relations()[k].index() == r { 1.0 } else { 0.0 });
        prop_assert_eq!(reverse_step(&onehot, &noisy, &s, &m, &mut rng).unwrap(), ego.adj.clone());
        let later = NoisyAdj { adj: ego.adj.clone(), t: 5 };
        prop_assert_eq!(reverse_step(&onehot, &later, &s, &m, &mut rng).unwrap().pair_count(), ego.adj.pair_count());
    }
}

#[test]
fn stripping_removes_every_test_annotation() {
    let ds = dataset();
    let stripped = strip_test_annotations(&ds.graph);
    assert!(stripped.leaking_annotations().is_empty());
    stripped.check_leakage().unwrap();
    for p in stripped.proteins_in(Split::Test) {
        assert!(stripped.neighbours(p, Relation::Anno).is_empty());
    }
    let train_anno = |g: &dampe::hetgraph::HetGraph| {
        g.proteins_in(Split::Train).iter().map(|&p| g.neighbours(p, Relation::Anno).len()).sum::<usize>()
    };
    assert_eq!(train_anno(&stripped), train_anno(&ds.graph));
}
