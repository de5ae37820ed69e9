use hcnn::ckks::{CkksParams, RefreshMode};
use hcnn::graph::{
    build_graph, cost_report_compare, gen_fixture, plaintext_forward, plan_levels, plan_profile, reference_forward, simulate,
    ConvMode, FloatArray, GraphError, LayerKind, ModelWeights, Node, PlanOptions, PlanStep, Topology,
};
use hcnn::packing::{Shape, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_input(shape: Shape, rng: &mut impl Rng) -> Tensor3 {
    Tensor3::from_vec(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn fixture(t: Topology, seed: u64) -> ModelWeights {
    gen_fixture(t, seed, &CkksParams::desk_a().digest_hex(), 2).unwrap()
}

#[test]
fn level_costs_follow_layer_kinds() {
    let m = fixture(Topology::BasicBlockStack(1), 1);
    let g = build_graph(&m, 4096, ConvMode::Alternating).unwrap();
    assert_eq!(g.level_costs()[..5].iter().sum::<usize>(), 6);
    assert_eq!(g.level_costs(), vec![2, 1, 2, 0, 1, 0, 1]);

    let m = fixture(Topology::TinyCnn, 1);
    for mode in [ConvMode::Alternating, ConvMode::Fixed] {
        assert_eq!(build_graph(&m, 4096, mode).unwrap().total_cost(), 9);
    }

    let mut empty = m.clone();
    empty.layers.clear();
    assert!(matches!(build_graph(&empty, 4096, ConvMode::Alternating), Err(GraphError::UnsupportedTopology(_))));
    let mut unknown = m.clone();
    unknown.topology = "resnet-9000".into();
    assert!(matches!(build_graph(&unknown, 4096, ConvMode::Alternating), Err(GraphError::UnsupportedTopology(_))));
    let mut broken = m;
    broken.layers.swap(0, 1);
    assert!(matches!(build_graph(&broken, 4096, ConvMode::Alternating), Err(GraphError::ShapeChain(_))));
}

#[test]
fn alternating_graph_flips_layouts_at_each_convolution() {
    let m = fixture(Topology::TinyCnn, 3);
    let g = build_graph(&m, 4096, ConvMode::Alternating).unwrap();
    let convs: Vec<_> = g
        .layers
        .iter()
        .filter_map(|l| match &l.node {
            Node::Conv(s) => Some((s.in_format.variant, s.out_format.variant)),
            _ => None,
        })
        .collect();
    assert_eq!(convs.len(), 3);
    for w in convs.windows(2) {
        assert_eq!(w[0].1, w[1].0);
    }
    assert!(convs.iter().all(|(i, o)| i != o));
}

/// Best `(count, live sum, positions)` over every subset of allowed positions.
fn exhaustive(steps: &[PlanStep], start: usize, target: usize) -> Option<(usize, usize, Vec<usize>)> {
    let n = steps.len();
    let mut best: Option<(usize, usize, Vec<usize>)> = None;
    for mask in 0u32..(1 << n) {
        let points: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if simulate(steps, start, target, &points).is_none() {
            continue;
        }
        let cand = (points.len(), points.iter().map(|&i| steps[i].live_cts).sum(), points);
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
    }
    best
}

#[test]
fn planner_matches_exhaustive_search() {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let steps: Vec<PlanStep> = (0..n)
            .map(|_| PlanStep {
                cost: rng.random_range(0..=2),
                live_cts: rng.random_range(1..=4),
                refresh_allowed: rng.random_bool(0.8),
            })
            .collect();
        let target = rng.random_range(2..=5);
        let start = rng.random_range(target..=target + 2);
        let oracle = exhaustive(&steps, start, target);
        match plan_profile(&steps, start, target) {
            Ok(plan) => {
                feasible += 1;
                let (count, live, points) = oracle.expect("planner found a plan the oracle missed");
                assert_eq!(plan.refresh_points.len(), count);
                assert_eq!(plan.refresh_points.iter().map(|&i| steps[i].live_cts).sum::<usize>(), live);
                assert_eq!(plan.refresh_points, points);
                let entry = simulate(&steps, start, target, &plan.refresh_points).unwrap();
                assert_eq!(plan.entry_level, entry);
                assert!(entry.iter().zip(&steps).all(|(l, s)| *l >= s.cost));
                for _ in 0..3 {
                    assert_eq!(plan_profile(&steps, start, target).unwrap(), plan);
                }
            }
            Err(GraphError::Infeasible(_)) => assert!(oracle.is_none()),
            Err(e) => panic!("{e}"),
        }
    }
    assert!(feasible > 150, "only {feasible} feasible graphs");
}

#[test]
fn planner_edge_cases() {
    let uniform = |n, cost| vec![PlanStep { cost, live_cts: 1, refresh_allowed: true }; n];
    assert!(plan_profile(&uniform(5, 2), 10, 9).unwrap().refresh_points.is_empty());
    assert_eq!(plan_profile(&uniform(11, 1), 10, 9).unwrap().refresh_points.len(), 1);
    assert!(matches!(plan_profile(&uniform(3, 3), 2, 2), Err(GraphError::Infeasible(_))));

    // ties prefer the position with fewer live ciphertexts
    let steps = [
        PlanStep { cost: 1, live_cts: 4, refresh_allowed: true },
        PlanStep { cost: 1, live_cts: 4, refresh_allowed: true },
        PlanStep { cost: 1, live_cts: 1, refresh_allowed: true },
        PlanStep { cost: 1, live_cts: 4, refresh_allowed: true },
    ];
    assert_eq!(plan_profile(&steps, 2, 3).unwrap().refresh_points, vec![2]);
}

#[test]
fn refresh_is_kept_out_of_residual_spans() {
    let m = fixture(Topology::BasicBlockStack(2), 5);
    let g = build_graph(&m, 4096, ConvMode::Alternating).unwrap();
    let plan = plan_levels(&g, PlanOptions::new(10)).unwrap();
    assert_eq!(plan.refresh_points.len(), 1);
    for &p in &plan.refresh_points {
        assert!(g.refresh_allowed(p));
    }
    assert!(!g.refresh_allowed(1) && !g.refresh_allowed(3) && g.refresh_allowed(4) && g.refresh_allowed(5));
}

#[test]
fn weights_json_round_trips_and_checks_digests() {
    let params = CkksParams::desk_a();
    let m = fixture(Topology::TinyCnn, 42);
    let back = ModelWeights::from_json(&m.to_json()).unwrap();
    assert_eq!(back.digest_hex().unwrap(), m.digest_hex().unwrap());
    back.check_params(&params.digest_hex()).unwrap();
    assert!(matches!(back.check_params(&CkksParams::desk_b().digest_hex()), Err(GraphError::DigestMismatch { .. })));

    // plain arrays and base64 decode to the same model
    let mut plain = m.clone();
    for l in &mut plain.layers {
        for arr in [&mut l.weights, &mut l.bias].into_iter().flatten() {
            *arr = FloatArray::Plain(arr.values().unwrap());
        }
    }
    let plain = ModelWeights::from_json(&plain.to_json()).unwrap();
    assert_eq!(plain.digest_hex().unwrap(), m.digest_hex().unwrap());

    // same seed, same bytes; other seed, other digest
    assert_eq!(fixture(Topology::TinyCnn, 42).to_json(), m.to_json());
    assert_ne!(fixture(Topology::TinyCnn, 43).digest_hex().unwrap(), m.digest_hex().unwrap());

    assert!(matches!(ModelWeights::from_json("{\"version\": 1}"), Err(GraphError::Schema(_))));
    let mut bad = m.clone();
    bad.layers[0].weights = Some(FloatArray::Base64("not base64!".into()));
    assert!(matches!(bad.layers[0].weight_values(), Err(GraphError::Schema(_))));
    let mut v2 = serde_json::to_value(&m).unwrap();
    v2["version"] = 2.into();
    assert!(matches!(ModelWeights::from_json(&v2.to_string()), Err(GraphError::Schema(_))));
}

#[test]
fn golden_pairs_reproduce_under_the_reference() {
    let m = fixture(Topology::TinyCnn, 42);
    for pair in m.golden.as_ref().unwrap().pairs() {
        let input = Tensor3::from_vec(m.input_shape(), pair.input.clone()).unwrap();
        let logits = reference_forward(&m, &input).unwrap();
        for (a, b) in logits.iter().zip(&pair.logits) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn packed_pipeline_matches_dense_reference() {
    let params = CkksParams::desk_a();
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for (topology, seed) in [(Topology::TinyCnn, 42), (Topology::BasicBlockStack(1), 7), (Topology::BasicBlockStack(2), 8)] {
        let m = fixture(topology, seed);
        for mode in [ConvMode::Alternating, ConvMode::Fixed] {
            let g = build_graph(&m, params.slots(), mode).unwrap();
            let plan = plan_levels(&g, PlanOptions::new(params.max_level())).unwrap();
            for _ in 0..3 {
                let x = random_input(m.input_shape(), &mut rng);
                let want = reference_forward(&m, &x).unwrap();
                let (got, report) = plaintext_forward(&g, &plan, &params, RefreshMode::InsecureDebug, &x).unwrap();
                let diff = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(diff < 1e-6, "{} {mode:?}: diff {diff}", topology.name());
                assert_eq!(report.layers.len(), g.layers.len());
                for (r, &e) in report.layers.iter().zip(&plan.entry_level) {
                    assert_eq!(r.entry_level, e);
                }
                assert_eq!(report.total, report.layers.iter().map(|r| r.tally).sum());
                let refreshed: usize = plan.refresh_points.iter().map(|&i| g.layers[i].live_cts).sum();
                assert_eq!(report.total.refreshes as usize, refreshed);
                assert!(report.insecure);
            }
        }
    }
}

#[test]
fn basic_block_consumes_six_levels() {
    let params = CkksParams::desk_a();
    let m = fixture(Topology::BasicBlockStack(1), 11);
    let g = build_graph(&m, params.slots(), ConvMode::Alternating).unwrap();
    let plan = plan_levels(&g, PlanOptions::new(params.max_level())).unwrap();
    let x = random_input(m.input_shape(), &mut ChaCha20Rng::seed_from_u64(1));
    let (_, report) = plaintext_forward(&g, &plan, &params, RefreshMode::Disabled, &x).unwrap();
    let l = &report.layers;
    assert_eq!(l[0].entry_level - l[4].exit_level, 6);
    assert_eq!(l.iter().map(|r| r.entry_level - r.exit_level).collect::<Vec<_>>(), g.level_costs());
}

#[test]
fn plan_without_refresh_fails_when_refresh_is_disabled() {
    let params = CkksParams::desk_a();
    let m = fixture(Topology::BasicBlockStack(2), 12);
    let g = build_graph(&m, params.slots(), ConvMode::Alternating).unwrap();
    let plan = plan_levels(&g, PlanOptions::new(params.max_level())).unwrap();
    let x = random_input(m.input_shape(), &mut ChaCha20Rng::seed_from_u64(1));
    let err = plaintext_forward(&g, &plan, &params, RefreshMode::Disabled, &x).unwrap_err();
    assert!(matches!(err, GraphError::Packing(_) | GraphError::Ckks(_)), "{err}");
}

#[test]
fn zero_weights_give_biases() {
    let params = CkksParams::desk_a();
    let mut m = fixture(Topology::TinyCnn, 9);
    for l in &mut m.layers {
        if l.kind == LayerKind::Conv || l.kind == LayerKind::Fc {
            let n = l.weight_values().unwrap().len();
            l.weights = Some(FloatArray::encode(&vec![0.0; n]));
        }
    }
    let fc_bias = m.layers.last().unwrap().bias_values(10).unwrap();
    let x = random_input(m.input_shape(), &mut ChaCha20Rng::seed_from_u64(2));
    assert_eq!(reference_forward(&m, &x).unwrap(), fc_bias);
    let g = build_graph(&m, params.slots(), ConvMode::Alternating).unwrap();
    let plan = plan_levels(&g, PlanOptions::new(params.max_level())).unwrap();
    let (got, _) = plaintext_forward(&g, &plan, &params, RefreshMode::Disabled, &x).unwrap();
    for (a, b) in got.iter().zip(&fc_bias) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn layout_comparison_reports_fewer_rotations() {
    let params = CkksParams::desk_a();
    let m = fixture(Topology::TinyCnn, 42);
    let x = random_input(m.input_shape(), &mut ChaCha20Rng::seed_from_u64(3));
    let cmp = cost_report_compare(&m, &params, &x).unwrap();
    println!("{}", serde_json::to_string_pretty(&cmp).unwrap());
    assert!(cmp.max_abs_diff < 1e-3);
    for row in cmp.rows.iter().filter(|r| r.kind == "conv") {
        assert!(row.fixed_rotations > row.alternating_rotations, "{row:?}");
    }
    assert_eq!(cmp.alternating_total.rotations, cmp.rows.iter().map(|r| r.alternating_rotations).sum::<u64>());
    assert!(cmp.rotation_ratio.unwrap() > 1.0);
}
