use textcycle::sim::stats::chi_square_gof;
use textcycle::sim::{
    build_space, random_affinity, simulate_chain, transition_distribution, uniform_affinity, OperatorConfig, SyntheticSpace,
    Weights,
};

#[test]
fn sampled_transitions_match_the_distribution() {
    let space = build_space(5, 3, 17).unwrap();
    let op = OperatorConfig {
        lambda: 0.0,
        beta_logit: 1.0,
        ..OperatorConfig::new(random_affinity(5, 17))
    }
    .with_seed(99);
    let chain = simulate_chain(&space, &op, 0, 100_000).unwrap();
    let w = Weights::zeros(5);
    for from in 0..5 {
        let mut counts = [0u64; 5];
        for pair in chain.states.windows(2).filter(|p| p[0] == from) {
            counts[pair[1]] += 1;
        }
        let p = transition_distribution(&space, &op, &w, from, None).unwrap();
        let pv = chi_square_gof(&counts, &p);
        assert!(pv > 1e-3, "state {from}: counts {counts:?} vs {p:?}, p = {pv}");
    }
}

#[test]
fn distribution_is_softmax_over_allowed_states() {
    let space = build_space(6, 4, 3).unwrap();
    let aff = random_affinity(6, 3);
    let op = OperatorConfig {
        beta_logit: 2.0,
        lambda: 0.7,
        delta_min: 0.0,
        ..OperatorConfig::new(aff.clone())
    };
    let mut w = Weights::zeros(6);
    w.reinforce(1, 4, 1.5);
    let p = transition_distribution(&space, &op, &w, 1, None).unwrap();
    // delta_min 0 still forbids nothing, self included
    let logits: Vec<f64> = (0..6).map(|t| 2.0 * aff[1][t] + if t == 4 { 0.7 * 1.5 } else { 0.0 }).collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    for t in 0..6 {
        assert!((p[t] - logits[t].exp() / z).abs() < 1e-12);
    }
}

#[test]
fn close_states_are_forbidden() {
    let pts = vec![vec![1.0, 0.0], vec![1.0, 0.01], vec![0.0, 1.0], vec![-1.0, 0.0]];
    let space = SyntheticSpace::from_points(pts, vec![1.0; 4]).unwrap();
    let op = OperatorConfig::new(uniform_affinity(4));
    let p = transition_distribution(&space, &op, &Weights::zeros(4), 0, None).unwrap();
    assert_eq!(p[0], 0.0);
    assert_eq!(p[1], 0.0);
    assert!((p[2] - 0.5).abs() < 1e-12);
}

#[test]
fn reinforcement_only_grows_weights() {
    let space = build_space(10, 4, 5).unwrap();
    let op = OperatorConfig::new(random_affinity(10, 5)).with_seed(5);
    let chain = simulate_chain(&space, &op, 2, 40).unwrap();
    let mut w = Weights::zeros(10);
    let mut last = 0.0;
    for pair in chain.states.windows(2) {
        let before = w.get(pair[0], pair[1]);
        w.reinforce(pair[0], pair[1], op.eta);
        assert_eq!(w.get(pair[0], pair[1]), before + op.eta);
        assert_eq!(w.get(pair[1], pair[0]), w.get(pair[0], pair[1]));
        let total: f64 = (0..10).flat_map(|a| (0..10).map(move |b| (a, b))).map(|(a, b)| w.get(a, b)).sum();
        assert!(total > last);
        last = total;
    }
}

#[test]
fn same_seed_same_chain() {
    let space = build_space(20, 8, 1).unwrap();
    let op = OperatorConfig::new(random_affinity(20, 1)).with_seed(7);
    let a = simulate_chain(&space, &op, 0, 30).unwrap();
    let b = simulate_chain(&space, &op, 0, 30).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.to_csv(), b.to_csv());
}
