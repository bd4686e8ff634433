use divest_core::network::{random_strategies, AdaptiveNetwork, RewireOutcome, Strategy};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn degree_sums(net: &AdaptiveNetwork) -> (usize, usize) {
    let mut clean = 0;
    let mut dirty = 0;
    for i in 0..net.n() {
        match net.strategy(i) {
            Strategy::Clean => clean += net.degree(i),
            Strategy::Dirty => dirty += net.degree(i),
        }
    }
    (clean, dirty)
}

fn check(net: &AdaptiveNetwork, m: usize) {
    let c = net.counts();
    assert_eq!(c, net.recount());
    assert_eq!(c.total(), m);
    let (clean, dirty) = degree_sums(net);
    assert_eq!(2 * c.cc + c.cd, clean);
    assert_eq!(2 * c.dd + c.cd, dirty);
    net.audit().unwrap();
}

#[derive(Debug, Clone)]
enum Op {
    Flip(usize),
    RewireSame(usize),
    RewireRandom(usize),
}

fn op() -> impl proptest::strategy::Strategy<Value = Op> {
    prop_oneof![
        (0usize..1000).prop_map(Op::Flip),
        (0usize..1000).prop_map(Op::RewireSame),
        (0usize..1000).prop_map(Op::RewireRandom),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_reconcile_after_any_event_sequence(
        seed in any::<u64>(),
        n in 2usize..60,
        k in 0.5f64..8.0,
        ops in proptest::collection::vec(op(), 0..400),
    ) {
        let k = k.min(n as f64 - 1.0 - 1e-9).max(0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strategies = random_strategies(n, &mut rng);
        let mut net = AdaptiveNetwork::erdos_renyi(strategies, k, &mut rng).unwrap();
        let m = net.n_links();
        check(&net, m);
        for o in ops {
            match o {
                Op::Flip(i) => net.flip_strategy(i % n),
                Op::RewireSame(i) => {
                    let i = i % n;
                    let discordant: Vec<u32> = net
                        .neighbors(i)
                        .iter()
                        .copied()
                        .filter(|&j| net.strategy(j as usize) != net.strategy(i))
                        .collect();
                    if let Some(&j) = discordant.first() {
                        let before = net.counts();
                        match net.rewire_to_same(i, j as usize, &mut rng).unwrap() {
                            RewireOutcome::Done { old, new } => {
                                prop_assert_eq!(old, j as usize);
                                prop_assert_eq!(net.strategy(new), net.strategy(i));
                                prop_assert!(new != i);
                                prop_assert!(!net.has_edge(i, j as usize));
                                prop_assert!(net.has_edge(i, new));
                                let after = net.counts();
                                prop_assert_eq!(after.cd + 1, before.cd);
                                prop_assert_eq!(after.cc + after.dd, before.cc + before.dd + 1);
                            }
                            RewireOutcome::NoCandidate => prop_assert_eq!(net.counts(), before),
                        }
                    }
                }
                Op::RewireRandom(i) => {
                    let _ = net.rewire_random(i % n, &mut rng);
                }
            }
            check(&net, m);
        }
    }

    #[test]
    fn strategy_count_is_preserved_by_rewiring(seed in any::<u64>()) {
        let mut net = AdaptiveNetwork::erdos_renyi_init(40, 4.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let n_c = net.n_with(Strategy::Clean);
        for _ in 0..200 {
            let i = rng.random_range(0..40);
            let _ = net.rewire_random(i, &mut rng);
        }
        prop_assert_eq!(net.n_with(Strategy::Clean), n_c);
        prop_assert_eq!(net.members(Strategy::Clean).len(), n_c);
    }
}

#[test]
fn ten_thousand_rewires_reconcile() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut net = AdaptiveNetwork::erdos_renyi_init(200, 10.0, 5).unwrap();
    let m = net.n_links();
    let mut done = 0;
    let mut attempts = 0;
    while done < 10_000 && attempts < 1_000_000 {
        attempts += 1;
        let i = rng.random_range(0..200);
        let Some(j) = net.random_neighbor(i, &mut rng) else {
            continue;
        };
        if net.strategy(i) == net.strategy(j) {
            // keep discordant links available
            if rng.random_bool(0.3) {
                net.flip_strategy(i);
            }
            continue;
        }
        if let RewireOutcome::Done { .. } = net.rewire_to_same(i, j, &mut rng).unwrap() {
            done += 1;
        }
        if done % 500 == 0 {
            check(&net, m);
        }
    }
    assert_eq!(done, 10_000);
    check(&net, m);
}

#[test]
fn realised_link_count_matches_binomial() {
    // M ~ Binomial(n(n-1)/2, k/(n-1))
    let n: f64 = 200.0;
    let k: f64 = 10.0;
    let pairs = n * (n - 1.0) / 2.0;
    let p = k / (n - 1.0);
    let mean = pairs * p;
    let sd = (pairs * p * (1.0 - p)).sqrt();
    let mut total = 0.0;
    let runs = 40;
    for seed in 0..runs {
        let net = AdaptiveNetwork::erdos_renyi_init(200, 10.0, seed).unwrap();
        let m = net.n_links() as f64;
        assert!((m - mean).abs() < 4.0 * sd, "{m} vs {mean}");
        total += m;
    }
    let avg = total / runs as f64;
    assert!((avg - mean).abs() < 4.0 * sd / (runs as f64).sqrt());
}

#[test]
fn smallest_graph_has_its_only_edge() {
    let net = AdaptiveNetwork::erdos_renyi_init(2, 1.0, 3).unwrap();
    assert_eq!(net.n_links(), 1);
    assert!(net.has_edge(0, 1));
    assert_eq!(net.counts(), net.recount());
}

#[test]
fn complete_graph_discordant_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_strategies(30, &mut rng);
    let net = AdaptiveNetwork::complete(s);
    let nc = net.n_with(Strategy::Clean);
    assert_eq!(net.counts().cd, nc * (30 - nc));
    assert_eq!(net.n_links(), 30 * 29 / 2);
}
