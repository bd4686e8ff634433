use divest_core::abm::{imitation_probability, run, EventKind, InitSpec, SimState, Topology};
use divest_core::macro_approx::{
    event_catalog, micro_to_macro, EventId, ImitationClosure, RhsForm,
};
use divest_core::network::{AdaptiveNetwork, Strategy};
use divest_core::Params;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(n: usize) -> Params {
    Params {
        n,
        ..Params::default()
    }
}

fn capitals(sim: &SimState) -> Vec<(f64, f64)> {
    (0..sim.n())
        .map(|i| {
            let h = sim.household(i);
            (h.k_c, h.k_d)
        })
        .collect()
}

#[test]
fn same_seed_same_trajectory() {
    let p = small(60);
    let a = run(&p, &InitSpec::default(), 20.0, 1.0, 9).unwrap();
    let b = run(&p, &InitSpec::default(), 20.0, 1.0, 9).unwrap();
    assert_eq!(a, b);
    let c = run(&p, &InitSpec::default(), 20.0, 1.0, 10).unwrap();
    assert_ne!(a, c);
}

#[test]
fn initial_clean_share_is_binomial() {
    let p = Params::default();
    let runs = 50;
    let mut total = 0.0;
    for seed in 0..runs {
        let sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, seed).unwrap();
        total += sim.sample().unwrap().n_c;
    }
    let mean = total / runs as f64;
    let sigma = (0.25 / (p.n as f64 * runs as f64)).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * sigma, "{mean}");
}

#[test]
fn social_events_leave_stocks_untouched() {
    let mut p = small(80);
    p.epsilon = 0.3;
    let mut sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, 3).unwrap();
    sim.advance(5.0).unwrap();
    // heterogeneous holdings so that imitation is not a coin flip
    for i in 0..sim.n() {
        let h = sim.household(i);
        sim.set_capital(i, h.k_c * (1.0 + i as f64 / 10.0), h.k_d);
    }
    for _ in 0..5000 {
        let before = capitals(&sim);
        let (c, g) = (sim.knowledge(), sim.resource());
        let market = sim.market().unwrap();
        let ev = sim.sample_event(&market);
        sim.apply_event(ev).unwrap();
        assert_eq!(capitals(&sim), before);
        assert_eq!(sim.knowledge().to_bits(), c.to_bits());
        assert_eq!(sim.resource().to_bits(), g.to_bits());
    }
    assert!(sim.counts.imitations > 0 && sim.counts.rewires > 0);
    assert!(sim.counts.noise_flips > 0 && sim.counts.noise_rewires > 0);
    sim.net.audit().unwrap();
}

#[test]
fn pure_rewiring_conserves_cohorts() {
    let mut p = small(60);
    p.phi = 1.0;
    p.epsilon = 0.0;
    let traj = run(&p, &InitSpec::default(), 40.0, 2.0, 5).unwrap();
    let n_c = traj.column("n_c").unwrap();
    assert!(n_c.iter().all(|&v| v == n_c[0]));
    // discordant links only disappear
    let cd = traj.column("cd").unwrap();
    assert!(cd.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn resource_never_grows() {
    let traj = run(&small(60), &InitSpec::default(), 60.0, 1.0, 8).unwrap();
    let g = traj.column("G").unwrap();
    assert!(g.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn total_capital_follows_aggregate_savings() {
    let p = small(50);
    let mut sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, 12).unwrap();
    sim.advance(3.0).unwrap();
    for _ in 0..20 {
        let s0 = sim.stocks();
        let m = sim.market().unwrap();
        let f =
            p.s * (m.r_c * s0.k_c + m.r_d * s0.k_d + m.w * p.l_total) - p.kappa * (s0.k_c + s0.k_d);
        let h = 1e-4;
        sim.advance(h).unwrap();
        let s1 = sim.stocks();
        let slope = (s1.k_c + s1.k_d - s0.k_c - s0.k_d) / h;
        assert!((slope - f).abs() < 1e-3 * f.abs().max(1.0), "{slope} {f}");
        sim.advance(0.5).unwrap();
    }
}

#[test]
fn activations_are_poisson() {
    let p = Params::default();
    let mut sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, 21).unwrap();
    let horizon = 50.0;
    let mean = p.n as f64 * horizon / p.tau;
    let mut counts = Vec::new();
    for _ in 0..20 {
        let mut t = 0.0;
        let mut k = 0u64;
        loop {
            t += sim.draw_waiting_time();
            if t > horizon {
                break;
            }
            k += 1;
        }
        assert!((k as f64 - mean).abs() < 4.0 * mean.sqrt(), "{k}");
        counts.push(k as f64);
    }
    // the spread matches a Poisson variance
    let avg = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - avg).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    assert!(var > 0.3 * mean && var < 2.5 * mean, "{var} vs {mean}");
}

#[test]
fn pure_noise_balances_cohorts() {
    let mut p = small(50);
    p.epsilon = 1.0;
    let init = InitSpec {
        clean_probability: 0.9,
        ..InitSpec::default()
    };
    let mut sim = SimState::new(&p, &init, Topology::Adaptive, 17).unwrap();
    sim.run_until(30.0, 30.0).unwrap();
    // one flip attempt per household every 2 tau: correlation time ~ 4 tau
    let samples = 60;
    let mut total = 0.0;
    for _ in 0..samples {
        let t = sim.t + 20.0;
        let traj = sim.run_until(t, 20.0).unwrap();
        total += traj.samples.last().unwrap().n_c;
    }
    let mean = total / samples as f64;
    let sigma = (0.25 / (p.n as f64 * samples as f64)).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * sigma, "{mean}");
}

/// Frequency of clean households imitating dirty ones per activation on a
/// frozen state, against its exact value and the pair-approximated rate.
fn imitation_frequency(sim: &mut SimState, trials: usize) -> f64 {
    let market = sim.market().unwrap();
    let mut hits = 0usize;
    for _ in 0..trials {
        if let EventKind::Imitate { i, j, adopt: true } = sim.sample_event(&market) {
            if sim.net.strategy(i) == Strategy::Clean && sim.net.strategy(j) == Strategy::Dirty {
                hits += 1;
            }
        }
    }
    hits as f64 / trials as f64
}

fn assert_binomial(freq: f64, q: f64, trials: usize) {
    let sd = (q * (1.0 - q) / trials as f64).sqrt();
    assert!((freq - q).abs() < 4.0 * sd, "freq {freq} vs {q} (sd {sd})");
}

#[test]
fn imitation_rate_matches_exact_neighbour_counting() {
    let p = Params {
        epsilon: 0.1,
        phi: 0.3,
        ..Params::default()
    };
    let mut sim = SimState::new(&p, &InitSpec::default(), Topology::Adaptive, 31).unwrap();
    for i in 0..sim.n() {
        let h = sim.household(i);
        sim.set_capital(i, h.k_c + (i % 7) as f64, h.k_d + (i % 3) as f64);
    }
    let market = sim.market().unwrap();
    let n = p.n as f64;
    let mut q = 0.0;
    for i in 0..sim.n() {
        if sim.net.strategy(i) != Strategy::Clean || sim.net.degree(i) == 0 {
            continue;
        }
        let k = sim.net.degree(i) as f64;
        for &j in sim.net.neighbors(i) {
            let j = j as usize;
            if sim.net.strategy(j) == Strategy::Dirty {
                let pr = imitation_probability(
                    sim.consumption(j, &market),
                    sim.consumption(i, &market),
                    p.a,
                );
                q += (1.0 - p.epsilon) * (1.0 - p.phi) * pr / (k * n);
            }
        }
    }
    let trials = 100_000;
    let freq = imitation_frequency(&mut sim, trials);
    assert_binomial(freq, q, trials);
}

#[test]
fn imitation_rate_matches_pair_approximation_on_complete_graph() {
    let mut p = small(60);
    p.epsilon = 0.05;
    p.phi = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let strategies = divest_core::network::random_strategies(p.n, &mut rng);
    let net = AdaptiveNetwork::complete(strategies);
    let mut y = vec![0.0; 2 * p.n + 2];
    for i in 0..p.n {
        // equal holdings within each cohort
        let (kc, kd) = match net.strategy(i) {
            Strategy::Clean => (30.0, 5.0),
            Strategy::Dirty => (2.0, 60.0),
        };
        y[2 * i] = kc;
        y[2 * i + 1] = kd;
    }
    y[2 * p.n] = 10.0;
    y[2 * p.n + 1] = p.g0;
    let mut sim = SimState::from_parts(&p, net, y, Topology::WellMixed, rng).unwrap();
    let market = sim.market().unwrap();
    let ic = sim.net.members(Strategy::Clean)[0] as usize;
    let id = sim.net.members(Strategy::Dirty)[0] as usize;
    let (f_c, f_d) = (sim.consumption(ic, &market), sim.consumption(id, &market));
    let closure = ImitationClosure {
        f0: 1.0,
        delta_f: f_c - f_d,
        p_cd: imitation_probability(f_d, f_c, p.a),
        p_dc: imitation_probability(f_c, f_d, p.a),
        clamped: false,
    };
    let state = micro_to_macro(&sim);
    let m = sim.net.n_links() as f64 / p.n as f64;
    let cat = event_catalog(&state, &closure, &p, m, RhsForm::Derived);
    let w = cat
        .iter()
        .find(|e| e.id == EventId::ImitateCleanToDirty)
        .unwrap()
        .rate;
    let q = w * p.tau / p.n as f64;
    let trials = 100_000;
    let freq = imitation_frequency(&mut sim, trials);
    assert_binomial(freq, q, trials);
}

#[test]
fn complete_graph_stays_complete() {
    let p = small(40);
    let mut sim = SimState::new(&p, &InitSpec::default(), Topology::WellMixed, 2).unwrap();
    for _ in 0..2000 {
        sim.step().unwrap();
        let nc = sim.net.n_with(Strategy::Clean);
        assert_eq!(sim.net.counts().cd, nc * (p.n - nc));
    }
    assert_eq!(sim.net.n_links(), 40 * 39 / 2);
}
