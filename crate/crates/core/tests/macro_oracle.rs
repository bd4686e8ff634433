//! The closed-form macro right-hand side against the drift assembled
//! directly from the event catalog.

use divest_core::macro_approx::{IncomeDifference, MacroModel, MacroState, RhsForm};
use divest_core::Params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state<R: Rng>(rng: &mut R, g0: f64) -> MacroState {
    let x = rng.random_range(-0.999..0.999);
    let z = rng.random_range(0.0..0.999);
    let ymax = 1.0 - z;
    let y = rng.random_range(-ymax..ymax) * 0.999;
    MacroState {
        x,
        y,
        z,
        kcc: rng.random_range(0.0..5000.0),
        kcd: rng.random_range(0.0..5000.0),
        kdc: rng.random_range(0.0..5000.0),
        kdd: rng.random_range(0.0..5000.0),
        c: rng.random_range(0.0..30000.0),
        g: rng.random_range(0.3..1.0) * g0,
    }
}

fn worst_mismatch(form: RhsForm, income: IncomeDifference, seed: u64) -> f64 {
    let p = Params::default();
    let model = MacroModel::new(&p)
        .unwrap()
        .with_form(form)
        .with_income(income);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = random_state(&mut rng, p.g0);
        let a = model.rhs(&s).unwrap();
        let b = model.event_sum_rhs(&s).unwrap();
        for k in 0..9 {
            let scale = a[k].abs().max(b[k].abs()).max(1e-12);
            worst = worst.max((a[k] - b[k]).abs() / scale);
        }
    }
    worst
}

#[test]
fn derived_rhs_equals_event_sum() {
    for income in [IncomeDifference::CohortMean, IncomeDifference::CohortTotal] {
        let w = worst_mismatch(RhsForm::Derived, income, 1);
        assert!(w < 1e-10, "worst relative mismatch {w:e}");
    }
}

#[test]
fn verbatim_rhs_equals_event_sum_under_its_conventions() {
    let w = worst_mismatch(RhsForm::Literal, IncomeDifference::CohortMean, 2);
    assert!(w < 1e-10, "worst relative mismatch {w:e}");
}
