//! Integrator order, the comparison-lemma harness and finite-difference
//! checks of every hand-written gradient.

use do_icbf_core::barriers::ChainEval;
use do_icbf_core::rng::seeded;
use do_icbf_core::{
    build_acc, build_bicycle, build_example1, BarrierChain, ChainLevel, Vector,
};

use do_icbf_testkit::{
    comparison_lemma_worst, fd_grad, grad_rel_err, rel_err, rk4_halving_ratio, sample_box as sample,
    scenario_gradient_error, split,
};

#[test]
fn analytic_gradients_match_finite_differences() {
    for (s, seed) in [(build_acc(), 11), (build_bicycle(), 12), (build_example1(), 13)] {
        let worst = scenario_gradient_error(&s, seed);
        assert!(worst <= 1e-4, "{}: worst relative gradient error {worst}", s.name);
    }
}

/// The closed-form chain levels equal the recursion rebuilt from the base
/// barrier alone.
#[test]
fn closed_form_levels_match_the_recursion() {
    for (s, seed) in [(build_acc(), 21), (build_bicycle(), 22)] {
        let n = s.model.n();
        let mut rng = seeded(seed);
        for chain in &s.safety.chains {
            let derived = BarrierChain::new(
                chain.label.clone(),
                chain.base().clone(),
                (1..=chain.m())
                    .map(|i| {
                        let l = chain.level(i).unwrap();
                        ChainLevel::derived(l.label.clone(), l.gamma.clone())
                    })
                    .collect(),
            )
            .unwrap();
            for _ in 0..100 {
                let z = sample(&mut rng, &s.check_domain);
                let (x, u) = split(&z, n);
                let phi = Vector::zeros(s.model.m());
                let d_hat = Vector::zeros(s.model.p());
                let ev = ChainEval {
                    chain: &derived,
                    model: &s.model,
                    phi: &phi,
                    d_hat: &d_hat,
                    c2: 0.0,
                };
                for i in 1..=chain.m() {
                    let closed = chain.level(i).unwrap().nominal_value(&x, &u).unwrap();
                    let rec = ev.value(i, &x, &u).unwrap();
                    assert!(
                        rel_err(closed, rec, 1.0) <= 1e-5,
                        "{} level {i}: closed {closed} vs recursion {rec}",
                        s.name
                    );
                }
            }
        }
    }
}

#[test]
fn observer_potential_jacobian_matches_gain() {
    for (s, seed) in [(build_acc(), 31), (build_bicycle(), 32), (build_example1(), 33)] {
        let n = s.model.n();
        let mut rng = seeded(seed);
        for _ in 0..100 {
            let z = sample(&mut rng, &s.check_domain);
            let x = z.rows(0, n).into_owned();
            let gain = s.obs.gain().matrix(&x);
            for k in 0..s.model.p() {
                let fd = fd_grad(|y| s.obs.gain().potential(y)[k], &x);
                let row = gain.row(k).transpose();
                assert!(grad_rel_err(&row, &fd) <= 1e-5, "{}: {row} vs {fd}", s.name);
            }
        }
    }
}

#[test]
fn rk4_error_shrinks_sixteenfold_when_dt_halves() {
    let ratio = rk4_halving_ratio();
    assert!(ratio >= 14.0, "ratio {ratio}");
    assert!(ratio <= 18.0, "ratio {ratio}");
}

/// `ḃ = −γ b + s(t)` with `s ≥ 0` and `b(0) ≥ 0` never goes negative.
#[test]
fn comparison_lemma_keeps_scalar_barriers_nonnegative() {
    let (case, min) = comparison_lemma_worst(0x1e33a, 50);
    assert!(min >= -1e-9, "case {case}: min {min}");
}
