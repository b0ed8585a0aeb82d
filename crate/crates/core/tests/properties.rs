use do_icbf_core::filter::{solve_multi, solve_single, FilterConstraint};
use do_icbf_core::laws::wrap_angle;
use do_icbf_core::{DisturbanceBounds, Matrix, ObserverConfig, ObserverGain, Vector};
use proptest::prelude::*;

fn constraint_set(m: usize) -> impl Strategy<Value = Vec<FilterConstraint>> {
    prop::collection::vec((prop::collection::vec(-5.0f64..5.0, m), -5.0f64..5.0), 1..=4).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (p, b))| FilterConstraint::new(Vector::from_vec(p), b, format!("c{i}")))
            .collect()
    })
}

proptest! {
    #[test]
    fn feasible_answers_satisfy_every_constraint(cs in (1usize..4).prop_flat_map(constraint_set)) {
        let r = solve_multi(&cs).unwrap();
        if !r.infeasible {
            for c in &cs {
                let tol = 1e-9 * c.rhs.abs().max(1.0).max(c.p_row.norm() * r.v_norm);
                prop_assert!(c.slack(&r.v_star) >= -tol);
            }
        }
    }

    #[test]
    fn slack_constraints_leave_the_rate_alone(cs in (1usize..4).prop_flat_map(constraint_set)) {
        let relaxed: Vec<_> = cs
            .into_iter()
            .map(|c| FilterConstraint::new(c.p_row.clone(), -c.rhs.abs(), c.label.clone()))
            .collect();
        let r = solve_multi(&relaxed).unwrap();
        prop_assert!(!r.infeasible);
        prop_assert_eq!(r.v_norm, 0.0);
    }

    #[test]
    fn single_solution_scales_linearly(p in prop::collection::vec(-5.0f64..5.0, 3), f in 0.01f64..5.0, k in 0.1f64..10.0) {
        let p = Vector::from_vec(p);
        prop_assume!(p.norm() > 1e-3);
        let a = solve_single(&p, f).v_star;
        let b = solve_single(&p, k * f).v_star;
        prop_assert!((a * k - b).norm() <= 1e-12 * (1.0 + k * f));
    }

    #[test]
    fn wrapped_angles_stay_in_range(a in -1e4f64..1e4) {
        let w = wrap_angle(a);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        let turns = (a - w) / std::f64::consts::TAU;
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn envelope_is_monotone_toward_its_limit(beta in 0.6f64..5.0, k0 in 0.0f64..5.0, k1 in 0.0f64..5.0, t in 0.0f64..50.0) {
        let obs = ObserverConfig::new(beta, ObserverGain::Constant(Matrix::identity(1, 1)), 1.0, DisturbanceBounds::new(k0, k1).unwrap()).unwrap();
        let now = obs.error_bound_c2(t).unwrap();
        let later = obs.error_bound_c2(t + 0.5).unwrap();
        let limit = obs.ultimate_bound();
        prop_assert!((later - limit).abs() <= (now - limit).abs() + 1e-12);
        prop_assert!((obs.error_bound_c2(0.0).unwrap() - obs.e0_bound()).abs() <= 1e-12 * obs.e0_bound().max(1.0));
    }
}
