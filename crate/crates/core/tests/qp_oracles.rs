//! The least-norm QP against three independent references: the scalar
//! interval intersection, a refined grid search with an active-set polish,
//! and a dual active-set (Goldfarb–Idnani) solver written from scratch.

use do_icbf_core::filter::{solve_multi, solve_single};
use do_icbf_core::rng::{seeded, uniform};
use do_icbf_core::Vector;

use do_icbf_testkit::{goldfarb_idnani, grid_oracle, interval_oracle, random_instance, rng_usize, GiOutcome};

#[test]
fn single_constraint_matches_kkt_formula() {
    let mut rng = seeded(0x5eed_0001);
    for _ in 0..1000 {
        let m = 1 + (rng_usize(&mut rng, 3));
        let p = Vector::from_iterator(m, (0..m).map(|_| uniform(&mut rng, -5.0, 5.0)));
        let f = uniform(&mut rng, -5.0, 5.0);
        let r = solve_single(&p, f);
        let expect = if f <= 0.0 { Vector::zeros(m) } else { &p * (f / p.norm_squared()) };
        assert_eq!(r.v_star, expect);
        if f > 0.0 {
            assert!((p.dot(&r.v_star) - f).abs() <= 1e-12 * f.abs().max(1.0));
        }
    }
}

#[test]
fn one_constraint_reduces_to_closed_form() {
    let mut rng = seeded(0x5eed_0002);
    for _ in 0..1000 {
        let m = 1 + rng_usize(&mut rng, 3);
        let cs = random_instance(&mut rng, m, 1);
        let multi = solve_multi(&cs).unwrap();
        let single = solve_single(&cs[0].p_row, cs[0].rhs);
        assert_eq!(multi.v_star, single.v_star);
        assert_eq!(multi.infeasible, single.infeasible);
    }
}

#[test]
fn scalar_instances_match_interval_oracle() {
    let mut rng = seeded(0x5eed_0003);
    for _ in 0..1000 {
        let k = 1 + rng_usize(&mut rng, 3);
        let cs = random_instance(&mut rng, 1, k);
        let r = solve_multi(&cs).unwrap();
        match interval_oracle(&cs) {
            None => assert!(r.infeasible, "{cs:?}"),
            Some(v) => {
                assert!(!r.infeasible, "{cs:?}");
                assert!((r.v_star[0] - v).abs() <= 1e-6, "{} vs {v}", r.v_star[0]);
            }
        }
    }
}

#[test]
fn planar_and_spatial_instances_match_grid_oracle() {
    let mut rng = seeded(0x5eed_0004);
    let mut compared = 0;
    for _ in 0..1000 {
        let m = 2 + rng_usize(&mut rng, 2);
        let k = 1 + rng_usize(&mut rng, 3);
        let cs = random_instance(&mut rng, m, k);
        let r = solve_multi(&cs).unwrap();
        match grid_oracle(&cs, m) {
            None => assert!(r.infeasible, "oracle found no feasible point: {cs:?}"),
            Some(v) => {
                assert!(!r.infeasible, "{cs:?}");
                let err = (&r.v_star - &v).norm();
                assert!(err <= 1e-6, "err {err}: {:?} vs {:?} for {cs:?}", r.v_star, v);
                compared += 1;
            }
        }
    }
    assert!(compared > 500);
}

#[test]
fn matches_dual_active_set_solver() {
    let mut rng = seeded(0x5eed_0005);
    for _ in 0..1000 {
        let m = 1 + rng_usize(&mut rng, 3);
        let k = 1 + rng_usize(&mut rng, 3);
        let cs = random_instance(&mut rng, m, k);
        let r = solve_multi(&cs).unwrap();
        match goldfarb_idnani(&cs, m) {
            GiOutcome::Infeasible => assert!(r.infeasible, "{cs:?}"),
            GiOutcome::Optimal(v) => {
                assert!(!r.infeasible, "{cs:?}");
                let err = (&r.v_star - &v).norm();
                assert!(err <= 1e-9, "err {err} for {cs:?}");
            }
        }
    }
}

#[test]
fn first_order_optimality_and_complementarity() {
    let mut rng = seeded(0x5eed_0006);
    for _ in 0..1000 {
        let m = 1 + rng_usize(&mut rng, 3);
        let k = 1 + rng_usize(&mut rng, 3);
        let cs = random_instance(&mut rng, m, k);
        let r = solve_multi(&cs).unwrap();
        if r.infeasible {
            continue;
        }
        for c in &cs {
            let slack = c.slack(&r.v_star);
            assert!(slack >= -1e-9 * c.rhs.abs().max(1.0), "violated {slack}");
            if r.active_labels.contains(&c.label) {
                assert!(slack.abs() <= 1e-9 * c.rhs.abs().max(1.0), "active with slack {slack}");
            }
        }
        if r.v_norm > 0.0 {
            let shrunk = &r.v_star - &r.v_star * (1e-3 / r.v_norm);
            assert!(
                cs.iter().any(|c| c.slack(&shrunk) < 0.0),
                "a shorter feasible point exists for {cs:?}"
            );
        }
    }
}
