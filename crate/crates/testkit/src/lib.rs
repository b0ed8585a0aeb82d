//! Reference implementations used only by tests: a dual active-set QP
//! solver, interval and grid oracles for the least-norm filter problem, and
//! central differences.

use do_icbf_core::filter::FilterConstraint;
use do_icbf_core::rng::{seeded, uniform, SplitMix64};
use do_icbf_core::{rk4_step, DomainBox, Matrix, Scenario, Vector};

pub enum GiOutcome {
    Optimal(Vector),
    Infeasible,
}

/// Dual active-set method for `min ½‖v‖²  s.t.  pᵢᵀv ≥ bᵢ`, starting from the
/// unconstrained minimizer and adding the most violated constraint each round.
pub fn goldfarb_idnani(cs: &[FilterConstraint], m: usize) -> GiOutcome {
    let mut x = Vector::zeros(m);
    let mut active: Vec<usize> = Vec::new();
    let mut duals: Vec<f64> = Vec::new();
    let tol = |c: &FilterConstraint| 1e-12 * c.rhs.abs().max(1.0);

    for _ in 0..200 {
        let violated = (0..cs.len())
            .filter(|i| !active.contains(i))
            .map(|i| (i, cs[i].p_row.dot(&x) - cs[i].rhs))
            .filter(|&(i, s)| s < -tol(&cs[i]))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let Some((q, _)) = violated else {
            return GiOutcome::Optimal(x);
        };
        let mut uq = 0.0;
        loop {
            let s = cs[q].p_row.dot(&x) - cs[q].rhs;
            let n = Matrix::from_fn(m, active.len(), |i, j| cs[active[j]].p_row[i]);
            let np = &cs[q].p_row;
            let (z, r) = if active.is_empty() {
                (np.clone(), Vector::zeros(0))
            } else {
                let g = n.transpose() * &n;
                let Some(ginv) = g.try_inverse() else {
                    return GiOutcome::Infeasible;
                };
                let r = &ginv * (n.transpose() * np);
                (np - &n * &r, r)
            };
            // largest dual step that keeps active multipliers non-negative
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let ratio = duals[j] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let zz = z.dot(np);
            // with m independent active rows z is zero up to rounding
            let t2 = if active.len() < m && z.norm() > 1e-9 * np.norm() {
                -s / zz
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return GiOutcome::Infeasible;
            }
            if t2.is_infinite() {
                for (j, rj) in r.iter().enumerate() {
                    duals[j] -= t1 * rj;
                }
                uq += t1;
                let d = drop.unwrap();
                active.remove(d);
                duals.remove(d);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            for (j, rj) in r.iter().enumerate() {
                duals[j] -= t * rj;
            }
            uq += t;
            if t2 <= t1 {
                active.push(q);
                duals.push(uq);
                break;
            }
            let d = drop.unwrap();
            active.remove(d);
            duals.remove(d);
        }
    }
    panic!("dual active-set iteration did not terminate");
}

/// Relative difference `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn decay_error(dt: f64) -> f64 {
    let steps = (1.0 / dt).round() as usize;
    let mut z = Vector::from_element(1, 1.0);
    for k in 0..steps {
        z = rk4_step(|_, y| Ok(-y), k as f64 * dt, &z, dt).unwrap();
    }
    (z[0] - (-1.0f64).exp()).abs()
}

/// Worst case over `cases` random scalar systems `ḃ = −γ b + s(t)` with
/// `s ≥ 0` and `b(0) ≥ 0`, integrated with RK4 for 10 s: `(case, min b)`.
pub fn comparison_lemma_worst(seed: u64, cases: usize) -> (usize, f64) {
    let mut rng = seeded(seed);
    let mut worst = (0, f64::INFINITY);
    for case in 0..cases {
        let gamma = uniform(&mut rng, 0.05, 20.0);
        let b0 = if case % 5 == 0 { 0.0 } else { uniform(&mut rng, 0.0, 3.0) };
        let amp = uniform(&mut rng, 0.0, 2.0);
        let omega = uniform(&mut rng, 0.1, 10.0);
        let phase = uniform(&mut rng, 0.0, std::f64::consts::TAU);
        // non-negative forcing that touches zero periodically
        let s = move |t: f64| amp * (1.0 + (omega * t + phase).sin()).powi(2) / 4.0;
        let dt = 1e-3;
        let mut b = Vector::from_element(1, b0);
        let mut min = b0;
        for k in 0..10_000 {
            b = rk4_step(|t, y| Ok(Vector::from_element(1, -gamma * y[0] + s(t))), k as f64 * dt, &b, dt)
                .expect("finite scalar system");
            min = min.min(b[0]);
        }
        if min < worst.1 {
            worst = (case, min);
        }
    }
    worst
}

/// Error ratio of RK4 on `ż = −z` over `[0, 1]` when `dt` halves from `1e-2`.
pub fn rk4_halving_ratio() -> f64 {
    decay_error(1e-2) / decay_error(5e-3)
}

pub fn split(z: &Vector, n: usize) -> (Vector, Vector) {
    (z.rows(0, n).into_owned(), z.rows(n, z.len() - n).into_owned())
}

pub fn grad_rel_err(analytic: &Vector, fd: &Vector) -> f64 {
    (analytic - fd).norm() / analytic.norm().max(fd.norm()).max(1.0)
}

/// Every analytic gradient in the scenario (single barriers, chain bases and
/// analytic levels) against central differences of its own value.
pub fn scenario_gradient_error(s: &Scenario, seed: u64) -> f64 {
    let n = s.model.n();
    let mut rng = seeded(seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let z = sample_box(&mut rng, &s.check_domain);
        let (x, u) = split(&z, n);
        let joined = |gx: Vector, gu: Vector| Vector::from_iterator(z.len(), gx.iter().chain(gu.iter()).copied());
        for b in &s.safety.barriers {
            let (gx, gu) = b.gradients(&x, &u).unwrap();
            let fd = fd_grad(|w| { let (a, c) = split(w, n); b.h(&a, &c) }, &z);
            worst = worst.max(grad_rel_err(&joined(gx, gu), &fd));
        }
        for chain in &s.safety.chains {
            let base = chain.base();
            let (gx, gu) = base.gradients(&x, &u).unwrap();
            let fd = fd_grad(|w| { let (a, c) = split(w, n); base.h(&a, &c) }, &z);
            worst = worst.max(grad_rel_err(&joined(gx, gu), &fd));
            for i in 1..=chain.m() {
                let level = chain.level(i).unwrap();
                let Some((gx, gu)) = level.nominal_gradients(&x, &u) else { continue };
                let fd = fd_grad(
                    |w| {
                        let (a, c) = split(w, n);
                        level.nominal_value(&a, &c).unwrap()
                    },
                    &z,
                );
                worst = worst.max(grad_rel_err(&joined(gx, gu), &fd));
            }
        }
    }
    worst
}

/// Central difference with a step scaled to the coordinate.
pub fn fd_grad(f: impl Fn(&Vector) -> f64, z: &Vector) -> Vector {
    Vector::from_iterator(
        z.len(),
        (0..z.len()).map(|i| {
            let h = 1e-6 * z[i].abs().max(1.0);
            let mut a = z.clone();
            let mut b = z.clone();
            a[i] += h;
            b[i] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        }),
    )
}

/// Uniform point of a box; degenerate axes stay at their single value.
pub fn sample_box(rng: &mut SplitMix64, domain: &DomainBox) -> Vector {
    Vector::from_iterator(
        domain.lower.len(),
        domain
            .lower
            .iter()
            .zip(&domain.upper)
            .map(|(&lo, &hi)| if lo == hi { lo } else { uniform(rng, lo, hi) }),
    )
}

pub fn rng_usize(rng: &mut SplitMix64, n: usize) -> usize {
    (uniform(rng, 0.0, n as f64) as usize).min(n - 1)
}

pub fn random_instance(rng: &mut SplitMix64, m: usize, k: usize) -> Vec<FilterConstraint> {
    (0..k)
        .map(|i| {
            let p = Vector::from_iterator(m, (0..m).map(|_| uniform(rng, -5.0, 5.0)));
            FilterConstraint::new(p, uniform(rng, -5.0, 5.0), format!("c{i}"))
        })
        .collect()
}

pub fn feasible_at(cs: &[FilterConstraint], v: &Vector, tol: f64) -> bool {
    cs.iter().all(|c| c.p_row.dot(v) - c.rhs >= -tol)
}

/// Scalar case: intersect the half-lines.
pub fn interval_oracle(cs: &[FilterConstraint]) -> Option<f64> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for c in cs {
        let p = c.p_row[0];
        if p.abs() <= 1e-8 {
            if c.rhs > 0.0 {
                return None;
            }
        } else if p > 0.0 {
            lo = lo.max(c.rhs / p);
        } else {
            hi = hi.min(c.rhs / p);
        }
    }
    (lo <= hi).then(|| 0.0f64.clamp(lo, hi))
}

/// Least-norm point on `{pᵢᵀv = rhsᵢ, i ∈ S}`.
pub fn project(cs: &[&FilterConstraint], m: usize) -> Option<Vector> {
    let p = Matrix::from_fn(cs.len(), m, |i, j| cs[i].p_row[j]);
    let b = Vector::from_iterator(cs.len(), cs.iter().map(|c| c.rhs));
    let g = &p * p.transpose();
    let y = g.try_inverse()? * b;
    Some(p.transpose() * y)
}

/// Smallest `t ≥ 0` with `t·dir` feasible (each constraint is an interval in `t`).
pub fn ray_hit(cs: &[FilterConstraint], dir: &Vector) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for c in cs {
        let a = c.p_row.dot(dir);
        if a.abs() < 1e-15 {
            if c.rhs > 0.0 {
                return None;
            }
        } else if a > 0.0 {
            lo = lo.max(c.rhs / a);
        } else {
            hi = hi.min(c.rhs / a);
        }
    }
    (lo <= hi).then_some(lo)
}

pub fn direction(angles: &[f64]) -> Vector {
    match *angles {
        [th] => Vector::from_vec(vec![th.cos(), th.sin()]),
        [th, ph] => Vector::from_vec(vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]),
        _ => unreachable!(),
    }
}

/// Grid over ray directions: each ray's first feasible point is exact, so
/// the least-norm point is the best ray. The direction grid is refined
/// around the incumbent, then the constraints tight there are projected on.
pub fn grid_oracle(cs: &[FilterConstraint], m: usize) -> Option<Vector> {
    use std::f64::consts::PI;
    let origin = Vector::zeros(m);
    if feasible_at(cs, &origin, 0.0) {
        return Some(origin);
    }
    let eval = |angles: &[f64]| ray_hit(cs, &direction(angles)).map(|t| (t, angles.to_vec()));
    let better = |a: &Option<(f64, Vec<f64>)>, b: &Option<(f64, Vec<f64>)>| match (a, b) {
        (Some((ta, _)), Some((tb, _))) => ta < tb,
        (Some(_), None) => true,
        _ => false,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let (mut steps, per_axis) = if m == 2 {
        (vec![2.0 * PI / 3600.0], 3600)
    } else {
        (vec![PI / 180.0, 2.0 * PI / 360.0], 360)
    };
    for i in 0..per_axis {
        if m == 2 {
            let cand = eval(&[i as f64 * steps[0]]);
            if better(&cand, &best) {
                best = cand;
            }
        } else {
            for j in 0..=180 {
                let cand = eval(&[j as f64 * steps[0], i as f64 * steps[1]]);
                if better(&cand, &best) {
                    best = cand;
                }
            }
        }
    }
    let (_, mut at) = best.clone()?;
    for _ in 0..400 {
        let k = 10i32;
        let before = best.as_ref().map(|b| b.0);
        let center = at.clone();
        for a in -k..=k {
            if m == 2 {
                let cand = eval(&[center[0] + a as f64 * steps[0] / k as f64]);
                if better(&cand, &best) {
                    best = cand;
                }
            } else {
                for b in -k..=k {
                    let cand = eval(&[
                        center[0] + a as f64 * steps[0] / k as f64,
                        center[1] + b as f64 * steps[1] / k as f64,
                    ]);
                    if better(&cand, &best) {
                        best = cand;
                    }
                }
            }
        }
        at = best.as_ref().unwrap().1.clone();
        // keep the window while the incumbent still moves
        if best.as_ref().map(|b| b.0) == before {
            for s in &mut steps {
                *s *= 0.3;
            }
            if steps[0] < 1e-15 {
                break;
            }
        }
    }
    let (t, angles) = best?;
    let best = direction(&angles) * t;

    // polish on the constraints that are (nearly) tight at the grid optimum
    let scale = best.norm().max(1.0);
    let near: Vec<&FilterConstraint> = cs
        .iter()
        .filter(|c| c.p_row.dot(&best) - c.rhs <= 0.05 * scale * c.p_row.norm().max(1.0))
        .collect();
    let mut polished: Option<Vector> = None;
    for mask in 1u32..(1 << near.len()) {
        let sub: Vec<&FilterConstraint> = (0..near.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| near[i])
            .collect();
        if let Some(v) = project(&sub, m) {
            if feasible_at(cs, &v, 1e-9 * scale)
                && (&v - &best).norm() <= 0.1 * scale
                && polished.as_ref().map_or(true, |p| v.norm() < p.norm())
            {
                polished = Some(v);
            }
        }
    }
    Some(polished.unwrap_or(best))
}
