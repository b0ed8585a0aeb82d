//! Least-norm safety QP over the auxiliary input `v`:
//!
//! ```text
//! min ‖v‖²  s.t.  pᵢᵀ v ≥ rhsᵢ
//! ```
//!
//! and assembly of the filtered input rate `u̇ = φ + v*`.

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::barriers::{eval_w, BarrierChain, BarrierSpec, ChainEval, EPS_P};
use crate::error::{check_len, Error, Result};
use crate::model::{Matrix, SystemModel, Vector};
use crate::observer::{channel_gain, ObserverConfig, ObserverState};

/// Largest constraint count accepted by [`solve_multi`].
pub const MAX_CONSTRAINTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConstraint {
    pub p_row: Vector,
    pub rhs: f64,
    pub label: String,
}

impl FilterConstraint {
    pub fn new(p_row: Vector, rhs: f64, label: impl Into<String>) -> Self {
        Self {
            p_row,
            rhs,
            label: label.into(),
        }
    }

    pub fn slack(&self, v: &Vector) -> f64 {
        self.p_row.dot(v) - self.rhs
    }

    fn tolerance(&self, v: &Vector) -> f64 {
        1e-9 * self.rhs.abs().max(self.p_row.norm() * v.norm()).max(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub v_star: Vector,
    pub active_labels: Vec<String>,
    pub infeasible: bool,
    pub v_norm: f64,
}

impl FilterResult {
    fn feasible(v_star: Vector, active_labels: Vec<String>) -> Self {
        let v_norm = v_star.norm();
        Self {
            v_star,
            active_labels,
            infeasible: false,
            v_norm,
        }
    }

    fn infeasible(m: usize) -> Self {
        Self {
            v_star: Vector::zeros(m),
            active_labels: Vec::new(),
            infeasible: true,
            v_norm: 0.0,
        }
    }
}

/// Closed-form minimizer for one constraint `pᵀv ≥ f`.
pub fn solve_single(p_row: &Vector, f: f64) -> FilterResult {
    if f <= 0.0 {
        return FilterResult::feasible(Vector::zeros(p_row.len()), Vec::new());
    }
    let pp = p_row.norm_squared();
    if pp.sqrt() <= EPS_P {
        return FilterResult::infeasible(p_row.len());
    }
    FilterResult::feasible(p_row * (f / pp), Vec::new())
}

/// Exact least-norm solution for up to [`MAX_CONSTRAINTS`] half-spaces.
///
/// Enumerates active subsets, solves the equality-constrained least-norm
/// system on each, and keeps the feasible candidate of smallest norm (ties
/// go to the smaller subset). Rows with `‖p‖ ≤ 1e-8` make the problem
/// infeasible when their right side is positive and are otherwise ignored.
pub fn solve_multi(constraints: &[FilterConstraint]) -> Result<FilterResult> {
    let Some(first) = constraints.first() else {
        return Err(Error::contract("solve_multi needs at least one constraint"));
    };
    if constraints.len() > MAX_CONSTRAINTS {
        return Err(Error::config(format!(
            "{} constraints exceed the enumeration bound of {MAX_CONSTRAINTS}",
            constraints.len()
        )));
    }
    let m = first.p_row.len();
    for c in constraints {
        check_len("p_row", m, c.p_row.len())?;
        if !c.rhs.is_finite() || c.p_row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain(format!(
                "non-finite constraint `{}`",
                c.label
            )));
        }
    }
    if constraints.len() == 1 {
        let mut res = solve_single(&first.p_row, first.rhs);
        if !res.infeasible && first.rhs > 0.0 {
            res.active_labels.push(first.label.clone());
        }
        return Ok(res);
    }

    let mut rows = Vec::with_capacity(constraints.len());
    for c in constraints {
        if c.p_row.norm() <= EPS_P {
            if c.rhs > 0.0 {
                return Ok(FilterResult::infeasible(m));
            }
        } else {
            rows.push(c);
        }
    }
    if rows.iter().all(|c| c.rhs <= 0.0) {
        return Ok(FilterResult::feasible(Vector::zeros(m), Vec::new()));
    }

    let k = rows.len();
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|s| (s.count_ones(), *s));

    let mut best: Option<(f64, Vector, u32)> = None;
    for mask in masks {
        let subset: Vec<&FilterConstraint> = (0..k)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| rows[i])
            .collect();
        if subset.len() > m {
            continue;
        }
        let Some(v) = least_norm_on(&subset, m) else {
            continue;
        };
        if !rows.iter().all(|c| c.slack(&v) >= -c.tolerance(&v)) {
            continue;
        }
        let nn = v.norm_squared();
        let better = match &best {
            None => true,
            Some((b, _, _)) => nn < b - 1e-12 * b.max(1e-300),
        };
        if better {
            best = Some((nn, v, mask));
        }
    }

    Ok(match best {
        None => FilterResult::infeasible(m),
        Some((_, v, mask)) => {
            let labels = (0..k)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| rows[i].label.clone())
                .collect();
            FilterResult::feasible(v, labels)
        }
    })
}

/// `v = Pᵀ(PPᵀ)⁻¹ rhs`, or `None` when the Gram matrix is numerically singular.
fn least_norm_on(subset: &[&FilterConstraint], m: usize) -> Option<Vector> {
    let s = subset.len();
    let p = Matrix::from_fn(s, m, |i, j| subset[i].p_row[j]);
    let rhs = Vector::from_iterator(s, subset.iter().map(|c| c.rhs));
    let gram = &p * p.transpose();
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return None;
    }
    let lam = gram.cholesky()?.solve(&rhs);
    Some(p.transpose() * lam)
}

/// How the filter treats the disturbance estimate and the robustness margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// No correction: `v* = 0`.
    Off,
    /// Non-robust integral filter: estimate and margin forced to zero.
    Icbf,
    /// Estimate plus margin.
    DoIcbf,
    /// Same filter as `DoIcbf`; named for scenarios whose barrier is a chain.
    HighOrder,
}

impl FilterMode {
    pub const ALL: [FilterMode; 4] = [Self::Off, Self::Icbf, Self::DoIcbf, Self::HighOrder];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::Icbf => "icbf",
            Self::DoIcbf => "do_icbf",
            Self::HighOrder => "high_order",
        }
    }

    /// Whether the estimate and margin enter the constraints.
    pub fn is_robust(self) -> bool {
        !matches!(self, Self::Icbf)
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown filter mode `{s}` (expected off, icbf, do_icbf or high_order)"
                ))
            })
    }
}

/// Barriers enforced by the filter. Single barriers contribute one
/// constraint each; chains contribute their top level only.
#[derive(Debug, Clone, Default)]
pub struct SafetySet {
    pub barriers: Vec<BarrierSpec>,
    pub chains: Vec<BarrierChain>,
}

impl SafetySet {
    pub fn is_empty(&self) -> bool {
        self.barriers.is_empty() && self.chains.is_empty()
    }

    /// Labels of every logged barrier value: single barriers first, then each
    /// chain level in order.
    pub fn value_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.barriers.iter().map(|b| b.label.clone()).collect();
        for c in &self.chains {
            out.extend((0..=c.m()).map(|i| c.level_label(i).to_string()));
        }
        out
    }

    /// Labels of the constraints, in the order they are built.
    pub fn constraint_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.barriers.iter().map(|b| b.label.clone()).collect();
        out.extend(self.chains.iter().map(|c| c.level_label(c.m()).to_string()));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub v_star: Vector,
    pub d_hat: Vector,
    /// Barrier values in [`SafetySet::value_labels`] order.
    pub values: Vec<f64>,
    /// `pᵀv* − (w + c)` per constraint, in [`SafetySet::constraint_labels`] order.
    pub slacks: Vec<f64>,
    pub margins: Vec<f64>,
    pub active_labels: Vec<String>,
    pub infeasible: bool,
}

impl Diagnostics {
    /// Largest margin over the constraints.
    pub fn c_margin(&self) -> f64 {
        self.margins.iter().copied().fold(0.0, f64::max)
    }
}

/// Filtered input rate `φ + v*` at `(x, u, t)` and per-constraint diagnostics.
///
/// Infeasibility is reported through `Diagnostics::infeasible` with `v* = 0`.
#[allow(clippy::too_many_arguments)]
pub fn safe_rate(
    model: &SystemModel,
    safety: &SafetySet,
    phi: &Vector,
    obs: &ObserverConfig,
    obs_state: &ObserverState,
    x: &Vector,
    u: &Vector,
    t: f64,
    mode: FilterMode,
) -> Result<(Vector, Diagnostics)> {
    check_len("x", model.n(), x.len())?;
    check_len("u", model.m(), u.len())?;
    check_len("phi", model.m(), phi.len())?;
    let d_hat = obs.estimate(obs_state, x)?;
    let (d_used, c2) = if mode.is_robust() {
        (d_hat.clone(), obs.error_bound_c2(t)?)
    } else {
        (Vector::zeros(model.p()), 0.0)
    };

    let mut values = Vec::new();
    let mut constraints = Vec::new();
    let mut margins = Vec::new();

    for spec in &safety.barriers {
        let (gx, gu) = spec.gradients(x, u)?;
        let w = eval_w(spec, model, phi, x, u, &d_used)?;
        let c = channel_gain(&gx, model, x)? * c2;
        values.push(spec.h(x, u));
        margins.push(c);
        constraints.push(FilterConstraint::new(gu, w + c, spec.label.clone()));
    }
    for chain in &safety.chains {
        let eval = ChainEval {
            chain,
            model,
            phi,
            d_hat: &d_used,
            c2,
        };
        let top = chain.m();
        for i in 0..=top {
            values.push(eval.value(i, x, u)?);
        }
        let below_x = eval.gradients(top - 1, x, u)?.0;
        let (_, gu) = eval.gradients(top, x, u)?;
        let w = eval.w(top, x, u)?;
        let c = channel_gain(&below_x, model, x)? * c2;
        margins.push(c);
        constraints.push(FilterConstraint::new(gu, w + c, chain.level_label(top)));
    }

    let res = if mode == FilterMode::Off || constraints.is_empty() {
        FilterResult::feasible(Vector::zeros(model.m()), Vec::new())
    } else {
        solve_multi(&constraints)?
    };
    let slacks = constraints.iter().map(|c| c.slack(&res.v_star)).collect();
    let rate = phi + &res.v_star;
    Ok((
        rate,
        Diagnostics {
            v_star: res.v_star,
            d_hat,
            values,
            slacks,
            margins,
            active_labels: res.active_labels,
            infeasible: res.infeasible,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn slack_constraint_gives_zero() {
        let r = solve_single(&v(&[3.0, -1.0]), -1.0);
        assert_eq!(r.v_star, v(&[0.0, 0.0]));
        assert!(!r.infeasible);
    }

    #[test]
    fn kkt_formula() {
        let r = solve_single(&v(&[2.0, 0.0]), 4.0);
        assert_eq!(r.v_star, v(&[2.0, 0.0]));
        assert_eq!(r.v_norm, 2.0);
    }

    #[test]
    fn zero_normal_with_positive_rhs_is_infeasible() {
        assert!(solve_single(&v(&[0.0]), 1.0).infeasible);
        assert!(!solve_single(&v(&[0.0]), 0.0).infeasible);
    }

    #[test]
    fn interval_example() {
        let cs = [
            FilterConstraint::new(v(&[1.0]), 2.0, "a"),
            FilterConstraint::new(v(&[-1.0]), -5.0, "b"),
        ];
        let r = solve_multi(&cs).unwrap();
        assert_eq!(r.v_star[0], 2.0);
        assert_eq!(r.active_labels, vec!["a".to_string()]);
    }

    #[test]
    fn contradictory_pair_is_infeasible() {
        let cs = [
            FilterConstraint::new(v(&[1.0]), 1.0, "a"),
            FilterConstraint::new(v(&[-1.0]), 1.0, "b"),
        ];
        assert!(solve_multi(&cs).unwrap().infeasible);
    }

    #[test]
    fn two_active_in_plane() {
        // v1 ≥ 1, v2 ≥ 1 → (1, 1)
        let cs = [
            FilterConstraint::new(v(&[1.0, 0.0]), 1.0, "a"),
            FilterConstraint::new(v(&[0.0, 1.0]), 1.0, "b"),
        ];
        let r = solve_multi(&cs).unwrap();
        assert!((r.v_star - v(&[1.0, 1.0])).norm() < 1e-14);
        assert_eq!(r.active_labels.len(), 2);
    }

    #[test]
    fn duplicate_rows_do_not_break_enumeration() {
        let cs = [
            FilterConstraint::new(v(&[1.0, 1.0]), 2.0, "a"),
            FilterConstraint::new(v(&[1.0, 1.0]), 2.0, "b"),
        ];
        let r = solve_multi(&cs).unwrap();
        assert!((r.v_star - v(&[1.0, 1.0])).norm() < 1e-14);
        assert_eq!(r.active_labels, vec!["a".to_string()]);
    }

    #[test]
    fn enumeration_bound_and_dims() {
        let many: Vec<_> = (0..9)
            .map(|i| FilterConstraint::new(v(&[1.0]), -1.0, format!("c{i}")))
            .collect();
        assert!(matches!(solve_multi(&many), Err(Error::Config(_))));
        let mixed = [
            FilterConstraint::new(v(&[1.0]), 1.0, "a"),
            FilterConstraint::new(v(&[1.0, 2.0]), 1.0, "b"),
        ];
        assert!(matches!(solve_multi(&mixed), Err(Error::Dimension { .. })));
        assert!(solve_multi(&[]).is_err());
    }

    #[test]
    fn mode_names_round_trip() {
        for m in FilterMode::ALL {
            assert_eq!(m.as_str().parse::<FilterMode>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("robust".parse::<FilterMode>().is_err());
    }
}
