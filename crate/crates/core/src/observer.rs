//! Nonlinear disturbance observer and its estimation-error envelope.
//!
//! The estimate is `d̂ = r + β q(x)` with internal state driven by
//! `ṙ = −β L_d(x) (F(x,u) + ℓ(x) d̂)`, where `∂q/∂x = L_d`. The envelope
//! `c₂(t)` bounds `‖d̂ − d‖` given an initial-error bound `E₀`, the rate bound
//! `k₁` and the split constant `μ₁ ∈ (0, 2β)`.

use std::fmt;
use std::sync::Arc;

use log::warn;

use crate::error::{check_len, Error, Result};
use crate::model::{DisturbanceBounds, Matrix, SystemModel, Vector};

pub type GainFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type PotentialFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Observer gain `L_d(x)` together with its potential `q(x)`.
#[derive(Clone)]
pub enum ObserverGain {
    /// Constant `p × n` gain; the potential is `q(x) = L_d x`.
    Constant(Matrix),
    /// State-dependent gain with a user-supplied potential.
    StateDependent { gain: GainFn, potential: PotentialFn },
}

impl fmt::Debug for ObserverGain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObserverGain::Constant(m) => f.debug_tuple("Constant").field(m).finish(),
            ObserverGain::StateDependent { .. } => f.write_str("StateDependent(..)"),
        }
    }
}

impl ObserverGain {
    /// `L_d = −(ℓᵀℓ)⁻¹ℓᵀ` for a constant full-column-rank channel, sign as
    /// printed in the original recipe. Note that this gives `L_d ℓ = −I`,
    /// which fails [`ObserverConfig::check_gain_condition`].
    pub fn from_full_column_rank(ell: &Matrix) -> Result<Self> {
        let gram = ell.transpose() * ell;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Singular("ℓᵀℓ is not invertible".into()))?;
        Ok(ObserverGain::Constant(-(inv * ell.transpose())))
    }

    pub fn matrix(&self, x: &Vector) -> Matrix {
        match self {
            ObserverGain::Constant(m) => m.clone(),
            ObserverGain::StateDependent { gain, .. } => gain(x),
        }
    }

    pub fn potential(&self, x: &Vector) -> Vector {
        match self {
            ObserverGain::Constant(m) => m * x,
            ObserverGain::StateDependent { potential, .. } => potential(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ObserverConfig {
    beta: f64,
    gain: ObserverGain,
    mu1: f64,
    e0_bound: f64,
    bounds: DisturbanceBounds,
}

/// Internal observer state `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub r: Vector,
}

impl ObserverState {
    pub fn new(r: Vector) -> Result<Self> {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDomain("observer state has non-finite entries".into()));
        }
        Ok(Self { r })
    }

    pub fn zeros(p: usize) -> Self {
        Self { r: Vector::zeros(p) }
    }
}

/// Outcome of the sampled observer gain check.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCheck {
    pub samples: usize,
    pub failures: usize,
    /// Smallest eigenvalue of the symmetric part of `L_d ℓ` seen on the samples.
    pub min_eigenvalue: f64,
}

impl GainCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl ObserverConfig {
    /// `e0_bound` starts at `bounds.k0`; use [`Self::with_initial_error_bound`]
    /// or [`Self::default_initial_error_bound`] once `d̂(0)` is known.
    pub fn new(beta: f64, gain: ObserverGain, mu1: f64, bounds: DisturbanceBounds) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::config(format!("observer beta must be > 0, got {beta}")));
        }
        if !(mu1 > 0.0 && mu1 < 2.0 * beta) {
            return Err(Error::config(format!(
                "observer mu1 must satisfy 0 < mu1 < 2*beta = {}, got {mu1}",
                2.0 * beta
            )));
        }
        Ok(Self {
            beta,
            gain,
            mu1,
            e0_bound: bounds.k0,
            bounds,
        })
    }

    pub fn with_initial_error_bound(mut self, e0: f64) -> Result<Self> {
        if !(e0 >= 0.0 && e0.is_finite()) {
            return Err(Error::config(format!("initial error bound must be >= 0, got {e0}")));
        }
        self.e0_bound = e0;
        Ok(self)
    }

    /// `E₀ = k₀ + ‖d̂(0)‖`, the tightest bound available without knowing `d(0)`.
    pub fn default_initial_error_bound(self, d_hat0: &Vector) -> Result<Self> {
        let e0 = self.bounds.k0 + d_hat0.norm();
        self.with_initial_error_bound(e0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn lambda(&self) -> f64 {
        self.beta - 0.5 * self.mu1
    }

    pub fn e0_bound(&self) -> f64 {
        self.e0_bound
    }

    pub fn bounds(&self) -> DisturbanceBounds {
        self.bounds
    }

    pub fn gain(&self) -> &ObserverGain {
        &self.gain
    }

    /// `d̂ = r + β q(x)`.
    pub fn estimate(&self, st: &ObserverState, x: &Vector) -> Result<Vector> {
        let q = self.gain.potential(x);
        check_len("r", q.len(), st.r.len())?;
        Ok(&st.r + self.beta * q)
    }

    /// `ṙ = −β L_d(x) (F(x,u) + ℓ(x) d̂)`.
    pub fn observer_rhs(
        &self,
        model: &SystemModel,
        x: &Vector,
        u: &Vector,
        st: &ObserverState,
    ) -> Result<Vector> {
        check_len("r", model.p(), st.r.len())?;
        let d_hat = self.estimate(st, x)?;
        let flow = model.eval_dynamics(x, u, &d_hat)?;
        let ld = self.gain.matrix(x);
        check_len("L_d rows", model.p(), ld.nrows())?;
        check_len("L_d cols", model.n(), ld.ncols())?;
        Ok(-self.beta * ld * flow)
    }

    /// Upper bound on `‖d̂(t) − d(t)‖`.
    pub fn error_bound_c2(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::contract(format!("envelope time must be >= 0, got {t}")));
        }
        let lam = self.lambda();
        let k1 = self.bounds.k1;
        let e0 = self.e0_bound;
        let decay = (-2.0 * lam * t).exp();
        let denom = 2.0 * self.mu1 * lam;
        Ok(((denom * e0 * e0 * decay + k1 * k1 * (1.0 - decay)) / denom).sqrt())
    }

    /// Asymptotic value of the envelope, `k₁ / √(2 μ₁ λ)`.
    pub fn ultimate_bound(&self) -> f64 {
        self.bounds.k1 / (2.0 * self.mu1 * self.lambda()).sqrt()
    }

    /// Robustness margin `c = ‖(∂h/∂x) ℓ(x)‖ · c₂(t)`.
    pub fn margin_c(
        &self,
        grad_h_x: &Vector,
        model: &SystemModel,
        x: &Vector,
        t: f64,
    ) -> Result<f64> {
        let c1 = channel_gain(grad_h_x, model, x)?;
        if c1 == 0.0 {
            return Ok(0.0);
        }
        Ok(c1 * self.error_bound_c2(t)?)
    }

    /// Samples `L_d(x) ℓ(x)` and checks `eᵀ L_d ℓ e ≥ eᵀe` (smallest eigenvalue
    /// of the symmetric part ≥ 1), which is the property the envelope relies
    /// on. Failures are logged, not returned as errors.
    pub fn check_gain_condition(&self, model: &SystemModel, states: &[Vector]) -> Result<GainCheck> {
        let mut failures = 0;
        let mut min_eig = f64::INFINITY;
        for x in states {
            let ld = self.gain.matrix(x);
            let l = model.channel(x)?;
            check_len("L_d cols", model.n(), ld.ncols())?;
            let prod = ld * l;
            let sym = (&prod + prod.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues().min();
            min_eig = min_eig.min(eig);
            if eig < 1.0 - 1e-12 {
                failures += 1;
            }
        }
        if failures > 0 {
            warn!(
                "observer gain condition fails on {failures}/{} sampled states for model `{}` (min eigenvalue of sym(L_d ℓ) = {min_eig})",
                states.len(),
                model.name
            );
        }
        Ok(GainCheck {
            samples: states.len(),
            failures,
            min_eigenvalue: min_eig,
        })
    }
}

/// `‖(∂h/∂x) ℓ(x)‖`, the Euclidean norm of the `1 × p` row.
pub fn channel_gain(grad_h_x: &Vector, model: &SystemModel, x: &Vector) -> Result<f64> {
    check_len("grad_h_x", model.n(), grad_h_x.len())?;
    let l = model.channel(x)?;
    Ok((l.transpose() * grad_h_x).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model() -> SystemModel {
        // ẋ = (x2, -x1 + u, 0), ℓ = e2
        SystemModel::new(
            "scalar",
            (3, 1, 1),
            |x, u| Vector::from_vec(vec![x[1], -x[0] + u[0], 0.0]),
            |_| Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
            |_| Vector::from_vec(vec![0.0]),
        )
        .unwrap()
    }

    fn first_coord_gain() -> ObserverGain {
        ObserverGain::Constant(Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]))
    }

    fn second_coord_gain() -> ObserverGain {
        ObserverGain::Constant(Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]))
    }

    fn cfg(e0: f64, k1: f64) -> ObserverConfig {
        ObserverConfig::new(1.0, second_coord_gain(), 1.0, DisturbanceBounds::new(2.0, k1).unwrap())
            .unwrap()
            .with_initial_error_bound(e0)
            .unwrap()
    }

    #[test]
    fn estimate_direct_formula() {
        let c = ObserverConfig::new(1.0, first_coord_gain(), 1.0, DisturbanceBounds::new(1.0, 0.0).unwrap())
            .unwrap();
        let x = Vector::from_vec(vec![3.0, 7.0, -1.0]);
        let d = c.estimate(&ObserverState::zeros(1), &x).unwrap();
        assert_eq!(d.as_slice(), &[3.0]);
    }

    #[test]
    fn estimate_cancellation() {
        let c = cfg(0.0, 0.0);
        let x = Vector::from_vec(vec![0.0, 2.0, 0.0]);
        let st = ObserverState::new(Vector::from_vec(vec![-2.0])).unwrap();
        assert_eq!(c.estimate(&st, &x).unwrap()[0], 0.0);
    }

    #[test]
    fn rhs_vanishes_in_kernel() {
        let c = cfg(0.0, 0.0);
        let m = scalar_model();
        // F = (1, -x1 + u, 0) = (1, -1, 0) at x=(1,1,0), u=0; want ℓ d̂ = -F on channel → d̂ = 1
        let x = Vector::from_vec(vec![1.0, 1.0, 0.0]);
        let u = Vector::from_vec(vec![0.0]);
        // d̂ = r + x2 = r + 1 = 1 → r = 0
        let st = ObserverState::zeros(1);
        let rd = c.observer_rhs(&m, &x, &u, &st).unwrap();
        assert_eq!(rd[0], 0.0);
    }

    #[test]
    fn beta_and_mu1_are_checked() {
        let b = DisturbanceBounds::new(1.0, 0.0).unwrap();
        assert!(ObserverConfig::new(0.0, first_coord_gain(), 0.5, b).is_err());
        assert!(ObserverConfig::new(1.0, first_coord_gain(), 2.0, b).is_err());
        assert!(ObserverConfig::new(1.0, first_coord_gain(), 0.0, b).is_err());
        let c = ObserverConfig::new(1.0, first_coord_gain(), 1.5, b).unwrap();
        assert!(c.lambda() > 0.0);
    }

    #[test]
    fn envelope_at_zero_is_e0() {
        let c = cfg(3.7, 0.4);
        assert_eq!(c.error_bound_c2(0.0).unwrap(), 3.7);
    }

    #[test]
    fn envelope_asymptote() {
        let c = cfg(3.7, 0.4);
        let lam = c.lambda();
        let far = c.error_bound_c2(100.0 / lam).unwrap();
        assert!((far - 0.4 / (2.0 * 1.0 * lam).sqrt()).abs() < 1e-9);
        assert_relative_eq!(c.ultimate_bound(), 0.4 / (2.0f64 * lam).sqrt());
    }

    #[test]
    fn envelope_without_rate_bound_is_exponential() {
        let c = cfg(2.5, 0.0);
        let lam = c.lambda();
        for i in 0..10 {
            let t = 0.7 * i as f64;
            let want = 2.5 * (-lam * t).exp();
            assert_relative_eq!(c.error_bound_c2(t).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn envelope_rejects_negative_time() {
        assert!(matches!(cfg(1.0, 0.0).error_bound_c2(-0.1), Err(Error::Contract(_))));
    }

    #[test]
    fn margin_zero_when_gradient_orthogonal_to_channel() {
        let c = cfg(5.0, 1.0);
        let m = scalar_model();
        let x = Vector::zeros(3);
        let g = Vector::from_vec(vec![1.0, 0.0, -3.0]);
        assert_eq!(c.margin_c(&g, &m, &x, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn margin_zero_for_perfect_constant_estimate() {
        let c = cfg(0.0, 0.0);
        let m = scalar_model();
        let g = Vector::from_vec(vec![0.0, -1.8, 1.0]);
        assert_eq!(c.margin_c(&g, &m, &Vector::zeros(3), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn margin_matches_row_times_column() {
        let c = cfg(2.0, 0.0);
        let m = scalar_model();
        let g = Vector::from_vec(vec![0.3, -2.8, 1.0]);
        let by_hand = 2.8 * c.error_bound_c2(1.5).unwrap();
        assert_relative_eq!(c.margin_c(&g, &m, &Vector::zeros(3), 1.5).unwrap(), by_hand);
    }

    #[test]
    fn full_column_rank_recipe_has_negative_product() {
        let ell = Matrix::from_column_slice(3, 1, &[0.0, 2.0, 0.0]);
        let g = ObserverGain::from_full_column_rank(&ell).unwrap();
        let prod = g.matrix(&Vector::zeros(3)) * &ell;
        assert_relative_eq!(prod[(0, 0)], -1.0);
        assert!(ObserverGain::from_full_column_rank(&Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn gain_check_reports_failures() {
        let m = scalar_model();
        let samples: Vec<Vector> = (0..5).map(|i| Vector::from_element(3, i as f64)).collect();
        let good = cfg(0.0, 0.0).check_gain_condition(&m, &samples).unwrap();
        assert!(good.passed());
        let ell = Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let bad = ObserverConfig::new(
            1.0,
            ObserverGain::from_full_column_rank(&ell).unwrap(),
            1.0,
            DisturbanceBounds::new(1.0, 0.0).unwrap(),
        )
        .unwrap()
        .check_gain_condition(&m, &samples)
        .unwrap();
        assert_eq!(bad.failures, 5);
        assert!(!bad.passed());
    }

    #[test]
    fn default_e0_adds_estimate_norm() {
        let c = ObserverConfig::new(1.0, first_coord_gain(), 1.0, DisturbanceBounds::new(2.0, 0.0).unwrap())
            .unwrap()
            .default_initial_error_bound(&Vector::from_vec(vec![-3.0]))
            .unwrap();
        assert_eq!(c.e0_bound(), 5.0);
    }
}
