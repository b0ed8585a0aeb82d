//! Nominal integral control laws `u̇ = φ(x, u)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{Matrix, SystemModel, Vector};

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub type OutputFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type OutputJacFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type ReferenceFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// `φ = K_p(∂n/∂x F(x,u) − ẏ_ref) + K_I(y − y_ref)` with `y = n(x)`.
#[derive(Clone)]
pub struct PiLaw {
    pub kp: Matrix,
    pub ki: Matrix,
    output: OutputFn,
    output_jac: OutputJacFn,
    y_ref: ReferenceFn,
    y_ref_dot: ReferenceFn,
}

impl fmt::Debug for PiLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiLaw")
            .field("kp", &self.kp)
            .field("ki", &self.ki)
            .finish_non_exhaustive()
    }
}

impl PiLaw {
    pub fn new(
        kp: Matrix,
        ki: Matrix,
        output: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        output_jac: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        y_ref: impl Fn(f64) -> Vector + Send + Sync + 'static,
        y_ref_dot: impl Fn(f64) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        if kp.shape() != ki.shape() {
            return Err(Error::config(format!(
                "K_p is {:?} but K_I is {:?}",
                kp.shape(),
                ki.shape()
            )));
        }
        Ok(Self {
            kp,
            ki,
            output: Arc::new(output),
            output_jac: Arc::new(output_jac),
            y_ref: Arc::new(y_ref),
            y_ref_dot: Arc::new(y_ref_dot),
        })
    }

    pub fn rate(&self, model: &SystemModel, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
        let y = (self.output)(x);
        let jac = (self.output_jac)(x);
        let q = self.kp.ncols();
        check_len("output", q, y.len())?;
        check_len("output Jacobian rows", q, jac.nrows())?;
        check_len("output Jacobian cols", model.n(), jac.ncols())?;
        check_len("K_p rows", model.m(), self.kp.nrows())?;
        let f = model.drift(x, u)?;
        let track = jac * f - (self.y_ref_dot)(t);
        Ok(&self.kp * track + &self.ki * (y - (self.y_ref)(t)))
    }
}

/// PI rate, see [`PiLaw`].
pub fn pi_rate(law: &PiLaw, model: &SystemModel, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
    law.rate(model, x, u, t)
}

/// Predictive speed law for the car-following model with linearized
/// prediction of the output over a horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccPredictiveLaw {
    pub horizon: f64,
    pub alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub mass: f64,
    pub v_d: f64,
}

impl AccPredictiveLaw {
    /// `T = 0` is accepted (the prediction is then just `x₂`) but [`Self::rate`]
    /// rejects it.
    pub fn new(horizon: f64, alpha: f64, c0: f64, c1: f64, mass: f64, v_d: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::config(format!("horizon T must be >= 0, got {horizon}")));
        }
        if !(c1 > 0.0) || !(mass > 0.0) {
            return Err(Error::config("c1 and m must be positive"));
        }
        if !(alpha > 0.0) {
            return Err(Error::config(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            horizon,
            alpha,
            c0,
            c1,
            mass,
            v_d,
        })
    }

    fn decay(&self) -> f64 {
        (-self.c1 * self.horizon / self.mass).exp()
    }

    /// `ŷ(t+T) = −c₁⁻¹(c₀ − u + m v_d − c₁e^{−c₁T/m}(x₂ + (c₀ − u + m v_d)/c₁))`.
    pub fn predicted_output(&self, x2: f64, u: f64) -> f64 {
        let k = self.c0 - u + self.mass * self.v_d;
        -(k - self.c1 * self.decay() * (x2 + k / self.c1)) / self.c1
    }

    /// `u̇ = αc₁(e^{−c₁T/m} − 1)⁻¹ ŷ(t+T)`.
    pub fn rate(&self, x2: f64, u: f64) -> Result<f64> {
        if self.horizon <= 0.0 {
            return Err(Error::contract("predictive rate needs a horizon T > 0"));
        }
        Ok(self.alpha * self.c1 / (self.decay() - 1.0) * self.predicted_output(x2, u))
    }

    /// `∂ŷ/∂u`, positive for `T > 0`.
    pub fn output_sensitivity(&self) -> f64 {
        (1.0 - self.decay()) / self.c1
    }
}

pub fn acc_predicted_output(law: &AccPredictiveLaw, x2: f64, u: f64) -> f64 {
    law.predicted_output(x2, u)
}

pub fn acc_rate(law: &AccPredictiveLaw, x2: f64, u: f64) -> Result<f64> {
    law.rate(x2, u)
}

pub type PredictFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type PredictJacFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;

/// Newton–Raphson flow `u̇ = −α (∂g/∂u)⁻¹ g(x, u)` driving a predicted output
/// `g` to zero. The inverse may not exist; a singular `∂g/∂u` is an error.
#[derive(Clone)]
pub struct NewtonRaphsonLaw {
    pub alpha: f64,
    g: PredictFn,
    dg_du: PredictJacFn,
}

impl fmt::Debug for NewtonRaphsonLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NewtonRaphsonLaw")
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl NewtonRaphsonLaw {
    pub fn new(
        alpha: f64,
        g: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        dg_du: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            alpha,
            g: Arc::new(g),
            dg_du: Arc::new(dg_du),
        }
    }

    /// The predictive speed law written in this form, with state `(·, x₂, ·)`.
    pub fn from_acc(law: AccPredictiveLaw) -> Self {
        Self::new(
            law.alpha,
            move |x, u| Vector::from_element(1, law.predicted_output(x[1], u[0])),
            move |_, _| Matrix::from_element(1, 1, law.output_sensitivity()),
        )
    }

    pub fn rate(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let g = (self.g)(x, u);
        let jac = (self.dg_du)(x, u);
        check_len("dg/du rows", g.len(), jac.nrows())?;
        check_len("dg/du cols", u.len(), jac.ncols())?;
        let step = jac
            .lu()
            .solve(&g)
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Singular("dg/du is not invertible".into()))?;
        Ok(step * -self.alpha)
    }
}

/// Reference path for the Stanley law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Path {
    Line { point: [f64; 2], heading: f64 },
    Waypoints { points: Vec<[f64; 2]> },
}

impl Path {
    pub fn validate(&self) -> Result<()> {
        match self {
            Path::Line { point, heading } => {
                if point.iter().chain([heading]).any(|v| !v.is_finite()) {
                    return Err(Error::config("path line must be finite"));
                }
            }
            Path::Waypoints { points } => {
                if points.len() < 2 {
                    return Err(Error::config("a waypoint path needs at least two points"));
                }
                if points.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::config("consecutive waypoints must differ"));
                }
            }
        }
        Ok(())
    }

    /// `(e, θ)`: signed cross-track distance (positive to the right of the
    /// direction of travel) and path tangent heading at the closest point.
    pub fn closest(&self, px: f64, py: f64) -> (f64, f64) {
        match self {
            Path::Line { point, heading } => {
                let (s, c) = heading.sin_cos();
                let (dx, dy) = (px - point[0], py - point[1]);
                (dx * s - dy * c, wrap_angle(*heading))
            }
            Path::Waypoints { points } => {
                let mut best = (f64::INFINITY, 0.0, 0.0);
                for w in points.windows(2) {
                    let [ax, ay] = w[0];
                    let [bx, by] = w[1];
                    let (sx, sy) = (bx - ax, by - ay);
                    let len2 = sx * sx + sy * sy;
                    let tau = (((px - ax) * sx + (py - ay) * sy) / len2).clamp(0.0, 1.0);
                    let (cx, cy) = (ax + tau * sx, ay + tau * sy);
                    let dist = (px - cx).hypot(py - cy);
                    if dist < best.0 {
                        let cross = sx * (py - ay) - sy * (px - ax);
                        let e = if cross > 0.0 { -dist } else { dist };
                        best = (dist, e, sy.atan2(sx));
                    }
                }
                (best.1, best.2)
            }
        }
    }
}

/// `δ_S = θ + arctan(k e / v)`, with `θ` the heading error to the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanleyLaw {
    pub k: f64,
    pub path: Path,
    /// Optional symmetric steering limit (rad) applied to `δ_S`.
    #[serde(default)]
    pub max_steer: Option<f64>,
    /// Optional gain `k_u` of an extra term `k_u·(δ_S − δ)` in the rate, which
    /// pulls the applied angle back to the command after a correction. Zero
    /// gives the plain `δ̇_S`.
    #[serde(default)]
    pub tracking_gain: f64,
}

impl StanleyLaw {
    pub fn new(k: f64, path: Path) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::config(format!("Stanley gain must be positive, got {k}")));
        }
        path.validate()?;
        Ok(Self {
            k,
            path,
            max_steer: None,
            tracking_gain: 0.0,
        })
    }

    pub fn with_max_steer(mut self, limit: f64) -> Result<Self> {
        if !(limit > 0.0) {
            return Err(Error::config("steering limit must be positive"));
        }
        self.max_steer = Some(limit);
        Ok(self)
    }

    pub fn with_tracking_gain(mut self, gain: f64) -> Result<Self> {
        if !(gain >= 0.0) {
            return Err(Error::config("tracking gain must be >= 0"));
        }
        self.tracking_gain = gain;
        Ok(self)
    }

    pub fn steer(&self, pose: (f64, f64, f64), v: f64) -> Result<f64> {
        if !(v > 0.0) {
            return Err(Error::contract(format!("Stanley law needs v > 0, got {v}")));
        }
        let (e, tangent) = self.path.closest(pose.0, pose.1);
        let theta = wrap_angle(tangent - pose.2);
        let delta = wrap_angle(theta + (self.k * e / v).atan());
        Ok(match self.max_steer {
            Some(lim) => delta.clamp(-lim, lim),
            None => delta,
        })
    }

    /// Steering at a bicycle state `(x, y, ψ, v, …)`.
    pub fn steer_state(&self, x: &Vector) -> Result<f64> {
        if x.len() < 4 {
            return Err(Error::Dimension {
                arg: "x",
                expected: 4,
                got: x.len(),
            });
        }
        self.steer((x[0], x[1], x[2]), x[3])
    }
}

pub fn stanley_steer(law: &StanleyLaw, pose: (f64, f64, f64), v: f64) -> Result<f64> {
    law.steer(pose, v)
}

/// Wrap-aware backward difference of the steering angle.
pub fn stanley_rate(prev_delta: f64, new_delta: f64, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!("dt must be positive, got {dt}")));
    }
    Ok(wrap_angle(new_delta - prev_delta) / dt)
}

pub type CustomLawFn = Arc<dyn Fn(&Vector, &Vector, f64) -> Vector + Send + Sync>;

/// Nominal law used by a scenario.
#[derive(Clone)]
pub enum NominalLaw {
    Zero,
    Pi(PiLaw),
    AccPredictive(AccPredictiveLaw),
    Newton(NewtonRaphsonLaw),
    Stanley(StanleyLaw),
    Custom(CustomLawFn),
}

impl fmt::Debug for NominalLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::Pi(l) => l.fmt(f),
            Self::AccPredictive(l) => l.fmt(f),
            Self::Newton(l) => l.fmt(f),
            Self::Stanley(l) => l.fmt(f),
            Self::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Memory carried between steps (the previous Stanley angle).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LawState {
    prev_delta: Option<f64>,
}

impl NominalLaw {
    /// `φ` at step start. The Stanley law differentiates its own output across
    /// steps and returns 0 on the first call.
    pub fn rate(
        &self,
        model: &SystemModel,
        x: &Vector,
        u: &Vector,
        t: f64,
        dt: f64,
        state: &mut LawState,
    ) -> Result<Vector> {
        let m = model.m();
        let out = match self {
            Self::Stanley(law) => {
                let delta = law.steer_state(x)?;
                let rate = match state.prev_delta {
                    Some(prev) => stanley_rate(prev, delta, dt)?,
                    None => 0.0,
                };
                state.prev_delta = Some(delta);
                let pull = law.tracking_gain * wrap_angle(delta - u[0]);
                Vector::from_element(m, rate + pull)
            }
            _ => self.static_rate(model, x, u, t)?,
        };
        check_len("phi", m, out.len())?;
        Ok(out)
    }

    /// Memoryless `φ(x, u, t)`; the Stanley rate has no such form and is
    /// reported as zero.
    pub fn static_rate(&self, model: &SystemModel, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
        Ok(match self {
            Self::Zero | Self::Stanley(_) => Vector::zeros(model.m()),
            Self::Pi(law) => law.rate(model, x, u, t)?,
            Self::AccPredictive(law) => Vector::from_element(1, law.rate(x[1], u[0])?),
            Self::Newton(law) => law.rate(x, u)?,
            Self::Custom(f) => f(x, u, t),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table_acc() -> AccPredictiveLaw {
        AccPredictiveLaw::new(1.0, 10.0, 0.1, 5.0, 1650.0, 24.0).unwrap()
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0);
        assert_relative_eq!(wrap_angle(0.1 + 4.0 * PI), 0.1, epsilon = 1e-12);
    }

    fn scalar_integrator() -> SystemModel {
        SystemModel::new(
            "int",
            (1, 1, 1),
            |_, u| u.clone(),
            |_| Matrix::zeros(1, 1),
            |_| Vector::zeros(1),
        )
        .unwrap()
    }

    fn pi(kp: f64, ki: f64) -> PiLaw {
        PiLaw::new(
            Matrix::from_element(1, 1, kp),
            Matrix::from_element(1, 1, ki),
            |x| x.clone(),
            |_| Matrix::identity(1, 1),
            |_| Vector::from_element(1, 1.0),
            |_| Vector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn pi_substitution() {
        let m = scalar_integrator();
        let r = pi_rate(&pi(1.0, 1.0), &m, &Vector::zeros(1), &Vector::zeros(1), 0.0).unwrap();
        assert_eq!(r[0], -1.0);
    }

    #[test]
    fn pi_perfect_tracking_and_pure_integral() {
        let m = scalar_integrator();
        let x = Vector::from_element(1, 1.0);
        let r = pi(2.0, 3.0).rate(&m, &x, &Vector::zeros(1), 0.0).unwrap();
        assert_eq!(r[0], 0.0);
        let x = Vector::from_element(1, 4.0);
        let r = pi(0.0, 3.0).rate(&m, &x, &Vector::from_element(1, 7.0), 0.0).unwrap();
        assert_eq!(r[0], 9.0);
    }

    #[test]
    fn acc_prediction_limits() {
        let zero_h = AccPredictiveLaw::new(0.0, 10.0, 0.1, 5.0, 1650.0, 24.0).unwrap();
        assert_relative_eq!(zero_h.predicted_output(13.0, 250.0), 13.0, epsilon = 1e-12);
        assert!(zero_h.rate(13.0, 0.0).is_err());
        let law = table_acc();
        let e = (-5.0f64 / 1650.0).exp();
        let u = 0.1 + 1650.0 * 24.0;
        assert_relative_eq!(law.predicted_output(20.0, u), e * 20.0, epsilon = 1e-12);
    }

    #[test]
    fn acc_rate_sign_and_zero() {
        let law = table_acc();
        let e = (-5.0f64 / 1650.0).exp();
        // u solving ŷ = 0 at x2 = 20
        let u = 0.1 + 1650.0 * 24.0 + 5.0 * e * 20.0 / (e - 1.0);
        assert!(law.rate(20.0, u).unwrap().abs() < 1e-9);
        assert!(law.predicted_output(30.0, 0.0) > 0.0);
        assert!(law.rate(30.0, 0.0).unwrap() < 0.0);
    }

    #[test]
    fn newton_form_reproduces_acc_rate() {
        let law = table_acc();
        let nr = NewtonRaphsonLaw::from_acc(law);
        for (x2, u) in [(13.89, 0.0), (20.0, 500.0), (5.0, -300.0)] {
            let x = Vector::from_vec(vec![0.0, x2, 30.0]);
            let got = nr.rate(&x, &Vector::from_element(1, u)).unwrap()[0];
            assert_relative_eq!(got, law.rate(x2, u).unwrap(), max_relative = 1e-12);
        }
        let singular = NewtonRaphsonLaw::new(1.0, |_, u| u.clone(), |_, _| Matrix::zeros(1, 1));
        assert!(matches!(
            singular.rate(&Vector::zeros(1), &Vector::from_element(1, 1.0)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn stanley_examples() {
        let law = StanleyLaw::new(1.0, Path::Line { point: [0.0, 0.0], heading: 0.0 }).unwrap();
        assert_eq!(law.steer((3.0, 0.0, 0.0), 0.5).unwrap(), 0.0);
        // right of an eastbound path means y < 0
        assert_relative_eq!(law.steer((0.0, -0.5, 0.0), 0.5).unwrap(), PI / 4.0, epsilon = 1e-15);
        let far = law.steer((0.0, -1e12, 0.0), 0.5).unwrap();
        assert_relative_eq!(far, PI / 2.0, epsilon = 1e-9);
        assert!(law.steer((0.0, 0.0, 0.0), 0.0).is_err());
        assert!(StanleyLaw::new(0.0, Path::Line { point: [0.0, 0.0], heading: 0.0 }).is_err());
    }

    #[test]
    fn stanley_clamp() {
        let law = StanleyLaw::new(1.0, Path::Line { point: [0.0, 0.0], heading: 0.0 })
            .unwrap()
            .with_max_steer(0.5)
            .unwrap();
        assert_eq!(law.steer((0.0, -10.0, 0.0), 0.5).unwrap(), 0.5);
    }

    #[test]
    fn waypoint_path_signs() {
        let p = Path::Waypoints {
            points: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]],
        };
        let (e, th) = p.closest(5.0, -2.0);
        assert_relative_eq!(e, 2.0);
        assert_eq!(th, 0.0);
        let (e, th) = p.closest(12.0, 5.0);
        assert_relative_eq!(e, 2.0);
        assert_relative_eq!(th, PI / 2.0);
        assert!(Path::Waypoints { points: vec![[0.0, 0.0]] }.validate().is_err());
    }

    #[test]
    fn stanley_rate_wraps() {
        let r = stanley_rate(PI - 0.01, -PI + 0.01, 0.1).unwrap();
        assert_relative_eq!(r, 0.2, epsilon = 1e-12);
        assert_eq!(stanley_rate(0.3, 0.3, 0.1).unwrap(), 0.0);
        assert!(stanley_rate(0.0, 0.1, 0.0).is_err());
    }
}
