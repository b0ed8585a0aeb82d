//! Benchmark scenarios: car following with a disturbed speed channel, a
//! kinematic bicycle passing a round obstacle, and a scalar system whose
//! barrier pair is not a valid integral barrier.

use serde::{Deserialize, Serialize};

use crate::barriers::{check_validity, BarrierChain, BarrierSpec, ChainLevel, CheckConfig, ValidityReport};
use crate::error::{Error, Result};
use crate::filter::{safe_rate, FilterMode, SafetySet};
use crate::laws::{AccPredictiveLaw, LawState, NominalLaw, Path, StanleyLaw};
use crate::model::{AugmentedState, ClassKappa, DisturbanceBounds, DomainBox, Matrix, SystemModel, Vector};
use crate::observer::{ObserverConfig, ObserverGain, ObserverState};
use crate::sim::OutputMetric;

/// A closed-loop benchmark: plant, nominal law, barriers, observer and
/// initial augmented state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    pub law: NominalLaw,
    pub safety: SafetySet,
    pub obs: ObserverConfig,
    pub initial: AugmentedState,
    /// Operating box; leaving it is flagged in the run metrics.
    pub domain: DomainBox,
    /// Box scanned by [`Self::check`].
    pub check_domain: DomainBox,
    pub check_resolution: usize,
    pub output: Option<OutputMetric>,
    pub default_filter: FilterMode,
    pub default_baseline: FilterMode,
    pub default_t_end: f64,
}

impl Scenario {
    /// Checks dimensions and that the initial state lies in every barrier's
    /// 0-superlevel set (with the estimate and margin at `t = 0`).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        model: SystemModel,
        law: NominalLaw,
        safety: SafetySet,
        obs: ObserverConfig,
        initial: AugmentedState,
        domain: DomainBox,
    ) -> Result<Self> {
        let name = name.into();
        if safety.is_empty() {
            return Err(Error::config(format!("scenario `{name}` has no barriers")));
        }
        if initial.x.len() != model.n() || initial.u.len() != model.m() || initial.r.len() != model.p() {
            return Err(Error::config(format!(
                "scenario `{name}`: initial state does not match model dimensions"
            )));
        }
        if domain.dim() != model.n() + model.m() {
            return Err(Error::Dimension {
                arg: "domain",
                expected: model.n() + model.m(),
                got: domain.dim(),
            });
        }
        let s = Self {
            name,
            model,
            law,
            safety,
            obs,
            initial,
            check_domain: domain.clone(),
            domain,
            check_resolution: 9,
            output: None,
            default_filter: FilterMode::DoIcbf,
            default_baseline: FilterMode::Off,
            default_t_end: 10.0,
        };
        let values = s.initial_values()?;
        for (label, v) in s.safety.value_labels().iter().zip(&values) {
            if !(*v >= 0.0) {
                return Err(Error::config(format!(
                    "scenario `{}`: initial state outside the safe set ({label} = {v})",
                    s.name
                )));
            }
        }
        Ok(s)
    }

    /// Barrier values at the initial state, in `value_labels` order.
    pub fn initial_values(&self) -> Result<Vec<f64>> {
        let x = &self.initial.x;
        let u = &self.initial.u;
        let phi = self
            .law
            .rate(&self.model, x, u, 0.0, 1e-3, &mut LawState::default())?;
        let st = ObserverState { r: self.initial.r.clone() };
        let (_, diag) = safe_rate(&self.model, &self.safety, &phi, &self.obs, &st, x, u, 0.0, FilterMode::DoIcbf)?;
        Ok(diag.values)
    }

    /// Level-0 barrier labels (single barriers and chain bases).
    pub fn safety_labels(&self) -> Vec<String> {
        let mut out: Vec<String> = self.safety.barriers.iter().map(|b| b.label.clone()).collect();
        out.extend(self.safety.chains.iter().map(|c| c.base().label.clone()));
        out
    }

    /// Grid scan of the validity implication over [`Self::domain`].
    pub fn check(&self, resolution: Option<usize>) -> Result<ValidityReport> {
        let cfg = CheckConfig::new(self.check_domain.clone(), resolution.unwrap_or(self.check_resolution));
        let model = &self.model;
        let law = &self.law;
        let phi = |x: &Vector, u: &Vector| {
            law.static_rate(model, x, u, 0.0)
                .unwrap_or_else(|_| Vector::from_element(model.m(), f64::NAN))
        };
        check_validity(&self.safety.barriers, &self.safety.chains, model, &phi, &cfg, &self.obs)
    }

    /// Keeps only the barriers and chains whose label is listed. Chains match
    /// on the chain label or the label of their base barrier.
    pub fn retain_barriers(&mut self, keep: &[String]) -> Result<()> {
        let known: Vec<String> = self
            .safety
            .barriers
            .iter()
            .map(|b| b.label.clone())
            .chain(self.safety.chains.iter().flat_map(|c| [c.label.clone(), c.base().label.clone()]))
            .collect();
        if let Some(bad) = keep.iter().find(|k| !known.contains(k)) {
            return Err(Error::config(format!(
                "scenario `{}` has no barrier `{bad}` (known: {})",
                self.name,
                known.join(", ")
            )));
        }
        self.safety.barriers.retain(|b| keep.contains(&b.label));
        self.safety
            .chains
            .retain(|c| keep.contains(&c.label) || keep.contains(&c.base().label));
        if self.safety.is_empty() {
            return Err(Error::config(format!("scenario `{}` has no barriers", self.name)));
        }
        Ok(())
    }
}

/// True disturbance signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    Constant { value: f64 },
    /// `offset + amplitude · sin(omega · t)`.
    Sinusoid { offset: f64, amplitude: f64, omega: f64 },
}

impl Disturbance {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Disturbance::Constant { value } => value,
            Disturbance::Sinusoid { offset, amplitude, omega } => offset + amplitude * (omega * t).sin(),
        }
    }

    /// Tightest `(k₀, k₁)` with `|d| ≤ k₀` and `|ḋ| ≤ k₁`.
    pub fn bounds(&self) -> Result<DisturbanceBounds> {
        match *self {
            Disturbance::Constant { value } => DisturbanceBounds::new(value.abs(), 0.0),
            Disturbance::Sinusoid { offset, amplitude, omega } => {
                DisturbanceBounds::new(offset.abs() + amplitude.abs(), (amplitude * omega).abs())
            }
        }
    }
}

/// Car-following parameters. Defaults are the benchmark values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParams {
    pub g: f64,
    pub mass: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    /// Lead vehicle speed.
    pub v0: f64,
    /// Desired cruising speed.
    pub v_d: f64,
    pub alpha: f64,
    /// Slope of the linear class-K rates.
    pub gamma: f64,
    /// Input bound as a fraction of `m g`.
    pub input_coeff: f64,
    pub beta: f64,
    pub mu1: f64,
    /// Prediction horizon `T` of the nominal law.
    pub horizon: f64,
    /// Time headway in `h_x = D − headway · v`.
    pub headway: f64,
    pub x0: [f64; 3],
    pub u0: f64,
    /// Initial estimate; `r(0)` is set so that `d̂(0)` equals it.
    pub d_hat0: f64,
    pub disturbance: Disturbance,
    /// Bound on `‖d̂(0) − d(0)‖`; default `k₀ + |d̂(0)|`.
    pub e0: Option<f64>,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            g: 9.81,
            mass: 1650.0,
            c0: 0.1,
            c1: 5.0,
            c2: 0.25,
            v0: 13.89,
            v_d: 24.0,
            alpha: 10.0,
            gamma: 1.0,
            input_coeff: 0.3,
            beta: 1.0,
            mu1: 1.0,
            horizon: 1.0,
            headway: 1.8,
            x0: [0.0, 10.0, 25.0],
            u0: 0.0,
            d_hat0: 0.0,
            disturbance: Disturbance::Constant { value: 2.0 },
            e0: None,
        }
    }
}

impl AccParams {
    pub fn input_bound(&self) -> f64 {
        self.mass * self.input_coeff * self.g
    }
}

pub fn build_acc() -> Scenario {
    build_acc_with(&AccParams::default()).expect("default car-following parameters are valid")
}

/// State `(position, speed, gap)`, input = wheel force, disturbance on the
/// speed channel.
///
/// The headway barrier `h_x = x₃ − 1.8 x₂` does not depend on `u`, so it is
/// the base of a one-level chain whose top `b₁ = ḣ_x + γ h_x − c` does; the
/// input bound `(m c g)² − u²` is a separate barrier.
pub fn build_acc_with(p: &AccParams) -> Result<Scenario> {
    if !(p.mass > 0.0 && p.gamma > 0.0 && p.input_coeff > 0.0 && p.g > 0.0) {
        return Err(Error::config("mass, gamma, input_coeff and g must be positive"));
    }
    let law = AccPredictiveLaw::new(p.horizon, p.alpha, p.c0, p.c1, p.mass, p.v_d)?;
    if p.horizon <= 0.0 {
        return Err(Error::config("the predictive law needs horizon > 0"));
    }
    let (mass, c0, c1, c2, v0, hw, gam) = (p.mass, p.c0, p.c1, p.c2, p.v0, p.headway, p.gamma);
    let resist = move |v: f64| c0 + c1 * v + c2 * v * v;
    let dresist = move |v: f64| c1 + 2.0 * c2 * v;
    let dist = p.disturbance;
    let model = SystemModel::new(
        "acc",
        (3, 1, 1),
        move |x, u| Vector::from_vec(vec![x[1], (u[0] - resist(x[1])) / mass, v0 - x[1]]),
        |_| Matrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
        move |t| Vector::from_element(1, dist.eval(t)),
    )?;

    let rate = ClassKappa::linear(gam)?;
    let h_x = BarrierSpec::new("h_x", move |x, _| x[2] - hw * x[1], rate.clone()).with_gradients(
        move |_, _| Vector::from_vec(vec![0.0, -hw, 1.0]),
        |_, _| Vector::zeros(1),
    );
    let h_e = ChainLevel::analytic(
        "h_e",
        rate.clone(),
        move |x, u| -hw * (u[0] - resist(x[1])) / mass + (v0 - x[1]) + gam * (x[2] - hw * x[1]),
        move |x, _| Vector::from_vec(vec![0.0, hw * dresist(x[1]) / mass - 1.0 - gam * hw, gam]),
        move |_, _| Vector::from_element(1, -hw / mass),
    );
    let chain = BarrierChain::new("headway", h_x, vec![h_e])?;
    let umax = p.input_bound();
    let h_u = BarrierSpec::new("h_u", move |_, u| umax * umax - u[0] * u[0], rate).with_gradients(
        |_, _| Vector::zeros(3),
        |_, u| Vector::from_element(1, -2.0 * u[0]),
    );

    let gain = ObserverGain::Constant(Matrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]));
    let x0 = Vector::from_column_slice(&p.x0);
    let r0 = Vector::from_element(1, p.d_hat0) - gain.potential(&x0) * p.beta;
    let obs = ObserverConfig::new(p.beta, gain, p.mu1, dist.bounds()?)?;
    let obs = match p.e0 {
        Some(e0) => obs.with_initial_error_bound(e0)?,
        None => obs.default_initial_error_bound(&Vector::from_element(1, p.d_hat0))?,
    };

    let domain = DomainBox::new(vec![0.0, 0.0, 0.0, -umax], vec![0.0, 30.0, 100.0, umax])?;
    let mut s = Scenario::new(
        "acc",
        model,
        NominalLaw::AccPredictive(law),
        SafetySet {
            barriers: vec![h_u],
            chains: vec![chain],
        },
        obs,
        AugmentedState::new(x0, Vector::from_element(1, p.u0), r0),
        domain,
    )?;
    s.domain = DomainBox::new(
        vec![f64::NEG_INFINITY, -1.0, f64::NEG_INFINITY, -umax],
        vec![f64::INFINITY, 60.0, f64::INFINITY, umax],
    )?;
    s.check_resolution = 11;
    s.output = Some(OutputMetric::State {
        name: "x2".into(),
        index: 1,
    });
    s.default_filter = FilterMode::DoIcbf;
    s.default_baseline = FilterMode::Icbf;
    s.default_t_end = 50.0;
    Ok(s)
}

/// Kinematic bicycle parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicycleParams {
    /// `(x, y, ψ, v)`.
    pub x0: [f64; 4],
    /// Initial steering; `None` starts on the Stanley command.
    pub delta0: Option<f64>,
    pub wheelbase: f64,
    /// Constant longitudinal acceleration.
    pub accel: f64,
    pub k_stanley: f64,
    pub max_steer: Option<f64>,
    /// Extra pull of the applied steering toward the Stanley command.
    pub steer_tracking_gain: f64,
    pub path: Path,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Accepted for completeness; the chain stops at level 2.
    pub gamma3: f64,
    pub obstacle_radius: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self {
            x0: [15.0, 10.0, std::f64::consts::FRAC_PI_2, 0.5],
            delta0: None,
            wheelbase: 1.0,
            accel: 0.0,
            k_stanley: 1.0,
            max_steer: Some(1.0),
            steer_tracking_gain: 0.0,
            path: Path::Line {
                point: [0.35, -0.35],
                heading: -3.0 * std::f64::consts::FRAC_PI_4,
            },
            gamma1: 0.2,
            gamma2: 1.0,
            gamma3: 1.0,
            obstacle_radius: 1.0,
        }
    }
}

pub fn build_bicycle() -> Scenario {
    build_bicycle_with(&BicycleParams::default()).expect("default bicycle parameters are valid")
}

/// State `(x, y, ψ, v)`, input = steering angle `δ`, round obstacle at the
/// origin. No disturbance enters, so the estimate stays zero and the
/// margins vanish.
///
/// With `S = x cosψ + y sinψ`, `Q = y cosψ − x sinψ` and `τ = tan δ`:
///
/// ```text
/// b₀ = x² + y² − ρ²
/// b₁ = 2vS + γ₁ b₀
/// b₂ = 2v² + 2v²Qτ/L + 2aS + 2(γ₁+γ₂)vS + γ₁γ₂ b₀
/// ```
pub fn build_bicycle_with(p: &BicycleParams) -> Result<Scenario> {
    if !(p.wheelbase > 0.0) {
        return Err(Error::config("wheelbase must be positive"));
    }
    if !(p.obstacle_radius > 0.0) {
        return Err(Error::config("obstacle radius must be positive"));
    }
    let (wb, a, g1, g2, rho2) = (p.wheelbase, p.accel, p.gamma1, p.gamma2, p.obstacle_radius.powi(2));
    let model = SystemModel::new(
        "bicycle",
        (4, 1, 1),
        move |x, u| {
            let (s, c) = x[2].sin_cos();
            Vector::from_vec(vec![x[3] * c, x[3] * s, x[3] * u[0].tan() / wb, a])
        },
        |_| Matrix::zeros(4, 1),
        |_| Vector::zeros(1),
    )?;

    let b0 = BarrierSpec::new("b0", move |x, _| x[0] * x[0] + x[1] * x[1] - rho2, ClassKappa::linear(g1)?)
        .with_gradients(
            |x, _| Vector::from_vec(vec![2.0 * x[0], 2.0 * x[1], 0.0, 0.0]),
            |_, _| Vector::zeros(1),
        );
    let sq = |x: &Vector| {
        let (s, c) = x[2].sin_cos();
        (x[0] * c + x[1] * s, x[1] * c - x[0] * s, s, c)
    };
    let b1 = ChainLevel::analytic(
        "b1",
        ClassKappa::linear(g1)?,
        move |x, _| 2.0 * x[3] * sq(x).0 + g1 * (x[0] * x[0] + x[1] * x[1] - rho2),
        move |x, _| {
            let (big_s, q, s, c) = sq(x);
            let v = x[3];
            Vector::from_vec(vec![
                2.0 * v * c + 2.0 * g1 * x[0],
                2.0 * v * s + 2.0 * g1 * x[1],
                2.0 * v * q,
                2.0 * big_s,
            ])
        },
        |_, _| Vector::zeros(1),
    );
    let kappa = 2.0 * (g1 + g2);
    let b2 = ChainLevel::analytic(
        "b2",
        ClassKappa::linear(g2)?,
        move |x, u| {
            let (big_s, q, _, _) = sq(x);
            let (v, tau) = (x[3], u[0].tan());
            2.0 * v * v + 2.0 * v * v * q * tau / wb
                + 2.0 * a * big_s
                + kappa * v * big_s
                + g1 * g2 * (x[0] * x[0] + x[1] * x[1] - rho2)
        },
        move |x, u| {
            let (big_s, q, s, c) = sq(x);
            let (v, tau) = (x[3], u[0].tan());
            let turn = 2.0 * v * v * tau / wb;
            let lin = 2.0 * a + kappa * v;
            Vector::from_vec(vec![
                -turn * s + lin * c + 2.0 * g1 * g2 * x[0],
                turn * c + lin * s + 2.0 * g1 * g2 * x[1],
                -turn * big_s + lin * q,
                4.0 * v + 4.0 * v * q * tau / wb + kappa * big_s,
            ])
        },
        move |x, u| {
            let q = sq(x).1;
            let tau = u[0].tan();
            Vector::from_element(1, 2.0 * x[3] * x[3] * q * (1.0 + tau * tau) / wb)
        },
    );
    let chain = BarrierChain::new("obstacle", b0, vec![b1, b2])?;

    let mut stanley = StanleyLaw::new(p.k_stanley, p.path.clone())?;
    if let Some(lim) = p.max_steer {
        stanley = stanley.with_max_steer(lim)?;
    }
    let stanley = stanley.with_tracking_gain(p.steer_tracking_gain)?;
    let x0 = Vector::from_column_slice(&p.x0);
    let delta0 = match p.delta0 {
        Some(d) => d,
        None => stanley.steer_state(&x0)?,
    };
    let obs = ObserverConfig::new(
        1.0,
        ObserverGain::Constant(Matrix::zeros(1, 4)),
        1.0,
        DisturbanceBounds::new(0.0, 0.0)?,
    )?;
    let domain = DomainBox::new(
        vec![-16.0, -16.0, -std::f64::consts::PI, p.x0[3], -0.5],
        vec![16.0, 16.0, std::f64::consts::PI, p.x0[3], 0.5],
    )?;
    let mut s = Scenario::new(
        "bicycle",
        model,
        NominalLaw::Stanley(stanley),
        SafetySet {
            barriers: vec![],
            chains: vec![chain],
        },
        obs,
        AugmentedState::new(x0, Vector::from_element(1, delta0), Vector::zeros(1)),
        domain,
    )?;
    let inf = f64::INFINITY;
    let half_pi = std::f64::consts::FRAC_PI_2;
    s.domain = DomainBox::new(vec![-inf, -inf, -inf, -inf, -half_pi], vec![inf, inf, inf, inf, half_pi])?;
    s.check_resolution = 17;
    s.output = Some(OutputMetric::CrossTrack(p.path.clone()));
    s.default_filter = FilterMode::HighOrder;
    s.default_baseline = FilterMode::Off;
    s.default_t_end = 60.0;
    Ok(s)
}

/// Scalar parameters for `ẋ = x − u²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Example1Params {
    pub x0: f64,
    pub u0: f64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Self { x0: 3.0, u0: 0.0 }
    }
}

pub fn build_example1() -> Scenario {
    build_example1_with(&Example1Params::default()).expect("default scalar parameters are valid")
}

/// `ẋ = x − u²` with `h_x = 4 − x` and `h_u = 1 − u²`. At `u = 0` the input
/// has no first-order effect on either barrier, and at `x = 4` nothing keeps
/// `x` from growing, so the pair fails the validity implication.
pub fn build_example1_with(p: &Example1Params) -> Result<Scenario> {
    let model = SystemModel::new(
        "example1",
        (1, 1, 1),
        |x, u| Vector::from_element(1, x[0] - u[0] * u[0]),
        |_| Matrix::zeros(1, 1),
        |_| Vector::zeros(1),
    )?;
    let one = ClassKappa::linear(1.0)?;
    let h_x = BarrierSpec::new("h_x", |x, _| 4.0 - x[0], one.clone())
        .with_gradients(|_, _| Vector::from_element(1, -1.0), |_, _| Vector::zeros(1));
    let h_u = BarrierSpec::new("h_u", |_, u| 1.0 - u[0] * u[0], one)
        .with_gradients(|_, _| Vector::zeros(1), |_, u| Vector::from_element(1, -2.0 * u[0]));
    let obs = ObserverConfig::new(
        1.0,
        ObserverGain::Constant(Matrix::zeros(1, 1)),
        1.0,
        DisturbanceBounds::new(0.0, 0.0)?,
    )?;
    let mut s = Scenario::new(
        "example1",
        model,
        NominalLaw::Zero,
        SafetySet {
            barriers: vec![h_x, h_u],
            chains: vec![],
        },
        obs,
        AugmentedState::new(
            Vector::from_element(1, p.x0),
            Vector::from_element(1, p.u0),
            Vector::zeros(1),
        ),
        DomainBox::new(vec![0.0, -1.0], vec![8.0, 1.0])?,
    )?;
    s.output = Some(OutputMetric::State {
        name: "x0".into(),
        index: 0,
    });
    s.default_filter = FilterMode::DoIcbf;
    s.default_baseline = FilterMode::Off;
    s.default_t_end = 10.0;
    Ok(s)
}

/// Scenario by name (`acc`, `bicycle`, `example1`).
pub fn by_name(name: &str) -> Result<Scenario> {
    match name {
        "acc" => Ok(build_acc()),
        "bicycle" => Ok(build_bicycle()),
        "example1" => Ok(build_example1()),
        other => Err(Error::config(format!(
            "unknown scenario `{other}` (expected acc, bicycle or example1)"
        ))),
    }
}

pub const SCENARIO_NAMES: [&str; 3] = ["acc", "bicycle", "example1"];
