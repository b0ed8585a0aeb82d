//! Plant description, augmented state, class-K functions and gradient helpers.
//!
//! The plant is `ẋ = F(x, u) + ℓ(x) d` with state dimension `n`, input
//! dimension `m` and disturbance dimension `p`. Everything here is an
//! immutable value; the closures are `Send + Sync` so models can be shared
//! between concurrent simulations.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub type DriftFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
pub type ChannelFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
pub type DisturbanceFn = Arc<dyn Fn(f64) -> Vector + Send + Sync>;

/// Axis-aligned box over the joint `(x, u)` space.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len("domain upper", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::contract("domain box has no axes"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::contract(format!(
                "domain box axis {i} is empty: [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &Vector, u: &Vector) -> bool {
        x.iter()
            .chain(u.iter())
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// The controlled plant `ẋ = F(x,u) + ℓ(x) d`.
///
/// `d_true` is ground truth for the simulator and logger only. The filter and
/// observer APIs never take it.
#[derive(Clone)]
pub struct SystemModel {
    pub name: String,
    n: usize,
    m: usize,
    p: usize,
    drift: DriftFn,
    channel: ChannelFn,
    d_true: DisturbanceFn,
    pub domain: Option<DomainBox>,
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("p", &self.p)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        dims: (usize, usize, usize),
        drift: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        channel: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        d_true: impl Fn(f64) -> Vector + Send + Sync + 'static,
    ) -> Result<Self> {
        let (n, m, p) = dims;
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::config(format!(
                "model dimensions must be positive, got n={n} m={m} p={p}"
            )));
        }
        Ok(Self {
            name: name.into(),
            n,
            m,
            p,
            drift: Arc::new(drift),
            channel: Arc::new(channel),
            d_true: Arc::new(d_true),
            domain: None,
        })
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Result<Self> {
        check_len("domain", self.n + self.m, domain.dim())?;
        self.domain = Some(domain);
        Ok(self)
    }

    /// Replace the ground-truth disturbance signal.
    pub fn with_disturbance(
        mut self,
        d_true: impl Fn(f64) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.d_true = Arc::new(d_true);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Nominal dynamics `F(x, u)`.
    pub fn drift(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        check_len("x", self.n, x.len())?;
        check_len("u", self.m, u.len())?;
        let f = (self.drift)(x, u);
        check_len("F(x,u) output", self.n, f.len())?;
        Ok(f)
    }

    /// Disturbance channel `ℓ(x)`, an `n × p` matrix.
    pub fn channel(&self, x: &Vector) -> Result<Matrix> {
        check_len("x", self.n, x.len())?;
        let l = (self.channel)(x);
        check_len("ell(x) rows", self.n, l.nrows())?;
        check_len("ell(x) cols", self.p, l.ncols())?;
        Ok(l)
    }

    /// `F(x, u) + ℓ(x) d`.
    pub fn eval_dynamics(&self, x: &Vector, u: &Vector, d: &Vector) -> Result<Vector> {
        check_len("d", self.p, d.len())?;
        let f = self.drift(x, u)?;
        let l = self.channel(x)?;
        Ok(f + l * d)
    }

    /// Ground-truth disturbance. Simulator and logger only.
    pub fn true_disturbance(&self, t: f64) -> Result<Vector> {
        let d = (self.d_true)(t);
        check_len("d_true(t) output", self.p, d.len())?;
        Ok(d)
    }

    pub fn in_domain(&self, x: &Vector, u: &Vector) -> bool {
        self.domain.as_ref().map_or(true, |b| b.contains(x, u))
    }
}

/// Stacked augmented state `z = (x, u, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vector,
    pub u: Vector,
    pub r: Vector,
}

impl AugmentedState {
    pub fn new(x: Vector, u: Vector, r: Vector) -> Self {
        Self { x, u, r }
    }

    pub fn len(&self) -> usize {
        self.x.len() + self.u.len() + self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vector(&self) -> Vector {
        let mut z = Vector::zeros(self.len());
        let (n, m) = (self.x.len(), self.u.len());
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, m).copy_from(&self.u);
        z.rows_mut(n + m, self.r.len()).copy_from(&self.r);
        z
    }

    pub fn from_vector(z: &Vector, n: usize, m: usize, p: usize) -> Result<Self> {
        check_len("z", n + m + p, z.len())?;
        Ok(Self {
            x: z.rows(0, n).into_owned(),
            u: z.rows(n, m).into_owned(),
            r: z.rows(n + m, p).into_owned(),
        })
    }
}

/// A class-K rate function: continuous, strictly increasing, zero at zero.
#[derive(Clone)]
pub enum ClassKappa {
    Linear(f64),
    Cubic(f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ClassKappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassKappa::Linear(g) => write!(f, "Linear({g})"),
            ClassKappa::Cubic(g) => write!(f, "Cubic({g})"),
            ClassKappa::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl ClassKappa {
    pub fn linear(slope: f64) -> Result<Self> {
        if slope > 0.0 && slope.is_finite() {
            Ok(ClassKappa::Linear(slope))
        } else {
            Err(Error::config(format!("linear class-K slope must be > 0, got {slope}")))
        }
    }

    pub fn cubic(coef: f64) -> Result<Self> {
        if coef > 0.0 && coef.is_finite() {
            Ok(ClassKappa::Cubic(coef))
        } else {
            Err(Error::config(format!("cubic class-K coefficient must be > 0, got {coef}")))
        }
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ClassKappa::Custom(Arc::new(f))
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ClassKappa::Linear(g) => g * s,
            ClassKappa::Cubic(g) => g * s * s * s,
            ClassKappa::Custom(f) => f(s),
        }
    }

    /// Checks `γ(0) = 0` and strict increase on a uniform grid over `[lo, hi]`.
    pub fn check_on_grid(&self, lo: f64, hi: f64, points: usize) -> bool {
        if self.eval(0.0) != 0.0 || points < 2 {
            return false;
        }
        let step = (hi - lo) / (points - 1) as f64;
        let vals: Vec<f64> = (0..points).map(|i| self.eval(lo + step * i as f64)).collect();
        vals.windows(2).all(|w| w[1] > w[0])
    }
}

/// Bounds from the disturbance assumption: `‖d‖ ≤ k0`, `‖ḋ‖ ≤ k1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DisturbanceBounds {
    pub k0: f64,
    pub k1: f64,
}

impl DisturbanceBounds {
    pub fn new(k0: f64, k1: f64) -> Result<Self> {
        if !(k0 >= 0.0 && k1 >= 0.0) {
            return Err(Error::config(format!(
                "disturbance bounds must be non-negative, got k0={k0} k1={k1}"
            )));
        }
        Ok(Self { k0, k1 })
    }
}

/// Central-difference gradient of a scalar map.
pub fn finite_diff_gradient(
    f: impl Fn(&Vector) -> f64,
    point: &Vector,
    step: f64,
) -> Result<Vector> {
    if !(step > 0.0) {
        return Err(Error::contract(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut grad = Vector::zeros(point.len());
    let mut probe = point.clone();
    for i in 0..point.len() {
        let xi = point[i];
        probe[i] = xi + step;
        let fp = f(&probe);
        probe[i] = xi - step;
        let fm = f(&probe);
        probe[i] = xi;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NumericalDomain(format!(
                "non-finite value while differencing component {i}"
            )));
        }
        grad[i] = (fp - fm) / (2.0 * step);
    }
    Ok(grad)
}

/// Step used by the finite-difference gradient fallbacks.
pub(crate) fn fd_step(at: f64) -> f64 {
    1e-6 * at.abs().max(1.0)
}

/// Gradients of `g(x, u)` with respect to `x` and `u`, by central differences
/// with a per-component scaled step.
pub(crate) fn fd_split_gradient(
    g: impl Fn(&Vector, &Vector) -> f64,
    x: &Vector,
    u: &Vector,
) -> Result<(Vector, Vector)> {
    let mut gx = Vector::zeros(x.len());
    let mut gu = Vector::zeros(u.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = g(&xp, u);
        xp[i] = x[i] - h;
        let fm = g(&xp, u);
        xp[i] = x[i];
        gx[i] = finite_quotient(fp, fm, h, i)?;
    }
    let mut up = u.clone();
    for j in 0..u.len() {
        let h = fd_step(u[j]);
        up[j] = u[j] + h;
        let fp = g(x, &up);
        up[j] = u[j] - h;
        let fm = g(x, &up);
        up[j] = u[j];
        gu[j] = finite_quotient(fp, fm, h, x.len() + j)?;
    }
    Ok((gx, gu))
}

fn finite_quotient(fp: f64, fm: f64, h: f64, i: usize) -> Result<f64> {
    if fp.is_finite() && fm.is_finite() {
        Ok((fp - fm) / (2.0 * h))
    } else {
        Err(Error::NumericalDomain(format!(
            "non-finite value while differencing component {i}"
        )))
    }
}
