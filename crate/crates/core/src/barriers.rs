//! Barrier functions over the joint state-input space, the high-order chain
//! `b₀ … b_m`, and a grid scan that checks the validity implication
//! `p(x,u) = 0 ⟹ w(x,u,d̂) ≤ −c`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::model::{fd_split_gradient, ClassKappa, DomainBox, SystemModel, Vector};
use crate::observer::{channel_gain, ObserverConfig};

/// Tolerance below which `‖p‖` counts as zero.
pub const EPS_P: f64 = 1e-8;

pub type ScalarFn = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;

/// A scalar barrier `h(x, u)` with optional analytic gradients and its class-K rate.
///
/// Missing gradients fall back to central differences.
#[derive(Clone)]
pub struct BarrierSpec {
    pub label: String,
    value: ScalarFn,
    grad_x: Option<GradFn>,
    grad_u: Option<GradFn>,
    pub gamma: ClassKappa,
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierSpec")
            .field("label", &self.label)
            .field("analytic_grad_x", &self.grad_x.is_some())
            .field("analytic_grad_u", &self.grad_u.is_some())
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl BarrierSpec {
    pub fn new(
        label: impl Into<String>,
        value: impl Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
        gamma: ClassKappa,
    ) -> Self {
        Self {
            label: label.into(),
            value: Arc::new(value),
            grad_x: None,
            grad_u: None,
            gamma,
        }
    }

    pub fn with_gradients(
        mut self,
        grad_x: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        grad_u: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.grad_x = Some(Arc::new(grad_x));
        self.grad_u = Some(Arc::new(grad_u));
        self
    }

    pub fn has_analytic_gradients(&self) -> bool {
        self.grad_x.is_some() && self.grad_u.is_some()
    }

    pub fn h(&self, x: &Vector, u: &Vector) -> f64 {
        (self.value)(x, u)
    }

    /// `(∂h/∂x, ∂h/∂u)` at `(x, u)`.
    pub fn gradients(&self, x: &Vector, u: &Vector) -> Result<(Vector, Vector)> {
        let (gx, gu) = match (&self.grad_x, &self.grad_u) {
            (Some(gx), Some(gu)) => (gx(x, u), gu(x, u)),
            (gx, gu) => {
                let (fx, fu) = fd_split_gradient(|a, b| (self.value)(a, b), x, u)?;
                (
                    gx.as_ref().map_or(fx, |g| g(x, u)),
                    gu.as_ref().map_or(fu, |g| g(x, u)),
                )
            }
        };
        check_len("grad_x output", x.len(), gx.len())?;
        check_len("grad_u output", u.len(), gu.len())?;
        Ok((gx, gu))
    }

    pub fn grad_x(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(self.gradients(x, u)?.0)
    }

    pub fn grad_u(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        Ok(self.gradients(x, u)?.1)
    }
}

/// `p(x, u) = (∂h/∂u)ᵀ`.
pub fn eval_p(spec: &BarrierSpec, x: &Vector, u: &Vector) -> Result<Vector> {
    spec.grad_u(x, u)
}

/// `w = −(∂h/∂x F + ∂h/∂x ℓ d̂ + ∂h/∂u φ + γ(h))`.
///
/// With `d̂ = 0` this is the plain integral-barrier `q`.
pub fn eval_w(
    spec: &BarrierSpec,
    model: &SystemModel,
    phi: &Vector,
    x: &Vector,
    u: &Vector,
    d_hat: &Vector,
) -> Result<f64> {
    check_len("phi", model.m(), phi.len())?;
    let (gx, gu) = spec.gradients(x, u)?;
    let f = model.drift(x, u)?;
    let l = model.channel(x)?;
    check_len("d_hat", model.p(), d_hat.len())?;
    Ok(-(gx.dot(&f) + gx.dot(&(l * d_hat)) + gu.dot(phi) + spec.gamma.eval(spec.h(x, u))))
}

#[derive(Clone)]
struct LevelFns {
    value: ScalarFn,
    grad_x: GradFn,
    grad_u: GradFn,
}

/// Level `i ≥ 1` of a chain: `b_i = ḃ_{i−1} + γ_i(b_{i−1}) − c(b_{i−1})`.
///
/// An analytic level supplies the closed form of `b_i` with `d̂ = 0` and zero
/// margin, plus its gradients. Without it the level value comes from the
/// recursion and its gradients from central differences.
#[derive(Clone)]
pub struct ChainLevel {
    pub label: String,
    pub gamma: ClassKappa,
    nominal: Option<LevelFns>,
}

impl fmt::Debug for ChainLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChainLevel")
            .field("label", &self.label)
            .field("gamma", &self.gamma)
            .field("analytic", &self.nominal.is_some())
            .finish()
    }
}

impl ChainLevel {
    pub fn derived(label: impl Into<String>, gamma: ClassKappa) -> Self {
        Self {
            label: label.into(),
            gamma,
            nominal: None,
        }
    }

    pub fn analytic(
        label: impl Into<String>,
        gamma: ClassKappa,
        value: impl Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
        grad_x: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        grad_u: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            gamma,
            nominal: Some(LevelFns {
                value: Arc::new(value),
                grad_x: Arc::new(grad_x),
                grad_u: Arc::new(grad_u),
            }),
        }
    }

    pub fn is_analytic(&self) -> bool {
        self.nominal.is_some()
    }

    /// The supplied closed form (zero estimate, zero margin), if any.
    pub fn nominal_value(&self, x: &Vector, u: &Vector) -> Option<f64> {
        self.nominal.as_ref().map(|n| (n.value)(x, u))
    }

    pub fn nominal_gradients(&self, x: &Vector, u: &Vector) -> Option<(Vector, Vector)> {
        self.nominal
            .as_ref()
            .map(|n| ((n.grad_x)(x, u), (n.grad_u)(x, u)))
    }
}

/// Ordered chain `b₀ … b_m`; `b₀` is the base barrier.
#[derive(Debug, Clone)]
pub struct BarrierChain {
    pub label: String,
    base: BarrierSpec,
    levels: Vec<ChainLevel>,
}

impl BarrierChain {
    pub fn new(label: impl Into<String>, base: BarrierSpec, levels: Vec<ChainLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::config("a barrier chain needs at least one level above b0"));
        }
        Ok(Self {
            label: label.into(),
            base,
            levels,
        })
    }

    /// Chain length `m` (index of the top level).
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &BarrierSpec {
        &self.base
    }

    pub fn level(&self, i: usize) -> Option<&ChainLevel> {
        i.checked_sub(1).and_then(|k| self.levels.get(k))
    }

    pub fn level_label(&self, i: usize) -> &str {
        match i {
            0 => &self.base.label,
            _ => &self.levels[i - 1].label,
        }
    }

    /// Rate used in the top-level constraint `ḃ_m + γ_m(b_m) ≥ c`.
    pub fn top_gamma(&self) -> &ClassKappa {
        &self.levels[self.levels.len() - 1].gamma
    }
}

/// Evaluation context for chain levels: model, nominal rate, estimate and
/// current envelope value `c₂`.
///
/// The nominal rate `φ` is held fixed when differentiating levels.
pub struct ChainEval<'a> {
    pub chain: &'a BarrierChain,
    pub model: &'a SystemModel,
    pub phi: &'a Vector,
    pub d_hat: &'a Vector,
    pub c2: f64,
}

impl ChainEval<'_> {
    fn nominal(&self) -> bool {
        self.c2 == 0.0 && self.d_hat.iter().all(|v| *v == 0.0)
    }

    /// Full value of level `i` at `(x, u)`.
    pub fn value(&self, i: usize, x: &Vector, u: &Vector) -> Result<f64> {
        if i > self.chain.m() {
            return Err(Error::contract(format!(
                "chain level {i} out of range 0..={}",
                self.chain.m()
            )));
        }
        if i == 0 {
            return Ok(self.chain.base.h(x, u));
        }
        let (gx, gu) = self.gradients(i - 1, x, u)?;
        let below = self.value(i - 1, x, u)?;
        let f = self.model.drift(x, u)?;
        let l = self.model.channel(x)?;
        let flow = f + &l * self.d_hat;
        let margin = if self.c2 == 0.0 {
            0.0
        } else {
            (l.transpose() * &gx).norm() * self.c2
        };
        let gamma = &self.chain.levels[i - 1].gamma;
        Ok(gx.dot(&flow) + gu.dot(self.phi) + gamma.eval(below) - margin)
    }

    /// `(∂b_i/∂x, ∂b_i/∂u)` at `(x, u)`.
    pub fn gradients(&self, i: usize, x: &Vector, u: &Vector) -> Result<(Vector, Vector)> {
        if i == 0 {
            return self.chain.base.gradients(x, u);
        }
        let level = self
            .chain
            .level(i)
            .ok_or_else(|| Error::contract(format!("chain level {i} out of range")))?;
        match &level.nominal {
            Some(n) => {
                let gx = (n.grad_x)(x, u);
                let gu = (n.grad_u)(x, u);
                check_len("level grad_x output", x.len(), gx.len())?;
                check_len("level grad_u output", u.len(), gu.len())?;
                let lower_u_free = self.gradients(i - 1, x, u)?.1.dot(self.phi) == 0.0;
                if self.nominal() && lower_u_free {
                    return Ok((gx, gu));
                }
                let (cx, cu) = fd_split_gradient(
                    |a, b| self.value(i, a, b).unwrap_or(f64::NAN) - (n.value)(a, b),
                    x,
                    u,
                )?;
                Ok((gx + cx, gu + cu))
            }
            None => fd_split_gradient(|a, b| self.value(i, a, b).unwrap_or(f64::NAN), x, u),
        }
    }

    /// `w_i = −(∂b_i/∂x (F + ℓ d̂) + ∂b_i/∂u φ + γ_i(b_i))`.
    pub fn w(&self, i: usize, x: &Vector, u: &Vector) -> Result<f64> {
        let (gx, gu) = self.gradients(i, x, u)?;
        let f = self.model.drift(x, u)?;
        let l = self.model.channel(x)?;
        let flow = f + l * self.d_hat;
        let gamma = if i == 0 {
            &self.chain.base.gamma
        } else {
            &self.chain.levels[i - 1].gamma
        };
        Ok(-(gx.dot(&flow) + gu.dot(self.phi) + gamma.eval(self.value(i, x, u)?)))
    }
}

/// Value of chain level `i` including the estimate and the robustness margin
/// from `obs` at time `t`.
#[allow(clippy::too_many_arguments)]
pub fn chain_value(
    chain: &BarrierChain,
    i: usize,
    model: &SystemModel,
    phi: &Vector,
    x: &Vector,
    u: &Vector,
    d_hat: &Vector,
    t: f64,
    obs: &ObserverConfig,
) -> Result<f64> {
    check_len("phi", model.m(), phi.len())?;
    check_len("d_hat", model.p(), d_hat.len())?;
    let eval = ChainEval {
        chain,
        model,
        phi,
        d_hat,
        c2: obs.error_bound_c2(t)?,
    };
    eval.value(i, x, u)
}

/// Grid scan configuration.
#[derive(Debug, Clone)]
pub struct CheckConfig {
    pub domain: DomainBox,
    /// Points per non-degenerate axis (≥ 2). Axes with `lower == upper` use one point.
    pub resolution: usize,
    /// Times at which the margin is evaluated; `None` uses `{0, 5/λ, 100/λ}`.
    pub times: Option<Vec<f64>>,
    pub eps_p: f64,
    /// Estimate used in `w`; `None` means zero.
    pub d_hat: Option<Vector>,
    /// Cap on stored counterexamples (the total is always counted).
    pub max_counterexamples: usize,
}

impl CheckConfig {
    pub fn new(domain: DomainBox, resolution: usize) -> Self {
        Self {
            domain,
            resolution,
            times: None,
            eps_p: EPS_P,
            d_hat: None,
            max_counterexamples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub barrier: String,
    pub grid_index: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
    pub w: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub valid: bool,
    /// Largest empirical relative degree over the chains checked; 0 without chains.
    pub relative_degree: usize,
    /// Per-chain relative degree, in chain order.
    pub chain_relative_degrees: Vec<(String, usize)>,
    pub grid_points: usize,
    /// Grid points where some `p` vanished inside the safe set.
    pub checked_points: usize,
    pub total_violations: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl ValidityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Grid {
    axes: Vec<Vec<f64>>,
    total: usize,
}

impl Grid {
    fn new(domain: &DomainBox, resolution: usize) -> Self {
        let axes: Vec<Vec<f64>> = domain
            .lower
            .iter()
            .zip(&domain.upper)
            .map(|(&lo, &hi)| {
                if lo == hi {
                    vec![lo]
                } else {
                    let step = (hi - lo) / (resolution - 1) as f64;
                    (0..resolution)
                        .map(|k| if k + 1 == resolution { hi } else { lo + step * k as f64 })
                        .collect()
                }
            })
            .collect();
        let total = axes.iter().map(Vec::len).product();
        Self { axes, total }
    }

    /// Coordinates of point `idx`, last axis varying fastest.
    fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        for (k, axis) in self.axes.iter().enumerate().rev() {
            coords[k] = axis[idx % axis.len()];
            idx /= axis.len();
        }
        coords
    }
}

/// Scans the grid for violations of the validity implication.
///
/// Only points inside the safe set are checked: `h ≥ 0` for single barriers,
/// and `b_i ≥ 0` for every level of a chain (the implication is checked on
/// the top level). `phi` is the nominal rate map used in `w`.
pub fn check_validity(
    barriers: &[BarrierSpec],
    chains: &[BarrierChain],
    model: &SystemModel,
    phi: &(dyn Fn(&Vector, &Vector) -> Vector + Sync),
    cfg: &CheckConfig,
    obs: &ObserverConfig,
) -> Result<ValidityReport> {
    if barriers.is_empty() && chains.is_empty() {
        return Err(Error::config("nothing to check: no barriers or chains"));
    }
    if cfg.resolution < 2 {
        return Err(Error::contract(format!(
            "grid resolution must be >= 2, got {}",
            cfg.resolution
        )));
    }
    let (n, m) = (model.n(), model.m());
    check_len("domain", n + m, cfg.domain.dim())?;
    let d_hat = cfg.d_hat.clone().unwrap_or_else(|| Vector::zeros(model.p()));
    check_len("d_hat", model.p(), d_hat.len())?;
    let lam = obs.lambda();
    let times = cfg
        .times
        .clone()
        .unwrap_or_else(|| vec![0.0, 5.0 / lam, 100.0 / lam]);
    let envelopes = times
        .iter()
        .map(|&t| obs.error_bound_c2(t))
        .collect::<Result<Vec<_>>>()?;

    let grid = Grid::new(&cfg.domain, cfg.resolution);
    let mut u_dependent: Vec<Vec<bool>> = chains.iter().map(|c| vec![false; c.m() + 1]).collect();
    let mut counterexamples = Vec::new();
    let mut total_violations = 0usize;
    let mut checked_points = 0usize;

    let mut record = |cex: Counterexample| {
        total_violations += 1;
        if counterexamples.len() < cfg.max_counterexamples {
            counterexamples.push(cex);
        }
    };

    for idx in 0..grid.total {
        let coords = grid.point(idx);
        let x = Vector::from_column_slice(&coords[..n]);
        let u = Vector::from_column_slice(&coords[n..]);
        let rate = phi(&x, &u);
        check_len("phi output", m, rate.len())?;
        let mut checked_here = false;

        for spec in barriers {
            let (gx, gu) = spec.gradients(&x, &u)?;
            if gu.norm() > cfg.eps_p || spec.h(&x, &u) < 0.0 {
                continue;
            }
            checked_here = true;
            let w = eval_w(spec, model, &rate, &x, &u, &d_hat)?;
            let c1 = channel_gain(&gx, model, &x)?;
            for (&t, &c2) in times.iter().zip(&envelopes) {
                let margin = c1 * c2;
                if w > -margin {
                    record(Counterexample {
                        barrier: spec.label.clone(),
                        grid_index: idx,
                        x: coords[..n].to_vec(),
                        u: coords[n..].to_vec(),
                        t,
                        w,
                        margin,
                    });
                }
            }
        }

        for (ci, chain) in chains.iter().enumerate() {
            let top = chain.m();
            for (&t, &c2) in times.iter().zip(&envelopes) {
                let eval = ChainEval {
                    chain,
                    model,
                    phi: &rate,
                    d_hat: &d_hat,
                    c2,
                };
                let mut inside = true;
                let mut grads = Vec::with_capacity(top + 1);
                for i in 0..=top {
                    let g = eval.gradients(i, &x, &u)?;
                    if g.1.norm() > cfg.eps_p {
                        u_dependent[ci][i] = true;
                    }
                    inside &= eval.value(i, &x, &u)? >= 0.0;
                    grads.push(g);
                }
                if !inside || grads[top].1.norm() > cfg.eps_p {
                    continue;
                }
                checked_here = true;
                let w = eval.w(top, &x, &u)?;
                let margin = channel_gain(&grads[top - 1].0, model, &x)? * c2;
                if w > -margin {
                    record(Counterexample {
                        barrier: chain.level_label(top).to_string(),
                        grid_index: idx,
                        x: coords[..n].to_vec(),
                        u: coords[n..].to_vec(),
                        t,
                        w,
                        margin,
                    });
                }
            }
        }
        checked_points += usize::from(checked_here);
    }

    let chain_relative_degrees: Vec<(String, usize)> = chains
        .iter()
        .zip(&u_dependent)
        .map(|(c, dep)| {
            let rd = dep.iter().position(|&d| d).unwrap_or(c.m()).min(c.m());
            (c.label.clone(), rd)
        })
        .collect();
    let relative_degree = chain_relative_degrees.iter().map(|(_, d)| *d).max().unwrap_or(0);

    Ok(ValidityReport {
        valid: total_violations == 0,
        relative_degree,
        chain_relative_degrees,
        grid_points: grid.total,
        checked_points,
        total_violations,
        counterexamples,
    })
}
