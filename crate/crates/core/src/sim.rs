//! Fixed-step RK4 integration of the augmented loop `(x, u, r)`, trajectory
//! logging and run metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{safe_rate, FilterMode};
use crate::laws::{LawState, Path};
use crate::model::{AugmentedState, Vector};
use crate::observer::ObserverState;
use crate::scenarios::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub log_stride: usize,
    pub filter_mode: FilterMode,
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64, log_stride: usize, filter_mode: FilterMode) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("dt must be positive, got {dt}")));
        }
        if !(t_end >= dt) || !t_end.is_finite() {
            return Err(Error::config(format!("t_end must be >= dt, got {t_end}")));
        }
        if log_stride == 0 {
            return Err(Error::config("log stride must be >= 1"));
        }
        Ok(Self {
            dt,
            t_end,
            log_stride,
            filter_mode,
        })
    }

    /// Number of integration steps, `⌊t_end/dt⌋` with a little slack for roundoff.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }
}

/// One classical Runge–Kutta step. A non-finite stage is reported as a
/// blow-up at the stage time.
pub fn rk4_step(
    mut rhs: impl FnMut(f64, &Vector) -> Result<Vector>,
    t: f64,
    z: &Vector,
    dt: f64,
) -> Result<Vector> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!("dt must be positive, got {dt}")));
    }
    let mut stage = |s: f64, at: &Vector| -> Result<Vector> {
        let k = rhs(s, at)?;
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(Error::BlowUp {
                t: s,
                what: "non-finite derivative".into(),
            })
        }
    };
    let h = dt / 2.0;
    let k1 = stage(t, z)?;
    let k2 = stage(t + h, &(z + &k1 * h))?;
    let k3 = stage(t + h, &(z + &k2 * h))?;
    let k4 = stage(t + dt, &(z + &k3 * dt))?;
    let next = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::BlowUp {
            t: t + dt,
            what: "non-finite state".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    Infeasible { t: f64, constraints: Vec<String> },
    BlowUp { t: f64, what: String },
}

impl HaltReason {
    pub fn name(&self) -> &'static str {
        match self {
            HaltReason::Completed => "completed",
            HaltReason::Infeasible { .. } => "infeasible",
            HaltReason::BlowUp { .. } => "blow_up",
        }
    }
}

/// Scenario-specific output reported by [`summarize`].
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMetric {
    /// Final value of state component `index`, reported as `name`.
    State { name: String, index: usize },
    /// Final signed cross-track error to a path, from state `(x, y, …)`.
    CrossTrack(Path),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub phi: Vec<f64>,
    pub v_star: Vec<f64>,
    pub d: Vec<f64>,
    pub d_hat: Vec<f64>,
    pub values: Vec<f64>,
    pub slacks: Vec<f64>,
    pub c_margin: f64,
    pub infeasible: bool,
    /// Envelope `c₂(t)` (not written to CSV).
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub config: SimConfig,
    pub dims: (usize, usize, usize),
    pub value_labels: Vec<String>,
    pub slack_labels: Vec<String>,
    /// Labels whose minimum decides the `unsafe` flag.
    pub safety_labels: Vec<String>,
    pub rows: Vec<LogRow>,
    pub halt: HaltReason,
    /// `∫‖v*‖² dt` over the integrated steps.
    pub effort: f64,
    pub left_domain: bool,
    pub output: Option<OutputMetric>,
}

/// Appends `v` with 17 significant digits (round-trip exact); zero is `0`.
pub fn fmt_float(out: &mut String, v: f64) {
    if v == 0.0 {
        out.push('0');
    } else if v.is_finite() {
        let _ = write!(out, "{:.16e}", v);
    } else {
        let _ = write!(out, "{v}");
    }
}

impl TrajectoryLog {
    pub fn header(&self) -> String {
        let (n, m, p) = self.dims;
        let mut cols = vec!["t".to_string()];
        let mut push = |prefix: &str, k: usize| cols.extend((0..k).map(|i| format!("{prefix}{i}")));
        push("x", n);
        push("u", m);
        push("phi", m);
        push("vstar", m);
        push("d", p);
        push("dhat", p);
        cols.extend(self.value_labels.iter().map(|l| format!("b_{l}")));
        cols.extend(self.slack_labels.iter().map(|l| format!("slack_{l}")));
        cols.push("c_margin".into());
        cols.push("infeasible".into());
        cols.join(",")
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let mut buf = self.header();
        buf.push('\n');
        for row in &self.rows {
            fmt_float(&mut buf, row.t);
            for v in row
                .x
                .iter()
                .chain(&row.u)
                .chain(&row.phi)
                .chain(&row.v_star)
                .chain(&row.d)
                .chain(&row.d_hat)
                .chain(&row.values)
                .chain(&row.slacks)
                .chain([&row.c_margin])
            {
                buf.push(',');
                fmt_float(&mut buf, *v);
            }
            buf.push_str(if row.infeasible { ",1\n" } else { ",0\n" });
            if buf.len() > 1 << 16 {
                w.write_all(buf.as_bytes())?;
                buf.clear();
            }
        }
        w.write_all(buf.as_bytes())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv is utf-8")
    }

    /// Column `label` of the logged barrier values.
    pub fn value_series(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.value_labels.iter().position(|l| l == label)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }
}

/// Closes the loop: observer, nominal law, filter and plant.
///
/// `φ` and `v*` are evaluated at the start of each step and held over its
/// RK4 stages; the plant sees the true disturbance at every stage and the
/// observer state evolves continuously. Infeasibility and blow-up truncate
/// the log and are reported through [`TrajectoryLog::halt`].
pub fn run_closed_loop(scenario: &Scenario, cfg: &SimConfig) -> Result<TrajectoryLog> {
    let model = &scenario.model;
    let (n, m, p) = (model.n(), model.m(), model.p());
    let mut z = scenario.initial.to_vector();
    let mut law_state = LawState::default();
    let steps = cfg.steps();

    let mut log = TrajectoryLog {
        scenario: scenario.name.clone(),
        config: *cfg,
        dims: (n, m, p),
        value_labels: scenario.safety.value_labels(),
        slack_labels: scenario.safety.constraint_labels(),
        safety_labels: scenario.safety_labels(),
        rows: Vec::with_capacity(steps / cfg.log_stride + 1),
        halt: HaltReason::Completed,
        effort: 0.0,
        left_domain: false,
        output: scenario.output.clone(),
    };

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let st = AugmentedState::from_vector(&z, n, m, p)?;
        let obs_state = ObserverState { r: st.r.clone() };
        let phi = scenario
            .law
            .rate(model, &st.x, &st.u, t, cfg.dt, &mut law_state)?;
        let (rate, diag) = safe_rate(
            model,
            &scenario.safety,
            &phi,
            &scenario.obs,
            &obs_state,
            &st.x,
            &st.u,
            t,
            cfg.filter_mode,
        )?;
        if !scenario.domain.contains(&st.x, &st.u) {
            log.left_domain = true;
        }
        if diag.infeasible || k % cfg.log_stride == 0 {
            log.rows.push(LogRow {
                t,
                x: st.x.iter().copied().collect(),
                u: st.u.iter().copied().collect(),
                phi: phi.iter().copied().collect(),
                v_star: diag.v_star.iter().copied().collect(),
                d: model.true_disturbance(t)?.iter().copied().collect(),
                d_hat: diag.d_hat.iter().copied().collect(),
                values: diag.values.clone(),
                slacks: diag.slacks.clone(),
                c_margin: diag.c_margin(),
                infeasible: diag.infeasible,
                c2: scenario.obs.error_bound_c2(t)?,
            });
        }
        if diag.infeasible {
            let constraints = log
                .slack_labels
                .iter()
                .zip(&diag.slacks)
                .filter(|(_, s)| **s < 0.0)
                .map(|(l, _)| l.clone())
                .collect();
            log::warn!("{}: filter infeasible at t = {t}", scenario.name);
            log.halt = HaltReason::Infeasible { t, constraints };
            break;
        }
        if k == steps {
            break;
        }

        let rhs = |s: f64, zz: &Vector| -> Result<Vector> {
            let a = AugmentedState::from_vector(zz, n, m, p)?;
            let d = model.true_disturbance(s)?;
            let xdot = model.eval_dynamics(&a.x, &a.u, &d)?;
            let rdot = scenario
                .obs
                .observer_rhs(model, &a.x, &a.u, &ObserverState { r: a.r.clone() })?;
            Ok(AugmentedState::new(xdot, rate.clone(), rdot).to_vector())
        };
        match rk4_step(rhs, t, &z, cfg.dt) {
            Ok(next) => z = next,
            Err(Error::BlowUp { t, what }) => {
                log::warn!("{}: blow-up at t = {t}: {what}", scenario.name);
                log.halt = HaltReason::BlowUp { t, what };
                break;
            }
            Err(e) => return Err(e),
        }
        log.effort += diag.v_star.norm_squared() * cfg.dt;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub scenario: String,
    pub filter_mode: FilterMode,
    pub rows: usize,
    pub t_final: f64,
    /// Minimum of every logged barrier value.
    pub min_barrier: BTreeMap<String, f64>,
    /// Scenario output at the last row (`x2` for car following, cross-track
    /// error for path following).
    pub final_output: Option<NamedValue>,
    /// `max_t (‖d̂ − d‖ − c₂(t))`; non-positive when the envelope holds.
    pub envelope_gap_max: f64,
    pub max_estimation_error: f64,
    pub effort: f64,
    pub halt_reason: HaltReason,
    /// Some level-0 barrier dropped below `−1e-3`.
    #[serde(rename = "unsafe")]
    pub is_unsafe: bool,
    pub left_domain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedValue {
    pub name: String,
    pub value: f64,
}

/// Tolerance used for the `unsafe` flag.
pub const SAFETY_TOL: f64 = 1e-3;

pub fn summarize(log: &TrajectoryLog) -> Result<Metrics> {
    let last = log
        .rows
        .last()
        .ok_or_else(|| Error::contract("cannot summarize an empty log"))?;
    let mut min_barrier = BTreeMap::new();
    for (k, label) in log.value_labels.iter().enumerate() {
        let min = log.rows.iter().map(|r| r.values[k]).fold(f64::INFINITY, f64::min);
        min_barrier.insert(label.clone(), min);
    }
    let mut gap = f64::NEG_INFINITY;
    let mut max_err = 0.0f64;
    for r in &log.rows {
        let err = r
            .d
            .iter()
            .zip(&r.d_hat)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_err = max_err.max(err);
        gap = gap.max(err - r.c2);
    }
    let final_output = log.output.as_ref().map(|o| match o {
        OutputMetric::State { name, index } => NamedValue {
            name: name.clone(),
            value: last.x[*index],
        },
        OutputMetric::CrossTrack(path) => NamedValue {
            name: "cross_track_error".into(),
            value: path.closest(last.x[0], last.x[1]).0,
        },
    });
    let is_unsafe = log
        .safety_labels
        .iter()
        .any(|l| min_barrier.get(l).is_some_and(|v| *v < -SAFETY_TOL));
    Ok(Metrics {
        scenario: log.scenario.clone(),
        filter_mode: log.config.filter_mode,
        rows: log.rows.len(),
        t_final: last.t,
        min_barrier,
        final_output,
        envelope_gap_max: gap,
        max_estimation_error: max_err,
        effort: log.effort,
        halt_reason: log.halt.clone(),
        is_unsafe,
        left_domain: log.left_domain,
    })
}
