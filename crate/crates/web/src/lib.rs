//! Browser bindings. Each export runs a scenario and hands back a JSON
//! string for the page to plot; errors come back as a message string.

use do_icbf_core::filter::FilterMode;
use do_icbf_core::scenarios::{build_acc_with, build_bicycle_with, AccParams, BicycleParams, Disturbance};
use do_icbf_core::{by_name, run_closed_loop, summarize, Scenario, SimConfig, TrajectoryLog};
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

const DT: f64 = 1e-3;
/// Rows kept per trajectory, roughly; enough for a canvas a few hundred
/// pixels wide.
const TARGET_ROWS: f64 = 1000.0;
const MAX_T_END: f64 = 200.0;

#[derive(Serialize)]
struct Trace {
    mode: &'static str,
    halt: String,
    t: Vec<f64>,
    /// Columns keyed by name (`x0`, `u0`, `d0`, `b_h_x`, `c2`, ...).
    series: serde_json::Map<String, serde_json::Value>,
    min_barrier: std::collections::BTreeMap<String, f64>,
    is_unsafe: bool,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn run(s: &Scenario, mode: FilterMode, t_end: f64) -> Result<Trace, String> {
    if !(t_end > 0.0 && t_end <= MAX_T_END) {
        return Err(format!("t_end must lie in (0, {MAX_T_END}], got {t_end}"));
    }
    let stride = ((t_end / DT) / TARGET_ROWS).ceil().max(1.0) as usize;
    let log = run_closed_loop(s, &SimConfig::new(DT, t_end, stride, mode).map_err(err)?).map_err(err)?;
    let metrics = summarize(&log).map_err(err)?;
    Ok(Trace {
        mode: mode.as_str(),
        halt: metrics.halt_reason.name().to_string(),
        t: log.rows.iter().map(|r| r.t).collect(),
        series: columns(&log),
        min_barrier: metrics.min_barrier.clone(),
        is_unsafe: metrics.is_unsafe,
    })
}

fn columns(log: &TrajectoryLog) -> serde_json::Map<String, serde_json::Value> {
    let mut out = serde_json::Map::new();
    let mut put = |name: String, f: &dyn Fn(&do_icbf_core::sim::LogRow) -> f64| {
        let v: Vec<f64> = log.rows.iter().map(f).collect();
        out.insert(name, v.into());
    };
    let (n, m, p) = log.dims;
    for i in 0..n {
        put(format!("x{i}"), &|r| r.x[i]);
    }
    for i in 0..m {
        put(format!("u{i}"), &|r| r.u[i]);
        put(format!("vstar{i}"), &|r| r.v_star[i]);
    }
    for i in 0..p {
        put(format!("d{i}"), &|r| r.d[i]);
        put(format!("dhat{i}"), &|r| r.d_hat[i]);
    }
    for (k, l) in log.value_labels.iter().enumerate() {
        put(format!("b_{l}"), &|r| r.values[k]);
    }
    put("c2".into(), &|r| r.c2);
    put(
        "err".into(),
        &|r| r.d.iter().zip(&r.d_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
    );
    out
}

fn to_json(v: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

/// ACC with a sinusoidal disturbance `offset + amplitude·sin(omega·t)`, run
/// under the observer-based filter and the plain integral filter.
#[wasm_bindgen(js_name = accCompare)]
pub fn acc_compare(offset: f64, amplitude: f64, omega: f64, t_end: f64) -> Result<String, String> {
    let p = AccParams {
        disturbance: Disturbance::Sinusoid { offset, amplitude, omega },
        ..AccParams::default()
    };
    let s = build_acc_with(&p).map_err(err)?;
    let runs = [run(&s, FilterMode::DoIcbf, t_end)?, run(&s, FilterMode::Icbf, t_end)?];
    to_json(&serde_json::json!({ "v0": p.v0, "v_d": p.v_d, "runs": runs }))
}

/// Bicycle around the obstacle with the high-order filter and unfiltered.
#[wasm_bindgen(js_name = bicycleRun)]
pub fn bicycle_run(tracking_gain: f64, t_end: f64) -> Result<String, String> {
    let p = BicycleParams {
        steer_tracking_gain: tracking_gain,
        ..BicycleParams::default()
    };
    let s = build_bicycle_with(&p).map_err(err)?;
    let runs = [run(&s, FilterMode::HighOrder, t_end)?, run(&s, FilterMode::Off, t_end)?];
    to_json(&serde_json::json!({ "obstacle_radius": p.obstacle_radius, "runs": runs }))
}

/// Grid validity check of a built-in scenario; the report as JSON.
#[wasm_bindgen(js_name = checkScenario)]
pub fn check_scenario(name: &str, resolution: Option<usize>) -> Result<String, String> {
    let s = by_name(name).map_err(err)?;
    let report = s.check(resolution).map_err(err)?;
    Ok(report.to_json())
}
