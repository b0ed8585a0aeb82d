//! Files written into the output directory.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use do_icbf_core::filter::FilterMode;
use do_icbf_core::{fmt_float, Metrics, TrajectoryLog};
use serde::Serialize;
use serde_json::Value;

use crate::config::{RunConfig, SCHEMA_VERSION};

pub fn ensure_dir(dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    // fail early rather than after a long run
    let probe = dir.join(".write-probe");
    File::create(&probe)?;
    fs::remove_file(probe)
}

pub fn write_csv(path: &Path, log: &TrajectoryLog) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    log.write_csv(&mut w)?;
    w.flush()
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

#[derive(Serialize)]
pub struct RunSummary<'a> {
    pub schema: u32,
    pub command: &'static str,
    pub exit_code: i32,
    pub config: &'a RunConfig,
    pub metrics: &'a Metrics,
}

#[derive(Serialize)]
pub struct CompareSummary<'a> {
    pub schema: u32,
    pub command: &'static str,
    pub exit_code: i32,
    pub config: &'a RunConfig,
    pub modes: [FilterMode; 2],
    pub runs: serde_json::Map<String, Value>,
    pub min_barrier: serde_json::Map<String, Value>,
}

impl<'a> CompareSummary<'a> {
    pub fn new(config: &'a RunConfig, exit_code: i32, runs: [&Metrics; 2]) -> Self {
        let mut by_mode = serde_json::Map::new();
        let mut mins = serde_json::Map::new();
        for m in runs {
            let key = m.filter_mode.as_str().to_string();
            by_mode.insert(key.clone(), serde_json::to_value(m).expect("metrics serialize"));
            mins.insert(key, serde_json::to_value(&m.min_barrier).expect("map serializes"));
        }
        Self {
            schema: SCHEMA_VERSION,
            command: "compare",
            exit_code,
            config,
            modes: [runs[0].filter_mode, runs[1].filter_mode],
            runs: by_mode,
            min_barrier: mins,
        }
    }
}

/// Both runs row by row; the shorter one leaves its cells empty once it has
/// halted.
pub fn write_side_by_side(path: &Path, logs: [&TrajectoryLog; 2]) -> io::Result<()> {
    let mut cols = vec!["t".to_string()];
    for log in logs {
        let mode = log.config.filter_mode.as_str();
        let (n, m, _) = log.dims;
        cols.extend((0..n).map(|i| format!("{mode}_x{i}")));
        cols.extend((0..m).map(|i| format!("{mode}_u{i}")));
        cols.extend((0..m).map(|i| format!("{mode}_vstar{i}")));
        cols.extend(log.value_labels.iter().map(|l| format!("{mode}_b_{l}")));
        cols.push(format!("{mode}_infeasible"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", cols.join(","))?;
    let rows = logs[0].rows.len().max(logs[1].rows.len());
    let mut line = String::new();
    for k in 0..rows {
        line.clear();
        let t = logs.iter().find_map(|l| l.rows.get(k)).map(|r| r.t).unwrap_or_default();
        fmt_float(&mut line, t);
        for log in logs {
            let (n, m, _) = log.dims;
            let width = n + 2 * m + log.value_labels.len();
            match log.rows.get(k) {
                Some(r) => {
                    for v in r.x.iter().chain(&r.u).chain(&r.v_star).chain(&r.values) {
                        line.push(',');
                        fmt_float(&mut line, *v);
                    }
                    line.push_str(if r.infeasible { ",1" } else { ",0" });
                }
                None => line.push_str(&",".repeat(width + 1)),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    w.flush()
}

/// One trajectory file in a plot, with the legend suffix used for it.
pub struct PlotSource<'a> {
    pub file: &'a str,
    pub tag: &'a str,
}

fn series(sources: &[PlotSource], x: &str, y: &str, title: &str) -> Vec<String> {
    sources
        .iter()
        .map(|s| {
            let t = if s.tag.is_empty() { title.to_string() } else { format!("{title} ({})", s.tag) };
            format!("'{}' using '{x}':'{y}' with lines title '{t}'", s.file)
        })
        .collect()
}

/// Three-panel gnuplot script over the trajectory CSV files.
pub fn plot_script(cfg: &RunConfig, value_labels: &[String], sources: &[PlotSource]) -> String {
    let mut s = String::new();
    s.push_str(&format!("# gnuplot plot.gp  ->  {}.png\n", cfg.scenario));
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,1100\n");
    s.push_str(&format!("set output '{}.png'\n", cfg.scenario));
    s.push_str("set grid\nset key outside right\nset xlabel 't [s]'\n");
    s.push_str("set multiplot layout 3,1\n");
    let panel = |s: &mut String, title: &str, lines: Vec<String>| {
        s.push_str(&format!("set title '{title}'\n"));
        s.push_str(&format!("plot {}\n", lines.join(", \\\n     ")));
    };
    let num = |key: &str| cfg.params.get(key).and_then(Value::as_f64);
    match cfg.scenario.as_str() {
        "acc" => {
            let mut speed = series(sources, "t", "x1", "x2");
            if let Some(v0) = num("v0") {
                speed.push(format!("{v0} dt 2 title 'lead speed'"));
            }
            if let Some(vd) = num("v_d") {
                speed.push(format!("{vd} dt 3 title 'desired speed'"));
            }
            panel(&mut s, "(a) speed", speed);
            let mut safety = series(sources, "t", "b_h_x", "h_x");
            safety.push("0 dt 2 lc 'black' notitle".into());
            panel(&mut s, "(b) headway barrier", safety);
            let mut dist = series(sources, "t", "dhat0", "estimate");
            dist.extend(series(&sources[..1], "t", "d0", "disturbance"));
            panel(&mut s, "(c) disturbance", dist);
        }
        "bicycle" => {
            s.push_str("set size ratio -1\n");
            let r = num("obstacle_radius").unwrap_or(1.0);
            s.push_str(&format!(
                "set object 1 circle at 0,0 size {r} fc rgb '#2ca02c' fs transparent solid 0.4\n"
            ));
            s.push_str("set xlabel 'x [m]'\n");
            panel(&mut s, "(a) path", series(sources, "x0", "x1", "vehicle"));
            s.push_str("unset object 1\nset size noratio\nset xlabel 't [s]'\n");
            let mut levels = Vec::new();
            for l in value_labels {
                levels.extend(series(sources, "t", &format!("b_{l}"), l));
            }
            levels.push("0 dt 2 lc 'black' notitle".into());
            panel(&mut s, "(b) barrier chain", levels);
            let mut steer = series(sources, "t", "u0", "steering");
            steer.extend(series(sources, "t", "vstar0", "correction"));
            panel(&mut s, "(c) steering", steer);
        }
        _ => {
            panel(&mut s, "(a) state", series(sources, "t", "x0", "x"));
            let mut vals = Vec::new();
            for l in value_labels {
                vals.extend(series(sources, "t", &format!("b_{l}"), l));
            }
            panel(&mut s, "(b) barriers", vals);
            panel(&mut s, "(c) input", series(sources, "t", "u0", "u"));
        }
    }
    s.push_str("unset multiplot\n");
    s
}
