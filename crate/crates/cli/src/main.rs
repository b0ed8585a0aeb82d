//! `do-icbf`: run the benchmark scenarios, check barrier validity and
//! compare filter modes.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 filter
//! infeasible, 3 numerical blow-up, 4 validity counterexamples found.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use do_icbf_core::filter::FilterMode;
use do_icbf_core::sim::HaltReason;
use do_icbf_core::{run_closed_loop, summarize, Metrics, TrajectoryLog};

use config::{ConfigError, Overrides, RunConfig, OUT_ENV, SCHEMA_VERSION};
use output::{PlotSource, RunSummary};

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_BLOW_UP: u8 = 3;
const EXIT_COUNTEREXAMPLES: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "do-icbf", version, about = "Disturbance-observer integral barrier filters: simulate, check, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and write trajectory.csv and summary.json.
    Run(Common),
    /// Grid-check the barrier validity condition and write validity.json.
    Check(Common),
    /// Run the filter mode and a baseline side by side.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Mode to compare against (default: the scenario's baseline).
        #[arg(long, value_name = "MODE")]
        baseline: Option<FilterMode>,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Built-in scenario (acc, bicycle, example1) or a config file path.
    #[arg(long, value_name = "NAME", conflicts_with = "config")]
    scenario: Option<String>,
    /// JSON config file (`"schema": 1`).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// off, icbf, do_icbf or high_order.
    #[arg(long, value_name = "MODE")]
    filter: Option<FilterMode>,
    #[arg(long, value_name = "F")]
    dt: Option<f64>,
    #[arg(long = "t-end", value_name = "F")]
    t_end: Option<f64>,
    /// Output directory (default: $DO_ICBF_OUT, then ./out).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Also write a gnuplot script.
    #[arg(long)]
    emit_plot: bool,
}

impl Common {
    fn overrides(&self, baseline: Option<FilterMode>) -> Overrides {
        Overrides {
            scenario: self.scenario.clone(),
            config: self.config.clone(),
            filter: self.filter,
            baseline,
            dt: self.dt,
            t_end: self.t_end,
            out: self.out.clone(),
            seed: self.seed,
        }
    }
}

/// A failure that maps to exit code 1.
struct Fail(String);

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        Fail(e.0)
    }
}

impl From<do_icbf_core::Error> for Fail {
    fn from(e: do_icbf_core::Error) -> Self {
        Fail(e.to_string())
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Fail + '_ {
    move |e| Fail(format!("{}: {e}", path.display()))
}

fn halt_code(halt: &HaltReason) -> u8 {
    match halt {
        HaltReason::Completed => EXIT_OK,
        HaltReason::Infeasible { .. } => EXIT_INFEASIBLE,
        HaltReason::BlowUp { .. } => EXIT_BLOW_UP,
    }
}

fn num(v: f64) -> String {
    if v != 0.0 && !(1e-3..1e6).contains(&v.abs()) {
        format!("{v:.6e}")
    } else {
        format!("{v:.6}")
    }
}

fn describe(m: &Metrics) -> String {
    let mins: Vec<String> = m.min_barrier.iter().map(|(k, v)| format!("min {k} = {}", num(*v))).collect();
    let mut line = format!(
        "{} [{}]: {} at t = {:.3}; {}",
        m.scenario,
        m.filter_mode.as_str(),
        m.halt_reason.name(),
        m.t_final,
        mins.join(", ")
    );
    if let Some(o) = &m.final_output {
        line.push_str(&format!("; final {} = {}", o.name, num(o.value)));
    }
    if m.is_unsafe {
        line.push_str("; UNSAFE");
    }
    line
}

fn report_halt(halt: &HaltReason) {
    match halt {
        HaltReason::Completed => {}
        HaltReason::Infeasible { t, constraints } => {
            eprintln!("filter infeasible at t = {t} (constraints: {})", constraints.join(", "))
        }
        HaltReason::BlowUp { t, what } => eprintln!("numerical blow-up at t = {t}: {what}"),
    }
}

fn resolve(common: &Common, baseline: Option<FilterMode>) -> Result<RunConfig, Fail> {
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    Ok(RunConfig::resolve(&common.overrides(baseline), env_out)?)
}

fn simulate(cfg: &RunConfig, mode: FilterMode) -> Result<(TrajectoryLog, Metrics), Fail> {
    let log = run_closed_loop(cfg.scenario(), &cfg.sim(mode)?)?;
    let metrics = summarize(&log)?;
    Ok((log, metrics))
}

fn cmd_run(common: &Common) -> Result<u8, Fail> {
    let cfg = resolve(common, None)?;
    output::ensure_dir(&cfg.out).map_err(io_fail(&cfg.out))?;
    let (log, metrics) = simulate(&cfg, cfg.filter)?;
    let code = halt_code(&log.halt);
    let csv = cfg.out.join("trajectory.csv");
    output::write_csv(&csv, &log).map_err(io_fail(&csv))?;
    let summary = cfg.out.join("summary.json");
    let body = RunSummary {
        schema: SCHEMA_VERSION,
        command: "run",
        exit_code: code.into(),
        config: &cfg,
        metrics: &metrics,
    };
    output::write_json(&summary, &body).map_err(io_fail(&summary))?;
    if common.emit_plot {
        let src = [PlotSource {
            file: "trajectory.csv",
            tag: "",
        }];
        let path = cfg.out.join("plot.gp");
        std::fs::write(&path, output::plot_script(&cfg, &log.value_labels, &src)).map_err(io_fail(&path))?;
    }
    println!("{}", describe(&metrics));
    report_halt(&log.halt);
    println!("wrote {}", cfg.out.display());
    Ok(code)
}

fn cmd_check(common: &Common) -> Result<u8, Fail> {
    let cfg = resolve(common, None)?;
    output::ensure_dir(&cfg.out).map_err(io_fail(&cfg.out))?;
    let report = cfg.scenario().check(cfg.check_resolution)?;
    let path = cfg.out.join("validity.json");
    let mut text = report.to_json();
    text.push('\n');
    std::fs::write(&path, text).map_err(io_fail(&path))?;
    println!(
        "{}: {} (relative degree {}, {} of {} grid points checked, {} violations)",
        cfg.scenario,
        if report.valid { "valid" } else { "counterexamples found" },
        report.relative_degree,
        report.checked_points,
        report.grid_points,
        report.total_violations
    );
    for c in report.counterexamples.iter().take(5) {
        println!(
            "  {} at x = {:?}, u = {:?}, t = {}: w = {}, margin = {}",
            c.barrier,
            c.x,
            c.u,
            c.t,
            num(c.w),
            num(c.margin)
        );
    }
    println!("wrote {}", path.display());
    Ok(if report.valid { EXIT_OK } else { EXIT_COUNTEREXAMPLES })
}

fn cmd_compare(common: &Common, baseline: Option<FilterMode>) -> Result<u8, Fail> {
    let cfg = resolve(common, baseline)?;
    let modes = [cfg.filter, cfg.baseline];
    if modes[0] == modes[1] {
        return Err(Fail(format!(
            "compare needs two different modes (both are {})",
            modes[0].as_str()
        )));
    }
    output::ensure_dir(&cfg.out).map_err(io_fail(&cfg.out))?;
    let (a, b) = thread::scope(|s| {
        let other = s.spawn(|| simulate(&cfg, modes[1]));
        let first = simulate(&cfg, modes[0]);
        (first, other.join().expect("simulation thread panicked"))
    });
    let ((log_a, m_a), (log_b, m_b)) = (a?, b?);
    let code = halt_code(&log_a.halt).max(halt_code(&log_b.halt));

    let names = modes.map(|m| format!("trajectory_{}.csv", m.as_str()));
    for (name, log) in names.iter().zip([&log_a, &log_b]) {
        let path = cfg.out.join(name);
        output::write_csv(&path, log).map_err(io_fail(&path))?;
    }
    let side = cfg.out.join("compare.csv");
    output::write_side_by_side(&side, [&log_a, &log_b]).map_err(io_fail(&side))?;
    let summary = cfg.out.join("summary.json");
    let body = output::CompareSummary::new(&cfg, code.into(), [&m_a, &m_b]);
    output::write_json(&summary, &body).map_err(io_fail(&summary))?;
    if common.emit_plot {
        let src = [
            PlotSource {
                file: &names[0],
                tag: modes[0].as_str(),
            },
            PlotSource {
                file: &names[1],
                tag: modes[1].as_str(),
            },
        ];
        let path = cfg.out.join("plot.gp");
        std::fs::write(&path, output::plot_script(&cfg, &log_a.value_labels, &src)).map_err(io_fail(&path))?;
    }
    for (m, log) in [(&m_a, &log_a), (&m_b, &log_b)] {
        println!("{}", describe(m));
        report_halt(&log.halt);
    }
    println!("wrote {}", cfg.out.display());
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Check(c) => cmd_check(c),
        Command::Compare { common, baseline } => cmd_compare(common, *baseline),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
