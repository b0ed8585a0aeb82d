//! Run configuration: a JSON file (`schema: 1`) merged with command-line
//! overrides.

use std::fs;
use std::path::{Path, PathBuf};

use do_icbf_core::filter::FilterMode;
use do_icbf_core::rng::{seeded, uniform};
use do_icbf_core::scenarios::{
    build_acc_with, build_bicycle_with, build_example1_with, AccParams, BicycleParams, Disturbance, Example1Params,
};
use do_icbf_core::{Scenario, SimConfig, SCENARIO_NAMES};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_LOG_STRIDE: usize = 10;
pub const DEFAULT_OUT: &str = "out";
pub const OUT_ENV: &str = "DO_ICBF_OUT";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<do_icbf_core::Error> for ConfigError {
    fn from(e: do_icbf_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

/// Ranges for a sinusoidal disturbance drawn from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomDisturbance {
    pub offset: [f64; 2],
    pub amplitude: [f64; 2],
    pub omega: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub resolution: Option<usize>,
}

/// On-disk layout.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: u32,
    pub scenario: String,
    #[serde(default)]
    pub params: Option<Value>,
    pub filter: Option<FilterMode>,
    pub baseline: Option<FilterMode>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub log_stride: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub barriers: Option<Vec<String>>,
    #[serde(default)]
    pub check: CheckSection,
    pub random_disturbance: Option<RandomDisturbance>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ConfigFile =
            serde_json::from_str(&text).map_err(|e| err(format!("{}: {e}", path.display())))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(err(format!(
                "{}: unsupported schema {} (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    fn named(scenario: &str) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            scenario: scenario.to_string(),
            params: None,
            filter: None,
            baseline: None,
            dt: None,
            t_end: None,
            log_stride: None,
            seed: None,
            out: None,
            barriers: None,
            check: CheckSection::default(),
            random_disturbance: None,
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<String>,
    pub config: Option<PathBuf>,
    pub filter: Option<FilterMode>,
    pub baseline: Option<FilterMode>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Fully resolved configuration; serialized as the config echo in summaries.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub schema: u32,
    pub scenario: String,
    pub source: Option<PathBuf>,
    pub params: Value,
    pub filter: FilterMode,
    pub baseline: FilterMode,
    pub dt: f64,
    pub t_end: f64,
    pub log_stride: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub barriers: Option<Vec<String>>,
    pub check_resolution: Option<usize>,
    pub random_disturbance: Option<RandomDisturbance>,
    /// Disturbance drawn from `random_disturbance`, if any.
    pub drawn_disturbance: Option<Disturbance>,
    #[serde(skip)]
    built: Option<Scenario>,
}

fn parse_params<T: for<'de> Deserialize<'de> + Default>(params: &Option<Value>) -> Result<T, ConfigError> {
    match params {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| err(format!("params: {e}"))),
    }
}

fn json(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("parameters serialize to JSON")
}

fn draw(rng: &mut do_icbf_core::rng::SplitMix64, range: [f64; 2], what: &str) -> Result<f64, ConfigError> {
    if !(range[0] <= range[1]) || !range.iter().all(|v| v.is_finite()) {
        return Err(err(format!("random_disturbance.{what}: bad range {range:?}")));
    }
    Ok(uniform(rng, range[0], range[1]))
}

impl RunConfig {
    /// Merges file and flags. `--scenario` also accepts a path to a config
    /// file.
    pub fn resolve(o: &Overrides, env_out: Option<PathBuf>) -> Result<Self, ConfigError> {
        let (file, source) = match (&o.scenario, &o.config) {
            (Some(_), Some(_)) => return Err(err("--scenario and --config are mutually exclusive")),
            (None, Some(path)) => (ConfigFile::load(path)?, Some(path.clone())),
            (Some(name), None) if SCENARIO_NAMES.contains(&name.as_str()) => (ConfigFile::named(name), None),
            (Some(name), None) if Path::new(name).is_file() => {
                (ConfigFile::load(Path::new(name))?, Some(PathBuf::from(name)))
            }
            (Some(name), None) => {
                return Err(err(format!(
                    "unknown scenario `{name}` (expected one of {} or a config file)",
                    SCENARIO_NAMES.join(", ")
                )))
            }
            (None, None) => return Err(err("one of --scenario or --config is required")),
        };
        if !SCENARIO_NAMES.contains(&file.scenario.as_str()) {
            return Err(err(format!(
                "unknown scenario `{}` (expected one of {})",
                file.scenario,
                SCENARIO_NAMES.join(", ")
            )));
        }
        let out = o
            .out
            .clone()
            .or(file.out.clone())
            .or(env_out)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let seed = o.seed.or(file.seed).unwrap_or(0);
        let mut cfg = RunConfig {
            schema: SCHEMA_VERSION,
            scenario: file.scenario.clone(),
            source,
            params: Value::Null,
            // placeholders; replaced from the scenario defaults below
            filter: FilterMode::Off,
            baseline: FilterMode::Off,
            dt: o.dt.or(file.dt).unwrap_or(DEFAULT_DT),
            t_end: 0.0,
            log_stride: file.log_stride.unwrap_or(DEFAULT_LOG_STRIDE),
            seed,
            out,
            barriers: file.barriers.clone(),
            check_resolution: file.check.resolution,
            random_disturbance: file.random_disturbance.clone(),
            drawn_disturbance: None,
            built: None,
        };
        let (scenario, params, drawn) = cfg.build(&file.params)?;
        cfg.params = params;
        cfg.drawn_disturbance = drawn;
        cfg.filter = o.filter.or(file.filter).unwrap_or(scenario.default_filter);
        cfg.baseline = o.baseline.or(file.baseline).unwrap_or(scenario.default_baseline);
        cfg.t_end = o.t_end.or(file.t_end).unwrap_or(scenario.default_t_end);
        if let Some(res) = cfg.check_resolution {
            if res < 2 {
                return Err(err(format!("check.resolution must be >= 2, got {res}")));
            }
        }
        // validates dt, t_end and stride
        cfg.sim(cfg.filter)?;
        cfg.built = Some(scenario);
        Ok(cfg)
    }

    fn build(&self, raw: &Option<Value>) -> Result<(Scenario, Value, Option<Disturbance>), ConfigError> {
        let mut drawn = None;
        let (mut scenario, params) = match self.scenario.as_str() {
            "acc" => {
                let mut p: AccParams = parse_params(raw)?;
                if let Some(rd) = &self.random_disturbance {
                    let mut rng = seeded(self.seed);
                    p.disturbance = Disturbance::Sinusoid {
                        offset: draw(&mut rng, rd.offset, "offset")?,
                        amplitude: draw(&mut rng, rd.amplitude, "amplitude")?,
                        omega: draw(&mut rng, rd.omega, "omega")?,
                    };
                    drawn = Some(p.disturbance);
                }
                (build_acc_with(&p)?, json(&p))
            }
            "bicycle" => {
                if self.random_disturbance.is_some() {
                    return Err(err("random_disturbance applies to the acc scenario only"));
                }
                let p: BicycleParams = parse_params(raw)?;
                (build_bicycle_with(&p)?, json(&p))
            }
            _ => {
                if self.random_disturbance.is_some() {
                    return Err(err("random_disturbance applies to the acc scenario only"));
                }
                let p: Example1Params = parse_params(raw)?;
                (build_example1_with(&p)?, json(&p))
            }
        };
        if let Some(keep) = &self.barriers {
            scenario.retain_barriers(keep)?;
        }
        Ok((scenario, params, drawn))
    }

    pub fn scenario(&self) -> &Scenario {
        self.built.as_ref().expect("resolved configs hold their scenario")
    }

    pub fn sim(&self, mode: FilterMode) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig::new(self.dt, self.t_end, self.log_stride, mode)?)
    }
}
