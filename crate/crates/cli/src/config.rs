//! Flat `key = value` run configuration files.

use fracfield_core::sim::{Benchmark, BenchmarkConfig, EstimatorMode, Preset};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A parsed run configuration: the benchmark setup plus output options.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub cfg: BenchmarkConfig,
    /// All requested length scales; `cfg.mat.eps` is the first.
    pub eps_list: Vec<f64>,
    pub out_dir: PathBuf,
}

/// Parses a configuration file. `benchmark` and `eps` are required; every
/// other key falls back to the preset defaults of the benchmark.
///
/// Recognized keys: `benchmark`, `mu`, `lambda`, `gc`, `kappa`, `eps`,
/// `tau`, `steps`, `h0`, `stages`, `theta`, `estimator`, `splitting`,
/// `out_dir`. `eps` accepts a comma-separated list for the efficiency
/// sweep.
pub fn parse_config(path: &str, text: &str, preset: Preset) -> Result<RunConfig, ConfigError> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError(format!("{path}:{lineno}: expected `key = value`, got `{line}`")));
        };
        pairs.push((lineno, key.trim().to_string(), value.trim().to_string()));
    }

    let lookup = |key: &str| pairs.iter().find(|(_, k, _)| k == key);
    let known = [
        "benchmark", "mu", "lambda", "gc", "kappa", "eps", "tau", "steps", "h0", "stages",
        "theta", "estimator", "splitting", "out_dir",
    ];
    for (lineno, key, _) in &pairs {
        if !known.contains(&key.as_str()) {
            return Err(ConfigError(format!("{path}:{lineno}: unknown key `{key}`")));
        }
    }

    let benchmark = match lookup("benchmark") {
        None => return Err(ConfigError(format!("{path}: missing required key `benchmark`"))),
        Some((lineno, _, v)) => Benchmark::parse(v)
            .map_err(|_| ConfigError(format!("{path}:{lineno}: unknown benchmark `{v}`")))?,
    };
    let eps_list: Vec<f64> = match lookup("eps") {
        None => return Err(ConfigError(format!("{path}: missing required key `eps`"))),
        Some((lineno, _, v)) => v
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    ConfigError(format!("{path}:{lineno}: invalid number `{}` for `eps`", s.trim()))
                })
            })
            .collect::<Result<_, _>>()?,
    };
    if eps_list.is_empty() || eps_list.iter().any(|e| *e <= 0.0) {
        return Err(ConfigError(format!("{path}: `eps` must be a positive number or list")));
    }

    let mut cfg = BenchmarkConfig::preset(benchmark, preset, eps_list[0]);

    let parse_f64 = |key: &str| -> Result<Option<f64>, ConfigError> {
        match lookup(key) {
            None => Ok(None),
            Some((lineno, _, v)) => v.parse::<f64>().map(Some).map_err(|_| {
                ConfigError(format!("{path}:{lineno}: invalid number `{v}` for `{key}`"))
            }),
        }
    };
    let parse_usize = |key: &str| -> Result<Option<usize>, ConfigError> {
        match lookup(key) {
            None => Ok(None),
            Some((lineno, _, v)) => v.parse::<usize>().map(Some).map_err(|_| {
                ConfigError(format!("{path}:{lineno}: invalid integer `{v}` for `{key}`"))
            }),
        }
    };

    if let Some(v) = parse_f64("mu")? {
        cfg.mat.mu = v;
    }
    if let Some(v) = parse_f64("lambda")? {
        cfg.mat.lambda = v;
    }
    if let Some(v) = parse_f64("gc")? {
        cfg.mat.g_c = v;
    }
    if let Some(v) = parse_f64("kappa")? {
        cfg.mat.kappa = v;
    }
    if let Some(v) = parse_f64("tau")? {
        cfg.tau = v;
    }
    if let Some(v) = parse_usize("steps")? {
        cfg.steps = v;
    }
    if let Some(v) = parse_f64("h0")? {
        cfg.h0 = v;
    }
    if let Some(v) = parse_usize("stages")? {
        cfg.stages = v;
    }
    if let Some(v) = parse_f64("theta")? {
        cfg.theta = v;
    }
    if let Some((lineno, _, v)) = lookup("estimator") {
        cfg.estimator = EstimatorMode::parse(v)
            .map_err(|_| ConfigError(format!("{path}:{lineno}: unknown estimator mode `{v}`")))?;
    }
    if let Some((lineno, _, v)) = lookup("splitting") {
        cfg.splitting = match v.as_str() {
            "on" | "true" | "1" => true,
            "off" | "false" | "0" => false,
            _ => {
                return Err(ConfigError(format!(
                    "{path}:{lineno}: `splitting` must be on/off, got `{v}`"
                )))
            }
        };
    }
    let out_dir = lookup("out_dir")
        .map(|(_, _, v)| PathBuf::from(v))
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(RunConfig { cfg, eps_list, out_dir })
}
