//! Flat `key = value` configuration with per-experiment defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use singular_eft::{GridOptions, ModelParams};

use crate::error::CliError;
use crate::experiments::Experiment;

const GRID_KEYS: [(&str, Option<&str>); 4] = [
    ("nodes_per_panel", Some("40")),
    ("graded_nodes", Some("10")),
    ("grading_levels", Some("24")),
    ("seed", Some("0")),
];

/// Keys accepted by `experiment` with their defaults; `None` marks an
/// optional key without a default.
fn schema(experiment: Experiment) -> Vec<(&'static str, Option<&'static str>)> {
    let p_wave = [
        ("lambda", Some("4.25")),
        ("l", Some("1")),
        ("p", Some("0.1")),
    ];
    let s_wave = [
        ("lambda", Some("2")),
        ("g", Some("1")),
        ("big_m", Some("0.5")),
        ("data", Some("0.1:-1.05, 0.15:-0.34")),
    ];
    let mut keys: Vec<(&str, Option<&str>)> = match experiment {
        Experiment::LoCutoffScan => [
            &p_wave[..],
            &[
                ("cutoffs", Some("geomspace(5, 500, 5)")),
                ("x_min", Some("0.01")),
                ("x_max", None),
                ("x_count", Some("241")),
            ],
        ]
        .concat(),
        Experiment::LoRenormalized => [
            &p_wave[..],
            &[
                ("lambda_star", Some("0.2")),
                ("cutoffs", Some("10, 20, 40, 80")),
                ("coupling", Some("analytic")),
                ("x_min", Some("0.01")),
                ("x_max", None),
                ("x_count", Some("241")),
            ],
        ]
        .concat(),
        Experiment::RgFlow => [
            &p_wave[..],
            &[
                ("lambda_star", Some("0.2")),
                ("reference_cutoff", Some("100")),
                ("datum_k", None),
                ("cutoff_min", Some("10")),
                ("cutoff_max", Some("10000")),
                ("samples_per_decade", Some("20")),
            ],
        ]
        .concat(),
        Experiment::NloXScan => [
            &s_wave[..],
            &[
                ("x_momentum", Some("0.175")),
                ("cutoffs", Some("geomspace(5, 50, 31)")),
            ],
        ]
        .concat(),
        Experiment::NloEnergyScan => [
            &s_wave[..],
            &[
                ("cutoffs", Some("5.5, 6.5, 7.5, 8.5")),
                ("momenta", Some("linspace(0.02, 0.2, 19)")),
            ],
        ]
        .concat(),
        Experiment::BornCheck => vec![
            ("lambdas", Some("0.001, 0.002, 0.004")),
            ("l", Some("0")),
            ("p", Some("0.1")),
            ("cutoffs", Some("1000")),
        ],
        Experiment::OscillationFit => [
            &p_wave[..],
            &[
                ("lambda_star", Some("0.2")),
                ("cutoffs", Some("10000")),
                ("x_min", Some("20")),
                ("x_max", None),
                ("x_count", Some("400")),
            ],
        ]
        .concat(),
    };
    keys.extend(GRID_KEYS);
    keys
}

/// Resolved configuration: defaults, then the config file, then `--set`.
#[derive(Debug, Clone)]
pub struct Config {
    pub experiment: Experiment,
    values: BTreeMap<String, String>,
}

fn parse_assignment(line: &str) -> Result<(String, String), CliError> {
    let (key, value) = line
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("expected key = value, got {line:?}")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("missing key in {line:?}")));
    }
    Ok((key.to_string(), value.trim().to_string()))
}

impl Config {
    pub fn resolve(
        experiment: Experiment,
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, CliError> {
        let schema = schema(experiment);
        let mut values: BTreeMap<String, String> = schema
            .iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v.to_string())))
            .collect();
        let mut assignments = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut seen = BTreeMap::new();
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = parse_assignment(line)
                    .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
                if seen.insert(k.clone(), n + 1).is_some() {
                    return Err(CliError::Config(format!(
                        "{}:{}: duplicate key {k}",
                        path.display(),
                        n + 1
                    )));
                }
                assignments.push((k, v));
            }
        }
        for item in overrides {
            assignments.push(parse_assignment(item)?);
        }
        for (k, v) in assignments {
            if !schema.iter().any(|(name, _)| *name == k) {
                let known: Vec<&str> = schema.iter().map(|(name, _)| *name).collect();
                return Err(CliError::Config(format!(
                    "unknown key {k:?} for {}; accepted keys: {}",
                    experiment.name(),
                    known.join(", ")
                )));
            }
            values.insert(k, v);
        }
        Ok(Self { experiment, values })
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn raw(&self, key: &str) -> Result<&str, CliError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Config(format!("missing key {key}")))
    }

    pub fn float(&self, key: &str) -> Result<f64, CliError> {
        parse_float(key, self.raw(key)?)
    }

    pub fn optional_float(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.values
            .get(key)
            .map(|v| parse_float(key, v))
            .transpose()
    }

    pub fn count(&self, key: &str) -> Result<usize, CliError> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| CliError::Config(format!("{key} = {raw:?} is not a non-negative integer")))
    }

    pub fn text(&self, key: &str) -> Result<&str, CliError> {
        self.raw(key)
    }

    /// A list written as `a, b, c`, `linspace(a, b, n)` or `geomspace(a, b, n)`.
    pub fn list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        parse_list(key, self.raw(key)?)
    }

    /// Data points written as `p:k, p:k`.
    pub fn pairs(&self, key: &str) -> Result<Vec<(f64, f64)>, CliError> {
        let raw = self.raw(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| {
                let (p, k) = item.split_once(':').ok_or_else(|| {
                    CliError::Config(format!("{key}: expected p:k, got {item:?}"))
                })?;
                Ok((parse_float(key, p.trim())?, parse_float(key, k.trim())?))
            })
            .collect()
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let l = if self.has("l") {
            u32::try_from(self.count("l")?)
                .map_err(|_| CliError::Config("l out of range".into()))?
        } else {
            0
        };
        let mut params = ModelParams::lo(self.float("lambda")?, l);
        if self.has("g") {
            params = params.with_nlo(self.float("g")?, self.float("big_m")?);
        }
        params
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<GridOptions, CliError> {
        let grid = GridOptions {
            nodes_per_panel: self.count("nodes_per_panel")?,
            graded_nodes: self.count("graded_nodes")?,
            grading_levels: self.count("grading_levels")?,
            ..GridOptions::default()
        };
        if grid.nodes_per_panel < 2 || grid.graded_nodes < 2 {
            return Err(CliError::Config("panels need at least 2 nodes".into()));
        }
        Ok(grid)
    }

    /// Canonical text of the resolved configuration.
    pub fn canonical(&self) -> String {
        let mut out = format!("experiment = {}\n", self.experiment.name());
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

fn parse_float(key: &str, raw: &str) -> Result<f64, CliError> {
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Config(format!("{key} = {raw:?} is not a finite number")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, CliError> {
    let raw = raw.trim();
    for (name, geometric) in [("linspace", false), ("geomspace", true)] {
        let Some(args) = raw.strip_prefix(name) else {
            continue;
        };
        let args = args
            .trim()
            .strip_prefix('(')
            .and_then(|a| a.strip_suffix(')'))
            .ok_or_else(|| CliError::Config(format!("{key}: malformed {name}(a, b, n)")))?;
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let [a, b, n] = parts[..] else {
            return Err(CliError::Config(format!(
                "{key}: {name} takes three arguments"
            )));
        };
        let (a, b) = (parse_float(key, a)?, parse_float(key, b)?);
        let n: usize = n
            .parse()
            .map_err(|_| CliError::Config(format!("{key}: bad count {n:?}")))?;
        if geometric && !(a > 0.0 && b > 0.0) {
            return Err(CliError::Config(format!(
                "{key}: geomspace needs positive ends"
            )));
        }
        return Ok(match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n)
                .map(|i| {
                    let t = i as f64 / (n - 1) as f64;
                    if geometric {
                        a * (b / a).powf(t)
                    } else {
                        a + (b - a) * t
                    }
                })
                .collect(),
        });
    }
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_float(key, s))
        .collect()
}
