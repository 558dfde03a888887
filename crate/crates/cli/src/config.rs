//! Flat `key=value` experiment configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! The keys `experiment`, `seed`, `replicas`, `out` and `workers` are
//! reserved; everything else is an experiment parameter. Values are typed
//! on parse: `true`/`false` are flags, integer literals are integers, other
//! numeric literals are reals and anything else is text.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Flag(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl ParamValue {
    pub fn parse(raw: &str) -> Self {
        let raw = raw.trim();
        match raw {
            "true" => return ParamValue::Flag(true),
            "false" => return ParamValue::Flag(false),
            _ => {}
        }
        if let Ok(i) = raw.parse::<i64>() {
            return ParamValue::Int(i);
        }
        match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => ParamValue::Real(x),
            _ => ParamValue::Text(raw.to_string()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Flag(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub params: BTreeMap<String, ParamValue>,
    pub seed: u64,
    pub replicas: usize,
    pub out: PathBuf,
    /// Worker budget; `None` defers to `BBMX_WORKERS`, then to 1.
    pub workers: Option<usize>,
}

pub const WORKERS_ENV: &str = "BBMX_WORKERS";

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            params: BTreeMap::new(),
            seed: 0,
            replicas: 1,
            out: PathBuf::from("bbmx-out"),
            workers: None,
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::new("");
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Assigns one key, routing reserved keys to their fields.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let bad = |what: &str| CliError::Config(format!("{key} must be {what}, got `{value}`"));
        match key {
            "experiment" => self.experiment = value.to_string(),
            "seed" => self.seed = value.parse().map_err(|_| bad("a 64-bit unsigned integer"))?,
            "replicas" => self.replicas = value.parse().map_err(|_| bad("a positive integer"))?,
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = Some(value.parse().map_err(|_| bad("a positive integer"))?),
            "" => return Err(CliError::Config("empty key".into())),
            _ => {
                self.params.insert(key.to_string(), ParamValue::parse(value));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.replicas == 0 {
            return Err(CliError::Config("replicas must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective worker budget: explicit setting, else `BBMX_WORKERS`, else 1.
    pub fn worker_budget(&self) -> CliResult<usize> {
        if let Some(w) = self.workers {
            return Ok(w.max(1));
        }
        match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w >= 1)
                .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
            Err(_) => Ok(1),
        }
    }

    /// Sorted `key=value` lines of everything that determines the data:
    /// experiment, seed, replicas and parameters. Output location and worker
    /// budget are excluded.
    pub fn canonical(&self) -> String {
        let mut lines: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        lines.push(format!("experiment={}", self.experiment));
        lines.push(format!("replicas={}", self.replicas));
        lines.push(format!("seed={}", self.seed));
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Hex SHA-256 of [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn get(&self, key: &str) -> CliResult<&ParamValue> {
        self.params
            .get(key)
            .ok_or_else(|| CliError::Config(format!("missing parameter `{key}`")))
    }

    pub fn real(&self, key: &str) -> CliResult<f64> {
        match self.get(key)? {
            ParamValue::Real(x) => Ok(*x),
            ParamValue::Int(i) => Ok(*i as f64),
            other => Err(CliError::Config(format!("{key} must be a number, got `{other}`"))),
        }
    }

    pub fn opt_real(&self, key: &str) -> CliResult<Option<f64>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(ParamValue::Text(s)) if s == "auto" => Ok(None),
            Some(_) => self.real(key).map(Some),
        }
    }

    pub fn count(&self, key: &str) -> CliResult<usize> {
        match self.get(key)? {
            ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
            other => Err(CliError::Config(format!("{key} must be a nonnegative integer, got `{other}`"))),
        }
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.get(key)? {
            ParamValue::Flag(b) => Ok(*b),
            other => Err(CliError::Config(format!("{key} must be true or false, got `{other}`"))),
        }
    }

    pub fn text(&self, key: &str) -> CliResult<String> {
        Ok(self.get(key)?.to_string())
    }

    /// Comma-separated reals.
    pub fn reals(&self, key: &str) -> CliResult<Vec<f64>> {
        let raw = self.text(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("{key}: bad number `{s}`")))
            })
            .collect()
    }

    /// Fills in missing parameters and rejects unknown ones.
    pub fn apply_defaults(&mut self, defaults: &[(&str, &str)]) -> CliResult<()> {
        for key in self.params.keys() {
            if !defaults.iter().any(|(k, _)| k == key) {
                let known: Vec<&str> = defaults.iter().map(|d| d.0).collect();
                return Err(CliError::Config(format!(
                    "unknown parameter `{key}` for {} (known: {})",
                    self.experiment,
                    known.join(", ")
                )));
            }
        }
        for (k, v) in defaults {
            self.params
                .entry(k.to_string())
                .or_insert_with(|| ParamValue::parse(v));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_files() {
        let cfg = ExperimentConfig::parse(
            "# comment\nexperiment = simulate-bbm\nseed=7\n\nreplicas=3 # trailing\nt=2.5\nprune=false\nmode=surrogate\nn=10\n",
        )
        .unwrap();
        assert_eq!(cfg.experiment, "simulate-bbm");
        assert_eq!((cfg.seed, cfg.replicas), (7, 3));
        assert_eq!(cfg.real("t").unwrap(), 2.5);
        assert!(!cfg.flag("prune").unwrap());
        assert_eq!(cfg.text("mode").unwrap(), "surrogate");
        assert_eq!(cfg.count("n").unwrap(), 10);
        assert_eq!(cfg.real("n").unwrap(), 10.0);
        assert!(ExperimentConfig::parse("novalue\n").is_err());
        assert!(ExperimentConfig::parse("seed=-1\n").is_err());
    }

    #[test]
    fn hash_ignores_order_out_and_workers() {
        let a = ExperimentConfig::parse("experiment=x\nseed=1\na=1\nb=2.5\nout=/tmp/a\nworkers=4\n").unwrap();
        let b = ExperimentConfig::parse("b=2.5\na=1\nseed=1\nexperiment=x\nout=/tmp/b\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse("experiment=x\nseed=2\na=1\nb=2.5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let mut cfg = ExperimentConfig::parse("experiment=x\nt=3\n").unwrap();
        cfg.apply_defaults(&[("t", "1"), ("v", "2.0")]).unwrap();
        assert_eq!(cfg.real("t").unwrap(), 3.0);
        assert_eq!(cfg.real("v").unwrap(), 2.0);
        let mut bad = ExperimentConfig::parse("experiment=x\nzz=3\n").unwrap();
        assert!(bad.apply_defaults(&[("t", "1")]).is_err());
    }

    #[test]
    fn value_typing() {
        assert_eq!(ParamValue::parse("true"), ParamValue::Flag(true));
        assert_eq!(ParamValue::parse("12"), ParamValue::Int(12));
        assert_eq!(ParamValue::parse("1e-3"), ParamValue::Real(1e-3));
        assert_eq!(ParamValue::parse("0.5,1"), ParamValue::Text("0.5,1".into()));
    }
}
