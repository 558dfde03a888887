use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::FastRng;

/// Sampler of independent copies of the derivative-martingale limit `Z`.
pub trait ZSource: Send + Sync {
    fn draw(&self, rng: &mut FastRng) -> f64;

    /// Mean of the law drawn from.
    fn mean(&self) -> f64;

    fn describe(&self) -> String;
}

/// Degenerate source, used for testing and sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantZ(pub f64);

impl ZSource for ConstantZ {
    fn draw(&self, _rng: &mut FastRng) -> f64 {
        self.0
    }

    fn mean(&self) -> f64 {
        self.0
    }

    fn describe(&self) -> String {
        format!("constant Z = {}", self.0)
    }
}

/// How a bank was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZBankProvenance {
    /// BBM horizon of the runs.
    pub t: f64,
    pub seed: u64,
    pub c_diamond: f64,
    /// Runs simulated, including those with `Z_t <= 0`.
    pub runs: usize,
    /// Mean of the positive raw values; bank entries are divided by it.
    pub normalizer: f64,
}

/// Empirical resampling from simulated `Z_t` values.
///
/// Only positive values are kept (the limit `Z` is positive; nonpositive
/// `Z_t` are finite-horizon artifacts) and they are rescaled to mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZBank {
    values: Vec<f64>,
    provenance: ZBankProvenance,
}

impl ZBank {
    pub fn from_raw(raw: &[f64], t: f64, seed: u64, c_diamond: f64) -> Result<Self> {
        let positive: Vec<f64> = raw.iter().copied().filter(|&z| z > 0.0).collect();
        if positive.is_empty() {
            return Err(Error::Empty("no positive Z_t values for the bank".into()));
        }
        let normalizer = positive.iter().sum::<f64>() / positive.len() as f64;
        Ok(Self {
            values: positive.iter().map(|z| z / normalizer).collect(),
            provenance: ZBankProvenance {
                t,
                seed,
                c_diamond,
                runs: raw.len(),
                normalizer,
            },
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> &ZBankProvenance {
        &self.provenance
    }

    /// Single-column CSV with a `#` provenance header.
    pub fn to_csv(&self) -> String {
        let p = &self.provenance;
        let mut out = format!(
            "# z-bank t={} seed={} c_diamond={} runs={} normalizer={:e}\nz\n",
            p.t, p.seed, p.c_diamond, p.runs, p.normalizer
        );
        for v in &self.values {
            let _ = writeln!(out, "{v:e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix("# z-bank "))
            .ok_or_else(|| Error::InvalidArgument("missing z-bank provenance header".into()))?;
        let field = |name: &str| -> Result<&str> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::InvalidArgument(format!("z-bank header lacks {name}")))
        };
        let num = |name: &str| -> Result<f64> {
            field(name)?
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad {name} in z-bank header")))
        };
        let provenance = ZBankProvenance {
            t: num("t")?,
            seed: field("seed")?
                .parse()
                .map_err(|_| Error::InvalidArgument("bad seed in z-bank header".into()))?,
            c_diamond: num("c_diamond")?,
            runs: num("runs")? as usize,
            normalizer: num("normalizer")?,
        };
        if lines.next() != Some("z") {
            return invalid("z-bank column header must be `z`");
        }
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad z-bank value `{l}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Empty("z-bank has no values".into()));
        }
        Ok(Self { values, provenance })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv(&text)
    }
}

impl ZSource for ZBank {
    fn draw(&self, rng: &mut FastRng) -> f64 {
        self.values[rng.gen_range(0..self.values.len())]
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn describe(&self) -> String {
        let p = &self.provenance;
        format!(
            "Z bank: {} positive values of {} runs at t={} (seed {}, C⋄={})",
            self.values.len(),
            p.runs,
            p.t,
            p.seed,
            p.c_diamond
        )
    }
}
