//! Finite point measures on the real line.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Finite collection of atoms, kept sorted in descending order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    atoms: Vec<f64>,
}

impl PointMeasure {
    pub fn new(mut atoms: Vec<f64>) -> Result<Self> {
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::Range("point measure atoms must be finite".into()));
        }
        atoms.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(Self { atoms })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn top(&self) -> Option<f64> {
        self.atoms.first().copied()
    }

    /// Number of atoms in `[lower, upper]`.
    pub fn count_in(&self, lower: f64, upper: f64) -> usize {
        // atoms descending: skip those above `upper`, then count down to `lower`
        let start = self.atoms.partition_point(|&a| a > upper);
        let end = self.atoms.partition_point(|&a| a >= lower);
        end.saturating_sub(start)
    }

    /// Number of atoms in `[lower, ∞)`.
    pub fn count_at_least(&self, lower: f64) -> usize {
        self.atoms.partition_point(|&a| a >= lower)
    }

    pub fn shifted(&self, by: f64) -> PointMeasure {
        PointMeasure {
            atoms: self.atoms.iter().map(|a| a + by).collect(),
        }
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }
}

/// Interval `[lower, upper]` with possibly infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lower: f64,
    pub upper: f64,
}

impl Window {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > upper {
            return invalid(format!("window needs lower <= upper, got [{lower}, {upper}]"));
        }
        Ok(Self { lower, upper })
    }

    pub const fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn at_least(lower: f64) -> Self {
        Self {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Pairs `(tip, cluster)`: each cluster is a point measure of heights
/// relative to its tip, so its top atom is 0 and all atoms are `<= 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecoratedPointMeasure {
    pairs: Vec<(f64, PointMeasure)>,
}

impl DecoratedPointMeasure {
    /// Builds the measure; pairs are stored in descending tip order.
    pub fn new(mut pairs: Vec<(f64, PointMeasure)>) -> Result<Self> {
        for (tip, cluster) in &pairs {
            if !tip.is_finite() {
                return Err(Error::Range("decorated tip must be finite".into()));
            }
            match cluster.top() {
                Some(top) if top == 0.0 => {}
                Some(top) => {
                    return invalid(format!("cluster top atom must be 0, found {top}"));
                }
                None => return invalid("cluster must contain its tip atom"),
            }
        }
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(f64, PointMeasure)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn tips(&self) -> PointMeasure {
        PointMeasure {
            atoms: self.pairs.iter().map(|p| p.0).collect(),
        }
    }

    /// Superposition `Σ_k C^k(· − u^k)`.
    pub fn flatten(&self) -> PointMeasure {
        let atoms = self
            .pairs
            .iter()
            .flat_map(|(u, c)| c.atoms().iter().map(move |a| u + a))
            .collect();
        PointMeasure::new(atoms).expect("finite atoms")
    }

    pub fn total_mass(&self) -> usize {
        self.pairs.iter().map(|p| p.1.len()).sum()
    }
}
