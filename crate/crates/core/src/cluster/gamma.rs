use serde::{Deserialize, Serialize};

use super::sample::{x_statistic, ClusterSampler};
use crate::error::{invalid, Result};
use crate::rng::StreamKey;
use crate::stats::mean_stderr;
use crate::SQRT2;

/// Empirical pre-limit `w·P̂(X(w) > y)` of the measure `Γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub w: f64,
    pub y_grid: Vec<f64>,
    pub tail: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    /// Plug-in first moment `w·mean X(w)`.
    pub c_star: f64,
    pub c_star_stderr: f64,
}

impl GammaEstimate {
    /// Builds the estimate from `X(w)` draws.
    pub fn from_x(w: f64, xs: &[f64], y_grid: &[f64]) -> Result<Self> {
        if !(w > 0.0) {
            return invalid(format!("w must be positive, got {w}"));
        }
        if xs.is_empty() {
            return invalid("no X(w) samples");
        }
        if y_grid.is_empty() || y_grid[0] <= 0.0 || y_grid.windows(2).any(|p| p[0] >= p[1]) {
            return invalid("y grid must be positive and strictly ascending");
        }
        let n = xs.len() as f64;
        let mut tail = Vec::with_capacity(y_grid.len());
        let mut stderr = Vec::with_capacity(y_grid.len());
        for &y in y_grid {
            let p = xs.iter().filter(|&&x| x > y).count() as f64 / n;
            tail.push(w * p);
            stderr.push(w * (p * (1.0 - p) / n).sqrt());
        }
        let (m, se) = mean_stderr(xs);
        Ok(Self {
            w,
            y_grid: y_grid.to_vec(),
            tail,
            stderr,
            n_samples: xs.len(),
            c_star: w * m,
            c_star_stderr: w * se,
        })
    }

    pub fn tail_at(&self, y: f64) -> Option<f64> {
        self.y_grid.iter().position(|&g| g == y).map(|i| self.tail[i])
    }
}

/// Draws `n` clusters at level `w` (cluster `i` uses `key.derive(i)`) and
/// estimates `w·P(X(w) > y)` on `y_grid`.
pub fn gamma_tail(
    w: f64,
    n: usize,
    y_grid: &[f64],
    sampler: &ClusterSampler,
    key: StreamKey,
) -> Result<GammaEstimate> {
    if n < 1000 {
        return invalid(format!("gamma_tail needs n >= 1000, got {n}"));
    }
    let xs = (0..n)
        .map(|i| x_statistic(&sampler.sample(w, None, key.derive(i as u64))?))
        .collect::<Result<Vec<_>>>()?;
    GammaEstimate::from_x(w, &xs, y_grid)
}

/// `w·mean(X·1{X <= y})`, the truncated first moment.
pub fn truncated_first_moment(w: f64, xs: &[f64], y: f64) -> f64 {
    w * xs.iter().filter(|&&x| x <= y).sum::<f64>() / xs.len() as f64
}

/// Empirical calibration of the surrogate prefactor `ĉ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C0Calibration {
    pub c0: f64,
    pub stderr: f64,
    pub n: usize,
    pub t: f64,
    pub v: f64,
}

/// Least-squares slope through the origin of level-set counts against
/// `Z·v·e^{√2v − v²/(2t)}` across independent runs at horizon `t`.
///
/// `z` must be on the same scale as the `Z` source that the surrogate will
/// draw from (e.g. divided by the bank normalizer).
pub fn calibrate_c0(counts: &[f64], z: &[f64], v: f64, t: f64) -> Result<C0Calibration> {
    if counts.len() != z.len() || counts.len() < 2 {
        return invalid("calibration needs two equal-length samples of size >= 2");
    }
    if !(v > 0.0 && t > 0.0) {
        return invalid(format!("calibration needs v > 0 and t > 0, got v={v}, t={t}"));
    }
    let g = v * (SQRT2 * v - v * v / (2.0 * t)).exp();
    let xs: Vec<f64> = z.iter().map(|zi| zi * g).collect();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return invalid("calibration regressor is identically zero");
    }
    let sxy: f64 = xs.iter().zip(counts).map(|(x, y)| x * y).sum();
    let c0 = sxy / sxx;
    let n = counts.len();
    let rss: f64 = xs.iter().zip(counts).map(|(x, y)| (y - c0 * x).powi(2)).sum();
    let stderr = (rss / (n as f64 - 1.0) / sxx).sqrt();
    Ok(C0Calibration { c0, stderr, n, t, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{ClusterMode, ConstantZ};
    use std::sync::Arc;

    #[test]
    fn tail_is_monotone_and_vanishes_above_max() {
        let xs = [0.1, 0.5, 0.5, 2.0, 3.0];
        let g = GammaEstimate::from_x(10.0, &xs, &[0.2, 0.5, 1.0, 5.0]).unwrap();
        assert_eq!(g.tail, vec![8.0, 4.0, 4.0, 0.0]);
        assert!(g.tail.windows(2).all(|p| p[1] <= p[0]));
        assert!((g.c_star - 10.0 * 6.1 / 5.0).abs() < 1e-12);
        assert!(GammaEstimate::from_x(10.0, &xs, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn gamma_tail_runs_and_requires_samples() {
        let s = ClusterSampler::new(ClusterMode::Surrogate, 1.0, Arc::new(ConstantZ(1.0)));
        assert!(gamma_tail(5.0, 10, &[1.0], &s, StreamKey::new(1, 0)).is_err());
        let g = gamma_tail(5.0, 1000, &[0.5, 1.0, 2.0], &s, StreamKey::new(1, 0)).unwrap();
        assert_eq!(g.n_samples, 1000);
        assert!(g.tail.iter().all(|&t| t >= 0.0));
        assert!(g.c_star > 0.0);
    }

    #[test]
    fn calibration_recovers_known_slope() {
        let (v, t) = (2.0, 12.0);
        let g = v * (SQRT2 * v - v * v / (2.0 * t)).exp();
        let z: Vec<f64> = (1..=50).map(|i| i as f64 / 10.0).collect();
        let counts: Vec<f64> = z.iter().map(|zi| 0.3 * zi * g).collect();
        let c = calibrate_c0(&counts, &z, v, t).unwrap();
        assert!((c.c0 - 0.3).abs() < 1e-12);
        assert!(c.stderr < 1e-10);
        assert!(calibrate_c0(&counts, &z[..3], v, t).is_err());
    }

    #[test]
    fn truncated_moment() {
        assert!((truncated_first_moment(2.0, &[0.1, 0.2, 5.0, 0.3], 1.0) - 0.3).abs() < 1e-12);
    }
}
