//! Exact Gaussian path samplers: Brownian motion, Brownian bridges,
//! Bessel-3 (as the norm of a 3D Brownian motion) and the cluster backbone.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;
use crate::{log_plus, LOG_CURVE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite time".into()));
        }
        if times[0] < 0.0 {
            return Err(Error::InvalidGrid(format!("negative first time {}", times[0])));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    /// `n + 1` equally spaced points on `[0, end]`.
    pub fn uniform(end: f64, n: usize) -> Result<Self> {
        if !(end > 0.0) || n == 0 {
            return invalid(format!("uniform grid needs end > 0 and n >= 1 (end={end}, n={n})"));
        }
        Self::new((0..=n).map(|k| end * k as f64 / n as f64).collect())
    }

    /// `n` log-spaced points on `[lo, hi]`.
    pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || n < 2 {
            return invalid(format!("log grid needs 0 < lo < hi and n >= 2 (lo={lo}, hi={hi}, n={n})"));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut times: Vec<f64> = (0..n)
            .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
            .collect();
        times[0] = lo;
        times[n - 1] = hi;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "path has {} values for {} grid points",
                values.len(),
                grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("non-finite path value".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(time, value)` rows for CSV export.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.times().iter().copied().zip(self.values.iter().copied())
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Brownian increments along `times`, starting from `x0` at time 0.
fn brownian_values<R: Rng + ?Sized>(times: &[f64], x0: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let (mut prev_t, mut x) = (0.0, x0);
    for &t in times {
        let dt = t - prev_t;
        if dt > 0.0 {
            x += dt.sqrt() * gaussian(rng);
        }
        out.push(x);
        prev_t = t;
    }
    out
}

pub fn sample_brownian(grid: &TimeGrid, x0: f64, key: StreamKey) -> Result<SamplePath> {
    if !x0.is_finite() {
        return invalid("x0 must be finite");
    }
    let mut rng = key.rng();
    let values = brownian_values(grid.times(), x0, &mut rng);
    SamplePath::new(grid.clone(), values)
}

/// Brownian bridge from `x0` at time 0 to `x_end` at `t_end`, observed on `grid`.
/// Pinned endpoints are written exactly.
pub fn sample_bridge(
    grid: &TimeGrid,
    t_end: f64,
    x0: f64,
    x_end: f64,
    key: StreamKey,
) -> Result<SamplePath> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return invalid(format!("bridge end time must be positive, got {t_end}"));
    }
    if let Some(&bad) = grid.times().iter().find(|&&s| s > t_end) {
        return invalid(format!("grid point {bad} beyond bridge end {t_end}"));
    }
    let mut rng = key.rng();
    let mut times = grid.times().to_vec();
    let need_end = grid.last() < t_end;
    if need_end {
        times.push(t_end);
    }
    let w = brownian_values(&times, 0.0, &mut rng);
    let w_end = w[w.len() - 1];
    let values = grid
        .times()
        .iter()
        .zip(&w)
        .map(|(&s, &ws)| {
            if s == 0.0 {
                x0
            } else if s == t_end {
                x_end
            } else {
                let frac = s / t_end;
                x0 + ws - frac * w_end + frac * (x_end - x0)
            }
        })
        .collect();
    SamplePath::new(grid.clone(), values)
}

/// A Bessel-3 path kept as its underlying 3D Brownian motion so that it can
/// be refined later by Brownian-bridge interpolation of each component.
#[derive(Debug, Clone)]
pub struct Bessel3Path {
    times: Vec<f64>,
    points: Vec<[f64; 3]>,
}

impl Bessel3Path {
    /// Samples the 3D motion from `(y0, 0, 0)` at time 0 on `times`.
    pub fn sample<R: Rng + ?Sized>(times: &[f64], y0: f64, rng: &mut R) -> Result<Self> {
        if !(y0 >= 0.0) || !y0.is_finite() {
            return invalid(format!("Bessel-3 start must be >= 0, got {y0}"));
        }
        let mut all_times = Vec::with_capacity(times.len() + 1);
        let mut points = Vec::with_capacity(times.len() + 1);
        all_times.push(0.0);
        points.push([y0, 0.0, 0.0]);
        let mut cur = [y0, 0.0, 0.0];
        let mut prev = 0.0;
        for &t in times {
            if t < prev || (t == prev && t > 0.0) {
                return Err(Error::InvalidGrid("times must be strictly increasing".into()));
            }
            if t == 0.0 {
                continue;
            }
            let sd = (t - prev).sqrt();
            for c in cur.iter_mut() {
                *c += sd * gaussian(rng);
            }
            all_times.push(t);
            points.push(cur);
            prev = t;
        }
        Ok(Self { times: all_times, points })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn norm_at_index(&self, i: usize) -> f64 {
        let p = self.points[i];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.points.len()).map(|i| self.norm_at_index(i)).collect()
    }

    /// Norm at `s`, inserting a new point by exact conditional sampling if
    /// `s` is not yet on the path: bridge interpolation between neighbours,
    /// or a forward Gaussian step beyond the last time.
    pub fn refine<R: Rng + ?Sized>(&mut self, s: f64, rng: &mut R) -> f64 {
        debug_assert!(s >= 0.0);
        match self.times.binary_search_by(|t| t.partial_cmp(&s).unwrap()) {
            Ok(i) => self.norm_at_index(i),
            Err(i) if i == self.times.len() => {
                let last = self.points[i - 1];
                let sd = (s - self.times[i - 1]).sqrt();
                let p = [
                    last[0] + sd * gaussian(rng),
                    last[1] + sd * gaussian(rng),
                    last[2] + sd * gaussian(rng),
                ];
                self.times.push(s);
                self.points.push(p);
                self.norm_at_index(i)
            }
            Err(i) => {
                let (ta, tb) = (self.times[i - 1], self.times[i]);
                let (a, b) = (self.points[i - 1], self.points[i]);
                let frac = (s - ta) / (tb - ta);
                let sd = ((s - ta) * (tb - s) / (tb - ta)).sqrt();
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = a[k] + frac * (b[k] - a[k]) + sd * gaussian(rng);
                }
                self.times.insert(i, s);
                self.points.insert(i, p);
                self.norm_at_index(i)
            }
        }
    }
}

pub fn sample_bessel3(grid: &TimeGrid, y0: f64, key: StreamKey) -> Result<SamplePath> {
    let mut rng = key.rng();
    bessel3_on(grid, y0, &mut rng)
}

pub(crate) fn bessel3_on<R: Rng + ?Sized>(grid: &TimeGrid, y0: f64, rng: &mut R) -> Result<SamplePath> {
    let path = Bessel3Path::sample(grid.times(), y0, rng)?;
    let norms = path.norms();
    // the internal path always carries time 0; drop it unless the grid has it
    let values = if grid.times()[0] == 0.0 {
        norms
    } else {
        norms[1..].to_vec()
    };
    SamplePath::new(grid.clone(), values)
}

/// The deterministic part of the backbone, `-(3/(2√2))·log⁺ s`.
pub fn backbone_curve(s: f64) -> f64 {
    -LOG_CURVE * log_plus(s)
}

/// Backbone `W̌_s = -Y_s - (3/(2√2))·log⁺ s` with `Y` a Bessel-3 from `y0`.
pub fn sample_backbone(grid: &TimeGrid, y0: f64, key: StreamKey) -> Result<SamplePath> {
    let mut rng = key.rng();
    backbone_on(grid, y0, &mut rng)
}

pub(crate) fn backbone_on<R: Rng + ?Sized>(grid: &TimeGrid, y0: f64, rng: &mut R) -> Result<SamplePath> {
    let mut path = bessel3_on(grid, y0, rng)?;
    for (v, &s) in path.values.iter_mut().zip(grid.times()) {
        *v = -*v + backbone_curve(s);
    }
    Ok(path)
}

fn check_ballot_args(x: f64, y: f64, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return invalid(format!("bridge length must be positive, got {t}"));
    }
    if !(x >= 0.0 && y >= 0.0) || !x.is_finite() || !y.is_finite() {
        return invalid(format!("endpoints must be >= 0, got x={x}, y={y}"));
    }
    Ok(())
}

/// Probability that a Brownian bridge from `x` to `y` over `[0, t]` stays
/// nonnegative: `1 - exp(-2xy/t)` by reflection.
pub fn bridge_stay_positive(x: f64, y: f64, t: f64) -> Result<f64> {
    check_ballot_args(x, y, t)?;
    Ok(-(-2.0 * x * y / t).exp_m1())
}

/// First-order form `2xy/t`; an upper bound for [`bridge_stay_positive`].
pub fn bridge_stay_positive_asymptotic(x: f64, y: f64, t: f64) -> Result<f64> {
    check_ballot_args(x, y, t)?;
    Ok(2.0 * x * y / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Upper bound on the (positive) bias from monitoring on a grid.
    pub bias_bound: f64,
}

/// Monte Carlo estimate of the bridge positivity probability from discretely
/// monitored bridges.
///
/// Each bridge is generated step by step from its exact conditional law and
/// abandoned at the first negative grid value. Grid monitoring misses
/// excursions between grid points, so the estimate is biased upwards by
/// `O(n_steps^{-1/2})`. The reported `bias_bound` is the closed form with
/// both endpoints raised by one step standard deviation `√(t/n_steps)`,
/// minus the closed form itself; the asymptotic continuity correction uses
/// 0.5826 step deviations, so the bound is conservative.
pub fn mc_stay_positive(
    x: f64,
    y: f64,
    t: f64,
    n_steps: usize,
    n_rep: usize,
    key: StreamKey,
) -> Result<McEstimate> {
    check_ballot_args(x, y, t)?;
    if n_steps < 2 || n_rep < 1 {
        return invalid(format!("need n_steps >= 2 and n_rep >= 1 (got {n_steps}, {n_rep})"));
    }
    let mut rng = key.fast_rng();
    let dt = t / n_steps as f64;
    let mut survived = 0u64;
    for _ in 0..n_rep {
        let mut w = x;
        let mut alive = true;
        for k in 0..n_steps - 1 {
            let remaining = t - k as f64 * dt;
            let mean = w + (y - w) * dt / remaining;
            let var = dt * (remaining - dt) / remaining;
            w = mean + var.sqrt() * gaussian(&mut rng);
            if w < 0.0 {
                alive = false;
                break;
            }
        }
        if alive {
            survived += 1;
        }
    }
    let p = survived as f64 / n_rep as f64;
    let stderr = (p * (1.0 - p) / n_rep as f64).sqrt();
    let delta = dt.sqrt();
    let bias_bound = bridge_stay_positive(x + delta, y + delta, t)? - bridge_stay_positive(x, y, t)?;
    Ok(McEstimate {
        estimate: p,
        stderr,
        bias_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u64) -> StreamKey {
        StreamKey::new(2024, i)
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 0.0]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.5, 2.0]).is_ok());
    }

    #[test]
    fn brownian_single_point() {
        let g = TimeGrid::new(vec![0.0]).unwrap();
        let p = sample_brownian(&g, 3.0, key(0)).unwrap();
        assert_eq!(p.values, vec![3.0]);
    }

    #[test]
    fn bridge_endpoints_pinned_bitwise() {
        let g = TimeGrid::new(vec![0.0, 0.3, 1.7, 2.5]).unwrap();
        for i in 0..20 {
            let p = sample_bridge(&g, 2.5, -0.7, 1.3, key(i)).unwrap();
            assert_eq!(p.values[0].to_bits(), (-0.7f64).to_bits());
            assert_eq!(p.values[3].to_bits(), 1.3f64.to_bits());
        }
        let g2 = TimeGrid::new(vec![0.0, 4.0]).unwrap();
        let p = sample_bridge(&g2, 4.0, 0.0, 2.0, key(1)).unwrap();
        assert_eq!(p.values, vec![0.0, 2.0]);
    }

    #[test]
    fn bridge_rejects_points_past_end() {
        let g = TimeGrid::new(vec![0.0, 2.0]).unwrap();
        assert!(sample_bridge(&g, 1.0, 0.0, 0.0, key(0)).is_err());
    }

    #[test]
    fn bridge_mean_and_variance_at_midpoint() {
        let g = TimeGrid::new(vec![0.5]).unwrap();
        let n = 100_000;
        let mut rng = key(9).rng();
        let (mut s1, mut s2) = (0.0, 0.0);
        let (mut v1, mut v2) = (0.0, 0.0);
        for _ in 0..n {
            // separate keys are cheap here; reuse one generator for speed
            let k = StreamKey::new(rng.gen(), 0);
            let a = sample_bridge(&g, 1.0, 0.0, 2.0, k).unwrap().values[0];
            let b = sample_bridge(&g, 1.0, 0.0, 0.0, k).unwrap().values[0];
            s1 += a;
            s2 += a * a;
            v1 += b;
            v2 += b * b;
        }
        let nf = n as f64;
        let mean = s1 / nf;
        let sd = (s2 / nf - mean * mean).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / nf.sqrt(), "mean {mean}");
        let m = v1 / nf;
        let var = v2 / nf - m * m;
        // var of sample variance for Gaussian: 2σ⁴/n
        let se = (2.0 * 0.25f64.powi(2) / nf).sqrt();
        assert!((var - 0.25).abs() < 3.0 * se, "var {var}");
    }

    #[test]
    fn bessel_start_and_positivity() {
        let g = TimeGrid::new(vec![0.0]).unwrap();
        assert_eq!(sample_bessel3(&g, 1.0, key(0)).unwrap().values, vec![1.0]);
        assert!(sample_bessel3(&g, -0.1, key(0)).is_err());
        let g = TimeGrid::uniform(5.0, 200).unwrap();
        for i in 0..50 {
            let p = sample_bessel3(&g, 0.0, key(i)).unwrap();
            assert!(p.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn backbone_matches_negative_bessel_before_one() {
        let g = TimeGrid::new(vec![0.0, 0.25, 0.5, 1.0, 3.0, 50.0]).unwrap();
        for i in 0..20 {
            let y = sample_bessel3(&g, 0.0, key(i)).unwrap();
            let w = sample_backbone(&g, 0.0, key(i)).unwrap();
            for k in 0..4 {
                assert_eq!(w.values[k], -y.values[k]);
            }
            assert!(w.values.iter().all(|&v| v <= 0.0));
        }
        let s = (2.0f64).exp();
        assert!((backbone_curve(s) + 2.121_320_343_559_642).abs() < 1e-12);
    }

    #[test]
    fn ballot_closed_form_values() {
        assert_eq!(bridge_stay_positive(0.0, 3.0, 1.0).unwrap(), 0.0);
        let p = bridge_stay_positive(1.0, 1.0, 100.0).unwrap();
        assert!((p - 0.019_801_326_693_244_7).abs() < 1e-12);
        let a = bridge_stay_positive_asymptotic(1.0, 1.0, 100.0).unwrap();
        assert!((a - 0.02).abs() < 1e-15);
        assert!(a >= p);
        assert!(bridge_stay_positive(1.0, 1.0, 0.0).is_err());
        assert!(bridge_stay_positive(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn mc_stay_positive_far_from_zero() {
        let r = mc_stay_positive(5.0, 5.0, 1.0, 200, 5_000, key(3)).unwrap();
        assert!(r.estimate > 0.999);
    }

    #[test]
    fn mc_stay_positive_from_zero_is_within_bias() {
        let r = mc_stay_positive(0.0, 1.0, 1.0, 400, 20_000, key(4)).unwrap();
        assert!(r.estimate <= r.bias_bound + 3.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn mc_stay_positive_rejects_bad_params() {
        assert!(mc_stay_positive(1.0, 1.0, 1.0, 1, 10, key(0)).is_err());
        assert!(mc_stay_positive(1.0, 1.0, 1.0, 10, 0, key(0)).is_err());
    }

    #[test]
    fn refine_inserts_in_order() {
        let mut rng = key(5).fast_rng();
        let mut p = Bessel3Path::sample(&[1.0, 2.0], 0.0, &mut rng).unwrap();
        let before = p.norm_at_index(2);
        p.refine(1.5, &mut rng);
        p.refine(4.0, &mut rng);
        p.refine(0.5, &mut rng);
        assert_eq!(p.times(), &[0.0, 0.5, 1.0, 1.5, 2.0, 4.0]);
        assert_eq!(p.norm_at_index(4), before);
    }

    use proptest::prelude::*;
    use rand::Rng;

    proptest! {
        #[test]
        fn ballot_monotone_and_bounded(x in 0.0f64..5.0, y in 0.0f64..5.0, t in 0.1f64..50.0, d in 0.0f64..2.0) {
            let p = bridge_stay_positive(x, y, t).unwrap();
            prop_assert!(p >= 0.0 && p <= 1.0);
            prop_assert!(p <= bridge_stay_positive_asymptotic(x, y, t).unwrap() + 1e-15);
            prop_assert!(bridge_stay_positive(x + d, y, t).unwrap() >= p);
            prop_assert!(bridge_stay_positive(x, y + d, t).unwrap() >= p);
            prop_assert!(bridge_stay_positive(x, y, t + d).unwrap() <= p);
        }
    }
}
