//! Distribution-comparison and estimation utilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;

/// Samples sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    samples: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("empirical distribution needs at least one sample".into()));
        }
        if samples.iter().any(|x| x.is_nan()) {
            return invalid("NaN sample");
        }
        samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { samples })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// `#{x <= v} / n`.
    pub fn cdf(&self, v: f64) -> f64 {
        self.samples.partition_point(|&x| x <= v) as f64 / self.n() as f64
    }

    /// `#{x > v} / n`.
    pub fn survival(&self, v: f64) -> f64 {
        1.0 - self.cdf(v)
    }

    /// Nearest-rank quantile, `q ∈ [0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        quantile_sorted(&self.samples, q)
    }

    /// Lower median: element `(n − 1) / 2` of the sorted sample.
    pub fn median(&self) -> f64 {
        self.samples[(self.n() - 1) / 2]
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|` by a merge scan.
pub fn ks_distance(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
    let (xa, xb) = (a.samples(), b.samples());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let v = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= v {
            i += 1;
        }
        while j < xb.len() && xb[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Convenience wrapper over raw samples.
pub fn ks_samples(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(ks_distance(
        &EmpiricalDistribution::new(a.to_vec())?,
        &EmpiricalDistribution::new(b.to_vec())?,
    ))
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Sample mean and standard error.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn variance(xs: &[f64]) -> f64 {
    let (m, _) = mean_stderr(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("correlation needs two equal-length samples of size >= 2");
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Range("correlation undefined for constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Mean and standard error of `e^{−λx}`.
pub fn empirical_laplace(samples: &[f64], lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return invalid(format!("Laplace argument must be positive, got {lambda}"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let floor = -700.0 / lambda;
    if let Some(x) = samples.iter().find(|&&x| x < floor) {
        return Err(Error::Range(format!(
            "sample {x} below {floor}: e^(-λx) would overflow"
        )));
    }
    let vals: Vec<f64> = samples.iter().map(|x| (-lambda * x).exp()).collect();
    Ok(mean_stderr(&vals))
}

/// Least-squares slope of `−log S(u)` on `n_points` equally spaced levels in
/// `[u_lo, u_hi]`, where `S` is the empirical survival function. Levels with
/// empty survival are dropped.
pub fn tail_slope(samples: &[f64], u_lo: f64, u_hi: f64, n_points: usize) -> Result<f64> {
    const MIN_TAIL: usize = 50;
    if !(u_hi > u_lo) || n_points < 2 {
        return invalid("tail fit needs u_lo < u_hi and n_points >= 2");
    }
    let dist = EmpiricalDistribution::new(samples.to_vec())?;
    let above = samples.iter().filter(|&&x| x > u_lo).count();
    if above < MIN_TAIL {
        return Err(Error::InsufficientTail {
            count: above,
            needed: MIN_TAIL,
        });
    }
    let mut pts = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let u = u_lo + (u_hi - u_lo) * k as f64 / (n_points - 1) as f64;
        let s = dist.survival(u);
        if s > 0.0 {
            pts.push((u, -s.ln()));
        }
    }
    let distinct = pts.windows(2).any(|w| w[0].1 != w[1].1);
    if pts.len() < 2 || !distinct {
        return Err(Error::InsufficientTail {
            count: above,
            needed: MIN_TAIL,
        });
    }
    Ok(ls_slope(&pts))
}

pub(crate) fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Shifts samples so their lower median is 0.
pub fn median_center(samples: &[f64]) -> Result<Vec<f64>> {
    let med = EmpiricalDistribution::new(samples.to_vec())?.median();
    Ok(samples.iter().map(|x| x - med).collect())
}

/// Percentile bootstrap interval at confidence `level`.
pub fn bootstrap_ci<F>(
    samples: &[f64],
    statistic: F,
    n_boot: usize,
    level: f64,
    key: StreamKey,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    if n_boot < 200 {
        return invalid(format!("bootstrap needs n_boot >= 200, got {n_boot}"));
    }
    if samples.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level must be in (0,1), got {level}"));
    }
    let mut rng = key.fast_rng();
    let n = samples.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..n_boot)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = samples[rng.gen_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// passes iff `value <= threshold`
    AtMost,
    /// passes iff `value >= threshold`
    AtLeast,
    /// passes iff `|value − target| <= threshold`
    Within,
}

/// One verification outcome; serialized as a row of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub criterion: String,
    pub statistic: String,
    pub kind: CheckKind,
    pub value: f64,
    pub target: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub n: Vec<usize>,
    pub stderr: Option<f64>,
}

impl ComparisonReport {
    pub fn at_most(criterion: &str, statistic: &str, value: f64, threshold: f64, n: Vec<usize>) -> Self {
        Self {
            criterion: criterion.into(),
            statistic: statistic.into(),
            kind: CheckKind::AtMost,
            value,
            target: None,
            threshold,
            pass: value <= threshold,
            n,
            stderr: None,
        }
    }

    pub fn at_least(criterion: &str, statistic: &str, value: f64, threshold: f64, n: Vec<usize>) -> Self {
        Self {
            kind: CheckKind::AtLeast,
            pass: value >= threshold,
            ..Self::at_most(criterion, statistic, value, threshold, n)
        }
    }

    /// `|value − target| <= tolerance`.
    pub fn within(
        criterion: &str,
        statistic: &str,
        value: f64,
        target: f64,
        tolerance: f64,
        n: Vec<usize>,
    ) -> Self {
        Self {
            criterion: criterion.into(),
            statistic: statistic.into(),
            kind: CheckKind::Within,
            value,
            target: Some(target),
            threshold: tolerance,
            pass: (value - target).abs() <= tolerance,
            n,
            stderr: None,
        }
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let (v, thr) = (num(self.value), num(self.threshold));
        let rhs = match self.kind {
            CheckKind::Within => format!("target {} ± {thr}", num(self.target.unwrap_or(f64::NAN))),
            CheckKind::AtMost => format!("<= {thr}"),
            CheckKind::AtLeast => format!(">= {thr}"),
        };
        format!("[{verdict}] {} :: {} = {v} ({rhs})", self.criterion, self.statistic)
    }
}

/// Six significant decimals, switching to scientific notation for small
/// or large magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-3..1e6).contains(&a) || !x.is_finite() {
        format!("{x:.6}")
    } else {
        format!("{x:.6e}")
    }
}
