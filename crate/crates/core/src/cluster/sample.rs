use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::timestamps::{timestamps_on, TimestampProcess, TIMESTAMP_RATE};
use super::zsource::ZSource;
use crate::bbm::{conditioned_bbm, level_set_count, ConditionedConfig, PruneConfig};
use crate::error::{invalid, Error, Result};
use crate::extremal::MassSource;
use crate::paths::{backbone_curve, Bessel3Path, SamplePath, TimeGrid};
use crate::rng::StreamKey;
use crate::SQRT2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Conditioned BBM decorations at every event.
    Exact,
    /// Surrogate decorations at every event.
    Surrogate,
    /// Exact up to `s_cut`, surrogate beyond.
    Hybrid,
}

impl fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMode::Exact => "exact",
            ClusterMode::Surrogate => "surrogate",
            ClusterMode::Hybrid => "hybrid",
        })
    }
}

impl FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ClusterMode::Exact),
            "surrogate" => Ok(ClusterMode::Surrogate),
            "hybrid" => Ok(ClusterMode::Hybrid),
            other => invalid(format!("unknown cluster mode `{other}`")),
        }
    }
}

/// Contribution of the decoration attached at backbone event `s`.
pub trait DecorationStrategy: Send + Sync {
    /// Number (or expected-size surrogate) of decoration particles at
    /// cluster-relative height in `[−v, 0]`, given the backbone value
    /// `w_check = W̌_s`.
    fn contribution(&self, s: f64, w_check: f64, v: f64, key: StreamKey) -> Result<f64>;

    fn name(&self) -> &'static str;
}

/// Conditioned BBM of age `s` with centered maximum at most `−W̌_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDecoration {
    pub config: ConditionedConfig,
}

impl Default for ExactDecoration {
    fn default() -> Self {
        Self {
            config: ConditionedConfig {
                prune: PruneConfig::disabled(),
                ..ConditionedConfig::default()
            },
        }
    }
}

impl DecorationStrategy for ExactDecoration {
    fn contribution(&self, s: f64, w_check: f64, v: f64, key: StreamKey) -> Result<f64> {
        let decorate = || -> Result<f64> {
            let c = conditioned_bbm(s, -w_check, &self.config, key)?;
            // the conditioning puts every particle below −W̌_s, so the
            // window [−v − W̌_s, −W̌_s] is the level set at depth v + W̌_s
            Ok(level_set_count(&c.system, v + w_check)? as f64)
        };
        decorate().map_err(|e| Error::Decoration {
            time: s,
            source: Box::new(e),
        })
    }

    fn name(&self) -> &'static str {
        "exact"
    }
}

/// Expected level-set size of an age-`s` extremal process at depth `x`,
/// without the `ĉ₀·Z` prefactor: `x⁺·e^{√2x − x²/(2s)}`.
pub fn surrogate_profile(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (SQRT2 * x - x * x / (2.0 * s)).exp()
    }
}

/// `ĉ₀·Z·(v + W̌_s)⁺·e^{√2(v+W̌_s) − (v+W̌_s)²/(2s)}` with an independent `Z`.
#[derive(Clone)]
pub struct SurrogateDecoration {
    pub c0: f64,
    pub z_source: Arc<dyn ZSource>,
}

impl DecorationStrategy for SurrogateDecoration {
    fn contribution(&self, s: f64, w_check: f64, v: f64, key: StreamKey) -> Result<f64> {
        let profile = surrogate_profile(s, v + w_check);
        if profile == 0.0 {
            return Ok(0.0);
        }
        let z = self.z_source.draw(&mut key.fast_rng());
        Ok(self.c0 * z * profile)
    }

    fn name(&self) -> &'static str {
        "surrogate"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub s_cut: f64,
    /// Final horizon, after any adaptive extensions.
    pub horizon: f64,
    /// Number of times the horizon was extended.
    pub extensions: usize,
    /// Expected surrogate mass beyond the final horizon given the backbone
    /// there (0 in exact mode).
    pub truncation_bound: f64,
    /// Upper bound on the probability that events beyond the final horizon
    /// add more than `truncation_tol` of the mass (0 in exact mode).
    pub late_return_prob: f64,
    /// Surrogate events with `v + W̌_s > 0.9·√2·s`, outside the bulk regime.
    pub regime_warnings: usize,
    pub exact_events: usize,
    pub surrogate_events: usize,
}

/// One draw of the cluster level-set mass `C([−v, 0])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSample {
    pub mode: ClusterMode,
    pub v: f64,
    pub mass: f64,
    /// `W̌` at time 0 and at every event.
    pub backbone: SamplePath,
    pub timestamps: TimestampProcess,
    pub contributions: Vec<f64>,
    pub diagnostics: ClusterDiagnostics,
}

/// Factor by which an adaptive horizon grows per extension.
pub const EXTENSION_FACTOR: f64 = 2.0;

/// Strong-representation cluster sampler.
#[derive(Clone)]
pub struct ClusterSampler {
    pub mode: ClusterMode,
    pub s_cut: f64,
    /// Backbone handoff level `Y_0`.
    pub y0: f64,
    /// Extend default horizons until late returns of the backbone are
    /// unlikely to matter (see [`Self::sample`]).
    pub adaptive: bool,
    /// Relative mass a late return may add before it counts as significant.
    pub truncation_tol: f64,
    /// Adaptive horizons stop once the chance that a later return of the
    /// backbone adds more than `truncation_tol` of the mass is at most this.
    pub late_return_tol: f64,
    /// Maximum number of ×[`EXTENSION_FACTOR`] horizon extensions.
    pub max_extensions: usize,
    pub exact: ExactDecoration,
    pub surrogate: SurrogateDecoration,
}

impl ClusterSampler {
    pub const DEFAULT_S_CUT: f64 = 10.0;

    pub fn new(mode: ClusterMode, c0: f64, z_source: Arc<dyn ZSource>) -> Self {
        Self {
            mode,
            s_cut: Self::DEFAULT_S_CUT,
            y0: 0.0,
            adaptive: false,
            truncation_tol: 1e-2,
            late_return_tol: 0.05,
            max_extensions: 10,
            exact: ExactDecoration::default(),
            surrogate: SurrogateDecoration { c0, z_source },
        }
    }

    /// Smallest horizon accepted in surrogate and hybrid mode,
    /// `max(4·v^{4/3}, 100)`.
    pub fn min_horizon(v: f64) -> f64 {
        (4.0 * v.powf(4.0 / 3.0)).max(100.0)
    }

    fn default_horizon(&self, v: f64) -> f64 {
        match self.mode {
            ClusterMode::Exact => self.s_cut.min(self.exact.config.s_max_exact),
            _ => Self::min_horizon(v),
        }
    }

    fn strategy_for(&self, s: f64) -> &dyn DecorationStrategy {
        match self.mode {
            ClusterMode::Exact => &self.exact,
            ClusterMode::Surrogate => &self.surrogate,
            ClusterMode::Hybrid if s <= self.s_cut => &self.exact,
            ClusterMode::Hybrid => &self.surrogate,
        }
    }

    fn validate(&self, v: f64, horizon: f64) -> Result<()> {
        if !(v > 0.0) || !v.is_finite() {
            return invalid(format!("cluster level must be positive, got {v}"));
        }
        if !(self.surrogate.c0 > 0.0) {
            return invalid(format!("ĉ₀ must be positive, got {}", self.surrogate.c0));
        }
        match self.mode {
            ClusterMode::Exact => {
                if v > 12.0 {
                    return invalid(format!("exact mode supports v <= 12, got {v}"));
                }
                if horizon > self.exact.config.s_max_exact {
                    return invalid(format!(
                        "exact mode horizon {horizon} exceeds the exact-decoration age limit {}",
                        self.exact.config.s_max_exact
                    ));
                }
            }
            ClusterMode::Surrogate | ClusterMode::Hybrid => {
                let min = Self::min_horizon(v);
                if horizon < min {
                    return invalid(format!(
                        "horizon {horizon} below the minimum {min} for v = {v}"
                    ));
                }
                if self.mode == ClusterMode::Hybrid && self.s_cut > self.exact.config.s_max_exact {
                    return invalid(format!(
                        "s_cut {} exceeds the exact-decoration age limit {}",
                        self.s_cut, self.exact.config.s_max_exact
                    ));
                }
            }
        }
        Ok(())
    }

    /// Draws `C([−v, 0])` from the backbone representation.
    ///
    /// With an explicit `horizon` the backbone is cut there; exact mode
    /// defaults to `s_cut`, surrogate and hybrid mode to
    /// `max(4·v^{4/3}, 100)`. With `adaptive` set and no explicit horizon,
    /// sampling starts on that default and the horizon is multiplied by [`EXTENSION_FACTOR`] until a later return of the
    /// backbone adding more than `truncation_tol·max(mass, 1)` has
    /// probability at most `late_return_tol` ([`Self::late_return_prob`]),
    /// at most `max_extensions` times. Late returns of the backbone towards
    /// 0 carry much of the mass of some paths and a fixed horizon misses
    /// them; they are rare but heavy, so the conditional mean of the missing
    /// mass (`truncation_bound`) usually exceeds what is actually missed.
    ///
    /// Sub-streams: backbone `key.derive(0)`, timestamps of segment `k`
    /// `key.derive(1)` for `k = 0` and `key.derive(1).derive(k)` after,
    /// event `i` decoration `key.derive(2 + i)`. Decorations do not depend on `v`, so
    /// exact-mode masses are nondecreasing in `v` for a fixed key.
    pub fn sample(&self, v: f64, horizon: Option<f64>, key: StreamKey) -> Result<ClusterSample> {
        let adaptive = self.adaptive && horizon.is_none() && self.mode != ClusterMode::Exact;
        let mut horizon = horizon.unwrap_or_else(|| self.default_horizon(v));
        self.validate(v, horizon)?;
        let mut brng = key.derive(0).fast_rng();
        let mut bessel = Bessel3Path::sample(&[], self.y0, &mut brng)?;
        let mut events = Vec::new();
        let mut w_check = vec![-self.y0];
        let mut contributions = Vec::new();
        let (mut exact_events, mut surrogate_events, mut regime_warnings) = (0, 0, 0);
        let mut mass = 0.0;
        let mut start = 0.0;
        let mut extensions = 0;
        let (mut y_end, mut late_return_prob) = (self.y0, 0.0);
        loop {
            let tkey = if extensions == 0 {
                key.derive(1)
            } else {
                key.derive(1).derive(extensions as u64)
            };
            let segment = timestamps_on(horizon - start, &mut tkey.fast_rng())?;
            for e in segment.events {
                let s = start + e;
                let w = -bessel.refine(s, &mut brng) + backbone_curve(s);
                let strategy = self.strategy_for(s);
                if strategy.name() == "exact" {
                    exact_events += 1;
                } else {
                    surrogate_events += 1;
                    if v + w > 0.9 * SQRT2 * s {
                        regime_warnings += 1;
                    }
                }
                let c = strategy.contribution(s, w, v, key.derive(2 + events.len() as u64))?;
                mass += c;
                contributions.push(c);
                events.push(s);
                w_check.push(w);
            }
            if self.mode != ClusterMode::Exact {
                y_end = bessel.refine(horizon, &mut brng);
                late_return_prob = self.late_return_prob(horizon, y_end, v, mass);
            }
            let settled = late_return_prob <= self.late_return_tol;
            if !adaptive || settled || extensions >= self.max_extensions {
                break;
            }
            start = horizon;
            horizon *= EXTENSION_FACTOR;
            extensions += 1;
        }

        let truncation_bound = if self.mode == ClusterMode::Exact {
            0.0
        } else {
            self.expected_beyond(horizon, y_end, v)
        };

        let mut times = Vec::with_capacity(events.len() + 1);
        times.push(0.0);
        times.extend_from_slice(&events);
        let backbone = SamplePath::new(TimeGrid::new(times)?, w_check)?;
        Ok(ClusterSample {
            mode: self.mode,
            v,
            mass,
            backbone,
            timestamps: TimestampProcess { events, horizon },
            contributions,
            diagnostics: ClusterDiagnostics {
                s_cut: self.s_cut,
                horizon,
                extensions,
                truncation_bound,
                late_return_prob,
                regime_warnings,
                exact_events,
                surrogate_events,
            },
        })
    }

    /// `∫_{horizon}^{10·horizon} 2·ĉ₀·E[Z]·profile(s, v + W̌_s) ds` along a
    /// continuation of the backbone on 200 geometric steps (trapezoid rule).
    /// Chance that the backbone, at `Y_horizon = y`, later returns deep
    /// enough for a single event to add `truncation_tol·max(mass, 1)`.
    ///
    /// An event at depth `Y_s = m`, `s > horizon`, contributes on average at
    /// most `ĉ₀·E[Z]·x·e^{√2x}` with `x = v + backbone_curve(horizon) − m`,
    /// which decreases in `m`. With `m*` the depth where this equals the
    /// target, the chance is `P_y(inf Y < m*) = m*/y` for a Bessel-3 process.
    pub fn late_return_prob(&self, horizon: f64, y: f64, v: f64, mass: f64) -> f64 {
        let target = self.truncation_tol * mass.max(1.0);
        let scale = self.surrogate.c0 * self.surrogate.z_source.mean();
        let a = v + backbone_curve(horizon);
        let weight = |m: f64| {
            let x = a - m;
            if x <= 0.0 {
                0.0
            } else {
                scale * x * (SQRT2 * x).exp()
            }
        };
        if weight(0.0) < target {
            return 0.0;
        }
        if y <= 0.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0, a);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if weight(mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo / y).min(1.0)
    }

    /// Expected surrogate mass carried by events after `horizon`, given
    /// `Y_horizon = y`: the integral over `s > horizon` of
    /// `2·ĉ₀·E[Z]·E_y[x⁺e^{√2x − x²/(2s)}]`, `x = v − Y_s + backbone_curve(s)`,
    /// with the Bessel-3 transition density
    /// `p_τ(y, z) = (z/y)·(φ_τ(z − y) − φ_τ(z + y))`.
    ///
    /// Quadrature: trapezoid in `ln τ` (four points per decade, from
    /// `τ = 10⁻²` to `10⁸·max(horizon, 1)`; the integrand decays like
    /// `τ^{−3/2}`, so the omitted remainder is below 10⁻⁴ of the total) and
    /// composite Simpson in `z` over the support of `p_τ`. The late returns
    /// of the backbone towards 0 that this accounts for are what a fixed
    /// horizon misses.
    pub fn expected_beyond(&self, horizon: f64, y: f64, v: f64) -> f64 {
        const PER_DECADE: f64 = 4.0;
        const TAU0: f64 = 1e-2;
        let scale = TIMESTAMP_RATE * self.surrogate.c0 * self.surrogate.z_source.mean();
        let tau_max = 1e8 * horizon.max(1.0);
        let steps = ((tau_max / TAU0).log10() * PER_DECADE).ceil() as usize;
        let ratio = (tau_max / TAU0).powf(1.0 / steps as f64);
        let rate = |tau: f64| scale * bessel_mean_profile(horizon + tau, tau, y, v);
        let mut total = TAU0 * rate(0.0);
        let (mut tau_prev, mut g_prev) = (TAU0, TAU0 * rate(TAU0));
        for k in 1..=steps {
            let tau = TAU0 * ratio.powi(k as i32);
            let g = tau * rate(tau);
            total += 0.5 * (g + g_prev) * (tau / tau_prev).ln();
            if g == 0.0 && v + backbone_curve(horizon + tau) <= 0.0 {
                break;
            }
            (tau_prev, g_prev) = (tau, g);
        }
        total
    }
}

/// `E_y[surrogate_profile(s, v − Y_τ + backbone_curve(s))]` for a Bessel-3
/// process `Y` started at `y`.
fn bessel_mean_profile(s: f64, tau: f64, y: f64, v: f64) -> f64 {
    const HALF_INTERVALS: usize = 24;
    let a = v + backbone_curve(s);
    if a <= 0.0 {
        return 0.0;
    }
    let sd = tau.sqrt();
    if sd < 0.05 {
        return surrogate_profile(s, a - y);
    }
    let f = |z: f64| {
        if z <= 0.0 {
            return 0.0;
        }
        let g = (-(z - y).powi(2) / (2.0 * tau)).exp() / (2.0 * std::f64::consts::PI * tau).sqrt();
        let density = if y > 0.0 {
            z / y * g * -(-2.0 * z * y / tau).exp_m1()
        } else {
            // Started at 0: the Maxwell density.
            2.0 * z * z / tau * g
        };
        density * surrogate_profile(s, a - z)
    };
    let lo = (y - 9.0 * sd).max(0.0);
    let hi = (y + 9.0 * sd).min(a);
    if hi <= lo {
        return 0.0;
    }
    // The profile varies on scale 1/√2 near z = 0 and the density on scale
    // √τ; the first piece resolves the former, the second the rest.
    let mid = (lo + 20.0).min(hi);
    simpson(&f, lo, mid, HALF_INTERVALS) + simpson(&f, mid, hi, HALF_INTERVALS)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, half_intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 2 * half_intervals;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// `sample_cluster` with an explicit sampler; see [`ClusterSampler::sample`].
pub fn sample_cluster(
    sampler: &ClusterSampler,
    v: f64,
    horizon: Option<f64>,
    key: StreamKey,
) -> Result<ClusterSample> {
    sampler.sample(v, horizon, key)
}

impl MassSource for ClusterSampler {
    fn mass(&self, v: f64, key: StreamKey) -> Result<f64> {
        Ok(self.sample(v, None, key)?.mass)
    }
}

/// `X(w) = C([−w, 0]) / (w·e^{√2w})` for a sample drawn at level `w`.
pub fn x_statistic(sample: &ClusterSample) -> Result<f64> {
    x_from_mass(sample.mass, sample.v)
}

pub fn x_from_mass(mass: f64, w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return invalid(format!("X(w) needs w > 0, got {w}"));
    }
    Ok(mass / (w * (SQRT2 * w).exp()))
}
