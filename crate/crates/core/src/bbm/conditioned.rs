use serde::{Deserialize, Serialize};

use super::engine::{simulate, ParticleSystem, PruneConfig};
use super::observables::centered_max;
use crate::error::{invalid, Error, Result};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionedConfig {
    /// Largest age simulated exactly.
    pub s_max_exact: f64,
    /// Rejection attempts before giving up.
    pub max_attempts: u64,
    pub prune: PruneConfig,
}

impl Default for ConditionedConfig {
    fn default() -> Self {
        Self {
            s_max_exact: 14.0,
            max_attempts: 100_000,
            prune: PruneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSystem {
    pub system: ParticleSystem,
    pub attempts: u64,
    /// `1 / attempts`, the empirical acceptance rate of this draw.
    pub acceptance_rate: f64,
}

/// BBM of age `s` conditioned on its centered maximum being `<= ceiling`,
/// by rejection. Attempt `k` uses the key `key.derive(k)`.
pub fn conditioned_bbm(
    s: f64,
    ceiling: f64,
    config: &ConditionedConfig,
    key: StreamKey,
) -> Result<ConditionedSystem> {
    if !(s >= 0.0) || s > config.s_max_exact {
        return invalid(format!(
            "conditioned BBM age must lie in [0, {}], got {s}",
            config.s_max_exact
        ));
    }
    if ceiling.is_nan() {
        return invalid("ceiling must not be NaN");
    }
    for attempt in 1..=config.max_attempts {
        let system = simulate(s, config.prune, key.derive(attempt))?;
        if centered_max(&system)? <= ceiling {
            return Ok(ConditionedSystem {
                system,
                attempts: attempt,
                acceptance_rate: 1.0 / attempt as f64,
            });
        }
    }
    Err(Error::RejectionExhausted {
        attempts: config.max_attempts,
        age: s,
        ceiling,
        acceptance: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_ceiling_accepts_first_draw() {
        let c = conditioned_bbm(3.0, f64::INFINITY, &ConditionedConfig::default(), StreamKey::new(1, 1))
            .unwrap();
        assert_eq!(c.attempts, 1);
    }

    #[test]
    fn output_respects_ceiling() {
        for i in 0..20 {
            let c = conditioned_bbm(2.0, -0.5, &ConditionedConfig::default(), StreamKey::new(2, i)).unwrap();
            assert!(centered_max(&c.system).unwrap() <= -0.5);
        }
    }

    #[test]
    fn budget_exhaustion_is_explicit() {
        let cfg = ConditionedConfig {
            max_attempts: 5,
            ..ConditionedConfig::default()
        };
        let r = conditioned_bbm(1.0, -50.0, &cfg, StreamKey::new(3, 0));
        assert!(matches!(r, Err(Error::RejectionExhausted { attempts: 5, .. })));
        assert!(conditioned_bbm(20.0, 0.0, &cfg, StreamKey::new(3, 0)).is_err());
    }

    #[test]
    fn acceptance_matches_unconditioned_probability() {
        // mean number of attempts is 1/p for p = P(centered max <= ceiling)
        let (s, ceiling) = (2.0, 0.0);
        let n = 4000u64;
        let hits = (0..n)
            .filter(|&i| {
                let sys = simulate(s, PruneConfig::default(), StreamKey::new(40, i)).unwrap();
                centered_max(&sys).unwrap() <= ceiling
            })
            .count() as f64;
        let p = hits / n as f64;
        let m = 2000u64;
        let attempts: u64 = (0..m)
            .map(|i| {
                conditioned_bbm(s, ceiling, &ConditionedConfig::default(), StreamKey::new(41, i))
                    .unwrap()
                    .attempts
            })
            .sum();
        // accepted / attempts estimates p
        let p_hat = m as f64 / attempts as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt() + (p_hat * (1.0 - p_hat) / attempts as f64).sqrt();
        assert!((p_hat - p).abs() < 3.0 * se, "p_hat={p_hat} p={p} se={se}");
    }
}
