use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::StreamKey;

/// Event times of a homogeneous rate-2 Poisson process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestampProcess {
    pub events: Vec<f64>,
    pub horizon: f64,
}

impl TimestampProcess {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distance from `s` to the nearest event, or `∞` if there is none.
    pub fn distance_to_nearest(&self, s: f64) -> f64 {
        let i = self.events.partition_point(|&e| e < s);
        let after = self.events.get(i).map_or(f64::INFINITY, |e| e - s);
        let before = i.checked_sub(1).map_or(f64::INFINITY, |j| s - self.events[j]);
        after.min(before)
    }
}

pub const TIMESTAMP_RATE: f64 = 2.0;

pub(crate) fn timestamps_on<R: Rng + ?Sized>(horizon: f64, rng: &mut R) -> Result<TimestampProcess> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return invalid(format!("horizon must be finite and >= 0, got {horizon}"));
    }
    let mean = TIMESTAMP_RATE * horizon;
    let n = if mean > 0.0 {
        Poisson::new(mean).expect("positive mean").sample(rng) as usize
    } else {
        0
    };
    let mut events: Vec<f64> = (0..n).map(|_| horizon * rng.gen::<f64>()).collect();
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.retain(|&e| e > 0.0);
    events.dedup();
    Ok(TimestampProcess { events, horizon })
}

pub fn sample_timestamps(horizon: f64, key: StreamKey) -> Result<TimestampProcess> {
    timestamps_on(horizon, &mut key.fast_rng())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_stderr;

    #[test]
    fn zero_horizon_is_empty() {
        assert!(sample_timestamps(0.0, StreamKey::new(1, 0)).unwrap().is_empty());
        assert!(sample_timestamps(-1.0, StreamKey::new(1, 0)).is_err());
    }

    #[test]
    fn mean_count_is_twice_horizon() {
        let counts: Vec<f64> = (0..100_000)
            .map(|i| sample_timestamps(5.0, StreamKey::new(2, i)).unwrap().len() as f64)
            .collect();
        let (m, se) = mean_stderr(&counts);
        assert!((m - 10.0).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn events_sorted_within_horizon() {
        for i in 0..100 {
            let p = sample_timestamps(3.0, StreamKey::new(3, i)).unwrap();
            assert!(p.events.windows(2).all(|w| w[0] < w[1]));
            assert!(p.events.iter().all(|&e| e > 0.0 && e <= 3.0));
        }
    }

    #[test]
    fn gap_tail_bound() {
        let n = 100_000;
        let ps: Vec<TimestampProcess> = (0..n)
            .map(|i| sample_timestamps(10.0, StreamKey::new(4, i)).unwrap())
            .collect();
        for u in [0.5, 1.0, 2.0] {
            let empty = ps.iter().filter(|p| p.distance_to_nearest(5.0) > u).count() as f64 / n as f64;
            // exactly e^{−4u} for a two-sided gap, bounded by e^{−2u}
            let se = (empty * (1.0 - empty) / n as f64).sqrt();
            assert!(empty <= (-2.0 * u).exp() + 3.0 * se);
            assert!((empty - (-4.0 * u).exp()).abs() < 4.0 * se + 1e-4, "u={u}: {empty}");
        }
    }
}
