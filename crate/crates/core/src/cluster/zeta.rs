use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::paths::{Bessel3Path, TimeGrid};
use crate::rng::{FastRng, StreamKey};
use crate::SQRT2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaGrid {
    pub s_min: f64,
    pub s_max: f64,
    /// Initial log-spaced points.
    pub points: usize,
    /// Refinement rounds around the running argmin.
    pub rounds: usize,
}

impl Default for ZetaGrid {
    fn default() -> Self {
        Self {
            s_min: 1e-3,
            s_max: 1e3,
            points: 64,
            rounds: 8,
        }
    }
}

impl ZetaGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_min < self.s_max) || !self.s_max.is_finite() {
            return invalid(format!(
                "ζ grid needs 0 < s_min < s_max < ∞, got [{}, {}]",
                self.s_min, self.s_max
            ));
        }
        if self.points < 16 {
            return invalid(format!("ζ grid needs at least 16 points, got {}", self.points));
        }
        Ok(())
    }
}

/// Points inserted between the argmin's neighbours in each round.
const POINTS_PER_ROUND: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSample {
    /// Grid infimum of `√2·Y_s + 1/(2s)` after the last round.
    pub value: f64,
    pub argmin_s: f64,
    pub grid: ZetaGrid,
    /// Infimum after the initial grid and after each round; nonincreasing.
    pub round_values: Vec<f64>,
}

/// A path `s ↦ Y_s` that can be evaluated at new times consistently with
/// the values already revealed.
pub trait RefinablePath {
    fn value_at(&mut self, s: f64) -> f64;
}

/// Bessel-3 from 0, refined by bridge interpolation of its 3D components.
pub struct BesselSource {
    path: Bessel3Path,
    rng: FastRng,
}

impl BesselSource {
    pub fn new(initial: &[f64], key: StreamKey) -> Result<Self> {
        let mut rng = key.fast_rng();
        let path = Bessel3Path::sample(initial, 0.0, &mut rng)?;
        Ok(Self { path, rng })
    }
}

impl RefinablePath for BesselSource {
    fn value_at(&mut self, s: f64) -> f64 {
        self.path.refine(s, &mut self.rng)
    }
}

/// Deterministic path given by a closed form, for testing.
pub struct FnPath<F: FnMut(f64) -> f64>(pub F);

impl<F: FnMut(f64) -> f64> RefinablePath for FnPath<F> {
    fn value_at(&mut self, s: f64) -> f64 {
        (self.0)(s)
    }
}

fn objective(y: f64, s: f64) -> f64 {
    SQRT2 * y + 1.0 / (2.0 * s)
}

/// Grid infimum of `√2·Y_s + 1/(2s)` over a log-spaced grid refined around
/// the running argmin. Each round inserts points geometrically spaced
/// strictly between the argmin's two neighbours.
pub fn zeta_on_path<P: RefinablePath + ?Sized>(path: &mut P, grid: ZetaGrid) -> Result<ZetaSample> {
    grid.validate()?;
    let init = TimeGrid::log_spaced(grid.s_min, grid.s_max, grid.points)?;
    let mut pts: Vec<(f64, f64)> = init
        .times()
        .iter()
        .map(|&s| (s, objective(path.value_at(s), s)))
        .collect();
    let argmin = |pts: &[(f64, f64)]| {
        let mut best = 0;
        for (i, p) in pts.iter().enumerate() {
            if p.1 < pts[best].1 {
                best = i;
            }
        }
        best
    };
    let mut best = argmin(&pts);
    let mut round_values = vec![pts[best].1];
    for _ in 0..grid.rounds {
        let lo = if best > 0 { pts[best - 1].0 } else { pts[best].0 };
        let hi = if best + 1 < pts.len() { pts[best + 1].0 } else { pts[best].0 };
        if hi > lo {
            let ratio = (hi / lo).powf(1.0 / (POINTS_PER_ROUND + 1) as f64);
            for k in 1..=POINTS_PER_ROUND {
                let s = lo * ratio.powi(k as i32);
                if s > lo && s < hi {
                    let pos = pts.partition_point(|p| p.0 < s);
                    if pts.get(pos).map_or(true, |p| p.0 != s) {
                        pts.insert(pos, (s, objective(path.value_at(s), s)));
                    }
                }
            }
        }
        best = argmin(&pts);
        round_values.push(pts[best].1);
    }
    Ok(ZetaSample {
        value: pts[best].1,
        argmin_s: pts[best].0,
        grid,
        round_values,
    })
}

/// One draw of (an upper bound for) `ζ = inf_s √2·Y_s + 1/(2s)` with `Y` a
/// Bessel-3 from 0.
pub fn zeta_sample(grid: ZetaGrid, key: StreamKey) -> Result<ZetaSample> {
    grid.validate()?;
    let init = TimeGrid::log_spaced(grid.s_min, grid.s_max, grid.points)?;
    let mut source = BesselSource::new(init.times(), key)?;
    zeta_on_path(&mut source, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_test_path() {
        let want = 2f64.powf(1.0 / 3.0) + 2f64.powf(-2.0 / 3.0);
        let grid = ZetaGrid {
            rounds: 12,
            ..ZetaGrid::default()
        };
        let z = zeta_on_path(&mut FnPath(f64::sqrt), grid).unwrap();
        assert!((z.value - want).abs() < 1e-6, "{} vs {want}", z.value);
        assert!((z.argmin_s - 2f64.powf(-1.0 / 3.0)).abs() < 1e-2);
        assert!(z.round_values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn samples_positive_and_nonincreasing() {
        for i in 0..200 {
            let z = zeta_sample(ZetaGrid::default(), StreamKey::new(3, i)).unwrap();
            assert!(z.value > 0.0);
            assert_eq!(z.round_values.len(), 9);
            assert!(z.round_values.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*z.round_values.last().unwrap(), z.value);
        }
    }

    #[test]
    fn grid_validation() {
        let bad = ZetaGrid {
            points: 8,
            ..ZetaGrid::default()
        };
        assert!(zeta_sample(bad, StreamKey::new(0, 0)).is_err());
        let bad = ZetaGrid {
            s_min: 2.0,
            s_max: 1.0,
            ..ZetaGrid::default()
        };
        assert!(zeta_sample(bad, StreamKey::new(0, 0)).is_err());
    }
}
