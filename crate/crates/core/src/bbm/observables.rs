use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::engine::ParticleSystem;
use crate::error::{invalid, Error, Result};
use crate::measure::{DecoratedPointMeasure, PointMeasure};
use crate::{centering, SQRT2};

/// `max_x h_t(x) − m_t`.
pub fn centered_max(system: &ParticleSystem) -> Result<f64> {
    let max = system
        .max_height()
        .ok_or_else(|| Error::Empty("particle system has no alive particles".into()))?;
    Ok(max - centering(system.horizon()))
}

/// Derivative martingale `Z_t = C⋄ Σ (√2t − h)·exp(√2(h − √2t))`.
pub fn derivative_martingale(system: &ParticleSystem, c_diamond: f64) -> f64 {
    let t = system.horizon();
    let front = SQRT2 * t;
    c_diamond
        * system
            .heights()
            .map(|h| (front - h) * (SQRT2 * (h - front)).exp())
            .sum::<f64>()
}

/// Number of alive particles with `h_t(x) >= m_t − v`.
///
/// Under pruning only `v <= window − 3` is certified; deeper levels are
/// rejected with the logged bias bound.
pub fn level_set_count(system: &ParticleSystem, v: f64) -> Result<usize> {
    if v.is_nan() {
        return invalid("level must not be NaN");
    }
    let prune = system.prune_config();
    let max_safe = prune.max_safe_level();
    if v > max_safe {
        return Err(Error::PruneUnsafe {
            v,
            max_safe,
            window: prune.window,
            bias_bound: system.prune_log().prune_bias_bound,
        });
    }
    let level = centering(system.horizon()) - v;
    Ok(system.heights().filter(|&h| h >= level).count())
}

/// Time of the most recent common ancestor of two alive particles.
fn mrca_time(system: &ParticleSystem, a: usize, b: usize) -> Result<f64> {
    system.height(a)?;
    system.height(b)?;
    if a == b {
        return Ok(system.horizon());
    }
    let (mut x, mut y) = (a, b);
    // ids increase along every lineage, so step the larger id up
    while x != y {
        if x > y {
            x = system.node(x).parent.ok_or(Error::UnknownParticle(x))?;
        } else {
            y = system.node(y).parent.ok_or(Error::UnknownParticle(y))?;
        }
    }
    Ok(system.node(x).end_time)
}

/// `t − |x ∧ x'|` for two particles alive at the horizon.
pub fn genealogical_distance(system: &ParticleSystem, a: usize, b: usize) -> Result<f64> {
    Ok(system.horizon() - mrca_time(system, a, b)?)
}

/// Groups alive particles into the balls `B_r(x) = {y : d(x,y) < r}`.
///
/// Two particles are within distance `< r` iff they descend from the same
/// node alive at time `t − r`, so every ball is a block of this partition.
/// Groups are keyed by that ancestor's id; members are ascending.
pub fn genealogical_balls(system: &ParticleSystem, r: f64) -> Result<BTreeMap<usize, Vec<usize>>> {
    if !(r > 0.0) {
        return invalid(format!("ball radius must be positive, got {r}"));
    }
    let cut = system.horizon() - r;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &x in system.alive() {
        let mut cur = x;
        while system.node(cur).birth_time > cut {
            match system.node(cur).parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        groups.entry(cur).or_default().push(x);
    }
    Ok(groups)
}

fn ball_argmax(system: &ParticleSystem, members: &[usize]) -> usize {
    // members ascending, strict comparison keeps the smallest id on ties
    let mut best = members[0];
    let mut best_h = system.node(best).height_at_end;
    for &m in &members[1..] {
        let h = system.node(m).height_at_end;
        if h > best_h {
            best = m;
            best_h = h;
        }
    }
    best
}

/// `r`-local maxima: particles at least as high as everything in their ball.
/// Exact height ties keep only the smallest id. Returned ascending.
pub fn local_maxima(system: &ParticleSystem, r: f64) -> Result<Vec<usize>> {
    let groups = genealogical_balls(system, r)?;
    let mut out: Vec<usize> = groups.values().map(|m| ball_argmax(system, m)).collect();
    out.sort_unstable();
    Ok(out)
}

/// Structured extremal process: centered tip height of every `r`-local
/// maximum paired with its cluster of relative heights.
pub fn extract_clusters(system: &ParticleSystem, r: f64) -> Result<DecoratedPointMeasure> {
    let groups = genealogical_balls(system, r)?;
    let m = centering(system.horizon());
    let mut pairs = Vec::with_capacity(groups.len());
    for members in groups.values() {
        let top = ball_argmax(system, members);
        let top_h = system.node(top).height_at_end;
        let rel = members
            .iter()
            .map(|&y| {
                if y == top {
                    0.0
                } else {
                    system.node(y).height_at_end - top_h
                }
            })
            .collect();
        pairs.push((top_h - m, PointMeasure::new(rel)?));
    }
    DecoratedPointMeasure::new(pairs)
}

/// One-row summary of a particle system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub t: f64,
    pub population: usize,
    pub max_height: f64,
    pub centered_max: f64,
    pub z_t: f64,
    pub level: f64,
    pub level_count: Option<usize>,
    pub pruned_count: u64,
    pub prune_bias_bound: f64,
}

pub fn summarize(system: &ParticleSystem, c_diamond: f64, level: f64) -> Result<SystemSummary> {
    Ok(SystemSummary {
        t: system.horizon(),
        population: system.population(),
        max_height: system.max_height().unwrap_or(f64::NAN),
        centered_max: centered_max(system)?,
        z_t: derivative_martingale(system, c_diamond),
        level,
        level_count: level_set_count(system, level).ok(),
        pruned_count: system.prune_log().pruned_count,
        prune_bias_bound: system.prune_log().prune_bias_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbm::{simulate, NodeFate, PruneConfig};
    use crate::StreamKey;

    fn sys(t: f64, i: u64) -> ParticleSystem {
        simulate(t, PruneConfig::disabled(), StreamKey::new(77, i)).unwrap()
    }

    #[test]
    fn trivial_system_observables() {
        let s = sys(0.0, 0);
        assert_eq!(centered_max(&s).unwrap(), 0.0);
        // single particle at 0 with t=0 sits on the front √2·t = 0
        assert_eq!(derivative_martingale(&s, 1.0), 0.0);
        let d = extract_clusters(&s, 1.0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.pairs()[0].0, 0.0);
        assert_eq!(d.pairs()[0].1.atoms(), &[0.0]);
    }

    #[test]
    fn distance_properties() {
        let s = sys(4.0, 1);
        let alive = s.alive().to_vec();
        for &a in alive.iter().take(10) {
            assert_eq!(genealogical_distance(&s, a, a).unwrap(), 0.0);
            for &b in alive.iter().take(10) {
                let d1 = genealogical_distance(&s, a, b).unwrap();
                let d2 = genealogical_distance(&s, b, a).unwrap();
                assert_eq!(d1, d2);
                if a != b {
                    assert!(d1 > 0.0);
                }
            }
        }
        assert!(genealogical_distance(&s, usize::MAX, alive[0]).is_err());
    }

    #[test]
    fn sibling_distance_is_time_since_branching() {
        for i in 0..20 {
            let s = sys(3.0, i);
            for n in s.nodes() {
                if n.fate == NodeFate::Alive {
                    if let Some(p) = n.parent {
                        let sibs: Vec<_> = s
                            .nodes()
                            .iter()
                            .filter(|m| m.parent == Some(p) && m.fate == NodeFate::Alive)
                            .map(|m| m.id)
                            .collect();
                        if sibs.len() == 2 {
                            let d = genealogical_distance(&s, sibs[0], sibs[1]).unwrap();
                            assert!((d - (3.0 - s.node(p).end_time)).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn local_maxima_extremes() {
        let s = sys(4.0, 3);
        let all = local_maxima(&s, 5.0).unwrap();
        assert_eq!(all.len(), 1);
        let top = all[0];
        assert_eq!(s.height(top).unwrap(), s.max_height().unwrap());
        // radius below every branching gap: each particle is its own ball
        let min_gap = s
            .nodes()
            .iter()
            .filter(|n| n.fate == NodeFate::Alive)
            .map(|n| 4.0 - n.birth_time)
            .fold(f64::INFINITY, f64::min);
        let each = local_maxima(&s, min_gap * 0.5).unwrap();
        assert_eq!(each, s.alive().to_vec());
    }

    #[test]
    fn local_maxima_dominate_their_ball() {
        for i in 0..10 {
            let s = sys(5.0, 100 + i);
            let r = 2.0;
            for x in local_maxima(&s, r).unwrap() {
                let hx = s.height(x).unwrap();
                for &y in s.alive() {
                    if genealogical_distance(&s, x, y).unwrap() < r {
                        assert!(hx >= s.height(y).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn clusters_are_normalized_and_cover_population() {
        for i in 0..10 {
            let s = sys(5.0, 200 + i);
            let d = extract_clusters(&s, 2.5).unwrap();
            let mut total = 0;
            for (_, c) in d.pairs() {
                assert_eq!(c.top(), Some(0.0));
                assert!(c.atoms().iter().all(|&a| a <= 0.0));
                total += c.len();
            }
            assert_eq!(total, s.population());
            let groups = genealogical_balls(&s, 2.5).unwrap();
            let sizes: usize = groups.values().map(|g| g.len()).sum();
            assert_eq!(sizes, d.total_mass());
        }
    }

    #[test]
    fn level_set_edges() {
        let s = sys(3.0, 5);
        assert_eq!(level_set_count(&s, f64::INFINITY).unwrap(), s.population());
        let v_none = centering(3.0) - s.max_height().unwrap() - 0.1;
        assert_eq!(level_set_count(&s, v_none).unwrap(), 0);
        let pruned = simulate(3.0, PruneConfig::default(), StreamKey::new(77, 5)).unwrap();
        assert!(matches!(
            level_set_count(&pruned, 7.5),
            Err(Error::PruneUnsafe { .. })
        ));
        assert!(level_set_count(&pruned, 7.0).is_ok());
    }

    #[test]
    fn centered_max_values() {
        let s = sys(1.0, 0);
        let shifted = s.max_height().unwrap() - SQRT2;
        assert!((centered_max(&s).unwrap() - shifted).abs() < 1e-15);
    }

    #[test]
    fn martingale_hand_values() {
        let t = 2.0;
        let on_front = ParticleSystem::star(t, &[SQRT2 * t]);
        assert_eq!(derivative_martingale(&on_front, 1.0), 0.0);
        let s = ParticleSystem::star(t, &[0.0, 1.0]);
        let f = SQRT2 * t;
        let want = 3.0 * (f * (-SQRT2 * f).exp() + (f - 1.0) * (SQRT2 * (1.0 - f)).exp());
        assert!((derivative_martingale(&s, 3.0) - want).abs() < 1e-15);
        // shifting every height by c shifts the centered maximum by c
        let c = 0.37;
        let moved = ParticleSystem::star(t, &[c, 1.0 + c]);
        let d = centered_max(&moved).unwrap() - centered_max(&s).unwrap();
        assert!((d - c).abs() < 1e-12);
        // t = 1 with maximum at 0 gives −√2
        let one = ParticleSystem::star(1.0, &[0.0, -0.5]);
        assert!((centered_max(&one).unwrap() + SQRT2).abs() < 1e-15);
    }
}
