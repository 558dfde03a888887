use bbmx_core::bbm::{derivative_martingale, level_set_count, simulate, PruneConfig};
use bbmx_core::stats::mean_stderr;
use bbmx_core::StreamKey;

#[test]
fn many_to_one_population_and_height_sum() {
    for (j, t) in [1.0f64, 2.0, 3.0].into_iter().enumerate() {
        let mut pops = Vec::new();
        let mut sums = Vec::new();
        for i in 0..10_000 {
            let s = simulate(t, PruneConfig::disabled(), StreamKey::new(100 + j as u64, i)).unwrap();
            pops.push(s.population() as f64);
            sums.push(s.heights().sum::<f64>());
        }
        let (m, se) = mean_stderr(&pops);
        assert!((m - t.exp()).abs() < 3.0 * se, "t={t}: E|L_t| = {m} ± {se}");
        let (m, se) = mean_stderr(&sums);
        assert!(m.abs() < 3.0 * se, "t={t}: E Σh = {m} ± {se}");
    }
}

/// `Z_t` is left-skewed with rare, unbounded negative contributions from
/// particles ahead of `√2t`; at 10^4 runs the sample stderr understates the
/// spread often enough that 8·10^4 runs are used.
#[test]
fn derivative_martingale_has_mean_zero() {
    for (j, t) in [2.0f64, 3.0, 4.0].into_iter().enumerate() {
        let zs: Vec<f64> = (0..80_000)
            .map(|i| {
                let s = simulate(t, PruneConfig::disabled(), StreamKey::new(200 + j as u64, i)).unwrap();
                derivative_martingale(&s, 1.0)
            })
            .collect();
        let (m, se) = mean_stderr(&zs);
        assert!(m.abs() < 3.0 * se, "t={t}: E Z_t = {m} ± {se}");
    }
}

#[test]
fn pruning_does_not_disturb_certified_level_sets() {
    let prune = PruneConfig::default();
    let v = prune.max_safe_level();
    let mut pruned_any = false;
    for t in [4.0, 6.0, 8.0, 10.0] {
        for i in 0..8 {
            let key = StreamKey::new(300, i);
            let full = simulate(t, PruneConfig::disabled(), key).unwrap();
            let cut = simulate(t, prune, key).unwrap();
            pruned_any |= cut.prune_log().pruned_count > 0;
            assert_eq!(
                level_set_count(&full, v).unwrap(),
                level_set_count(&cut, v).unwrap(),
                "t={t}, key={i}"
            );
            assert_eq!(full.max_height(), cut.max_height());
        }
    }
    assert!(pruned_any, "pruning never triggered; the coupling check is vacuous");
}

#[test]
fn positive_martingale_fraction_grows() {
    let frac = |t: f64, tag: u64| {
        let n = 2000;
        let pos = (0..n)
            .filter(|&i| {
                let s = simulate(t, PruneConfig::default(), StreamKey::new(tag, i)).unwrap();
                derivative_martingale(&s, 1.0) > 0.0
            })
            .count();
        pos as f64 / n as f64
    };
    let (a, b) = (frac(2.0, 400), frac(6.0, 401));
    let se = (a * (1.0 - a) / 2000.0).sqrt() + (b * (1.0 - b) / 2000.0).sqrt();
    assert!(b + 2.0 * se >= a, "fraction fell from {a} to {b}");
}
