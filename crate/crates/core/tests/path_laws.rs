use bbmx_core::paths::{
    mc_stay_positive, sample_backbone, sample_bessel3, sample_brownian, bridge_stay_positive,
    TimeGrid,
};
use bbmx_core::stats::{ks_critical, ks_samples, mean_stderr};
use bbmx_core::StreamKey;

fn key(i: u64) -> StreamKey {
    StreamKey::new(0xa11ce, i)
}

#[test]
fn brownian_variance_and_covariance() {
    let grid = TimeGrid::new(vec![0.5, 1.0]).unwrap();
    let n = 1_000_000;
    let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n as u64 {
        let p = sample_brownian(&grid, 0.0, key(i)).unwrap();
        a.push(p.values[0]);
        b.push(p.values[1]);
    }
    let sq: Vec<f64> = b.iter().map(|x| x * x).collect();
    let (var, se) = mean_stderr(&sq);
    assert!((var - 1.0).abs() < 3.0 * se, "Var W_1 = {var} ± {se}");
    let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let (cov, se) = mean_stderr(&prod);
    assert!((cov - 0.5).abs() < 3.0 * se, "Cov = {cov} ± {se}");
}

#[test]
fn brownian_scaling_passes_ks() {
    let n = 100_000;
    let a = 3.0;
    let at = |s: f64, i: u64| {
        let g = TimeGrid::new(vec![s]).unwrap();
        sample_brownian(&g, 0.0, key(i)).unwrap().values[0]
    };
    let scaled: Vec<f64> = (0..n).map(|i| at(a * 0.7, i) / a.sqrt()).collect();
    let direct: Vec<f64> = (0..n).map(|i| at(0.7, n + i)).collect();
    let d = ks_samples(&scaled, &direct).unwrap();
    assert!(d < ks_critical(1e-3, n as usize, n as usize), "KS {d}");
}

#[test]
fn bessel_mean_matches_maxwell() {
    let grid = TimeGrid::new(vec![1.0]).unwrap();
    let ys: Vec<f64> = (0..1_000_000)
        .map(|i| sample_bessel3(&grid, 0.0, key(i)).unwrap().values[0])
        .collect();
    let (m, se) = mean_stderr(&ys);
    let want = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((m - want).abs() < 3.0 * se, "{m} ± {se} vs {want}");
}

/// Transition density of Bessel-3 from `x > 0` over time 1, the Doob
/// transform of Brownian motion killed at 0.
fn doob_density(x: f64, y: f64) -> f64 {
    let phi = |z: f64| (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    y / x * (phi(y - x) - phi(y + x))
}

#[test]
fn bessel_transition_matches_doob_density() {
    let x0 = 1.3;
    let grid = TimeGrid::new(vec![1.0]).unwrap();
    let n = 200_000;
    let ys: Vec<f64> = (0..n).map(|i| sample_bessel3(&grid, x0, key(i)).unwrap().values[0]).collect();
    for c in [0.5, 1.0, 1.5, 2.5, 3.5] {
        // Simpson integration of the density on [0, c]
        let m = 2000;
        let h = c / m as f64;
        let mut cdf = doob_density(x0, 0.0) + doob_density(x0, c);
        for k in 1..m {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            cdf += w * doob_density(x0, k as f64 * h);
        }
        cdf *= h / 3.0;
        let emp = ys.iter().filter(|&&y| y <= c).count() as f64 / n as f64;
        let se = (cdf * (1.0 - cdf) / n as f64).sqrt();
        assert!((emp - cdf).abs() < 4.0 * se, "c={c}: {emp} vs {cdf}");
    }
}

#[test]
fn bessel_scaling_invariance() {
    let n = 100_000u64;
    let a = 4.0;
    let at = |s: f64, i: u64| {
        let g = TimeGrid::new(vec![s]).unwrap();
        sample_bessel3(&g, 0.0, key(i)).unwrap().values[0]
    };
    let scaled: Vec<f64> = (0..n).map(|i| at(a * 1.5, i) / a.sqrt()).collect();
    let direct: Vec<f64> = (0..n).map(|i| at(1.5, n + i)).collect();
    let d = ks_samples(&scaled, &direct).unwrap();
    assert!(d < 0.01, "KS {d}");
}

#[test]
fn backbone_is_nonpositive_with_log_curve() {
    let grid = TimeGrid::log_spaced(0.01, 500.0, 200).unwrap();
    for i in 0..200 {
        let p = sample_backbone(&grid, 0.0, key(i)).unwrap();
        assert!(p.values.iter().all(|&v| v <= 0.0));
    }
    let curve = bbmx_core::paths::backbone_curve(std::f64::consts::E.powi(2));
    assert!((curve + 2.121_320_343_559_642).abs() < 1e-12);
}

#[test]
fn bridge_positivity_oracle_reduced() {
    let closed = bridge_stay_positive(1.0, 1.0, 100.0).unwrap();
    let mc = mc_stay_positive(1.0, 1.0, 100.0, 2_000, 200_000, key(1)).unwrap();
    assert!(mc.estimate >= closed - 3.0 * mc.stderr);
    assert!(mc.estimate <= closed + mc.bias_bound + 3.0 * mc.stderr);
}

#[test]
fn bessel_forgets_its_start() {
    let n = 20_000u64;
    let mut last = f64::INFINITY;
    for r in [1.0, 4.0, 16.0] {
        let g = TimeGrid::new(vec![r]).unwrap();
        let from0: Vec<f64> = (0..n).map(|i| sample_bessel3(&g, 0.0, key(i)).unwrap().values[0]).collect();
        let from2: Vec<f64> = (0..n).map(|i| sample_bessel3(&g, 2.0, key(n + i)).unwrap().values[0]).collect();
        let d = ks_samples(&from0, &from2).unwrap();
        // monotone within the sampling noise of the KS statistic
        assert!(d <= last + ks_critical(0.01, n as usize, n as usize), "r={r}: {d} after {last}");
        last = d;
    }
    assert!(last < ks_critical(1e-3, n as usize, n as usize) * 2.0);
}
