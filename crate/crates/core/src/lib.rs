//! Monte Carlo toolkit for the extremal process of branching Brownian motion.
//!
//! * [`paths`]: exact Brownian, bridge, Bessel-3 and backbone samplers.
//! * [`bbm`]: event-driven binary branching Brownian motion with genealogy.
//! * [`measure`]: point measures, decorated point measures and windows.
//! * [`extremal`]: limiting point processes and the stable-1 law.
//! * [`cluster`]: the cluster law via its backbone representation.
//! * [`stats`]: distribution comparison utilities.

pub mod bbm;
pub mod cluster;
pub mod error;
pub mod extremal;
pub mod measure;
pub mod paths;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::StreamKey;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Coefficient `3/(2√2)` of the logarithmic correction in the centering.
pub const LOG_CURVE: f64 = 3.0 / (2.0 * std::f64::consts::SQRT_2);

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `log(t ∨ 1)`.
pub fn log_plus(t: f64) -> f64 {
    if t > 1.0 {
        t.ln()
    } else {
        0.0
    }
}

/// Centering of the maximum, `m_t = √2·t − (3/(2√2))·log⁺ t`.
pub fn centering(t: f64) -> f64 {
    SQRT2 * t - LOG_CURVE * log_plus(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_values() {
        assert_eq!(centering(0.0), 0.0);
        assert!((centering(1.0) - SQRT2).abs() < 1e-15);
        assert!((centering(0.5) - 0.5 * SQRT2).abs() < 1e-15);
        let t = 12.0f64;
        assert!((centering(t) - (SQRT2 * t - LOG_CURVE * t.ln())).abs() < 1e-12);
    }
}
