//! The cluster law via its backbone representation: a negative Bessel-3
//! backbone minus a logarithmic curve, decorated at the events of a rate-2
//! Poisson process by conditioned (or surrogate) extremal processes.

mod gamma;
mod sample;
mod timestamps;
mod zeta;
mod zsource;

pub use gamma::{calibrate_c0, gamma_tail, truncated_first_moment, C0Calibration, GammaEstimate};
pub use sample::{
    sample_cluster, surrogate_profile, x_from_mass, x_statistic, ClusterDiagnostics, ClusterMode,
    ClusterSample, ClusterSampler, DecorationStrategy, ExactDecoration, SurrogateDecoration,
};
pub use timestamps::{sample_timestamps, TimestampProcess, TIMESTAMP_RATE};
pub use zeta::{zeta_on_path, zeta_sample, BesselSource, FnPath, RefinablePath, ZetaGrid, ZetaSample};
pub use zsource::{ConstantZ, ZBank, ZBankProvenance, ZSource};
