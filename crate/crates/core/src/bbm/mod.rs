//! Binary branching Brownian motion with full genealogy.

mod conditioned;
mod engine;
mod observables;

pub use conditioned::{conditioned_bbm, ConditionedConfig, ConditionedSystem};
pub use engine::{
    simulate, simulate_with_cap, GenealogyNode, NodeFate, ParticleSystem, PruneConfig, PruneLog,
    DEFAULT_NODE_CAP, PRUNE_MARGIN,
};
pub use observables::{
    centered_max, derivative_martingale, extract_clusters, genealogical_balls,
    genealogical_distance, level_set_count, local_maxima, summarize, SystemSummary,
};
