use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{child_label, mix3, FastRng, StreamKey};

/// Level sets deeper than `window - PRUNE_MARGIN` below the maximum are not
/// certified under pruning.
pub const PRUNE_MARGIN: f64 = 3.0;

pub const DEFAULT_NODE_CAP: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub enabled: bool,
    pub window: f64,
    pub check_interval: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            window: 10.0,
            check_interval: 0.25,
        }
    }
}

impl PruneConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn with_window(window: f64) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) || !(self.check_interval > 0.0) {
            return invalid(format!(
                "prune window and check interval must be positive (window={}, interval={})",
                self.window, self.check_interval
            ));
        }
        Ok(())
    }

    /// Deepest level below the maximum that level-set queries may use.
    pub fn max_safe_level(&self) -> f64 {
        if self.enabled {
            self.window - PRUNE_MARGIN
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeFate {
    Branched,
    Alive,
    Pruned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenealogyNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub end_time: f64,
    pub height_at_end: f64,
    pub fate: NodeFate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneLog {
    /// Window used, if pruning was enabled.
    pub barrier_used: Option<f64>,
    pub pruned_count: u64,
    /// Bound on the fraction of the level set at depth `window - PRUNE_MARGIN`
    /// whose lineage crossed the barrier: the probability that a Brownian
    /// bridge from the root to that depth touches a barrier `window` below
    /// the line of the maximum, `exp(-2·window·margin / t)`.
    pub prune_bias_bound: f64,
}

/// State of a binary branching Brownian motion at a horizon `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    horizon: f64,
    nodes: Vec<GenealogyNode>,
    alive: Vec<usize>,
    prune: PruneConfig,
    prune_log: PruneLog,
}

impl ParticleSystem {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[GenealogyNode] {
        &self.nodes
    }

    /// Ids of particles alive at the horizon, ascending.
    pub fn alive(&self) -> &[usize] {
        &self.alive
    }

    pub fn population(&self) -> usize {
        self.alive.len()
    }

    pub fn prune_config(&self) -> &PruneConfig {
        &self.prune
    }

    pub fn prune_log(&self) -> &PruneLog {
        &self.prune_log
    }

    pub fn height(&self, id: usize) -> Result<f64> {
        match self.nodes.get(id) {
            Some(n) if n.fate == NodeFate::Alive => Ok(n.height_at_end),
            _ => Err(Error::UnknownParticle(id)),
        }
    }

    pub fn heights(&self) -> impl Iterator<Item = f64> + '_ {
        self.alive.iter().map(move |&i| self.nodes[i].height_at_end)
    }

    pub fn max_height(&self) -> Option<f64> {
        self.heights().reduce(f64::max)
    }

    pub(crate) fn node(&self, id: usize) -> &GenealogyNode {
        &self.nodes[id]
    }

    /// Hand-built system whose alive particles all descend directly from the
    /// root, which branches at time 0. Used for deterministic checks.
    #[cfg(test)]
    pub(crate) fn star(t: f64, heights: &[f64]) -> Self {
        let mut nodes = vec![GenealogyNode {
            id: 0,
            parent: None,
            birth_time: 0.0,
            end_time: 0.0,
            height_at_end: 0.0,
            fate: NodeFate::Branched,
        }];
        for &h in heights {
            nodes.push(GenealogyNode {
                id: nodes.len(),
                parent: Some(0),
                birth_time: 0.0,
                end_time: t,
                height_at_end: h,
                fate: NodeFate::Alive,
            });
        }
        ParticleSystem {
            horizon: t,
            alive: (1..nodes.len()).collect(),
            nodes,
            prune: PruneConfig::disabled(),
            prune_log: PruneLog::default(),
        }
    }
}

struct Active {
    node: usize,
    label: u64,
    rng: FastRng,
    pos: f64,
    pos_time: f64,
    death: f64,
}

fn particle_rng(root_hash: u64, label: u64) -> FastRng {
    FastRng::seed_from_u64(mix3(root_hash, label, 0xb8b8))
}

/// Simulates binary branching Brownian motion up to time `t`.
pub fn simulate(t: f64, prune: PruneConfig, key: StreamKey) -> Result<ParticleSystem> {
    simulate_with_cap(t, prune, DEFAULT_NODE_CAP, key)
}

/// Same as [`simulate`] with an explicit genealogy-size cap.
///
/// Time is cut into slabs at multiples of `prune.check_interval` (whether or
/// not pruning is enabled). Each particle owns a random stream derived from
/// its position in the family tree and draws, in order, its Exp(1) lifetime
/// and one Gaussian increment per slab boundary or branching it reaches. Two
/// runs with the same key and check interval therefore give every common
/// particle the same trajectory; pruning only removes subtrees.
pub fn simulate_with_cap(
    t: f64,
    prune: PruneConfig,
    node_cap: usize,
    key: StreamKey,
) -> Result<ParticleSystem> {
    if !(t >= 0.0) || !t.is_finite() {
        return invalid(format!("horizon must be a finite t >= 0, got {t}"));
    }
    prune.validate()?;
    let root_hash = key.hash64();
    let mut nodes: Vec<GenealogyNode> = Vec::new();
    let new_node = |nodes: &mut Vec<GenealogyNode>, parent: Option<usize>, birth: f64| {
        let id = nodes.len();
        nodes.push(GenealogyNode {
            id,
            parent,
            birth_time: birth,
            end_time: birth,
            height_at_end: 0.0,
            fate: NodeFate::Alive,
        });
        id
    };

    let root_label = 0u64;
    let mut root_rng = particle_rng(root_hash, root_label);
    let root_life: f64 = root_rng.sample(Exp1);
    let root = new_node(&mut nodes, None, 0.0);
    let mut active = vec![Active {
        node: root,
        label: root_label,
        rng: root_rng,
        pos: 0.0,
        pos_time: 0.0,
        death: root_life,
    }];

    let mut log = PruneLog {
        barrier_used: prune.enabled.then_some(prune.window),
        ..PruneLog::default()
    };

    let mut slab_start = 0.0;
    let mut k = 0u64;
    let mut stack: Vec<Active> = Vec::new();
    let mut next: Vec<Active> = Vec::new();
    while slab_start < t {
        k += 1;
        let slab_end = (k as f64 * prune.check_interval).min(t);
        stack.append(&mut active);
        // LIFO keeps the processing order deterministic
        stack.reverse();
        while let Some(mut p) = stack.pop() {
            if p.death <= slab_end {
                let dt = p.death - p.pos_time;
                let z: f64 = p.rng.sample(StandardNormal);
                p.pos += dt.sqrt() * z;
                let n = &mut nodes[p.node];
                n.end_time = p.death;
                n.height_at_end = p.pos;
                n.fate = NodeFate::Branched;
                if nodes.len() + 2 > node_cap {
                    return Err(Error::PopulationOverflow {
                        cap: node_cap,
                        time: p.death,
                    });
                }
                for c in 0..2u64 {
                    let label = child_label(p.label, c);
                    let mut rng = particle_rng(root_hash, label);
                    let life: f64 = rng.sample(Exp1);
                    let id = new_node(&mut nodes, Some(p.node), p.death);
                    stack.push(Active {
                        node: id,
                        label,
                        rng,
                        pos: p.pos,
                        pos_time: p.death,
                        death: p.death + life,
                    });
                }
            } else {
                let dt = slab_end - p.pos_time;
                let z: f64 = p.rng.sample(StandardNormal);
                p.pos += dt.sqrt() * z;
                p.pos_time = slab_end;
                next.push(p);
            }
        }
        std::mem::swap(&mut active, &mut next);
        slab_start = slab_end;

        if prune.enabled && slab_end < t {
            let max = active.iter().map(|p| p.pos).fold(f64::NEG_INFINITY, f64::max);
            let barrier = max - prune.window;
            let before = active.len();
            active.retain(|p| {
                if p.pos < barrier {
                    let n = &mut nodes[p.node];
                    n.end_time = slab_end;
                    n.height_at_end = p.pos;
                    n.fate = NodeFate::Pruned;
                    false
                } else {
                    true
                }
            });
            log.pruned_count += (before - active.len()) as u64;
        }
    }

    for p in &active {
        let n = &mut nodes[p.node];
        n.end_time = t;
        n.height_at_end = p.pos;
        n.fate = NodeFate::Alive;
    }
    let mut alive: Vec<usize> = active.iter().map(|p| p.node).collect();
    alive.sort_unstable();

    if log.pruned_count > 0 && t > 0.0 {
        log.prune_bias_bound = (-2.0 * prune.window * PRUNE_MARGIN / t).exp();
    }

    Ok(ParticleSystem {
        horizon: t,
        nodes,
        alive,
        prune,
        prune_log: log,
    })
}
