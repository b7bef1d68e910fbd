//! Random-walk recommender: three steps of the row-stochastic walk over
//! the full node stack (users step to item and social neighbors, items to
//! users), read off the item probabilities, and damp popular items by
//! `deg(w)^-beta`. No learned parameters, so absorbing a grown snapshot
//! is free.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::GraphSnapshot;
use crate::metrics::rank_items;
use crate::propagation::node_degrees;
use crate::replay::ReplayModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Rp3BetaConfig {
    /// Popularity-penalty exponent; 0 is the plain walk.
    pub beta: f64,
    /// Keep only the best `top_k` items per user (0 keeps all).
    pub top_k: usize,
}

impl Default for Rp3BetaConfig {
    fn default() -> Self {
        Rp3BetaConfig { beta: 0.5, top_k: 100 }
    }
}

/// One step of the row-stochastic walk: each node splits its mass evenly
/// over its neighbors; zero-degree nodes absorb theirs.
fn walk_step(graph: &GraphSnapshot, degrees: &[usize], mass: &[f64]) -> Vec<f64> {
    let nu = graph.num_users();
    let mut out = vec![0.0; mass.len()];
    for (v, &m) in mass.iter().enumerate() {
        if m == 0.0 || degrees[v] == 0 {
            continue;
        }
        let share = m / degrees[v] as f64;
        if v < nu {
            for &w in graph.items_of(v) {
                out[nu + w] += share;
            }
            for &s in graph.social_of(v) {
                out[s] += share;
            }
        } else {
            for &u in graph.users_of(v - nu) {
                out[u] += share;
            }
        }
    }
    out
}

/// Untruncated per-item scores for `user`: the three-step visiting
/// probability of each item, divided by `deg(w)^beta`. Unvisited items
/// score exactly zero regardless of degree.
pub fn rp3b_scores(graph: &GraphSnapshot, user: usize, beta: f64) -> Vec<f64> {
    let nu = graph.num_users();
    let degrees = node_degrees(graph);
    let mut mass = vec![0.0; graph.num_nodes()];
    mass[user] = 1.0;
    for _ in 0..3 {
        mass = walk_step(graph, &degrees, &mass);
    }
    (0..graph.num_items())
        .map(|w| {
            let raw = mass[nu + w];
            if raw == 0.0 {
                0.0
            } else {
                raw / (degrees[nu + w] as f64).powf(beta)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Rp3BetaModel {
    config: Rp3BetaConfig,
    graph: GraphSnapshot,
}

impl Rp3BetaModel {
    pub fn fit(config: Rp3BetaConfig, graph: &GraphSnapshot) -> Rp3BetaModel {
        Rp3BetaModel { config, graph: graph.clone() }
    }

    pub fn config(&self) -> &Rp3BetaConfig {
        &self.config
    }
}

impl ReplayModel for Rp3BetaModel {
    fn kind(&self) -> &'static str {
        "rp3beta"
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        self.graph = graph.clone();
        Ok(())
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        let mut scores = rp3b_scores(&self.graph, user, self.config.beta);
        if self.config.top_k > 0 && self.config.top_k < scores.len() {
            let ranked = rank_items(user, &scores, &[]);
            let mut kept = vec![0.0; scores.len()];
            for &w in ranked.items.iter().take(self.config.top_k) {
                kept[w] = scores[w];
            }
            scores = kept;
        }
        scores
    }

    fn scoreable_items(&self) -> usize {
        self.graph.num_items()
    }
}
