//! Sparse linear item scoring: for each target item, a nonnegative
//! elastic-net regression of its user column on every other column
//! (items and social ties), solved by cyclic coordinate descent.
//!
//! A user's score for a target is the sum of the target's coefficients
//! over that user's feature columns, so streaming updates are free: the
//! coefficients stay fixed and the user's feature set is read from the
//! current snapshot. Items unseen at fit time have no regression and no
//! coefficients; they are outside the scoreable range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::GraphSnapshot;
use crate::replay::ReplayModel;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SlimConfig {
    pub l1: f64,
    pub l2: f64,
    pub max_sweeps: usize,
    /// Stop a target's descent when no coefficient moved more than this
    /// in a sweep.
    pub tolerance: f64,
}

impl Default for SlimConfig {
    fn default() -> Self {
        SlimConfig { l1: 0.1, l2: 1.0, max_sweeps: 200, tolerance: 1e-4 }
    }
}

impl SlimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CoreError::Config(msg.into()));
        if self.l1 < 0.0 || self.l2 < 0.0 {
            return bad("elastic net weights cannot be negative");
        }
        if self.max_sweeps == 0 {
            return bad("need at least one sweep");
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive");
        }
        Ok(())
    }
}

/// Users in feature column `c`: item columns come first, then one column
/// per user holding their social neighbors.
fn feature_column(graph: &GraphSnapshot, num_items: usize, c: usize) -> &[usize] {
    if c < num_items {
        graph.users_of(c)
    } else {
        graph.social_of(c - num_items)
    }
}

/// Coordinate descent for one target item. Minimizes
/// `0.5 |a_t - A b|^2 + l1 sum(b) + 0.5 l2 |b|^2` over `b >= 0` with the
/// self column excluded. Returns the nonzero coefficients; `trace`, when
/// given, records the objective after every sweep.
pub fn slim_column(
    graph: &GraphSnapshot,
    target: usize,
    cfg: &SlimConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Vec<(usize, f64)> {
    let nu = graph.num_users();
    let ni = graph.num_items();
    let ncols = ni + nu;
    let mut residual = vec![0.0f64; nu];
    for &u in graph.users_of(target) {
        residual[u] = 1.0;
    }
    let mut coefs = vec![0.0f64; ncols];
    for _ in 0..cfg.max_sweeps {
        let mut max_delta = 0.0f64;
        for (c, coef) in coefs.iter_mut().enumerate() {
            if c == target {
                continue; // no self-regression
            }
            let col = feature_column(graph, ni, c);
            if col.is_empty() {
                continue;
            }
            let norm_sq = col.len() as f64; // binary column
            let mut g = norm_sq * *coef;
            for &u in col {
                g += residual[u];
            }
            let new = ((g - cfg.l1) / (norm_sq + cfg.l2)).max(0.0);
            let delta = new - *coef;
            if delta != 0.0 {
                for &u in col {
                    residual[u] -= delta;
                }
                *coef = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if let Some(t) = trace.as_deref_mut() {
            let obj = 0.5 * residual.iter().map(|v| v * v).sum::<f64>()
                + cfg.l1 * coefs.iter().sum::<f64>()
                + 0.5 * cfg.l2 * coefs.iter().map(|v| v * v).sum::<f64>();
            t.push(obj);
        }
        if max_delta < cfg.tolerance {
            break;
        }
    }
    coefs.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect()
}

#[derive(Debug, Clone)]
pub struct SlimModel {
    config: SlimConfig,
    /// Nonzero coefficients per fit-time target item, feature columns in
    /// the fit snapshot's space.
    rows: Vec<Vec<(usize, f64)>>,
    fit_num_items: usize,
    graph: GraphSnapshot,
}

impl SlimModel {
    pub fn fit(config: SlimConfig, graph: &GraphSnapshot) -> Result<SlimModel> {
        config.validate()?;
        let rows: Vec<Vec<(usize, f64)>> = (0..graph.num_items())
            .into_par_iter()
            .map(|j| slim_column(graph, j, &config, None))
            .collect();
        Ok(SlimModel {
            config,
            rows,
            fit_num_items: graph.num_items(),
            graph: graph.clone(),
        })
    }

    pub fn from_parts(
        config: SlimConfig,
        rows: Vec<Vec<(usize, f64)>>,
        graph: GraphSnapshot,
    ) -> SlimModel {
        let fit_num_items = rows.len();
        SlimModel { config, rows, fit_num_items, graph }
    }

    pub fn config(&self) -> &SlimConfig {
        &self.config
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// The user's active feature columns, mapped into the fit snapshot's
    /// column space; items unknown at fit time drop out.
    fn features_of(&self, user: usize) -> Vec<usize> {
        let mut feats: Vec<usize> = self
            .graph
            .items_of(user)
            .iter()
            .copied()
            .filter(|&w| w < self.fit_num_items)
            .collect();
        feats.extend(self.graph.social_of(user).iter().map(|&v| self.fit_num_items + v));
        feats
    }
}

impl ReplayModel for SlimModel {
    fn kind(&self) -> &'static str {
        "slim"
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        if graph.num_users() != self.graph.num_users() {
            return Err(CoreError::Shape(format!(
                "coefficients were fit over {} users but the snapshot has {}",
                self.graph.num_users(),
                graph.num_users()
            )));
        }
        self.graph = graph.clone();
        Ok(())
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        let feats = self.features_of(user);
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|(c, _)| feats.binary_search(c).is_ok())
                    .map(|&(_, coef)| coef)
                    .sum()
            })
            .collect()
    }

    fn scoreable_items(&self) -> usize {
        self.fit_num_items
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeRecord, NodeId, NodeKind};
    use approx::assert_relative_eq;

    fn graph(nu: usize, ni: usize, ui: &[(usize, usize)], uu: &[(usize, usize)]) -> GraphSnapshot {
        GraphSnapshot::from_pair_lists(nu, ni, ui, uu, 0, NodeKind::Item)
    }

    #[test]
    fn single_perfect_feature_hits_closed_form() {
        // Items 0 and 1 share exactly the users {0, 1}; regressing item 1
        // on item 0 is a one-coefficient problem with solution
        // (|a|^2 - l1) / (|a|^2 + l2).
        let g = graph(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)], &[]);
        let cfg = SlimConfig { l1: 0.1, l2: 1.0, ..SlimConfig::default() };
        let coefs = slim_column(&g, 1, &cfg, None);
        assert_eq!(coefs.len(), 1);
        assert_eq!(coefs[0].0, 0);
        assert_relative_eq!(coefs[0].1, (2.0 - 0.1) / (2.0 + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn heavy_l1_zeroes_all_coefficients() {
        let g = graph(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)], &[]);
        let cfg = SlimConfig { l1: 10.0, l2: 1.0, ..SlimConfig::default() };
        assert!(slim_column(&g, 1, &cfg, None).is_empty());
    }

    #[test]
    fn sweep_objective_is_monotone_nonincreasing() {
        let g = graph(
            5,
            6,
            &[(0, 0), (0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 4), (3, 0), (4, 5), (4, 1)],
            &[(0, 2), (1, 3)],
        );
        let cfg = SlimConfig { l1: 0.01, l2: 0.1, tolerance: 1e-10, ..SlimConfig::default() };
        let mut trace = Vec::new();
        slim_column(&g, 1, &cfg, Some(&mut trace));
        assert!(trace.len() >= 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn scores_sum_active_feature_coefficients() {
        let g = graph(3, 2, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)], &[]);
        let cfg = SlimConfig { l1: 0.1, l2: 1.0, ..SlimConfig::default() };
        let model = SlimModel::fit(cfg, &g).unwrap();
        let coef = model.rows()[1]
            .iter()
            .find(|(c, _)| *c == 0)
            .map(|&(_, v)| v)
            .expect("item 0 predicts item 1");
        // User 2 has item 0 only: its score for item 1 is that one coef.
        assert_relative_eq!(model.scores(2)[1], coef);
    }

    #[test]
    fn social_columns_can_carry_signal() {
        // Item 1's users are exactly the social neighbors of user 2.
        let g = graph(3, 2, &[(0, 1), (1, 1), (0, 0), (1, 0), (2, 0)], &[(0, 2), (1, 2)]);
        let cfg = SlimConfig { l1: 0.01, l2: 0.1, ..SlimConfig::default() };
        let model = SlimModel::fit(cfg, &g).unwrap();
        let social_col = g.num_items() + 2;
        assert!(model.rows()[1].iter().any(|&(c, v)| c == social_col && v > 0.0));
    }

    #[test]
    fn observe_refreshes_features_but_not_coefficients() {
        let g = graph(3, 2, &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 1)], &[]);
        let cfg = SlimConfig { l1: 0.1, l2: 1.0, ..SlimConfig::default() };
        let mut model = SlimModel::fit(cfg, &g).unwrap();
        let rows_before = model.rows().to_vec();
        // Item 1's only predictor is item 0, which user 2 lacks so far.
        assert_eq!(model.scores(2)[1], 0.0);
        let chunk = vec![
            EdgeRecord { src: NodeId::user(2), dst: NodeId::item(0), timestamp: 9 },
            EdgeRecord { src: NodeId::user(2), dst: NodeId::item(2), timestamp: 9 },
        ];
        let merged = g.merge_increment(&chunk).unwrap();
        model.observe(&merged).unwrap();
        assert_eq!(model.rows(), rows_before.as_slice());
        assert_eq!(model.scoreable_items(), 2); // item 2 arrived after fit
        assert_eq!(model.scores(2).len(), 2);
        // user 2 gained feature "item 0"... which now predicts item 1.
        assert!(model.scores(2)[1] > 0.0);
    }
}
