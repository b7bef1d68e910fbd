//! Ranking evaluation of a fitted model against a held-out window.
//!
//! For each user with relevant items the model ranks everything it can
//! score, minus that user's known interactions, and per-user metrics are
//! averaged. Cold-start filtering restricts the relevant sets to items
//! that first appeared in the streaming window (or to the complement).
//! Relevant items the model cannot score stay in the denominator and are
//! counted separately: a model that cannot represent a new item pays for
//! it in recall and the count says how much.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph::GraphSnapshot;
use crate::metrics::{metric_at_n, rank_items, MetricKey, MetricKind};
use crate::replay::ReplayModel;

/// How the relevant sets treat items that first appeared after the
/// offline window (during streaming).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColdStartMode {
    /// Drop streaming-cold items from the relevant sets.
    Exclude,
    /// Keep only streaming-cold items.
    Only,
    /// Keep everything.
    All,
}

impl std::fmt::Display for ColdStartMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColdStartMode::Exclude => "exclude",
            ColdStartMode::Only => "only",
            ColdStartMode::All => "all",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metrics: Vec<MetricKind>,
    pub cutoffs: Vec<usize>,
    pub cold_start: ColdStartMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: vec![MetricKind::Precision, MetricKind::Recall, MetricKind::Ndcg],
            cutoffs: vec![5, 10, 20],
            cold_start: ColdStartMode::All,
        }
    }
}

impl EvalConfig {
    pub fn keys(&self) -> Vec<MetricKey> {
        let mut keys = Vec::with_capacity(self.metrics.len() * self.cutoffs.len());
        for &metric in &self.metrics {
            for &cutoff in &self.cutoffs {
                keys.push(MetricKey { metric, cutoff });
            }
        }
        keys
    }
}

#[derive(Debug, Clone)]
pub struct EvaluationResult {
    /// Per-metric means over evaluated users.
    pub means: BTreeMap<MetricKey, f64>,
    /// Per-user metric values, ascending user index.
    pub per_user: BTreeMap<usize, BTreeMap<MetricKey, f64>>,
    pub users_evaluated: usize,
    /// Relevant items (after cold-start filtering, summed over users) at
    /// or above the model's scoreable-item watermark.
    pub unscoreable_relevant: usize,
}

/// Evaluate `model` on `relevant` (held-out items per user, sorted).
/// `exclusion` supplies each user's already-known interactions, which
/// never appear as candidates. Errors with [`CoreError::EmptyEvaluation`]
/// when cold-start filtering leaves no user with a relevant item.
pub fn evaluate<M: ReplayModel + Sync>(
    model: &M,
    exclusion: &GraphSnapshot,
    relevant: &BTreeMap<usize, Vec<usize>>,
    cold_items: &HashSet<usize>,
    config: &EvalConfig,
) -> Result<EvaluationResult> {
    let keys = config.keys();
    let filtered: Vec<(usize, Vec<usize>)> = relevant
        .iter()
        .filter_map(|(&user, items)| {
            let kept: Vec<usize> = items
                .iter()
                .copied()
                .filter(|w| match config.cold_start {
                    ColdStartMode::Exclude => !cold_items.contains(w),
                    ColdStartMode::Only => cold_items.contains(w),
                    ColdStartMode::All => true,
                })
                .collect();
            (!kept.is_empty()).then_some((user, kept))
        })
        .collect();
    if filtered.is_empty() {
        return Err(CoreError::EmptyEvaluation);
    }

    let scoreable = model.scoreable_items();
    let rows: Vec<(usize, BTreeMap<MetricKey, f64>, usize)> = filtered
        .par_iter()
        .map(|(user, kept)| {
            let scores = model.scores(*user);
            let ranked = rank_items(*user, &scores, exclusion.items_of(*user));
            let metrics: BTreeMap<MetricKey, f64> = keys
                .iter()
                .map(|&key| (key, metric_at_n(key.metric, &ranked.items, kept, key.cutoff)))
                .collect();
            let unscoreable = kept.iter().filter(|&&w| w >= scoreable).count();
            (*user, metrics, unscoreable)
        })
        .collect();

    let mut means: BTreeMap<MetricKey, f64> = keys.iter().map(|&k| (k, 0.0)).collect();
    let mut per_user = BTreeMap::new();
    let mut unscoreable_relevant = 0;
    for (user, metrics, unscoreable) in rows {
        for (&key, &value) in &metrics {
            *means.get_mut(&key).expect("key present") += value;
        }
        unscoreable_relevant += unscoreable;
        per_user.insert(user, metrics);
    }
    let n = per_user.len() as f64;
    means.values_mut().for_each(|v| *v /= n);
    Ok(EvaluationResult {
        means,
        per_user,
        users_evaluated: filtered.len(),
        unscoreable_relevant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use approx::assert_relative_eq;

    /// Fixed score table; row per user.
    struct FixedModel {
        rows: Vec<Vec<f64>>,
        scoreable: usize,
    }

    impl ReplayModel for FixedModel {
        fn kind(&self) -> &'static str {
            "fixed"
        }
        fn observe(&mut self, _graph: &GraphSnapshot) -> Result<()> {
            Ok(())
        }
        fn scores(&self, user: usize) -> Vec<f64> {
            self.rows[user].clone()
        }
        fn scoreable_items(&self) -> usize {
            self.scoreable
        }
    }

    fn setup() -> (FixedModel, GraphSnapshot, BTreeMap<usize, Vec<usize>>, HashSet<usize>) {
        // 2 users, 5 items. User 0 already knows item 0.
        let model = FixedModel {
            rows: vec![vec![5.0, 4.0, 3.0, 2.0, 1.0], vec![1.0, 2.0, 3.0, 4.0, 5.0]],
            scoreable: 5,
        };
        let graph =
            GraphSnapshot::from_pair_lists(2, 5, &[(0, 0)], &[], 0, NodeKind::Item);
        let mut relevant = BTreeMap::new();
        relevant.insert(0usize, vec![1usize, 4]);
        relevant.insert(1, vec![0]);
        let cold: HashSet<usize> = [4usize].into_iter().collect();
        (model, graph, relevant, cold)
    }

    fn cfg(mode: ColdStartMode) -> EvalConfig {
        EvalConfig {
            metrics: vec![MetricKind::Recall],
            cutoffs: vec![2],
            cold_start: mode,
        }
    }

    #[test]
    fn metric_means_match_hand_computation() {
        let (model, graph, relevant, cold) = setup();
        let res = evaluate(&model, &graph, &relevant, &cold, &cfg(ColdStartMode::All)).unwrap();
        // User 0 ranks (item 0 excluded): [1, 2, 3, 4]; top-2 = {1, 2};
        // relevant {1, 4} -> recall 1/2. User 1 ranks [4, 3, 2, 1, 0];
        // top-2 = {4, 3}; relevant {0} -> recall 0.
        let key = MetricKey { metric: MetricKind::Recall, cutoff: 2 };
        assert_eq!(res.users_evaluated, 2);
        assert_relative_eq!(res.means[&key], 0.25);
        assert_relative_eq!(res.per_user[&0][&key], 0.5);
        assert_relative_eq!(res.per_user[&1][&key], 0.0);
        assert_eq!(res.unscoreable_relevant, 0);
    }

    #[test]
    fn cold_filtering_reshapes_relevant_sets() {
        let (model, graph, relevant, cold) = setup();
        // Exclude: user 0 keeps {1}, user 1 keeps {0}.
        let res =
            evaluate(&model, &graph, &relevant, &cold, &cfg(ColdStartMode::Exclude)).unwrap();
        let key = MetricKey { metric: MetricKind::Recall, cutoff: 2 };
        assert_eq!(res.users_evaluated, 2);
        assert_relative_eq!(res.per_user[&0][&key], 1.0); // {1} fully hit
        // Only: user 0 keeps {4}, user 1 drops out entirely.
        let res = evaluate(&model, &graph, &relevant, &cold, &cfg(ColdStartMode::Only)).unwrap();
        assert_eq!(res.users_evaluated, 1);
        assert!(res.per_user.contains_key(&0));
        assert_relative_eq!(res.per_user[&0][&key], 0.0); // item 4 ranks last
    }

    #[test]
    fn unscoreable_relevant_items_are_counted_and_penalized() {
        let (mut model, graph, relevant, cold) = setup();
        // Model only scores items < 3: items 3, 4 are beyond its range.
        model.scoreable = 3;
        model.rows = vec![vec![5.0, 4.0, 3.0], vec![1.0, 2.0, 3.0]];
        let res = evaluate(&model, &graph, &relevant, &cold, &cfg(ColdStartMode::All)).unwrap();
        let key = MetricKey { metric: MetricKind::Recall, cutoff: 2 };
        // User 0: candidates [1, 2]; hits {1} of relevant {1, 4} -> 1/2
        // with item 4 permanently unreachable.
        assert_relative_eq!(res.per_user[&0][&key], 0.5);
        assert_eq!(res.unscoreable_relevant, 1);
    }

    #[test]
    fn empty_filtered_evaluation_is_an_error() {
        let (model, graph, mut relevant, _) = setup();
        relevant.clear();
        relevant.insert(0, vec![4]); // only a cold item
        let cold: HashSet<usize> = [4usize].into_iter().collect();
        match evaluate(&model, &graph, &relevant, &cold, &cfg(ColdStartMode::Exclude)) {
            Err(CoreError::EmptyEvaluation) => {}
            other => panic!("expected empty evaluation error, got {other:?}"),
        }
    }
}
