//! Shared pieces of the pairwise training loops: numerically stable BPR
//! terms, Adam with decoupled weight decay, early stopping on validation
//! recall, and the per-epoch sampling of reconstruction targets and
//! negatives.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::embedding::{dot, EmbeddingTable};
use crate::graph::GraphSnapshot;
use crate::metrics::{rank_items, recall_at_n};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x), overflow-safe. `-ln sigmoid(d) == softplus(-d)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Adam moments for one table, applied with decoupled weight decay:
/// `theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * theta`.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn for_table(t: &EmbeddingTable) -> Self {
        Self::new(t.values().len())
    }

    /// `step` is 1-based and shared across tables updated together.
    pub fn apply(
        &mut self,
        params: &mut EmbeddingTable,
        grad: &EmbeddingTable,
        step: usize,
        learning_rate: f64,
        weight_decay: f64,
    ) {
        assert_eq!(params.values().len(), self.m.len());
        assert_eq!(grad.values().len(), self.m.len());
        let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
        let p = params.values_mut();
        let zipped = p.iter_mut().zip(grad.values()).zip(self.m.iter_mut().zip(&mut self.v));
        for ((p, &g), (m, v)) in zipped {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * (m_hat / (v_hat.sqrt() + ADAM_EPS) + weight_decay * *p);
        }
    }
}

/// Early stopping on a quantity to maximize; strict improvement resets
/// the patience window.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::NEG_INFINITY, best_epoch: 0 }
    }

    /// Returns true when `value` strictly improves on the best so far.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value > self.best {
            self.best = value;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// One BPR comparison: `pos` should outrank `neg` for `user`.
#[derive(Debug, Clone, Copy)]
pub struct Triple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Hold out `ceil(rho * |interactions|)` interaction edges as
/// reconstruction targets, uniformly without replacement; the remaining
/// graph (social edges always included) is the propagation input.
pub fn sample_reconstruction_split<R: Rng>(
    train: &GraphSnapshot,
    rho: f64,
    rng: &mut R,
) -> (GraphSnapshot, Vec<(usize, usize)>) {
    let pairs = train.ui_pairs();
    let n_targets = ((pairs.len() as f64) * rho).ceil() as usize;
    let n_targets = n_targets.min(pairs.len());
    let chosen = rand::seq::index::sample(rng, pairs.len(), n_targets);
    let targets: Vec<(usize, usize)> = chosen.iter().map(|i| pairs[i]).collect();
    let remove: HashSet<(usize, usize)> = targets.iter().copied().collect();
    (train.without_ui_pairs(&remove), targets)
}

/// Uniform negative from `0..num_items` avoiding the sorted exclusion
/// list; gives up after 100 rejections (degenerate dense rows).
pub fn sample_negative<R: Rng>(
    rng: &mut R,
    num_items: usize,
    exclude: &[usize],
) -> Option<usize> {
    if exclude.len() >= num_items {
        return None;
    }
    for _ in 0..100 {
        let w = rng.gen_range(0..num_items);
        if exclude.binary_search(&w).is_err() {
            return Some(w);
        }
    }
    None
}

/// Expand target edges into shuffled BPR triples. Negatives are drawn
/// per positive, uniformly over the training graph's item range, and
/// must not be training-graph neighbors of the user.
pub fn make_triples<R: Rng>(
    targets: &[(usize, usize)],
    train: &GraphSnapshot,
    negatives_per_positive: usize,
    rng: &mut R,
) -> Vec<Triple> {
    let num_items = train.num_items();
    let mut triples = Vec::with_capacity(targets.len() * negatives_per_positive);
    for &(user, pos) in targets {
        let exclude = train.items_of(user);
        for _ in 0..negatives_per_positive {
            if let Some(neg) = sample_negative(rng, num_items, exclude) {
                triples.push(Triple { user, pos, neg });
            }
        }
    }
    triples.shuffle(rng);
    triples
}

/// Sum of `-ln sigmoid(score(u, pos) - score(u, neg))` over triples,
/// with scores as dot products of the given tables.
pub fn bpr_loss(
    user_table: &EmbeddingTable,
    item_table: &EmbeddingTable,
    triples: &[Triple],
) -> f64 {
    triples
        .iter()
        .map(|t| {
            let zu = user_table.row(t.user);
            let d = dot(zu, item_table.row(t.pos)) - dot(zu, item_table.row(t.neg));
            softplus(-d)
        })
        .sum()
}

/// Mean recall@n over users with held-out items, scoring by dot product
/// and excluding each user's training interactions. Used for the per-
/// epoch early-stopping signal; returns 0 when `relevant` is empty.
pub fn validation_recall(
    user_table: &EmbeddingTable,
    item_table: &EmbeddingTable,
    exclusion: &GraphSnapshot,
    relevant: &BTreeMap<usize, Vec<usize>>,
    n: usize,
) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let entries: Vec<(&usize, &Vec<usize>)> = relevant.iter().collect();
    let recalls: Vec<f64> = entries
        .par_iter()
        .map(|(&user, rel)| {
            let scores: Vec<f64> = (0..item_table.rows())
                .map(|w| dot(user_table.row(user), item_table.row(w)))
                .collect();
            let ranked = rank_items(user, &scores, exclusion.items_of(user));
            recall_at_n(&ranked.items, rel, n)
        })
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

/// Per-epoch training trace entry.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean BPR term over the epoch's triples.
    pub loss: f64,
    pub validation_recall: f64,
    /// Best validation recall seen up to and including this epoch.
    pub best_validation_recall: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeKind;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stable_bpr_terms() {
        assert_relative_eq!(sigmoid(0.5), 0.6224593312018546, epsilon = 1e-15);
        assert_relative_eq!(softplus(-10.0), 4.539889921686465e-5, epsilon = 1e-15);
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        // No overflow far out in either tail.
        assert!(softplus(-800.0) == 0.0);
        assert_relative_eq!(softplus(800.0), 800.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        // f(x) = sum (x - c)^2 on a 1x3 table.
        let target = [1.0, -2.0, 0.5];
        let mut x = EmbeddingTable::zeros(1, 3);
        let mut adam = AdamState::for_table(&x);
        for step in 1..=2000 {
            let grad = EmbeddingTable::from_values(
                1,
                3,
                x.values().iter().zip(&target).map(|(xi, c)| 2.0 * (xi - c)).collect(),
            );
            adam.apply(&mut x, &grad, step, 0.01, 0.0);
        }
        for (xi, c) in x.values().iter().zip(&target) {
            assert_relative_eq!(*xi, *c, epsilon = 1e-4);
        }
    }

    #[test]
    fn decoupled_weight_decay_shrinks_params_without_touching_moments() {
        let mut a = EmbeddingTable::from_values(1, 1, vec![1.0]);
        let mut b = a.clone();
        let zero_grad = EmbeddingTable::zeros(1, 1);
        AdamState::for_table(&a).apply(&mut a, &zero_grad, 1, 0.1, 0.0);
        AdamState::for_table(&b).apply(&mut b, &zero_grad, 1, 0.1, 0.5);
        assert_eq!(a.values()[0], 1.0);
        assert_relative_eq!(b.values()[0], 1.0 - 0.1 * 0.5);
    }

    #[test]
    fn early_stopping_flat_curve_stops_after_patience() {
        let mut stop = EarlyStopping::new(50);
        let mut stopped_at = 0;
        for epoch in 1..=200 {
            let improved = stop.observe(epoch, 0.3); // flat from epoch 1
            assert_eq!(improved, epoch == 1);
            if stop.should_stop(epoch) {
                stopped_at = epoch;
                break;
            }
        }
        assert_eq!(stopped_at, 51);
        assert_eq!(stop.best_epoch(), 1);
    }

    fn toy_graph() -> GraphSnapshot {
        GraphSnapshot::from_pair_lists(
            3,
            4,
            &[(0, 0), (0, 1), (1, 1), (1, 2), (2, 3)],
            &[(0, 1)],
            0,
            NodeKind::Item,
        )
    }

    #[test]
    fn reconstruction_split_removes_exactly_the_targets() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (input, targets) = sample_reconstruction_split(&g, 0.4, &mut rng);
        assert_eq!(targets.len(), 2); // ceil(0.4 * 5)
        assert_eq!(input.num_ui_edges(), 3);
        assert_eq!(input.num_uu_edges(), 1); // social edges always stay
        for &(u, w) in &targets {
            assert!(g.contains_ui(u, w));
            assert!(!input.contains_ui(u, w));
        }
        // Node allocation unchanged.
        assert_eq!(input.num_items(), g.num_items());
    }

    #[test]
    fn negatives_avoid_training_neighbors() {
        let g = toy_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let targets = vec![(0, 0), (0, 1), (1, 1)];
        let triples = make_triples(&targets, &g, 2, &mut rng);
        assert_eq!(triples.len(), 6);
        for t in &triples {
            assert!(!g.contains_ui(t.user, t.neg), "negative {t:?} is a training edge");
            assert!(t.neg < g.num_items());
        }
    }

    #[test]
    fn negatives_unavailable_when_user_saw_everything() {
        let g = GraphSnapshot::from_pair_lists(1, 2, &[(0, 0), (0, 1)], &[], 0, NodeKind::Item);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_negative(&mut rng, g.num_items(), g.items_of(0)).is_none());
        assert!(make_triples(&[(0, 0)], &g, 1, &mut rng).is_empty());
    }

    #[test]
    fn validation_recall_hand_case() {
        // Two items; user 0 prefers item 1 by construction; item 0 is a
        // training interaction so it is excluded from candidates.
        let users = EmbeddingTable::from_values(1, 2, vec![1.0, 0.0]);
        let items = EmbeddingTable::from_values(2, 2, vec![1.0, 0.0, 0.5, 0.0]);
        let g = GraphSnapshot::from_pair_lists(1, 2, &[(0, 0)], &[], 0, NodeKind::Item);
        let mut rel = BTreeMap::new();
        rel.insert(0, vec![1]);
        assert_eq!(validation_recall(&users, &items, &g, &rel, 1), 1.0);
    }
}
