//! Top-k ranking assembly and ranking quality metrics.

use serde::{Deserialize, Serialize};

/// A user's ranking over candidate items: scores non-increasing, ties
/// broken by ascending item index, excluded items absent.
#[derive(Debug, Clone)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Rank all items with a score, dropping `exclude` (sorted slice, e.g. a
/// snapshot adjacency row). Ordering is score descending, then item index
/// ascending.
pub fn rank_items(user: usize, scores: &[f64], exclude: &[usize]) -> RankedList {
    debug_assert!(exclude.windows(2).all(|w| w[0] < w[1]), "exclusion list must be sorted");
    let mut pairs: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(w, _)| exclude.binary_search(w).is_err())
        // +0.0 folds -0.0 into +0.0 so equal scores tie-break purely by index
        .map(|(w, s)| (w, s + 0.0))
        .collect();
    pairs.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    RankedList {
        user,
        items: pairs.iter().map(|p| p.0).collect(),
        scores: pairs.iter().map(|p| p.1).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Precision,
    Recall,
    Ndcg,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricKind::Precision => write!(f, "precision"),
            MetricKind::Recall => write!(f, "recall"),
            MetricKind::Ndcg => write!(f, "ndcg"),
        }
    }
}

/// Metric at a cutoff, e.g. recall@20.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MetricKey {
    pub metric: MetricKind,
    pub cutoff: usize,
}

impl std::fmt::Display for MetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}@{}", self.metric, self.cutoff)
    }
}

fn hits_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> usize {
    debug_assert!(relevant.windows(2).all(|w| w[0] < w[1]), "relevant list must be sorted");
    ranked.iter().take(n).filter(|w| relevant.binary_search(w).is_ok()).count()
}

/// |top-n intersect relevant| / |relevant|. `relevant` sorted, non-empty.
pub fn recall_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    hits_at_n(ranked, relevant, n) as f64 / relevant.len() as f64
}

/// |top-n intersect relevant| / n.
pub fn precision_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    hits_at_n(ranked, relevant, n) as f64 / n as f64
}

/// Binary-gain nDCG: DCG uses 1/log2(rank+1) with ranks starting at 1,
/// ideal DCG fills the first min(n, |relevant|) positions.
pub fn ndcg_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    if relevant.is_empty() || n == 0 {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (i, w) in ranked.iter().take(n).enumerate() {
        if relevant.binary_search(w).is_ok() {
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let ideal = n.min(relevant.len());
    let idcg: f64 = (0..ideal).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    dcg / idcg
}

pub fn metric_at_n(kind: MetricKind, ranked: &[usize], relevant: &[usize], n: usize) -> f64 {
    match kind {
        MetricKind::Precision => precision_at_n(ranked, relevant, n),
        MetricKind::Recall => recall_at_n(ranked, relevant, n),
        MetricKind::Ndcg => ndcg_at_n(ranked, relevant, n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ranking_sorts_and_breaks_ties_by_index() {
        let ranked = rank_items(0, &[0.5, 2.0, 0.5, -1.0, 2.0], &[]);
        assert_eq!(ranked.items, vec![1, 4, 0, 2, 3]);
        assert!(ranked.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn ranking_drops_excluded_items() {
        let ranked = rank_items(3, &[1.0, 5.0, 3.0, 4.0], &[1, 3]);
        assert_eq!(ranked.items, vec![2, 0]);
        assert_eq!(ranked.user, 3);
    }

    #[test]
    fn negative_zero_scores_tie_with_positive_zero() {
        let ranked = rank_items(0, &[-0.0, 1.0, 0.0], &[]);
        assert_eq!(ranked.items, vec![1, 0, 2]);
    }

    #[test]
    fn single_relevant_at_top() {
        let ranked = vec![7, 3, 9];
        assert_eq!(recall_at_n(&ranked, &[7], 1), 1.0);
        assert_eq!(precision_at_n(&ranked, &[7], 1), 1.0);
        assert_eq!(ndcg_at_n(&ranked, &[7], 1), 1.0);
    }

    #[test]
    fn hand_computed_ndcg() {
        // relevant {1, 5}, ranking [1, 8, 5]:
        // DCG = 1/log2(2) + 1/log2(4); IDCG = 1/log2(2) + 1/log2(3).
        let v = ndcg_at_n(&[1, 8, 5], &[1, 5], 3);
        assert_relative_eq!(v, 0.9197207891481876, epsilon = 1e-15);
    }

    #[test]
    fn recall_counts_fraction_of_relevant() {
        let ranked = vec![4, 2, 9, 1];
        let relevant = vec![1, 2, 3];
        assert_relative_eq!(recall_at_n(&ranked, &relevant, 2), 1.0 / 3.0);
        assert_relative_eq!(precision_at_n(&ranked, &relevant, 2), 0.5);
        // Cutoff beyond list length is fine.
        assert_relative_eq!(recall_at_n(&ranked, &relevant, 10), 2.0 / 3.0);
    }

    #[test]
    fn no_hits_means_zero_everywhere() {
        let ranked = vec![4, 5, 6];
        let relevant = vec![1, 2];
        assert_eq!(recall_at_n(&ranked, &relevant, 3), 0.0);
        assert_eq!(precision_at_n(&ranked, &relevant, 3), 0.0);
        assert_eq!(ndcg_at_n(&ranked, &relevant, 3), 0.0);
    }
}
