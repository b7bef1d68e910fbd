//! Most-popular-first: every user gets the same ranking, items by
//! interaction count in the current snapshot. Per-user exclusion of known
//! items is the only personalization.

use crate::error::Result;
use crate::graph::GraphSnapshot;
use crate::replay::ReplayModel;

#[derive(Debug, Clone)]
pub struct PopularityModel {
    counts: Vec<usize>,
}

impl PopularityModel {
    pub fn fit(graph: &GraphSnapshot) -> PopularityModel {
        PopularityModel { counts: Self::count(graph) }
    }

    fn count(graph: &GraphSnapshot) -> Vec<usize> {
        (0..graph.num_items()).map(|w| graph.item_degree(w)).collect()
    }

    pub fn from_counts(counts: Vec<usize>) -> PopularityModel {
        PopularityModel { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

impl ReplayModel for PopularityModel {
    fn kind(&self) -> &'static str {
        "pop"
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        self.counts = Self::count(graph);
        Ok(())
    }

    fn scores(&self, _user: usize) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    fn scoreable_items(&self) -> usize {
        self.counts.len()
    }
}
