//! Sparse message-passing kernels.
//!
//! All kernels are linear maps over node embeddings with a shared layout:
//! the node stack puts users at rows `0..num_users` and item `w` at row
//! `num_users + w`. Layers use an identity transform (aggregation only,
//! no learned weights, no self loops). Zero-degree nodes emit the zero
//! vector at every stage, which keeps every map linear and total.
//!
//! Each forward kernel has a transposed twin so reverse-mode gradients
//! can reuse the same sparse structure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::graph::{GraphSnapshot, NodeKind};

/// How a node with explicit-side neighbors `{z_1..z_n}` gets its initial
/// embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionKind {
    Mean,
    Sum,
}

/// Adjacency normalization for the propagation layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    /// `D^-1 A`: each node averages its neighbors.
    RowMean,
    /// `D^-1/2 A D^-1/2`.
    SymmetricSqrt,
}

/// Total undirected degree per stack row (users count both interaction
/// and social neighbors).
pub fn node_degrees(graph: &GraphSnapshot) -> Vec<usize> {
    let nu = graph.num_users();
    let mut deg = Vec::with_capacity(graph.num_nodes());
    for u in 0..nu {
        deg.push(graph.user_degree(u));
    }
    for w in 0..graph.num_items() {
        deg.push(graph.item_degree(w));
    }
    deg
}

fn accumulate(row: &mut [f64], src: &[f64], weight: f64) {
    for (r, s) in row.iter_mut().zip(src) {
        *r += weight * s;
    }
}

/// Initial item embeddings composed from explicit user embeddings:
/// mean or sum of `z_u` over the item's user neighbors.
pub fn compose_items_from_users(
    user_emb: &EmbeddingTable,
    graph: &GraphSnapshot,
    kind: CompositionKind,
) -> EmbeddingTable {
    assert_eq!(user_emb.rows(), graph.num_users(), "user table does not match graph");
    let dim = user_emb.dim();
    let mut out = EmbeddingTable::zeros(graph.num_items(), dim);
    out.values_mut().par_chunks_mut(dim).enumerate().for_each(|(w, row)| {
        let users = graph.users_of(w);
        if users.is_empty() {
            return;
        }
        for &u in users {
            accumulate(row, user_emb.row(u), 1.0);
        }
        if kind == CompositionKind::Mean {
            let inv = 1.0 / users.len() as f64;
            row.iter_mut().for_each(|v| *v *= inv);
        }
    });
    out
}

/// Transpose of [`compose_items_from_users`]: routes item cotangents back
/// to the user embeddings they were composed from.
pub fn compose_items_transpose(
    d_items: &EmbeddingTable,
    graph: &GraphSnapshot,
    kind: CompositionKind,
) -> EmbeddingTable {
    assert_eq!(d_items.rows(), graph.num_items());
    let dim = d_items.dim();
    let mut out = EmbeddingTable::zeros(graph.num_users(), dim);
    out.values_mut().par_chunks_mut(dim).enumerate().for_each(|(u, row)| {
        for &w in graph.items_of(u) {
            let coef = match kind {
                CompositionKind::Mean => 1.0 / graph.users_of(w).len() as f64,
                CompositionKind::Sum => 1.0,
            };
            accumulate(row, d_items.row(w), coef);
        }
    });
    out
}

/// Flipped-direction twin of [`compose_items_from_users`]: users are the
/// composed side and draw only on their item neighbors (social ties do
/// not feed the initial composition).
pub fn compose_users_from_items(
    item_emb: &EmbeddingTable,
    graph: &GraphSnapshot,
    kind: CompositionKind,
) -> EmbeddingTable {
    assert_eq!(item_emb.rows(), graph.num_items());
    let dim = item_emb.dim();
    let mut out = EmbeddingTable::zeros(graph.num_users(), dim);
    out.values_mut().par_chunks_mut(dim).enumerate().for_each(|(u, row)| {
        let items = graph.items_of(u);
        if items.is_empty() {
            return;
        }
        for &w in items {
            accumulate(row, item_emb.row(w), 1.0);
        }
        if kind == CompositionKind::Mean {
            let inv = 1.0 / items.len() as f64;
            row.iter_mut().for_each(|v| *v *= inv);
        }
    });
    out
}

pub fn compose_users_transpose(
    d_users: &EmbeddingTable,
    graph: &GraphSnapshot,
    kind: CompositionKind,
) -> EmbeddingTable {
    assert_eq!(d_users.rows(), graph.num_users());
    let dim = d_users.dim();
    let mut out = EmbeddingTable::zeros(graph.num_items(), dim);
    out.values_mut().par_chunks_mut(dim).enumerate().for_each(|(w, row)| {
        for &u in graph.users_of(w) {
            let coef = match kind {
                CompositionKind::Mean => 1.0 / graph.items_of(u).len() as f64,
                CompositionKind::Sum => 1.0,
            };
            accumulate(row, d_users.row(u), coef);
        }
    });
    out
}

/// One aggregation step `A x` over the whole node stack (or `A^T x` with
/// `transpose`; the symmetric normalization is self-adjoint). Users
/// aggregate their item and social neighbors, items their users.
pub fn propagate_once(
    input: &EmbeddingTable,
    graph: &GraphSnapshot,
    norm: NormalizationKind,
    transpose: bool,
) -> EmbeddingTable {
    let nu = graph.num_users();
    let n = graph.num_nodes();
    assert_eq!(input.rows(), n, "stack table does not match graph");
    let dim = input.dim();
    let deg = node_degrees(graph);
    let mut out = EmbeddingTable::zeros(n, dim);
    out.values_mut().par_chunks_mut(dim).enumerate().for_each(|(v, row)| {
        if deg[v] == 0 {
            return;
        }
        let neighbor_weight = |nb: usize| -> f64 {
            match norm {
                NormalizationKind::RowMean => {
                    if transpose {
                        1.0 / deg[nb] as f64
                    } else {
                        1.0
                    }
                }
                NormalizationKind::SymmetricSqrt => 1.0 / (deg[nb] as f64).sqrt(),
            }
        };
        if v < nu {
            for &w in graph.items_of(v) {
                accumulate(row, input.row(nu + w), neighbor_weight(nu + w));
            }
            for &s in graph.social_of(v) {
                accumulate(row, input.row(s), neighbor_weight(s));
            }
        } else {
            for &u in graph.users_of(v - nu) {
                accumulate(row, input.row(u), neighbor_weight(u));
            }
        }
        let self_scale = match norm {
            NormalizationKind::RowMean => {
                if transpose {
                    1.0
                } else {
                    1.0 / deg[v] as f64
                }
            }
            NormalizationKind::SymmetricSqrt => 1.0 / (deg[v] as f64).sqrt(),
        };
        if self_scale != 1.0 {
            row.iter_mut().for_each(|x| *x *= self_scale);
        }
    });
    out
}

/// Embeddings of the whole node stack at layers `0..=num_layers`.
#[derive(Debug, Clone)]
pub struct LayerStack {
    layers: Vec<EmbeddingTable>,
    num_users: usize,
    num_items: usize,
}

impl LayerStack {
    pub fn num_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn layer(&self, l: usize) -> &EmbeddingTable {
        &self.layers[l]
    }

    /// Unweighted average over layers `0..=L` of the rows of one node
    /// kind.
    pub fn average(&self, kind: NodeKind) -> EmbeddingTable {
        let (offset, rows) = match kind {
            NodeKind::User => (0, self.num_users),
            NodeKind::Item => (self.num_users, self.num_items),
        };
        let dim = self.layers[0].dim();
        let inv = 1.0 / self.layers.len() as f64;
        let mut out = EmbeddingTable::zeros(rows, dim);
        for layer in &self.layers {
            for r in 0..rows {
                accumulate(out.row_mut(r), layer.row(offset + r), 1.0);
            }
        }
        out.values_mut().iter_mut().for_each(|v| *v *= inv);
        out
    }
}

/// Run `num_layers` aggregation steps from explicit layer-0 tables.
/// `num_layers == 0` yields a stack holding only the input layer.
pub fn propagate_layers(
    user_layer0: &EmbeddingTable,
    item_layer0: &EmbeddingTable,
    graph: &GraphSnapshot,
    num_layers: usize,
    norm: NormalizationKind,
) -> LayerStack {
    assert_eq!(user_layer0.rows(), graph.num_users());
    assert_eq!(item_layer0.rows(), graph.num_items());
    assert_eq!(user_layer0.dim(), item_layer0.dim());
    let mut layers = Vec::with_capacity(num_layers + 1);
    layers.push(user_layer0.vstack(item_layer0));
    for l in 0..num_layers {
        let next = propagate_once(&layers[l], graph, norm, false);
        layers.push(next);
    }
    LayerStack { layers, num_users: graph.num_users(), num_items: graph.num_items() }
}

/// Compose item embeddings end to end from explicit user embeddings:
/// neighbor composition, `num_layers` aggregation steps, then the layer
/// average of the item rows. This is the map a streaming update re-runs
/// on a merged snapshot.
pub fn full_compose(
    user_params: &EmbeddingTable,
    graph: &GraphSnapshot,
    composition: CompositionKind,
    num_layers: usize,
    norm: NormalizationKind,
) -> EmbeddingTable {
    full_compose_stack(user_params, graph, composition, num_layers, norm).average(NodeKind::Item)
}

/// Same as [`full_compose`] but returns the whole stack, for variants
/// that also read the propagated user rows.
pub fn full_compose_stack(
    user_params: &EmbeddingTable,
    graph: &GraphSnapshot,
    composition: CompositionKind,
    num_layers: usize,
    norm: NormalizationKind,
) -> LayerStack {
    let item0 = compose_items_from_users(user_params, graph, composition);
    propagate_layers(user_params, &item0, graph, num_layers, norm)
}

/// Flipped direction: explicit item embeddings, composed users.
pub fn full_compose_flipped_stack(
    item_params: &EmbeddingTable,
    graph: &GraphSnapshot,
    composition: CompositionKind,
    num_layers: usize,
    norm: NormalizationKind,
) -> LayerStack {
    let user0 = compose_users_from_items(item_params, graph, composition);
    propagate_layers(&user0, item_params, graph, num_layers, norm)
}
