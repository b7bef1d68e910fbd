//! The compositional embedding recommender.
//!
//! One node kind (users by default) carries explicit trainable
//! embeddings. The other kind is composed: its layer-0 embedding is an
//! aggregate of its explicit-side neighbors, refined by `layers`
//! aggregation steps and a layer average. Composed nodes own no
//! parameters, so a node that appears after fitting is scoreable as soon
//! as it has edges, by recomposing on the grown snapshot.
//!
//! The explicit kind keeps two tables: one feeds composition and
//! propagation, the other is read directly at scoring time. The
//! `single_embedding` ablation drops the scoring table and scores both
//! sides from their propagated layer averages.
//!
//! Fitting minimizes a pairwise ranking loss (`softplus(-d)` per triple,
//! summed) over per-epoch reconstruction splits; gradients are
//! backpropagated by hand through the layer average, the aggregation
//! steps, and the neighbor composition, all of which are linear.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{CoreError, Result};
use crate::graph::{GraphSnapshot, NodeKind};
use crate::propagation::{
    compose_items_transpose, compose_users_transpose, full_compose_flipped_stack,
    full_compose_stack, propagate_once, CompositionKind, LayerStack, NormalizationKind,
};
use crate::replay::ReplayModel;
use crate::train::{
    make_triples, sample_reconstruction_split, sigmoid, softplus, validation_recall, AdamState,
    EarlyStopping, EpochStats, Triple,
};

/// Which node kind is composed (and therefore inductive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionDirection {
    /// Explicit user embeddings; items composed from them.
    ItemsFromUsers,
    /// Explicit item embeddings; users composed from them.
    UsersFromItems,
}

impl CompositionDirection {
    pub fn explicit_kind(self) -> NodeKind {
        match self {
            CompositionDirection::ItemsFromUsers => NodeKind::User,
            CompositionDirection::UsersFromItems => NodeKind::Item,
        }
    }

    pub fn explicit_rows(self, graph: &GraphSnapshot) -> usize {
        match self.explicit_kind() {
            NodeKind::User => graph.num_users(),
            NodeKind::Item => graph.num_items(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LceConfig {
    pub dim: usize,
    /// Aggregation steps after composition; 0 scores layer 0 directly.
    pub layers: usize,
    pub composition: CompositionKind,
    pub normalization: NormalizationKind,
    pub direction: CompositionDirection,
    /// Drop the scoring table and score from propagated averages.
    pub single_embedding: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    /// Fraction of training interactions held out per epoch as ranking
    /// targets; the rest form that epoch's propagation graph.
    pub reconstruction_fraction: f64,
    pub max_epochs: usize,
    /// Epochs without strict validation improvement before stopping.
    pub patience: usize,
    /// Cutoff for the per-epoch validation recall.
    pub validation_cutoff: usize,
    pub seed: u64,
}

impl Default for LceConfig {
    fn default() -> Self {
        LceConfig {
            dim: 64,
            layers: 3,
            composition: CompositionKind::Mean,
            normalization: NormalizationKind::RowMean,
            direction: CompositionDirection::ItemsFromUsers,
            single_embedding: false,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            batch_size: 5000,
            negatives_per_positive: 1,
            reconstruction_fraction: 0.1,
            max_epochs: 800,
            patience: 50,
            validation_cutoff: 20,
            seed: 0,
        }
    }
}

impl LceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CoreError::Config(msg.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.negatives_per_positive == 0 {
            return bad("need at least one negative per positive");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight decay cannot be negative");
        }
        if !(self.reconstruction_fraction > 0.0 && self.reconstruction_fraction <= 1.0) {
            return bad("reconstruction fraction must lie in (0, 1]");
        }
        if self.max_epochs == 0 {
            return bad("need at least one epoch");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        if self.validation_cutoff == 0 {
            return bad("validation cutoff must be positive");
        }
        Ok(())
    }
}

/// Trainable state: explicit-side tables only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LceParams {
    /// Feeds composition and propagation.
    pub agg: EmbeddingTable,
    /// Read directly at scoring time; `None` in single-embedding mode.
    pub score: Option<EmbeddingTable>,
}

impl LceParams {
    /// Seeded init; the aggregation table is drawn before the scoring
    /// table from the same stream.
    pub fn init(cfg: &LceConfig, explicit_rows: usize) -> LceParams {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agg = EmbeddingTable::xavier_uniform(explicit_rows, cfg.dim, &mut rng);
        let score = (!cfg.single_embedding)
            .then(|| EmbeddingTable::xavier_uniform(explicit_rows, cfg.dim, &mut rng));
        LceParams { agg, score }
    }

    pub fn explicit_rows(&self) -> usize {
        self.agg.rows()
    }

    pub fn num_parameters(&self) -> usize {
        self.agg.values().len() + self.score.as_ref().map_or(0, |t| t.values().len())
    }
}

/// Trainable parameter count for a given graph shape, without
/// materializing tables.
pub fn lce_param_count(cfg: &LceConfig, num_users: usize, num_items: usize) -> usize {
    let rows = match cfg.direction.explicit_kind() {
        NodeKind::User => num_users,
        NodeKind::Item => num_items,
    };
    rows * cfg.dim * if cfg.single_embedding { 1 } else { 2 }
}

/// Embedding width for the opposite composition direction that matches
/// (or, with `double_budget`, doubles) the parameter budget of a
/// `base_dim`-wide model, assuming two tables on the explicit side.
pub fn flip_direction_dim(
    num_users: usize,
    num_items: usize,
    base_dim: usize,
    double_budget: bool,
) -> usize {
    let d = num_users as f64 / num_items as f64 * base_dim as f64;
    let d = if double_budget { 2.0 * d } else { d };
    (d.round() as usize).max(1)
}

/// Final scoring-side embeddings for every node in one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedEmbeddings {
    pub users: EmbeddingTable,
    pub items: EmbeddingTable,
}

impl ComposedEmbeddings {
    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.users.row(user), self.items.row(item))
    }

    /// Scores for every item in index order. The ranking objective maps
    /// the dot product through a sigmoid, which is monotone, so ranking
    /// works on the raw dot products.
    pub fn scores_for(&self, user: usize) -> Vec<f64> {
        (0..self.items.rows()).map(|w| self.score(user, w)).collect()
    }
}

fn compose_stack(
    params: &LceParams,
    cfg: &LceConfig,
    graph: &GraphSnapshot,
) -> Result<LayerStack> {
    let need = cfg.direction.explicit_rows(graph);
    if params.agg.rows() != need {
        return Err(CoreError::Shape(format!(
            "aggregation table has {} rows but the snapshot has {} explicit ({:?}) nodes",
            params.agg.rows(),
            need,
            cfg.direction.explicit_kind(),
        )));
    }
    Ok(match cfg.direction {
        CompositionDirection::ItemsFromUsers => {
            full_compose_stack(&params.agg, graph, cfg.composition, cfg.layers, cfg.normalization)
        }
        CompositionDirection::UsersFromItems => full_compose_flipped_stack(
            &params.agg,
            graph,
            cfg.composition,
            cfg.layers,
            cfg.normalization,
        ),
    })
}

/// Compose scoring embeddings for every node of `graph`. The composed
/// side may have grown since fitting; the explicit side must match the
/// parameter tables.
pub fn compose_for_scoring(
    params: &LceParams,
    cfg: &LceConfig,
    graph: &GraphSnapshot,
) -> Result<ComposedEmbeddings> {
    let stack = compose_stack(params, cfg, graph)?;
    let (users, items) = match (&params.score, cfg.direction) {
        (Some(score), CompositionDirection::ItemsFromUsers) => {
            (score.clone(), stack.average(NodeKind::Item))
        }
        (Some(score), CompositionDirection::UsersFromItems) => {
            (stack.average(NodeKind::User), score.clone())
        }
        (None, _) => (stack.average(NodeKind::User), stack.average(NodeKind::Item)),
    };
    Ok(ComposedEmbeddings { users, items })
}

#[derive(Debug, Clone)]
pub struct LceGrads {
    pub agg: EmbeddingTable,
    pub score: Option<EmbeddingTable>,
}

fn add_into(dst: &mut EmbeddingTable, src: &EmbeddingTable) {
    debug_assert_eq!(dst.values().len(), src.values().len());
    for (d, s) in dst.values_mut().iter_mut().zip(src.values()) {
        *d += s;
    }
}

fn rows_slice(t: &EmbeddingTable, start: usize, rows: usize) -> EmbeddingTable {
    let dim = t.dim();
    EmbeddingTable::from_values(rows, dim, t.values()[start * dim..(start + rows) * dim].to_vec())
}

/// Sum of `softplus(-d)` over triples, `d = z_u . (z_pos - z_neg)`, and
/// its gradient with respect to the explicit tables.
///
/// Backward pass: scoring cotangents land on the layer average, so each
/// layer `l` receives a `1/(layers+1)` share, pulled back by `l`
/// applications of the transposed aggregation; the layer-0 cotangent then
/// splits into a direct part (the explicit rows) and a part routed
/// through the transposed composition.
pub fn bpr_loss_and_grads(
    params: &LceParams,
    cfg: &LceConfig,
    graph: &GraphSnapshot,
    triples: &[Triple],
) -> Result<(f64, LceGrads)> {
    let stack = compose_stack(params, cfg, graph)?;
    let nu = graph.num_users();
    let ni = graph.num_items();
    let dim = cfg.dim;

    // Scoring tables: propagated averages unless an explicit scoring
    // table covers that side.
    let users_avg = match (&params.score, cfg.direction) {
        (Some(_), CompositionDirection::ItemsFromUsers) => None,
        _ => Some(stack.average(NodeKind::User)),
    };
    let items_avg = match (&params.score, cfg.direction) {
        (Some(_), CompositionDirection::UsersFromItems) => None,
        _ => Some(stack.average(NodeKind::Item)),
    };
    let user_row = |u: usize| -> &[f64] {
        match &users_avg {
            Some(t) => t.row(u),
            None => params.score.as_ref().expect("explicit user scoring table").row(u),
        }
    };
    let item_row = |w: usize| -> &[f64] {
        match &items_avg {
            Some(t) => t.row(w),
            None => params.score.as_ref().expect("explicit item scoring table").row(w),
        }
    };

    // Cotangents of the two scoring tables.
    let mut cu = EmbeddingTable::zeros(nu, dim);
    let mut cw = EmbeddingTable::zeros(ni, dim);
    let mut loss = 0.0;
    for t in triples {
        let zu = user_row(t.user);
        let zp = item_row(t.pos);
        let zn = item_row(t.neg);
        let d = dot(zu, zp) - dot(zu, zn);
        loss += softplus(-d);
        let g = sigmoid(d) - 1.0; // d softplus(-d) / dd
        let row = cu.row_mut(t.user);
        for i in 0..dim {
            row[i] += g * (zp[i] - zn[i]);
        }
        let row = cw.row_mut(t.pos);
        for i in 0..dim {
            row[i] += g * zu[i];
        }
        let row = cw.row_mut(t.neg);
        for i in 0..dim {
            row[i] -= g * zu[i];
        }
    }

    // Layer-average shares that flow back through the stack. A side with
    // an explicit scoring table contributes nothing here: its cotangent
    // goes straight to that table.
    let inv = 1.0 / (cfg.layers + 1) as f64;
    let mut direct = EmbeddingTable::zeros(nu + ni, dim);
    if users_avg.is_some() {
        for u in 0..nu {
            let (src, row) = (cu.row(u), direct.row_mut(u));
            for i in 0..dim {
                row[i] = inv * src[i];
            }
        }
    }
    if items_avg.is_some() {
        for w in 0..ni {
            let (src, row) = (cw.row(w), direct.row_mut(nu + w));
            for i in 0..dim {
                row[i] = inv * src[i];
            }
        }
    }

    // Cotangent of the layer-0 stack: sum over l of (A^T)^l direct,
    // evaluated Horner-style.
    let mut g0 = EmbeddingTable::zeros(nu + ni, dim);
    for l in (0..=cfg.layers).rev() {
        add_into(&mut g0, &direct);
        if l > 0 {
            g0 = propagate_once(&g0, graph, cfg.normalization, true);
        }
    }
    let g_users = rows_slice(&g0, 0, nu);
    let g_items = rows_slice(&g0, nu, ni);

    // Layer 0 is [explicit table; composed table]: the explicit rows pass
    // through, the composed rows pull back through the composition.
    let agg = match cfg.direction {
        CompositionDirection::ItemsFromUsers => {
            let mut g = compose_items_transpose(&g_items, graph, cfg.composition);
            add_into(&mut g, &g_users);
            g
        }
        CompositionDirection::UsersFromItems => {
            let mut g = compose_users_transpose(&g_users, graph, cfg.composition);
            add_into(&mut g, &g_items);
            g
        }
    };
    let score = params.score.as_ref().map(|_| match cfg.direction {
        CompositionDirection::ItemsFromUsers => cu,
        CompositionDirection::UsersFromItems => cw,
    });
    Ok((loss, LceGrads { agg, score }))
}

/// Fit on `train`, early-stopping on recall over `validation` (held-out
/// items per user, ranked against the train-graph composition with
/// train interactions excluded). Returns the best-validation parameters
/// and the per-epoch trace. An empty validation map disables selection:
/// the run keeps the final epoch's parameters.
pub fn fit_lce(
    cfg: &LceConfig,
    train: &GraphSnapshot,
    validation: &BTreeMap<usize, Vec<usize>>,
) -> Result<(LceParams, Vec<EpochStats>)> {
    cfg.validate()?;
    let mut params = LceParams::init(cfg, cfg.direction.explicit_rows(train));
    let mut adam_agg = AdamState::for_table(&params.agg);
    let mut adam_score = params.score.as_ref().map(AdamState::for_table);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut early = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut trace = Vec::new();
    let mut step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let (input, targets) =
            sample_reconstruction_split(train, cfg.reconstruction_fraction, &mut rng);
        let triples = make_triples(&targets, train, cfg.negatives_per_positive, &mut rng);
        let mut loss_sum = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let (loss, grads) = bpr_loss_and_grads(&params, cfg, &input, batch)?;
            loss_sum += loss;
            step += 1; // shared step count for both tables
            adam_agg.apply(&mut params.agg, &grads.agg, step, cfg.learning_rate, cfg.weight_decay);
            if let (Some(score), Some(grad), Some(adam)) =
                (params.score.as_mut(), grads.score.as_ref(), adam_score.as_mut())
            {
                adam.apply(score, grad, step, cfg.learning_rate, cfg.weight_decay);
            }
        }

        let composed = compose_for_scoring(&params, cfg, train)?;
        let recall = validation_recall(
            &composed.users,
            &composed.items,
            train,
            validation,
            cfg.validation_cutoff,
        );
        if early.observe(epoch, recall) || validation.is_empty() {
            best = params.clone();
        }
        trace.push(EpochStats {
            epoch,
            loss: if triples.is_empty() { 0.0 } else { loss_sum / triples.len() as f64 },
            validation_recall: recall,
            best_validation_recall: early.best(),
        });
        if early.should_stop(epoch) && !validation.is_empty() {
            break;
        }
    }
    Ok((best, trace))
}

/// A fitted model bound to a snapshot; absorbing new edges is a
/// recomposition on the grown snapshot, no parameter updates.
#[derive(Debug, Clone)]
pub struct LceModel {
    config: LceConfig,
    params: LceParams,
    graph: GraphSnapshot,
    composed: ComposedEmbeddings,
}

impl LceModel {
    pub fn fit(
        cfg: &LceConfig,
        train: &GraphSnapshot,
        validation: &BTreeMap<usize, Vec<usize>>,
    ) -> Result<(LceModel, Vec<EpochStats>)> {
        let (params, trace) = fit_lce(cfg, train, validation)?;
        Ok((LceModel::from_parts(cfg.clone(), params, train.clone())?, trace))
    }

    pub fn from_parts(
        config: LceConfig,
        params: LceParams,
        graph: GraphSnapshot,
    ) -> Result<LceModel> {
        let composed = compose_for_scoring(&params, &config, &graph)?;
        Ok(LceModel { config, params, graph, composed })
    }

    pub fn config(&self) -> &LceConfig {
        &self.config
    }

    pub fn params(&self) -> &LceParams {
        &self.params
    }

    pub fn graph(&self) -> &GraphSnapshot {
        &self.graph
    }

    pub fn composed(&self) -> &ComposedEmbeddings {
        &self.composed
    }
}

impl ReplayModel for LceModel {
    fn kind(&self) -> &'static str {
        "lce"
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        self.composed = compose_for_scoring(&self.params, &self.config, graph)?;
        self.graph = graph.clone();
        Ok(())
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        self.composed.scores_for(user)
    }

    fn scoreable_items(&self) -> usize {
        self.composed.items.rows()
    }
}
