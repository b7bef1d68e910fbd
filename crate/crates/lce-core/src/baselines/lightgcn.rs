//! Explicit-table propagation model: users and items both own trainable
//! layer-0 embeddings, propagated through the same aggregation layers
//! and layer-averaged on both sides before dot-product scoring. With 0
//! layers this is plain pairwise matrix factorization.
//!
//! Because every item needs its own trained row, items that appear after
//! fitting have no representation: streaming updates zero-pad the item
//! table so propagation runs on the grown snapshot (known embeddings
//! still shift with the new structure), but new items stay outside the
//! scoreable range.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{CoreError, Result};
use crate::graph::{GraphSnapshot, NodeKind};
use crate::propagation::{propagate_layers, propagate_once, NormalizationKind};
use crate::replay::ReplayModel;
use crate::train::{
    make_triples, sample_reconstruction_split, sigmoid, softplus, validation_recall, AdamState,
    EarlyStopping, EpochStats,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LightGcnConfig {
    pub dim: usize,
    pub layers: usize,
    pub normalization: NormalizationKind,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub reconstruction_fraction: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_cutoff: usize,
    /// Leave the user table at its initial values (no optimizer state).
    pub freeze_users: bool,
    /// Leave the item table at its initial values.
    pub freeze_items: bool,
    pub seed: u64,
}

impl Default for LightGcnConfig {
    fn default() -> Self {
        LightGcnConfig {
            dim: 64,
            layers: 3,
            normalization: NormalizationKind::SymmetricSqrt,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            batch_size: 5000,
            negatives_per_positive: 1,
            reconstruction_fraction: 0.1,
            max_epochs: 800,
            patience: 50,
            validation_cutoff: 20,
            freeze_users: false,
            freeze_items: false,
            seed: 0,
        }
    }
}

impl LightGcnConfig {
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
        if self.max_epochs == 0 || self.patience == 0 || self.validation_cutoff == 0 {
            return bad("epochs, patience and validation cutoff must be positive");
        }
        if self.freeze_users && self.freeze_items {
            return bad("freezing both tables leaves nothing to train");
        }
        Ok(())
    }
}

/// Both trainable tables; the only parameters of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightGcnTables {
    pub users: EmbeddingTable,
    pub items: EmbeddingTable,
}

impl LightGcnTables {
    /// Seeded init, users drawn before items from the same stream.
    pub fn init(cfg: &LightGcnConfig, num_users: usize, num_items: usize) -> LightGcnTables {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        LightGcnTables {
            users: EmbeddingTable::xavier_uniform(num_users, cfg.dim, &mut rng),
            items: EmbeddingTable::xavier_uniform(num_items, cfg.dim, &mut rng),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.users.values().len() + self.items.values().len()
    }
}

/// Zero-pad the item table to the snapshot's item count so propagation
/// shapes line up; rows at or past the trained range stay zero at layer 0.
fn padded_items(items: &EmbeddingTable, num_items: usize) -> EmbeddingTable {
    if items.rows() == num_items {
        return items.clone();
    }
    let mut out = EmbeddingTable::zeros(num_items, items.dim());
    out.values_mut()[..items.values().len()].copy_from_slice(items.values());
    out
}

/// Layer-averaged scoring embeddings for every node of `graph`.
pub fn compose_tables(
    tables: &LightGcnTables,
    cfg: &LightGcnConfig,
    graph: &GraphSnapshot,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    if tables.users.rows() != graph.num_users() {
        return Err(CoreError::Shape(format!(
            "user table has {} rows but the snapshot has {} users",
            tables.users.rows(),
            graph.num_users()
        )));
    }
    if tables.items.rows() > graph.num_items() {
        return Err(CoreError::Shape(format!(
            "item table has {} rows but the snapshot has only {} items",
            tables.items.rows(),
            graph.num_items()
        )));
    }
    let items0 = padded_items(&tables.items, graph.num_items());
    let stack =
        propagate_layers(&tables.users, &items0, graph, cfg.layers, cfg.normalization);
    Ok((stack.average(NodeKind::User), stack.average(NodeKind::Item)))
}

/// Pairwise ranking loss (summed `softplus(-d)`) and gradients for both
/// tables; the cotangent recursion mirrors the compositional model's but
/// both node kinds are explicit at layer 0.
pub fn loss_and_grads(
    tables: &LightGcnTables,
    cfg: &LightGcnConfig,
    graph: &GraphSnapshot,
    triples: &[crate::train::Triple],
) -> Result<(f64, LightGcnTables)> {
    if tables.items.rows() != graph.num_items() {
        return Err(CoreError::Shape(format!(
            "training expects the item table ({} rows) to match the snapshot ({} items)",
            tables.items.rows(),
            graph.num_items()
        )));
    }
    let (nu, ni, dim) = (graph.num_users(), graph.num_items(), cfg.dim);
    let stack = propagate_layers(&tables.users, &tables.items, graph, cfg.layers, cfg.normalization);
    let users = stack.average(NodeKind::User);
    let items = stack.average(NodeKind::Item);

    let mut cu = EmbeddingTable::zeros(nu, dim);
    let mut cw = EmbeddingTable::zeros(ni, dim);
    let mut loss = 0.0;
    for t in triples {
        let zu = users.row(t.user);
        let zp = items.row(t.pos);
        let zn = items.row(t.neg);
        let d = dot(zu, zp) - dot(zu, zn);
        loss += softplus(-d);
        let g = sigmoid(d) - 1.0;
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

    let inv = 1.0 / (cfg.layers + 1) as f64;
    let mut direct = EmbeddingTable::zeros(nu + ni, dim);
    for u in 0..nu {
        let (src, row) = (cu.row(u), direct.row_mut(u));
        for i in 0..dim {
            row[i] = inv * src[i];
        }
    }
    for w in 0..ni {
        let (src, row) = (cw.row(w), direct.row_mut(nu + w));
        for i in 0..dim {
            row[i] = inv * src[i];
        }
    }
    let mut g0 = EmbeddingTable::zeros(nu + ni, dim);
    for l in (0..=cfg.layers).rev() {
        for (d, s) in g0.values_mut().iter_mut().zip(direct.values()) {
            *d += s;
        }
        if l > 0 {
            g0 = propagate_once(&g0, graph, cfg.normalization, true);
        }
    }
    let grads = LightGcnTables {
        users: EmbeddingTable::from_values(nu, dim, g0.values()[..nu * dim].to_vec()),
        items: EmbeddingTable::from_values(ni, dim, g0.values()[nu * dim..].to_vec()),
    };
    Ok((loss, grads))
}

/// Fit starting from the given layer-0 tables (frozen tables keep them).
/// An empty validation map disables best-epoch selection: the run keeps
/// the final epoch's tables.
pub fn fit_from_tables(
    cfg: &LightGcnConfig,
    train: &GraphSnapshot,
    validation: &BTreeMap<usize, Vec<usize>>,
    mut tables: LightGcnTables,
) -> Result<(LightGcnModel, Vec<EpochStats>)> {
    cfg.validate()?;
    let mut adam_users = AdamState::for_table(&tables.users);
    let mut adam_items = AdamState::for_table(&tables.items);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut early = EarlyStopping::new(cfg.patience);
    let mut best = tables.clone();
    let mut trace = Vec::new();
    let mut step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let (input, targets) =
            sample_reconstruction_split(train, cfg.reconstruction_fraction, &mut rng);
        let triples = make_triples(&targets, train, cfg.negatives_per_positive, &mut rng);
        let mut loss_sum = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let (loss, grads) = loss_and_grads(&tables, cfg, &input, batch)?;
            loss_sum += loss;
            step += 1;
            if !cfg.freeze_users {
                adam_users.apply(
                    &mut tables.users,
                    &grads.users,
                    step,
                    cfg.learning_rate,
                    cfg.weight_decay,
                );
            }
            if !cfg.freeze_items {
                adam_items.apply(
                    &mut tables.items,
                    &grads.items,
                    step,
                    cfg.learning_rate,
                    cfg.weight_decay,
                );
            }
        }
        let (users_out, items_out) = compose_tables(&tables, cfg, train)?;
        let recall =
            validation_recall(&users_out, &items_out, train, validation, cfg.validation_cutoff);
        if early.observe(epoch, recall) || validation.is_empty() {
            best = tables.clone();
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
    Ok((LightGcnModel::from_parts(cfg.clone(), best, train.clone())?, trace))
}

#[derive(Debug, Clone)]
pub struct LightGcnModel {
    config: LightGcnConfig,
    tables: LightGcnTables,
    num_items_at_fit: usize,
    graph: GraphSnapshot,
    users_out: EmbeddingTable,
    items_out: EmbeddingTable,
}

impl LightGcnModel {
    pub fn fit(
        cfg: &LightGcnConfig,
        train: &GraphSnapshot,
        validation: &BTreeMap<usize, Vec<usize>>,
    ) -> Result<(LightGcnModel, Vec<EpochStats>)> {
        let tables = LightGcnTables::init(cfg, train.num_users(), train.num_items());
        fit_from_tables(cfg, train, validation, tables)
    }

    pub fn from_parts(
        config: LightGcnConfig,
        tables: LightGcnTables,
        graph: GraphSnapshot,
    ) -> Result<LightGcnModel> {
        let (users_out, items_out) = compose_tables(&tables, &config, &graph)?;
        let num_items_at_fit = tables.items.rows();
        Ok(LightGcnModel { config, tables, num_items_at_fit, graph, users_out, items_out })
    }

    pub fn config(&self) -> &LightGcnConfig {
        &self.config
    }

    pub fn tables(&self) -> &LightGcnTables {
        &self.tables
    }

    pub fn num_items_at_fit(&self) -> usize {
        self.num_items_at_fit
    }
}

impl ReplayModel for LightGcnModel {
    fn kind(&self) -> &'static str {
        "lightgcn"
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        let (users_out, items_out) = compose_tables(&self.tables, &self.config, graph)?;
        self.users_out = users_out;
        self.items_out = items_out;
        self.graph = graph.clone();
        Ok(())
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        let zu = self.users_out.row(user);
        (0..self.num_items_at_fit).map(|w| dot(zu, self.items_out.row(w))).collect()
    }

    fn scoreable_items(&self) -> usize {
        self.num_items_at_fit
    }
}
