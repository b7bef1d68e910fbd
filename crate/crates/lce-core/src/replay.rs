//! Incremental-replay harness: feed arriving graph chunks to fitted
//! models without retraining, measure on a fixed test window, and compare
//! against the retrain-every-step skyline. Also hosts the stationarity
//! probe, which retrains one side of an explicit-table model on
//! chronological data buckets while the other side stays frozen.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::baselines::lightgcn::{fit_from_tables, LightGcnConfig, LightGcnTables};
use crate::error::{CoreError, Result};
use crate::eval::{evaluate, EvalConfig, EvaluationResult};
use crate::graph::{
    snapshot_from_edges, GraphSnapshot, InteractionLog, NodeKind, ReplaySchedule,
};

/// A fitted recommender that can absorb a grown snapshot without
/// retraining. `observe` always receives the full merged snapshot, never
/// a bare increment, so models are free to recompute from scratch.
pub trait ReplayModel {
    /// Stable tag for logs and serialized artifacts.
    fn kind(&self) -> &'static str;

    /// Absorb the grown snapshot (parameter-free state updates only).
    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()>;

    /// Scores for every item the model can currently score, item-index
    /// order, higher ranks first.
    fn scores(&self, user: usize) -> Vec<f64>;

    /// Items with indices below this are scoreable; items at or above it
    /// are unknown to the model.
    fn scoreable_items(&self) -> usize;
}

/// One evaluated replay step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// "offline", "t1".."tK", or the "skyline@" prefixed forms.
    pub step: String,
    pub result: EvaluationResult,
}

fn items_by_user(log: &InteractionLog, indices: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        let e = &log.edges()[i];
        out.entry(e.src.index).or_default().push(e.dst.index);
    }
    for v in out.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    out
}

/// Replay the streaming chunks through a fitted model. Step 0 absorbs the
/// full offline graph (the fit held out validation edges; they are known
/// interactions by replay time); step k merges chunk k. Every step is
/// measured against the full test window, with the current snapshot as
/// the exclusion set.
pub fn run_replay<M: ReplayModel + Sync>(
    model: &mut M,
    log: &InteractionLog,
    schedule: &ReplaySchedule,
    cfg: &EvalConfig,
) -> Result<Vec<StepRecord>> {
    let test = schedule.test_items_by_user(log);
    let cold = schedule.cold_items(log);
    let mut current = schedule.offline_graph(log);
    model.observe(&current)?;
    let mut records = vec![StepRecord {
        step: "offline".into(),
        result: evaluate(model, &current, &test, &cold, cfg)?,
    }];
    for k in 0..schedule.chunks.len() {
        current = current.merge_increment(&schedule.chunk_records(log, k))?;
        model.observe(&current)?;
        records.push(StepRecord {
            step: format!("t{}", k + 1),
            result: evaluate(model, &current, &test, &cold, cfg)?,
        });
    }
    Ok(records)
}

/// Retrain-from-scratch skyline. At step k the model is refitted on
/// everything up to and including chunk k, with the validation tail
/// re-split at the same trailing fraction of the interaction edges seen
/// so far, then measured exactly like the incremental run. With the same
/// fit procedure, step 0 reproduces the offline record bit for bit.
pub fn run_skyline<M, F>(
    log: &InteractionLog,
    schedule: &ReplaySchedule,
    validation_fraction: f64,
    fit: F,
    cfg: &EvalConfig,
) -> Result<Vec<StepRecord>>
where
    M: ReplayModel + Sync,
    F: Fn(&GraphSnapshot, &BTreeMap<usize, Vec<usize>>) -> Result<M>,
{
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(CoreError::Config(format!(
            "validation fraction {validation_fraction} outside [0, 1)"
        )));
    }
    let test = schedule.test_items_by_user(log);
    let cold = schedule.cold_items(log);
    let social: Vec<usize> = schedule
        .train_edges
        .iter()
        .copied()
        .filter(|&i| log.edges()[i].dst.kind == NodeKind::User)
        .collect();
    let mut ui: Vec<usize> = schedule
        .train_edges
        .iter()
        .copied()
        .filter(|&i| log.edges()[i].dst.kind == NodeKind::Item)
        .chain(schedule.val_edges.iter().copied())
        .collect();
    ui.sort_unstable();

    let mut records = Vec::new();
    for k in 0..=schedule.chunks.len() {
        let (cutoff, step) = if k == 0 {
            (schedule.offline_end, "skyline@offline".to_string())
        } else {
            ui.extend_from_slice(&schedule.chunks[k - 1]);
            (schedule.chunk_ends[k - 1], format!("skyline@t{k}"))
        };
        let n_val = (ui.len() as f64 * validation_fraction).floor() as usize;
        let (train_ui, val_ui) = ui.split_at(ui.len() - n_val);
        let mut train_edges = train_ui.to_vec();
        train_edges.extend_from_slice(&social);
        train_edges.sort_unstable();
        let train_graph = snapshot_from_edges(log, &train_edges, cutoff, NodeKind::Item);
        let validation = items_by_user(log, val_ui);
        let mut model = fit(&train_graph, &validation)?;

        let mut full_edges = ui.clone();
        full_edges.extend_from_slice(&social);
        full_edges.sort_unstable();
        let full = snapshot_from_edges(log, &full_edges, cutoff, NodeKind::Item);
        model.observe(&full)?;
        records.push(StepRecord { step, result: evaluate(&model, &full, &test, &cold, cfg)? });
    }
    Ok(records)
}

// ---------------------------------------------------------------------
// Stationarity probe
// ---------------------------------------------------------------------

/// Which table stays frozen (at its bucket-1 fitted values) while the
/// other side is retrained per bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedSide {
    Users,
    Items,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub model: LightGcnConfig,
    pub side_to_fix: FixedSide,
    /// Trailing fraction of raw interaction edges held out as the shared
    /// future-edge evaluation set.
    pub eval_fraction: f64,
    pub num_buckets: usize,
    /// Trailing fraction of each bucket's distinct pairs used for early
    /// stopping.
    pub validation_fraction: f64,
    pub eval: EvalConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            model: LightGcnConfig::default(),
            side_to_fix: FixedSide::Users,
            eval_fraction: 0.2,
            num_buckets: 4,
            validation_fraction: 0.1,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeRecord {
    /// 1-based bucket number; bucket 1 trains both sides.
    pub bucket: usize,
    pub tables: LightGcnTables,
    pub result: EvaluationResult,
}

/// Chronological equal-count buckets over the raw interaction edges (the
/// trailing `eval_fraction` is split off first, the head divides into
/// `num_buckets` with the remainder in the last). Raw means repeats
/// count: a reconsumed pair lands in its bucket again, so bucket graphs
/// deduplicate independently.
pub fn probe_buckets(
    log: &InteractionLog,
    eval_fraction: f64,
    num_buckets: usize,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if num_buckets < 2 {
        return Err(CoreError::Config("probe needs at least two buckets".into()));
    }
    if !(0.0..1.0).contains(&eval_fraction) || eval_fraction == 0.0 {
        return Err(CoreError::Config(format!(
            "eval fraction {eval_fraction} outside (0, 1)"
        )));
    }
    let ui: Vec<usize> = log
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.dst.kind == NodeKind::Item)
        .map(|(i, _)| i)
        .collect();
    let n_eval = (ui.len() as f64 * eval_fraction).floor() as usize;
    let head = ui.len() - n_eval;
    if head < num_buckets || n_eval == 0 {
        return Err(CoreError::Schedule(format!(
            "log with {} interaction edges cannot fill {num_buckets} buckets plus an evaluation tail",
            ui.len()
        )));
    }
    let size = head / num_buckets;
    let buckets = (0..num_buckets)
        .map(|b| {
            let end = if b + 1 == num_buckets { head } else { (b + 1) * size };
            ui[b * size..end].to_vec()
        })
        .collect();
    Ok((buckets, ui[head..].to_vec()))
}

/// Train both tables on bucket 1; for each later bucket, keep the chosen
/// side frozen at its bucket-1 values and retrain the other side from a
/// fresh init on that bucket alone. Every bucket model is measured on the
/// same future-edge tail, so drifting metrics indicate the retrained
/// side's data is non-stationary. All bucket graphs share the log's full
/// node allocation so the tables line up.
pub fn stationarity_probe(log: &InteractionLog, cfg: &ProbeConfig) -> Result<Vec<ProbeRecord>> {
    let (buckets, eval_idx) = probe_buckets(log, cfg.eval_fraction, cfg.num_buckets)?;
    let eval_map = items_by_user(log, &eval_idx);
    let social: Vec<usize> = log
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, e)| e.dst.kind == NodeKind::User && log.is_first_occurrence(*i))
        .map(|(i, _)| i)
        .collect();
    let (nu, ni) = (log.num_users(), log.num_items());

    let mut records: Vec<ProbeRecord> = Vec::with_capacity(cfg.num_buckets);
    for (b, bucket) in buckets.iter().enumerate() {
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let distinct: Vec<usize> = bucket
            .iter()
            .copied()
            .filter(|&i| {
                let e = &log.edges()[i];
                seen.insert((e.src.index, e.dst.index))
            })
            .collect();
        let cutoff = log.edges()[*bucket.last().expect("buckets are non-empty")].timestamp;
        let n_val = (distinct.len() as f64 * cfg.validation_fraction).floor() as usize;
        let (train_ui, val_ui) = distinct.split_at(distinct.len() - n_val);
        let mut train_edges = train_ui.to_vec();
        train_edges.extend_from_slice(&social);
        train_edges.sort_unstable();
        let train_graph =
            snapshot_from_edges(log, &train_edges, cutoff, NodeKind::Item).grow_to(nu, ni);
        let validation = items_by_user(log, val_ui);

        let mut model_cfg = cfg.model.clone();
        model_cfg.freeze_users = false;
        model_cfg.freeze_items = false;
        let tables = if b == 0 {
            LightGcnTables::init(&model_cfg, nu, ni)
        } else {
            model_cfg.seed = cfg.model.seed.wrapping_add(b as u64);
            match cfg.side_to_fix {
                FixedSide::Users => model_cfg.freeze_users = true,
                FixedSide::Items => model_cfg.freeze_items = true,
            }
            let mut fresh = LightGcnTables::init(&model_cfg, nu, ni);
            match cfg.side_to_fix {
                FixedSide::Users => fresh.users = records[0].tables.users.clone(),
                FixedSide::Items => fresh.items = records[0].tables.items.clone(),
            }
            fresh
        };
        let (mut model, _) = fit_from_tables(&model_cfg, &train_graph, &validation, tables)?;

        let mut full_edges = distinct.clone();
        full_edges.extend_from_slice(&social);
        full_edges.sort_unstable();
        let full = snapshot_from_edges(log, &full_edges, cutoff, NodeKind::Item).grow_to(nu, ni);
        model.observe(&full)?;
        let result = evaluate(&model, &full, &eval_map, &HashSet::new(), &cfg.eval)?;
        records.push(ProbeRecord { bucket: b + 1, tables: model.tables().clone(), result });
    }
    Ok(records)
}
