//! Model checkpoints: one JSON container for every model kind, carrying
//! the fitted parameters plus the id maps they were trained against.
//! Binding a checkpoint validates that the target log extends (never
//! permutes) those maps, then reconstructs the model against a snapshot,
//! normally the one it was fitted on; replay re-observes from there.
//! Floats serialize in shortest-round-trip form, so reloaded scores are
//! bit-identical.

use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{
    AlsConfig, AlsModel, LightGcnConfig, LightGcnModel, LightGcnTables, PopularityModel,
    Rp3BetaConfig, Rp3BetaModel, SlimConfig, SlimModel,
};
use crate::embedding::EmbeddingTable;
use crate::error::{CoreError, Result};
use crate::graph::{GraphSnapshot, InteractionLog};
use crate::lce::{LceConfig, LceModel, LceParams};
use crate::replay::ReplayModel;

pub const FORMAT_VERSION: u32 = 1;

/// Parameters of one fitted model, tagged by kind. The tags match
/// [`ReplayModel::kind`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Checkpoint {
    #[serde(rename = "lce")]
    Lce { config: LceConfig, params: LceParams },
    #[serde(rename = "lightgcn")]
    LightGcn { config: LightGcnConfig, tables: LightGcnTables },
    #[serde(rename = "pop")]
    Pop { counts: Vec<usize> },
    #[serde(rename = "rp3beta")]
    Rp3Beta { config: Rp3BetaConfig },
    #[serde(rename = "als")]
    Als { config: AlsConfig, users: EmbeddingTable, columns: EmbeddingTable },
    #[serde(rename = "slim")]
    Slim { config: SlimConfig, rows: Vec<Vec<(usize, f64)>> },
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::Lce { .. } => "lce",
            Checkpoint::LightGcn { .. } => "lightgcn",
            Checkpoint::Pop { .. } => "pop",
            Checkpoint::Rp3Beta { .. } => "rp3beta",
            Checkpoint::Als { .. } => "als",
            Checkpoint::Slim { .. } => "slim",
        }
    }
}

/// Any fitted model behind one [`ReplayModel`] front, so the replay
/// harness and the checkpoint container stay model-agnostic.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Lce(LceModel),
    LightGcn(LightGcnModel),
    Pop(PopularityModel),
    Rp3Beta(Rp3BetaModel),
    Als(AlsModel),
    Slim(SlimModel),
}

impl AnyModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            AnyModel::Lce(m) => {
                Checkpoint::Lce { config: m.config().clone(), params: m.params().clone() }
            }
            AnyModel::LightGcn(m) => {
                Checkpoint::LightGcn { config: m.config().clone(), tables: m.tables().clone() }
            }
            AnyModel::Pop(m) => Checkpoint::Pop { counts: m.counts().to_vec() },
            AnyModel::Rp3Beta(m) => Checkpoint::Rp3Beta { config: m.config().clone() },
            AnyModel::Als(m) => Checkpoint::Als {
                config: m.config().clone(),
                users: m.users().clone(),
                columns: m.columns().clone(),
            },
            AnyModel::Slim(m) => {
                Checkpoint::Slim { config: m.config().clone(), rows: m.rows().to_vec() }
            }
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint, graph: &GraphSnapshot) -> Result<AnyModel> {
        match ck {
            Checkpoint::Lce { config, params } => {
                LceModel::from_parts(config.clone(), params.clone(), graph.clone())
                    .map(AnyModel::Lce)
            }
            Checkpoint::LightGcn { config, tables } => {
                LightGcnModel::from_parts(config.clone(), tables.clone(), graph.clone())
                    .map(AnyModel::LightGcn)
            }
            Checkpoint::Pop { counts } => {
                Ok(AnyModel::Pop(PopularityModel::from_counts(counts.clone())))
            }
            Checkpoint::Rp3Beta { config } => {
                Ok(AnyModel::Rp3Beta(Rp3BetaModel::fit(config.clone(), graph)))
            }
            Checkpoint::Als { config, users, columns } => {
                AlsModel::from_parts(config.clone(), users.clone(), columns.clone(), graph.clone())
                    .map(AnyModel::Als)
            }
            Checkpoint::Slim { config, rows } => {
                Ok(AnyModel::Slim(SlimModel::from_parts(config.clone(), rows.clone(), graph.clone())))
            }
        }
    }
}

impl ReplayModel for AnyModel {
    fn kind(&self) -> &'static str {
        match self {
            AnyModel::Lce(m) => m.kind(),
            AnyModel::LightGcn(m) => m.kind(),
            AnyModel::Pop(m) => m.kind(),
            AnyModel::Rp3Beta(m) => m.kind(),
            AnyModel::Als(m) => m.kind(),
            AnyModel::Slim(m) => m.kind(),
        }
    }

    fn observe(&mut self, graph: &GraphSnapshot) -> Result<()> {
        match self {
            AnyModel::Lce(m) => m.observe(graph),
            AnyModel::LightGcn(m) => m.observe(graph),
            AnyModel::Pop(m) => m.observe(graph),
            AnyModel::Rp3Beta(m) => m.observe(graph),
            AnyModel::Als(m) => m.observe(graph),
            AnyModel::Slim(m) => m.observe(graph),
        }
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        match self {
            AnyModel::Lce(m) => m.scores(user),
            AnyModel::LightGcn(m) => m.scores(user),
            AnyModel::Pop(m) => m.scores(user),
            AnyModel::Rp3Beta(m) => m.scores(user),
            AnyModel::Als(m) => m.scores(user),
            AnyModel::Slim(m) => m.scores(user),
        }
    }

    fn scoreable_items(&self) -> usize {
        match self {
            AnyModel::Lce(m) => m.scoreable_items(),
            AnyModel::LightGcn(m) => m.scoreable_items(),
            AnyModel::Pop(m) => m.scoreable_items(),
            AnyModel::Rp3Beta(m) => m.scoreable_items(),
            AnyModel::Als(m) => m.scoreable_items(),
            AnyModel::Slim(m) => m.scoreable_items(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    /// External names in dense-id order at save time.
    pub user_names: Vec<String>,
    pub item_names: Vec<String>,
    pub model: Checkpoint,
}

fn check_names(saved: &[String], current: &[String], kind: &str) -> Result<()> {
    if saved.len() > current.len() {
        return Err(CoreError::Checkpoint(format!(
            "checkpoint knows {} {kind}s but the log has only {}",
            saved.len(),
            current.len()
        )));
    }
    for (i, (s, c)) in saved.iter().zip(current).enumerate() {
        if s != c {
            return Err(CoreError::Checkpoint(format!(
                "{kind} id {i} is '{s}' in the checkpoint but '{c}' in the log; \
                 the log must extend the checkpoint's id map, never reorder it"
            )));
        }
    }
    Ok(())
}

impl CheckpointFile {
    pub fn new(log: &InteractionLog, model: &AnyModel) -> CheckpointFile {
        CheckpointFile {
            format_version: FORMAT_VERSION,
            user_names: log.user_names().to_vec(),
            item_names: log.item_names().to_vec(),
            model: model.to_checkpoint(),
        }
    }

    /// Validate the version and id maps against `log`, then reconstruct
    /// the model against `graph`.
    pub fn bind(&self, log: &InteractionLog, graph: &GraphSnapshot) -> Result<AnyModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(CoreError::Checkpoint(format!(
                "unsupported checkpoint format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        check_names(&self.user_names, log.user_names(), "user")?;
        check_names(&self.item_names, log.item_names(), "item")?;
        AnyModel::from_checkpoint(&self.model, graph)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<CheckpointFile> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeKind, NodeKind};
    use std::collections::BTreeMap;

    fn toy_log() -> InteractionLog {
        InteractionLog::from_rows(vec![
            ("u0".into(), "w0".into(), EdgeKind::UserItem, 1),
            ("u0".into(), "w1".into(), EdgeKind::UserItem, 2),
            ("u1".into(), "w0".into(), EdgeKind::UserItem, 3),
            ("u1".into(), "w2".into(), EdgeKind::UserItem, 4),
            ("u2".into(), "w1".into(), EdgeKind::UserItem, 5),
            ("u0".into(), "u2".into(), EdgeKind::UserUser, 3),
        ])
        .unwrap()
    }

    fn toy_graph(log: &InteractionLog) -> GraphSnapshot {
        crate::graph::snapshot_at(log, 10, &[])
    }

    #[test]
    fn lce_round_trip_is_bit_exact() {
        let log = toy_log();
        let graph = toy_graph(&log);
        let cfg = LceConfig {
            dim: 4,
            max_epochs: 3,
            patience: 3,
            seed: 5,
            ..LceConfig::default()
        };
        let (model, _) = LceModel::fit(&cfg, &graph, &BTreeMap::new()).unwrap();
        let model = AnyModel::Lce(model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lce.json");
        CheckpointFile::new(&log, &model).write(&path).unwrap();
        let loaded = CheckpointFile::read(&path).unwrap().bind(&log, &graph).unwrap();
        assert_eq!(loaded.kind(), "lce");
        for u in 0..graph.num_users() {
            assert_eq!(loaded.scores(u), model.scores(u), "user {u}");
        }
    }

    #[test]
    fn every_kind_round_trips_through_json() {
        let log = toy_log();
        let graph = toy_graph(&log);
        let (als, _) = AlsModel::fit(
            AlsConfig { dim: 3, iterations: 2, ..AlsConfig::default() },
            &graph,
        )
        .unwrap();
        let (gcn, _) = LightGcnModel::fit(
            &LightGcnConfig { dim: 3, max_epochs: 2, patience: 2, ..LightGcnConfig::default() },
            &graph,
            &BTreeMap::new(),
        )
        .unwrap();
        let models = vec![
            AnyModel::Pop(PopularityModel::fit(&graph)),
            AnyModel::Rp3Beta(Rp3BetaModel::fit(Rp3BetaConfig::default(), &graph)),
            AnyModel::Als(als),
            AnyModel::Slim(SlimModel::fit(SlimConfig::default(), &graph).unwrap()),
            AnyModel::LightGcn(gcn),
        ];
        for model in models {
            let file = CheckpointFile::new(&log, &model);
            let json = serde_json::to_string(&file).unwrap();
            assert!(json.contains(&format!("\"kind\":\"{}\"", model.kind())), "{json}");
            let back: CheckpointFile = serde_json::from_str(&json).unwrap();
            let loaded = back.bind(&log, &graph).unwrap();
            for u in 0..graph.num_users() {
                assert_eq!(loaded.scores(u), model.scores(u), "{} user {u}", model.kind());
            }
        }
    }

    #[test]
    fn awkward_floats_survive_json() {
        let file = CheckpointFile {
            format_version: FORMAT_VERSION,
            user_names: vec!["u0".into()],
            item_names: vec!["w0".into()],
            model: Checkpoint::Slim {
                config: SlimConfig::default(),
                rows: vec![vec![(0, 0.1 + 0.2), (1, f64::MIN_POSITIVE), (2, 1.0 / 3.0)]],
            },
        };
        let json = serde_json::to_string(&file).unwrap();
        let back: CheckpointFile = serde_json::from_str(&json).unwrap();
        match (&back.model, &file.model) {
            (Checkpoint::Slim { rows: a, .. }, Checkpoint::Slim { rows: b, .. }) => {
                assert_eq!(a, b);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bind_rejects_reordered_or_shrunk_id_maps() {
        let log = toy_log();
        let graph = toy_graph(&log);
        let model = AnyModel::Pop(PopularityModel::fit(&graph));
        let mut file = CheckpointFile::new(&log, &model);
        file.user_names.swap(0, 1);
        match file.bind(&log, &graph) {
            Err(CoreError::Checkpoint(msg)) => assert!(msg.contains("user id 0")),
            other => panic!("expected checkpoint error, got {other:?}"),
        }

        // A log that extends the saved universe is fine.
        let file = CheckpointFile::new(&log, &model);
        let mut rows: Vec<(String, String, EdgeKind, i64)> = vec![
            ("u0".into(), "w0".into(), EdgeKind::UserItem, 1),
            ("u0".into(), "w1".into(), EdgeKind::UserItem, 2),
            ("u1".into(), "w0".into(), EdgeKind::UserItem, 3),
            ("u1".into(), "w2".into(), EdgeKind::UserItem, 4),
            ("u2".into(), "w1".into(), EdgeKind::UserItem, 5),
            ("u0".into(), "u2".into(), EdgeKind::UserUser, 3),
        ];
        rows.push(("u0".into(), "w9".into(), EdgeKind::UserItem, 9));
        let bigger = InteractionLog::from_rows(rows).unwrap();
        assert!(file.bind(&bigger, &graph).is_ok());

        // A shrunk log cannot carry the checkpoint's indices.
        let shrunk = InteractionLog::from_rows(vec![(
            "u0".into(),
            "w0".into(),
            EdgeKind::UserItem,
            1,
        )])
        .unwrap();
        assert!(matches!(file.bind(&shrunk, &graph), Err(CoreError::Checkpoint(_))));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let log = toy_log();
        let graph = toy_graph(&log);
        let mut file = CheckpointFile::new(&log, &AnyModel::Pop(PopularityModel::fit(&graph)));
        file.format_version = 0;
        assert!(matches!(file.bind(&log, &graph), Err(CoreError::Checkpoint(_))));
    }

    #[test]
    fn checkpoint_keeps_the_flipped_direction_inductive_kind() {
        // Users-composed direction: the snapshot's inductive side is the
        // user kind and the reloaded model keeps scoring from it.
        let log = toy_log();
        let graph = crate::graph::snapshot_at_inductive(&log, 10, &[], NodeKind::User);
        let cfg = LceConfig {
            dim: 4,
            direction: crate::lce::CompositionDirection::UsersFromItems,
            max_epochs: 2,
            patience: 2,
            ..LceConfig::default()
        };
        let (model, _) = LceModel::fit(&cfg, &graph, &BTreeMap::new()).unwrap();
        let model = AnyModel::Lce(model);
        let json = serde_json::to_string(&CheckpointFile::new(&log, &model)).unwrap();
        let back: CheckpointFile = serde_json::from_str(&json).unwrap();
        let loaded = back.bind(&log, &graph).unwrap();
        for u in 0..graph.num_users() {
            assert_eq!(loaded.scores(u), model.scores(u));
        }
    }
}
