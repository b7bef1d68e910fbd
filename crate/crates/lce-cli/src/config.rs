//! Experiment configuration: data source, model roster with optional
//! hyperparameter grids, evaluation settings, and output location. JSON
//! on disk; every hyperparameter falls back to the library defaults.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use lce_core::baselines::als::AlsConfig;
use lce_core::baselines::lightgcn::LightGcnConfig;
use lce_core::baselines::rp3beta::Rp3BetaConfig;
use lce_core::baselines::slim::SlimConfig;
use lce_core::eval::EvalConfig;
use lce_core::graph::ScheduleWindows;
use lce_core::lce::LceConfig;
use lce_core::replay::ProbeConfig;
use lce_core::synth::PlantedConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Also run the retrain-from-scratch skyline during `replay`.
    #[serde(default)]
    pub skyline: bool,
    #[serde(default)]
    pub probe: ProbeConfig,
    /// Offsets the data-generator seed and every model seed.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic two-block instance generated in-process.
    Planted {
        #[serde(default)]
        config: PlantedConfig,
    },
    /// Tab-separated `src dst kind timestamp` edge log.
    Tsv {
        path: PathBuf,
        /// Iterative degree filter threshold; 0 keeps everything.
        #[serde(default)]
        k_core: usize,
        windows: ScheduleWindows,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Lce {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        config: LceConfig,
        #[serde(default)]
        grid: EmbeddingGrid,
    },
    Lightgcn {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        config: LightGcnConfig,
        #[serde(default)]
        grid: EmbeddingGrid,
    },
    Pop {
        #[serde(default)]
        name: Option<String>,
    },
    Rp3beta {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        config: Rp3BetaConfig,
        #[serde(default)]
        grid: Rp3bGrid,
    },
    Als {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        config: AlsConfig,
        #[serde(default)]
        grid: AlsGrid,
    },
    Slim {
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        config: SlimConfig,
        #[serde(default)]
        grid: SlimGrid,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Lce { .. } => "lce",
            ModelSpec::Lightgcn { .. } => "lightgcn",
            ModelSpec::Pop { .. } => "pop",
            ModelSpec::Rp3beta { .. } => "rp3beta",
            ModelSpec::Als { .. } => "als",
            ModelSpec::Slim { .. } => "slim",
        }
    }

    pub fn name(&self) -> &str {
        let custom = match self {
            ModelSpec::Lce { name, .. }
            | ModelSpec::Lightgcn { name, .. }
            | ModelSpec::Pop { name }
            | ModelSpec::Rp3beta { name, .. }
            | ModelSpec::Als { name, .. }
            | ModelSpec::Slim { name, .. } => name,
        };
        custom.as_deref().unwrap_or_else(|| self.kind())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingGrid {
    pub dims: Vec<usize>,
    pub weight_decays: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsGrid {
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rp3bGrid {
    pub top_ks: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlimGrid {
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
}

// Allowed grid values. Points outside these sets are config errors.
pub const EMBEDDING_DIMS: &[usize] = &[16, 32, 64, 128, 256, 512];
pub const WEIGHT_DECAYS: &[f64] = &[1e-3, 1e-4, 1e-5];
pub const BATCH_SIZES: &[usize] = &[2048, 5000, 10000];
pub const ALS_DIMS: &[usize] = &[32, 64, 128, 256, 512];
pub const RP3B_TOP_KS: &[usize] = &[50, 100, 200, 500];
pub const SLIM_L1: &[f64] = &[0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0];
pub const SLIM_L2: &[f64] = &[0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(CliError::Config("no models configured".into()));
        }
        let mut seen = HashSet::new();
        for spec in &self.models {
            let name = spec.name();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(CliError::Config(format!(
                    "model name '{name}' must be nonempty [A-Za-z0-9_-] (it names the checkpoint file)"
                )));
            }
            if !seen.insert(name.to_string()) {
                return Err(CliError::Config(format!("duplicate model name '{name}'")));
            }
        }
        Ok(())
    }

    /// Model specs selected by `--models`, in config order.
    pub fn selected<'a>(&'a self, filter: Option<&[String]>) -> Result<Vec<&'a ModelSpec>> {
        match filter {
            None => Ok(self.models.iter().collect()),
            Some(names) => {
                let mut out = Vec::new();
                for name in names {
                    match self.models.iter().find(|s| s.name() == name) {
                        Some(spec) => out.push(spec),
                        None => {
                            return Err(CliError::Usage(format!(
                                "--models names unknown model '{name}'"
                            )))
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// One fully resolved hyperparameter point of a model's grid.
#[derive(Debug, Clone)]
pub struct GridPoint {
    /// `axis=value` pairs joined by ';', or "default" when no axis is
    /// gridded. Stable across runs.
    pub label: String,
    pub model: ResolvedModel,
}

#[derive(Debug, Clone)]
pub enum ResolvedModel {
    Lce(LceConfig),
    LightGcn(LightGcnConfig),
    Pop,
    Rp3Beta(Rp3BetaConfig),
    Als(AlsConfig),
    Slim(SlimConfig),
}

fn check_allowed<T: PartialEq + std::fmt::Display>(
    model: &str,
    axis: &str,
    values: &[T],
    allowed: &[T],
) -> Result<()> {
    for v in values {
        if !allowed.iter().any(|a| a == v) {
            let list = allowed.iter().map(T::to_string).collect::<Vec<_>>().join(", ");
            return Err(CliError::Config(format!(
                "{model}: grid {axis} value {v} is not in the searched set {{{list}}}"
            )));
        }
    }
    Ok(())
}

fn labels(parts: &[String]) -> String {
    if parts.is_empty() {
        "default".into()
    } else {
        parts.join(";")
    }
}

/// Cartesian product of the spec's gridded axes over its base config, in
/// axis declaration order; an empty axis keeps the base value. The
/// experiment seed is folded into each point's own seed.
pub fn expand_grid(spec: &ModelSpec, experiment_seed: u64) -> Result<Vec<GridPoint>> {
    let name = spec.name();
    let mut points = Vec::new();
    match spec {
        ModelSpec::Lce { config, grid, .. } => {
            check_allowed(name, "dim", &grid.dims, EMBEDDING_DIMS)?;
            check_allowed(name, "weight_decay", &grid.weight_decays, WEIGHT_DECAYS)?;
            check_allowed(name, "batch_size", &grid.batch_sizes, BATCH_SIZES)?;
            for (dim, dl) in axis(&grid.dims, config.dim, "dim") {
                for (wd, wl) in axis(&grid.weight_decays, config.weight_decay, "weight_decay") {
                    for (bs, bl) in axis(&grid.batch_sizes, config.batch_size, "batch_size") {
                        let mut cfg = config.clone();
                        cfg.dim = dim;
                        cfg.weight_decay = wd;
                        cfg.batch_size = bs;
                        cfg.seed = cfg.seed.wrapping_add(experiment_seed);
                        let parts: Vec<String> =
                            [dl.clone(), wl.clone(), bl].into_iter().flatten().collect();
                        points.push(GridPoint { label: labels(&parts), model: ResolvedModel::Lce(cfg) });
                    }
                }
            }
        }
        ModelSpec::Lightgcn { config, grid, .. } => {
            check_allowed(name, "dim", &grid.dims, EMBEDDING_DIMS)?;
            check_allowed(name, "weight_decay", &grid.weight_decays, WEIGHT_DECAYS)?;
            check_allowed(name, "batch_size", &grid.batch_sizes, BATCH_SIZES)?;
            for (dim, dl) in axis(&grid.dims, config.dim, "dim") {
                for (wd, wl) in axis(&grid.weight_decays, config.weight_decay, "weight_decay") {
                    for (bs, bl) in axis(&grid.batch_sizes, config.batch_size, "batch_size") {
                        let mut cfg = config.clone();
                        cfg.dim = dim;
                        cfg.weight_decay = wd;
                        cfg.batch_size = bs;
                        cfg.seed = cfg.seed.wrapping_add(experiment_seed);
                        let parts: Vec<String> =
                            [dl.clone(), wl.clone(), bl].into_iter().flatten().collect();
                        points
                            .push(GridPoint { label: labels(&parts), model: ResolvedModel::LightGcn(cfg) });
                    }
                }
            }
        }
        ModelSpec::Pop { .. } => {
            points.push(GridPoint { label: "default".into(), model: ResolvedModel::Pop });
        }
        ModelSpec::Rp3beta { config, grid, .. } => {
            check_allowed(name, "top_k", &grid.top_ks, RP3B_TOP_KS)?;
            for (top_k, kl) in axis(&grid.top_ks, config.top_k, "top_k") {
                let mut cfg = config.clone();
                cfg.top_k = top_k;
                let parts: Vec<String> = [kl].into_iter().flatten().collect();
                points.push(GridPoint { label: labels(&parts), model: ResolvedModel::Rp3Beta(cfg) });
            }
        }
        ModelSpec::Als { config, grid, .. } => {
            check_allowed(name, "dim", &grid.dims, ALS_DIMS)?;
            for (dim, dl) in axis(&grid.dims, config.dim, "dim") {
                let mut cfg = config.clone();
                cfg.dim = dim;
                cfg.seed = cfg.seed.wrapping_add(experiment_seed);
                let parts: Vec<String> = [dl].into_iter().flatten().collect();
                points.push(GridPoint { label: labels(&parts), model: ResolvedModel::Als(cfg) });
            }
        }
        ModelSpec::Slim { config, grid, .. } => {
            check_allowed(name, "l1", &grid.l1, SLIM_L1)?;
            check_allowed(name, "l2", &grid.l2, SLIM_L2)?;
            for (l1, l1l) in axis(&grid.l1, config.l1, "l1") {
                for (l2, l2l) in axis(&grid.l2, config.l2, "l2") {
                    let mut cfg = config.clone();
                    cfg.l1 = l1;
                    cfg.l2 = l2;
                    let parts: Vec<String> = [l1l.clone(), l2l].into_iter().flatten().collect();
                    points.push(GridPoint { label: labels(&parts), model: ResolvedModel::Slim(cfg) });
                }
            }
        }
    }
    Ok(points)
}

/// Grid axis iterator: the gridded values with their labels, or the base
/// value unlabeled when the axis is not searched.
fn axis<T: Copy + std::fmt::Display>(
    values: &[T],
    base: T,
    label: &str,
) -> Vec<(T, Option<String>)> {
    if values.is_empty() {
        vec![(base, None)]
    } else {
        values.iter().map(|&v| (v, Some(format!("{label}={v}")))).collect()
    }
}
