//! Command implementations. Every command loads the data named by the
//! config, so reruns with the same config and seed reproduce the same
//! graphs, fits, and output bytes.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lce_core::baselines::als::AlsModel;
use lce_core::baselines::lightgcn::LightGcnModel;
use lce_core::baselines::popularity::PopularityModel;
use lce_core::baselines::rp3beta::Rp3BetaModel;
use lce_core::baselines::slim::SlimModel;
use lce_core::checkpoint::{AnyModel, Checkpoint, CheckpointFile};
use lce_core::eval::{evaluate, ColdStartMode, EvalConfig};
use lce_core::graph::{
    build_replay_schedule, parse_edge_log, GraphSnapshot, InteractionLog, ScheduleWindows,
};
use lce_core::lce::LceModel;
use lce_core::metrics::{MetricKey, MetricKind};
use lce_core::replay::{run_replay, run_skyline, stationarity_probe, FixedSide, StepRecord};
use lce_core::stats::paired_t_test;
use lce_core::synth::generate_planted;
use lce_core::CoreError;

use crate::config::{expand_grid, DataSource, ExperimentConfig, GridPoint, ResolvedModel};
use crate::error::{CliError, Result};

pub struct Context {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    /// `--models` selection; `None` runs every configured model.
    pub models: Option<Vec<String>>,
}

// ---------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------

fn load_data(cfg: &ExperimentConfig) -> Result<(InteractionLog, ScheduleWindows)> {
    match &cfg.data {
        DataSource::Planted { config } => {
            let mut c = config.clone();
            c.seed = c.seed.wrapping_add(cfg.seed);
            Ok(generate_planted(&c)?)
        }
        DataSource::Tsv { path, k_core, windows } => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
            let log = parse_edge_log(std::io::BufReader::new(file))?;
            let log = if *k_core > 0 { log.k_core_filter(*k_core) } else { log };
            Ok((log, windows.clone()))
        }
    }
}

fn checkpoint_path(out: &Path, name: &str) -> PathBuf {
    out.join("checkpoints").join(format!("{name}.json"))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Fit one resolved grid point on the training graph.
fn fit_point(
    point: &GridPoint,
    train: &GraphSnapshot,
    validation: &BTreeMap<usize, Vec<usize>>,
) -> lce_core::Result<AnyModel> {
    match &point.model {
        ResolvedModel::Lce(cfg) => {
            LceModel::fit(cfg, train, validation).map(|(m, _)| AnyModel::Lce(m))
        }
        ResolvedModel::LightGcn(cfg) => {
            LightGcnModel::fit(cfg, train, validation).map(|(m, _)| AnyModel::LightGcn(m))
        }
        ResolvedModel::Pop => Ok(AnyModel::Pop(PopularityModel::fit(train))),
        ResolvedModel::Rp3Beta(cfg) => Ok(AnyModel::Rp3Beta(Rp3BetaModel::fit(cfg.clone(), train))),
        ResolvedModel::Als(cfg) => {
            AlsModel::fit(cfg.clone(), train).map(|(m, _)| AnyModel::Als(m))
        }
        ResolvedModel::Slim(cfg) => SlimModel::fit(cfg.clone(), train).map(AnyModel::Slim),
    }
}

/// Refit a checkpointed model's hyperparameters from scratch; the skyline
/// fit procedure. Matches the offline fit exactly, so the skyline's step
/// 0 reproduces the incremental offline record.
fn fit_checkpoint(
    ck: &Checkpoint,
    train: &GraphSnapshot,
    validation: &BTreeMap<usize, Vec<usize>>,
) -> lce_core::Result<AnyModel> {
    match ck {
        Checkpoint::Lce { config, .. } => {
            LceModel::fit(config, train, validation).map(|(m, _)| AnyModel::Lce(m))
        }
        Checkpoint::LightGcn { config, .. } => {
            LightGcnModel::fit(config, train, validation).map(|(m, _)| AnyModel::LightGcn(m))
        }
        Checkpoint::Pop { .. } => Ok(AnyModel::Pop(PopularityModel::fit(train))),
        Checkpoint::Rp3Beta { config } => {
            Ok(AnyModel::Rp3Beta(Rp3BetaModel::fit(config.clone(), train)))
        }
        Checkpoint::Als { config, .. } => {
            AlsModel::fit(config.clone(), train).map(|(m, _)| AnyModel::Als(m))
        }
        Checkpoint::Slim { config, .. } => {
            SlimModel::fit(config.clone(), train).map(AnyModel::Slim)
        }
    }
}

fn read_checkpoint(
    ctx: &Context,
    name: &str,
    log: &InteractionLog,
    graph: &GraphSnapshot,
) -> Result<(CheckpointFile, AnyModel)> {
    let path = checkpoint_path(&ctx.out, name);
    if !path.exists() {
        return Err(CliError::Checkpoint(format!(
            "no checkpoint for model '{name}' at {}; run train first",
            path.display()
        )));
    }
    let file = CheckpointFile::read(&path)?;
    let model = file.bind(log, graph)?;
    Ok((file, model))
}

const SELECTION_KEY: MetricKey = MetricKey { metric: MetricKind::Recall, cutoff: 20 };

fn validation_recall(
    model: &AnyModel,
    train: &GraphSnapshot,
    validation: &BTreeMap<usize, Vec<usize>>,
) -> Result<f64> {
    let vcfg = EvalConfig {
        metrics: vec![MetricKind::Recall],
        cutoffs: vec![20],
        cold_start: ColdStartMode::All,
    };
    let result = evaluate(model, train, validation, &HashSet::new(), &vcfg)?;
    Ok(result.means[&SELECTION_KEY])
}

// ---------------------------------------------------------------------
// train
// ---------------------------------------------------------------------

/// Grid-search each model on validation recall@20, persist the best
/// checkpoint per model, and write one grid.csv row per point.
pub fn cmd_train(ctx: &Context) -> Result<()> {
    let (log, windows) = load_data(&ctx.config)?;
    let schedule = build_replay_schedule(&log, &windows)?;
    let train_graph = schedule.train_graph(&log);
    let validation = schedule.validation_items_by_user(&log);
    let specs = ctx.config.selected(ctx.models.as_deref())?;

    let mut grid = String::from("model,params,validation_recall_at_20\n");
    for spec in specs {
        let points = expand_grid(spec, ctx.config.seed)?;
        if points.len() > 1 && validation.is_empty() {
            return Err(CliError::Config(format!(
                "model '{}': grid search needs a validation split (set validation_fraction > 0)",
                spec.name()
            )));
        }
        let mut best: Option<(f64, AnyModel)> = None;
        for point in &points {
            let model = fit_point(point, &train_graph, &validation)?;
            let recall = if validation.is_empty() {
                f64::NAN
            } else {
                validation_recall(&model, &train_graph, &validation)?
            };
            let _ = writeln!(grid, "{},{},{recall}", spec.name(), point.label);
            // Strict improvement, so earlier points win ties (and a lone
            // NaN point still gets selected).
            if best.as_ref().is_none_or(|(b, _)| recall > *b) {
                best = Some((recall, model));
            }
        }
        let (_, model) = best.expect("grid has at least one point");
        let path = checkpoint_path(&ctx.out, spec.name());
        let dir = path.parent().expect("checkpoint path has a parent");
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        CheckpointFile::new(&log, &model).write(&path)?;
    }
    write_file(&ctx.out.join("grid.csv"), &grid)
}

// ---------------------------------------------------------------------
// replay / skyline
// ---------------------------------------------------------------------

fn append_records(
    metrics: &mut String,
    per_user: &mut String,
    log: &InteractionLog,
    model: &str,
    records: &[StepRecord],
) {
    for r in records {
        for (key, value) in &r.result.means {
            let _ = writeln!(
                metrics,
                "{model},{},{},{},{value},{}",
                r.step, key.metric, key.cutoff, r.result.users_evaluated
            );
        }
        for (&user, vals) in &r.result.per_user {
            for (key, value) in vals {
                let _ = writeln!(
                    per_user,
                    "{model},{},{},{},{},{value}",
                    r.step,
                    key.metric,
                    key.cutoff,
                    log.user_name(user)
                );
            }
        }
    }
}

fn append_curves(curves: &mut String, model: &str, mode: &str, records: &[StepRecord]) {
    for (i, r) in records.iter().enumerate() {
        for (key, value) in &r.result.means {
            let _ = writeln!(curves, "{i},{model},{mode},{key},{value}");
        }
    }
}

/// Stream the chunks through each fitted checkpoint with parameters
/// fixed; with skyline enabled, also retrain from scratch at every step.
pub fn cmd_replay(ctx: &Context, force_skyline: bool) -> Result<()> {
    let (log, windows) = load_data(&ctx.config)?;
    let schedule = build_replay_schedule(&log, &windows)?;
    let train_graph = schedule.train_graph(&log);
    let specs = ctx.config.selected(ctx.models.as_deref())?;
    let skyline_on = force_skyline || ctx.config.skyline;

    let mut metrics = String::from("model,step,metric,N,value,users_evaluated\n");
    let mut curves = String::from("step_index,model,mode,metric,value\n");
    let mut per_user = String::from("model,step,metric,N,user,value\n");

    for spec in &specs {
        let (file, mut model) = read_checkpoint(ctx, spec.name(), &log, &train_graph)?;
        let records = run_replay(&mut model, &log, &schedule, &ctx.config.eval)?;
        append_records(&mut metrics, &mut per_user, &log, spec.name(), &records);
        append_curves(&mut curves, spec.name(), "incremental", &records);
        if skyline_on {
            let ck = file.model.clone();
            let sky = run_skyline(
                &log,
                &schedule,
                windows.validation_fraction,
                |g, val| fit_checkpoint(&ck, g, val),
                &ctx.config.eval,
            )?;
            append_records(&mut metrics, &mut per_user, &log, spec.name(), &sky);
            append_curves(&mut curves, spec.name(), "skyline", &sky);
        }
    }
    write_file(&ctx.out.join("metrics.csv"), &metrics)?;
    write_file(&ctx.out.join("curves.csv"), &curves)?;
    write_file(&ctx.out.join("per_user.csv"), &per_user)
}

// ---------------------------------------------------------------------
// coldstart
// ---------------------------------------------------------------------

/// Replay with the relevant sets restricted to streaming-cold items. The
/// extra column counts relevant items each model could not score at all.
pub fn cmd_coldstart(ctx: &Context) -> Result<()> {
    let (log, windows) = load_data(&ctx.config)?;
    let schedule = build_replay_schedule(&log, &windows)?;
    let train_graph = schedule.train_graph(&log);
    let specs = ctx.config.selected(ctx.models.as_deref())?;
    let eval = EvalConfig { cold_start: ColdStartMode::Only, ..ctx.config.eval.clone() };

    let mut csv =
        String::from("model,step,metric,N,value,users_evaluated,unscoreable_relevant\n");
    for spec in &specs {
        let (_, mut model) = read_checkpoint(ctx, spec.name(), &log, &train_graph)?;
        let records = run_replay(&mut model, &log, &schedule, &eval).map_err(|e| match e {
            CoreError::EmptyEvaluation => CliError::Data(
                "no test-window interaction touches a streaming-cold item".into(),
            ),
            other => other.into(),
        })?;
        for r in &records {
            for (key, value) in &r.result.means {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{value},{},{}",
                    spec.name(),
                    r.step,
                    key.metric,
                    key.cutoff,
                    r.result.users_evaluated,
                    r.result.unscoreable_relevant
                );
            }
        }
    }
    write_file(&ctx.out.join("coldstart.csv"), &csv)
}

// ---------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------

/// Chronological bucket refits with one embedding side frozen at its
/// bucket-1 values; quantifies how stationary that side's geometry is.
pub fn cmd_probe(ctx: &Context) -> Result<()> {
    let (log, _) = load_data(&ctx.config)?;
    let records = stationarity_probe(&log, &ctx.config.probe)?;
    let side = match ctx.config.probe.side_to_fix {
        FixedSide::Users => "users",
        FixedSide::Items => "items",
    };
    let mut csv = String::from("bucket,frozen,metric,N,value,users_evaluated\n");
    for r in &records {
        let frozen = if r.bucket == 1 { "none" } else { side };
        for (key, value) in &r.result.means {
            let _ = writeln!(
                csv,
                "{},{frozen},{},{},{value},{}",
                r.bucket, key.metric, key.cutoff, r.result.users_evaluated
            );
        }
    }
    write_file(&ctx.out.join("probe.csv"), &csv)
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

struct MetricsRow {
    model: String,
    step: String,
    key: String,
    value: f64,
}

fn parse_csv(path: &Path, expected_cols: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != expected_cols {
            return Err(CliError::Data(format!(
                "{} line {}: expected {expected_cols} fields, got {}",
                path.display(),
                i + 1,
                fields.len()
            )));
        }
        rows.push(fields);
    }
    Ok(rows)
}

fn parse_value(path: &Path, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| CliError::Data(format!("{}: bad numeric field '{s}'", path.display())))
}

/// Console summary of a run directory: best model per metric at the last
/// replay step, significance of the first model against the strongest
/// other model, and parameter counts from the stored checkpoints.
pub fn cmd_report(out: &Path) -> Result<()> {
    let mpath = out.join("metrics.csv");
    if !mpath.exists() {
        return Err(CliError::Data(format!(
            "no metrics.csv in {}; run replay first",
            out.display()
        )));
    }
    let mut rows = Vec::new();
    let mut models = Vec::new();
    let mut steps = Vec::new();
    for f in parse_csv(&mpath, 6)? {
        // Skyline rows mirror the incremental ones; the summary ranks
        // the deployed (incremental) trajectories.
        if f[1].starts_with("skyline@") {
            continue;
        }
        if !models.contains(&f[0]) {
            models.push(f[0].clone());
        }
        if !steps.contains(&f[1]) {
            steps.push(f[1].clone());
        }
        let value = parse_value(&mpath, &f[4])?;
        rows.push(MetricsRow {
            model: f[0].clone(),
            step: f[1].clone(),
            key: format!("{}@{}", f[2], f[3]),
            value,
        });
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{} has no metric rows", mpath.display())));
    }
    let final_step = steps.last().expect("nonempty rows imply a step").clone();
    let mut keys: Vec<String> = Vec::new();
    for r in &rows {
        if !keys.contains(&r.key) {
            keys.push(r.key.clone());
        }
    }

    println!("best model per metric at step {final_step}:");
    println!("  {:<16} {:<14} value", "metric", "model");
    for key in &keys {
        let best = rows
            .iter()
            .filter(|r| r.step == final_step && &r.key == key)
            .max_by(|a, b| a.value.total_cmp(&b.value));
        if let Some(r) = best {
            println!("  {:<16} {:<14} {:.6}", key, r.model, r.value);
        }
    }

    report_significance(out, &rows, &models, &final_step, &keys);
    report_param_counts(out, &models)?;
    Ok(())
}

/// Paired t-tests of the first configured model against the strongest of
/// the others, per metric, over the final step's per-user vectors.
fn report_significance(
    out: &Path,
    rows: &[MetricsRow],
    models: &[String],
    final_step: &str,
    keys: &[String],
) {
    println!();
    let ppath = out.join("per_user.csv");
    if !ppath.exists() {
        println!("per_user.csv missing; significance section skipped");
        return;
    }
    let per_user = match parse_csv(&ppath, 6) {
        Ok(rows) => rows,
        Err(e) => {
            println!("per_user.csv unreadable ({e}); significance section skipped");
            return;
        }
    };
    if models.len() < 2 {
        println!("only one model in the run; significance section skipped");
        return;
    }
    let reference = &models[0];
    // (model, metric@N) -> user -> value, final incremental step only.
    let mut vectors: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for f in &per_user {
        if f[1] != final_step {
            continue;
        }
        let Ok(value) = f[5].parse::<f64>() else { continue };
        vectors
            .entry((f[0].clone(), format!("{}@{}", f[2], f[3])))
            .or_default()
            .insert(f[4].clone(), value);
    }

    println!("paired t-tests, {reference} vs best other model (H1: {reference} better):");
    for key in keys {
        let challenger = rows
            .iter()
            .filter(|r| r.step == final_step && &r.key == key && &r.model != reference)
            .max_by(|a, b| a.value.total_cmp(&b.value));
        let Some(challenger) = challenger else { continue };
        let Some(ref_vec) = vectors.get(&(reference.clone(), key.clone())) else {
            println!("  {key:<16} no per-user vector for {reference}; skipped");
            continue;
        };
        let Some(ch_vec) = vectors.get(&(challenger.model.clone(), key.clone())) else {
            println!("  {key:<16} no per-user vector for {}; skipped", challenger.model);
            continue;
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (user, &va) in ref_vec {
            if let Some(&vb) = ch_vec.get(user) {
                a.push(va);
                b.push(vb);
            }
        }
        match paired_t_test(&a, &b, None) {
            Ok(test) => println!(
                "  {key:<16} vs {:<14} t = {:+.4}, p = {:.4} (n = {})",
                challenger.model, test.t, test.p, a.len()
            ),
            Err(CoreError::DegenerateVariance) => println!(
                "  {key:<16} vs {:<14} degenerate variance (identical per-user differences); no p-value",
                challenger.model
            ),
            Err(e) => println!("  {key:<16} vs {:<14} not testable: {e}", challenger.model),
        }
    }
}

fn checkpoint_param_count(ck: &Checkpoint) -> usize {
    match ck {
        Checkpoint::Lce { params, .. } => params.num_parameters(),
        Checkpoint::LightGcn { tables, .. } => tables.num_parameters(),
        Checkpoint::Pop { counts } => counts.len(),
        Checkpoint::Rp3Beta { .. } => 0,
        Checkpoint::Als { users, columns, .. } => {
            users.rows() * users.dim() + columns.rows() * columns.dim()
        }
        Checkpoint::Slim { rows, .. } => rows.iter().map(Vec::len).sum(),
    }
}

fn report_param_counts(out: &Path, models: &[String]) -> Result<()> {
    println!();
    println!("parameter counts:");
    let mut lce_count = None;
    let mut lightgcn_count = None;
    for name in models {
        let path = checkpoint_path(out, name);
        if !path.exists() {
            println!("  {name:<16} checkpoint missing");
            continue;
        }
        let file = CheckpointFile::read(&path)?;
        let count = checkpoint_param_count(&file.model);
        println!("  {:<16} {:<10} {count}", name, file.model.kind());
        match file.model {
            Checkpoint::Lce { .. } => lce_count = lce_count.or(Some(count)),
            Checkpoint::LightGcn { .. } => lightgcn_count = lightgcn_count.or(Some(count)),
            _ => {}
        }
    }
    if let (Some(lce), Some(gcn)) = (lce_count, lightgcn_count) {
        if lce > 0 {
            println!("  lightgcn/lce parameter ratio: {:.2}", gcn as f64 / lce as f64);
        }
    }
    Ok(())
}
