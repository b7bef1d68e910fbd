//! Release gate for the command-line pipeline: training, replay, and
//! reporting under a fixed seed must be bit-reproducible. Prints one
//! `ACCEPTANCE <n> <name>: PASS|FAIL` line and enforces a wall-clock
//! budget, matching the library's acceptance suite.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

/// Run one acceptance criterion, print its pass/fail line, and enforce
/// the wall-clock budget.
fn criterion<F>(number: usize, name: &str, budget: Duration, body: F)
where
    F: FnOnce() + std::panic::UnwindSafe,
{
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(body);
    let elapsed = start.elapsed();
    match outcome {
        Ok(()) if elapsed <= budget => {
            println!("ACCEPTANCE {number} {name}: PASS ({elapsed:.2?})");
        }
        Ok(()) => {
            println!("ACCEPTANCE {number} {name}: FAIL ({elapsed:.2?})");
            panic!("criterion {number} exceeded its {budget:?} budget: {elapsed:?}");
        }
        Err(cause) => {
            println!("ACCEPTANCE {number} {name}: FAIL ({elapsed:.2?})");
            std::panic::resume_unwind(cause);
        }
    }
}

fn lce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lce")).args(args).output().expect("spawn lce binary")
}

/// Two-model experiment on a small planted instance: an embedding model
/// with a two-point weight-decay grid, plus the popularity baseline.
const PIPELINE_CONFIG: &str = r#"{
  "data": {
    "format": "planted",
    "config": {
      "users_per_block": 20,
      "warm_items_per_block": 18,
      "cold_items_per_block": 2,
      "interactions_per_user": 12,
      "taste_clusters_per_block": 2,
      "cold_streamed_edges": 4,
      "cold_test_edges": 2,
      "num_chunks": 1
    }
  },
  "models": [
    {
      "kind": "lce",
      "config": {
        "dim": 16,
        "layers": 1,
        "learning_rate": 0.05,
        "max_epochs": 60,
        "patience": 15,
        "seed": 1
      },
      "grid": { "weight_decays": [0.001, 0.0001] }
    },
    { "kind": "pop" }
  ],
  "eval": {
    "metrics": ["recall", "ndcg"],
    "cutoffs": [10, 20],
    "cold_start": "all"
  },
  "seed": 7
}"#;

/// Train, replay, and report into `out`; returns the report's stdout.
fn run_pipeline(cfg: &Path, out: &Path) -> String {
    let cfg = cfg.to_str().unwrap();
    let out = out.to_str().unwrap();
    for verb in ["train", "replay"] {
        let run = lce(&[verb, "--config", cfg, "--out", out]);
        assert!(
            run.status.success(),
            "{verb} failed: {}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    let report = lce(&["report", "--out", out]);
    assert!(
        report.status.success(),
        "report failed: {}",
        String::from_utf8_lossy(&report.stderr)
    );
    String::from_utf8(report.stdout).expect("report output is utf-8")
}

// ---------------------------------------------------------------------
// 9. The full pipeline is bit-reproducible under a fixed seed.
// ---------------------------------------------------------------------

#[test]
fn acceptance_9_pipeline_determinism() {
    criterion(9, "pipeline-determinism", Duration::from_secs(300), || {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("experiment.json");
        fs::write(&cfg, PIPELINE_CONFIG).unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");

        let report_a = run_pipeline(&cfg, &out_a);
        let report_b = run_pipeline(&cfg, &out_b);
        assert!(report_a.contains("best model per metric"), "report summary missing:\n{report_a}");
        assert!(report_a.contains("parameter counts"), "report counts missing:\n{report_a}");
        assert_eq!(report_a, report_b, "report output differs between identically seeded runs");

        for name in ["grid.csv", "metrics.csv", "curves.csv", "per_user.csv"] {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            let data_rows = a.iter().filter(|&&c| c == b'\n').count().saturating_sub(1);
            assert!(data_rows > 0, "{name} holds only its header");
            assert_eq!(a, b, "{name} differs between identically seeded runs");
        }

        // grid.csv: two embedding points plus the gridless baseline.
        let grid = fs::read_to_string(out_a.join("grid.csv")).unwrap();
        assert_eq!(grid.lines().count(), 4, "unexpected grid rows:\n{grid}");
        assert!(grid.contains("lce,weight_decay=0.001,"));
        assert!(grid.contains("lce,weight_decay=0.0001,"));
        assert!(grid.contains("pop,default,"));

        // One checkpoint per model, byte-identical across runs.
        let mut names: Vec<String> = fs::read_dir(out_a.join("checkpoints"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["lce.json", "pop.json"]);
        for name in &names {
            let a = fs::read(out_a.join("checkpoints").join(name)).unwrap();
            let b = fs::read(out_b.join("checkpoints").join(name)).unwrap();
            assert_eq!(a, b, "checkpoint {name} differs between identically seeded runs");
        }
    });
}
