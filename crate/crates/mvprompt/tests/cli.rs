//! End-to-end checks of the command-line binary: exit codes, output files,
//! and the stdout contract of every subcommand.

use std::path::Path;
use std::process::{Command, Output};

use mvprompt::report::RunReport;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mvprompt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "samples": 80, "views": 2, "dims": [5, 3], "classes": 4,
            "labels_per_sample": 1.5, "cluster_separation": 2.5
        }},
        "sessions": 2,
        "c_base": 2,
        "missing_rate": 0.2,
        "d": 8,
        "k": 2,
        "layers": 1,
        "heads": 1,
        "epochs": 2,
        "patience": 1,
        "batch": 16,
        "seeds": [7]
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn write_synth_spec(dir: &Path) -> std::path::PathBuf {
    let spec = serde_json::json!({
        "samples": 30, "views": 3, "dims": [4, 2, 3], "classes": 5,
        "labels_per_sample": 1.5, "cluster_separation": 2.0
    });
    let path = dir.join("spec.json");
    std::fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    path
}

/// Every byte of every regular file under `dir`, keyed by relative path.
fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn missing_config_exits_2_and_names_the_path() {
    for sub in ["train", "params", "gradcheck"] {
        let out = run(&[sub, "/definitely/not/here.json"]);
        assert_eq!(out.status.code(), Some(2), "{sub}: {}", stderr(&out));
        assert!(
            stderr(&out).contains("/definitely/not/here.json"),
            "{sub} stderr should name the missing file: {}",
            stderr(&out)
        );
    }
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = run(&["train", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn gen_data_is_byte_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_synth_spec(dir.path());
    let spec = spec.to_str().unwrap();

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (target, seed) in [(&out_a, "3"), (&out_b, "3"), (&out_c, "4")] {
        let out = run(&[
            "gen-data",
            "--spec",
            spec,
            "--out",
            target.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("30 samples"));
        assert!(target.join("manifest.json").exists());
    }
    assert_eq!(
        dir_contents(&out_a),
        dir_contents(&out_b),
        "same seed must write identical bytes"
    );
    assert_ne!(
        dir_contents(&out_a),
        dir_contents(&out_c),
        "different seeds must write different data"
    );
}

#[test]
fn gen_data_csv_format_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_synth_spec(dir.path());
    let data_dir = dir.path().join("csv");
    let out = run(&[
        "gen-data",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        data_dir.to_str().unwrap(),
        "--seed",
        "5",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let loaded = mvprompt::data::load_dataset(&data_dir.join("manifest.json")).unwrap();
    assert_eq!(loaded.num_samples(), 30);
    assert_eq!(loaded.n_views(), 3);
    assert_eq!(loaded.num_classes(), 5);
}

#[test]
fn params_prints_the_accounting_table() {
    let dir = tempfile::tempdir().unwrap();
    // Defaults: d=128, k=4, rank=2.
    let config = serde_json::json!({
        "dataset": {"synthetic": {
            "samples": 30, "views": 6, "dims": [4], "classes": 4,
            "labels_per_sample": 1.0, "cluster_separation": 2.0
        }},
        "sessions": 1, "c_base": 4, "seeds": [0]
    });
    let path = dir.path().join("config.json");
    std::fs::write(&path, serde_json::to_string(&config).unwrap()).unwrap();

    let out = run(&["params", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("d=128, k=4, R=2"), "{text}");
    let n6 = text
        .lines()
        .find(|l| l.starts_with("n=6"))
        .expect("table has an n=6 row");
    for cell in [
        "dense=8192",
        "per-view=768",
        "cross-modal=472",
        "tt-bound=608",
        "tt-exact=564",
    ] {
        assert!(n6.contains(cell), "n=6 row missing {cell}: {n6}");
    }
    assert!(text.contains("tt-exact +8"), "{text}");
    // One row per n in the default 2..=8 range.
    for n in 2..=8 {
        assert!(text.contains(&format!("n={n}  ")), "missing n={n} row");
    }
}

#[test]
fn train_writes_report_and_checkpoint_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");

    let mut first_stdout = String::new();
    for target in [&out_a, &out_b] {
        let out = run(&[
            "train",
            config.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = stdout(&out);
        assert!(
            text.contains("sessions=2 seeds=1 average_map="),
            "unexpected train summary: {text}"
        );
        assert!(text.contains("last_map="));
        assert!(target.join("report.json").exists());
        assert!(target.join("checkpoint.ckpt").exists());
        first_stdout = text;
    }
    // Everything except wall-clock timing must reproduce.
    let report_a = RunReport::read(&out_a.join("report.json")).unwrap();
    let report_b = RunReport::read(&out_b.join("report.json")).unwrap();
    assert_eq!(report_a.canonical_json(), report_b.canonical_json());
    assert_eq!(report_a.seeds.len(), 1);
    assert_eq!(report_a.seeds[0].sessions.len(), 2);

    // The summary line quotes the aggregate mAP to four decimals.
    let expected = format!("last_map={:.4}", report_a.aggregate.last_map.mean);
    assert!(first_stdout.contains(&expected), "{first_stdout}");
}

#[test]
fn eval_reproduces_the_trained_metrics_from_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let run_dir = dir.path().join("run");
    let out = run(&[
        "train",
        config.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let ckpt = run_dir.join("checkpoint.ckpt");
    let out = run(&["eval", "--checkpoint", ckpt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let payload: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();

    let report = RunReport::read(&run_dir.join("report.json")).unwrap();
    let trained = &report.seeds[0];
    assert_eq!(payload["seed"].as_u64(), Some(trained.seed));
    assert_eq!(
        payload["sessions"].as_array().map(Vec::len),
        Some(trained.sessions.len())
    );
    // The checkpoint holds the first seed's final model, so re-evaluation
    // must land on exactly the metrics the report recorded.
    for (s, trained_session) in payload["sessions"]
        .as_array()
        .unwrap()
        .iter()
        .zip(&trained.sessions)
    {
        assert_eq!(s["map"].as_f64(), Some(trained_session.map));
        assert_eq!(s["cf1"].as_f64(), Some(trained_session.cf1));
        assert_eq!(s["of1"].as_f64(), Some(trained_session.of1));
    }
    assert_eq!(payload["last_map"].as_f64(), Some(trained.last_map));
    assert!(payload["config_hash"].is_string());

    // --out writes the same payload to a file instead of stdout.
    let eval_path = dir.path().join("eval.json");
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let from_file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_path).unwrap()).unwrap();
    assert_eq!(from_file, payload);
}

#[test]
fn eval_rejects_a_missing_checkpoint() {
    let out = run(&["eval", "--checkpoint", "/no/such/file.ckpt"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn gradcheck_reports_every_block_as_pass() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let out = run(&["gradcheck", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(!text.contains("FAIL"), "{text}");
    let passes = text.lines().filter(|l| l.starts_with("PASS")).count();
    assert!(passes >= 8, "expected one PASS line per block: {text}");
    assert!(text.contains("blocks pass"), "{text}");
    for family in ["bank.basis", "bank.core0", "encoder0", "task0.prompt"] {
        assert!(text.contains(family), "missing {family} in: {text}");
    }
}

#[test]
fn sweep_prints_one_line_per_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_tiny_config(dir.path());
    let sweep_path = dir.path().join("sweep.json");
    let out = run(&[
        "sweep",
        config.to_str().unwrap(),
        "--k-grid",
        "1,2",
        "--rank-grid",
        "1,2",
        "--out",
        sweep_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    for (k, rank) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
        let prefix = format!("k={k} rank={rank}  last_map=");
        assert!(
            text.lines().any(|l| l.starts_with(&prefix)),
            "missing cell {prefix}: {text}"
        );
    }
    assert!(text.contains("bank_params="));

    let payload: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sweep_path).unwrap()).unwrap();
    let cells = payload["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 4);
    for cell in cells {
        assert!(cell["last_map"].as_f64().unwrap().is_finite());
        assert!(cell["bank_params"].as_u64().unwrap() > 0);
    }
    // Bank storage must grow monotonically with both grid axes.
    let params_at = |k: u64, rank: u64| {
        cells
            .iter()
            .find(|c| c["k"].as_u64() == Some(k) && c["rank"].as_u64() == Some(rank))
            .unwrap()["bank_params"]
            .as_u64()
            .unwrap()
    };
    assert!(params_at(2, 1) > params_at(1, 1));
    assert!(params_at(1, 2) > params_at(1, 1));
    assert!(params_at(2, 2) > params_at(2, 1));
}

#[test]
fn help_lists_every_subcommand() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for sub in ["gen-data", "train", "eval", "params", "gradcheck", "sweep"] {
        assert!(text.contains(sub), "help missing {sub}: {text}");
    }
}
