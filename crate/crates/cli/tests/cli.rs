//! Runs the `gnnx` binary end to end on a small generated corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gnnx_core::synth::{two_clusters, TwoClusterSpec};
use tempfile::TempDir;

fn gnnx(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnnx"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// A 60-node tagged corpus and its default-threshold graph.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = two_clusters(&TwoClusterSpec {
            num_nodes: 60,
            seed: 4,
            ..TwoClusterSpec::default()
        })
        .unwrap();
        let mut corpus = data.corpus;
        corpus.nodes[0].text = Some("first record of the fixture".into());
        corpus.save(dir.path().join("corpus.jsonl")).unwrap();
        let f = Fixture { dir };
        let o = gnnx(
            &[
                "build-graph",
                "--corpus",
                "corpus.jsonl",
                "--out",
                "graph.jsonl",
            ],
            f.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        f
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "train",
            "--corpus",
            "corpus.jsonl",
            "--graph",
            "graph.jsonl",
            "--out",
            out,
            "--epochs",
            "15",
        ];
        args.extend_from_slice(extra);
        gnnx(&args, self.path())
    }
}

const SUBCOMMANDS: [(&str, &[&str]); 4] = [
    (
        "build-graph",
        &["--seed", "--config", "--corpus", "--threshold", "--out"],
    ),
    (
        "train",
        &[
            "--seed",
            "--config",
            "--corpus",
            "--graph",
            "--out",
            "--epochs",
            "--learning-rate",
            "--beta1",
            "--beta2",
            "--eps",
            "--hidden-dim",
            "--leaky-slope",
            "--precision",
            "--train-ratio",
            "--val-ratio",
            "--test-ratio",
        ],
    ),
    (
        "eval",
        &[
            "--seed",
            "--config",
            "--corpus",
            "--graph",
            "--checkpoint",
            "--split",
            "--out",
        ],
    ),
    (
        "explain",
        &[
            "--seed",
            "--config",
            "--corpus",
            "--graph",
            "--checkpoint",
            "--node",
            "--format",
            "--epochs",
            "--learning-rate",
            "--top-k",
            "--out",
        ],
    ),
];

#[test]
fn help_documents_every_flag_with_its_default() {
    let dir = tempfile::tempdir().unwrap();
    for (sub, flags) in SUBCOMMANDS {
        let o = gnnx(&[sub, "--help"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        for flag in flags {
            let line = text
                .lines()
                .find(|l| l.trim_start().starts_with(flag))
                .unwrap_or_else(|| panic!("{sub} help lacks {flag}:\n{text}"));
            if *flag != "--node" {
                assert!(
                    line.contains("[default:") || line.contains("[possible values"),
                    "{sub} {flag}: {line}"
                );
            }
        }
    }
    let o = gnnx(&["build-graph", "--help"], dir.path());
    assert!(stdout(&o).contains("[default: 0.725]"));
    let o = gnnx(&["train", "--help"], dir.path());
    assert!(stdout(&o).contains("[default: 200]") && stdout(&o).contains("[default: 0.001]"));
}

#[test]
fn build_graph_prints_stats_and_uses_default_threshold() {
    let f = Fixture::new();
    let o = gnnx(
        &[
            "build-graph",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "g2.jsonl",
        ],
        f.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("threshold   0.725"), "{out}");
    for key in ["nodes", "edges", "degree", "isolated", "components"] {
        assert!(out.contains(key), "{out}");
    }
    let header = fs::read_to_string(f.file("g2.jsonl")).unwrap();
    assert!(header.lines().next().unwrap().contains("0.725"));

    let o = gnnx(
        &[
            "build-graph",
            "--corpus",
            "corpus.jsonl",
            "--out",
            "g3.jsonl",
            "--threshold",
            "0.99",
        ],
        f.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(
        fs::read_to_string(f.file("g3.jsonl"))
            .unwrap()
            .lines()
            .count()
            < header.lines().count()
    );
}

#[test]
fn missing_files_exit_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = gnnx(&["build-graph", "--corpus", "nope.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"), "{}", stderr(&o));
    let o = gnnx(&["train", "--config", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validation_errors_exit_with_config_code() {
    let f = Fixture::new();
    let cases: [&[&str]; 5] = [
        &["build-graph"],
        &[
            "train",
            "--corpus",
            "corpus.jsonl",
            "--graph",
            "graph.jsonl",
            "--epochs",
            "0",
        ],
        &[
            "train",
            "--corpus",
            "corpus.jsonl",
            "--graph",
            "graph.jsonl",
            "--train-ratio",
            "0.9",
        ],
        &["train", "--epochs", "many"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = gnnx(args, f.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    fs::write(f.file("bad.toml"), "[train]\nepoch = 3\n").unwrap();
    let o = gnnx(&["train", "--config", "bad.toml"], f.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));
}

#[test]
fn graph_corpus_mismatch_names_the_missing_ids() {
    let f = Fixture::new();
    let graph = fs::read_to_string(f.file("graph.jsonl")).unwrap();
    let mut lines: Vec<String> = graph.lines().map(String::from).collect();
    lines.push(r#"{"i":"c000","j":"ghost-7","sim":0.9}"#.into());
    fs::write(f.file("bad_graph.jsonl"), lines.join("\n")).unwrap();
    let o = gnnx(
        &[
            "train",
            "--corpus",
            "corpus.jsonl",
            "--graph",
            "bad_graph.jsonl",
        ],
        f.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ghost-7"), "{}", stderr(&o));
}

#[test]
fn train_writes_checkpoint_report_and_config() {
    let f = Fixture::new();
    let o = f.train("run", &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("test accuracy"), "{}", stdout(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.file("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["epochs"], 15);
    assert_eq!(report["train_loss"].as_array().unwrap().len(), 15);
    assert!(f.file("run/checkpoint.jsonl").exists());
    let resolved = fs::read_to_string(f.file("run/config.toml")).unwrap();
    assert!(resolved.contains("epochs = 15"), "{resolved}");
}

#[test]
fn repeated_training_is_byte_identical() {
    let f = Fixture::new();
    for out in ["a", "b"] {
        assert_eq!(f.train(out, &["--seed", "9"]).status.code(), Some(0));
    }
    for file in ["report.json", "checkpoint.jsonl"] {
        let a = fs::read(f.file(&format!("a/{file}"))).unwrap();
        let b = fs::read(f.file(&format!("b/{file}"))).unwrap();
        assert_eq!(a, b, "{file}");
    }
    // the recorded configs differ only in the output directory
    let config = |d: &str| {
        fs::read_to_string(f.file(&format!("{d}/config.toml")))
            .unwrap()
            .replace(&format!("\"{d}\""), "OUT")
    };
    assert_eq!(config("a"), config("b"));
    assert_eq!(f.train("c", &["--seed", "10"]).status.code(), Some(0));
    assert_ne!(
        fs::read(f.file("a/checkpoint.jsonl")).unwrap(),
        fs::read(f.file("c/checkpoint.jsonl")).unwrap()
    );
}

#[test]
fn flags_override_the_config_file() {
    let f = Fixture::new();
    fs::write(
        f.file("run.toml"),
        "seed = 3\n[paths]\ncorpus = \"corpus.jsonl\"\ngraph = \"graph.jsonl\"\nout = \"from_config\"\n[train]\nepochs = 4\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let o = gnnx(&["train", "--config", "run.toml"], f.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(f.file("from_config/report.json")).unwrap();
    assert!(report.contains("\"epochs\": 4"));

    let o = gnnx(
        &[
            "train",
            "--config",
            "run.toml",
            "--epochs",
            "2",
            "--out",
            "from_flag",
        ],
        f.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let resolved = fs::read_to_string(f.file("from_flag/config.toml")).unwrap();
    assert!(
        resolved.contains("epochs = 2")
            && resolved.contains("learning_rate = 0.01")
            && resolved.contains("seed = 3")
    );
}

#[test]
fn eval_reproduces_the_reported_test_metrics() {
    let f = Fixture::new();
    for (out, precision) in [("r64", "f64"), ("r32", "f32")] {
        assert_eq!(
            f.train(out, &["--precision", precision]).status.code(),
            Some(0)
        );
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(f.file(&format!("{out}/report.json"))).unwrap(),
        )
        .unwrap();
        let ckpt = format!("{out}/checkpoint.jsonl");
        let metrics = format!("{out}/metrics.json");
        let o = gnnx(
            &[
                "eval",
                "--corpus",
                "corpus.jsonl",
                "--graph",
                "graph.jsonl",
                "--checkpoint",
                &ckpt,
                "--out",
                &metrics,
            ],
            f.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).starts_with("test: accuracy"));
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(f.file(&metrics)).unwrap()).unwrap();
        assert_eq!(m["accuracy"], report["test_accuracy"], "{precision}");
        assert_eq!(m["macro_f1"], report["test_macro_f1"], "{precision}");
    }
}

#[test]
fn explain_renders_json_and_dot() {
    let f = Fixture::new();
    assert_eq!(f.train("run", &[]).status.code(), Some(0));
    let base = [
        "explain",
        "--corpus",
        "corpus.jsonl",
        "--graph",
        "graph.jsonl",
        "--checkpoint",
        "run/checkpoint.jsonl",
    ];

    let mut args = base.to_vec();
    args.extend(["--node", "c000", "--epochs", "20", "--top-k", "3"]);
    let o = gnnx(&args, f.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["node"], "c000");
    assert!(v["predicted_class"].as_u64().unwrap() < 2);
    let edges = v["edges"].as_array().unwrap();
    assert!(edges.len() <= 3);
    for e in edges {
        assert!(e["i"].is_string() && e["j"].is_string());
        assert!((0.0..=1.0).contains(&e["mask"].as_f64().unwrap()));
    }
    assert_eq!(v["features"].as_array().unwrap().len(), 16);

    let mut args = base.to_vec();
    args.extend([
        "--node", "c000", "--epochs", "20", "--format", "dot", "--out", "expl.dot",
    ]);
    let o = gnnx(&args, f.path());
    assert_eq!(o.status.code(), Some(0));
    let dot = fs::read_to_string(f.file("expl.dot")).unwrap();
    assert!(dot.starts_with("graph explanation {\n") && dot.ends_with("}\n"));
    assert!(dot.contains("shape=doublecircle") && dot.contains("first record of the fixture"));
    for line in dot.lines().skip(1).filter(|l| *l != "}") {
        assert!(line.ends_with(';') || line.ends_with('{'), "{line}");
    }

    let mut args = base.to_vec();
    args.extend(["--node", "nobody"]);
    let o = gnnx(&args, f.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nobody"));
}

#[test]
fn divergence_exits_with_code_three() {
    let f = Fixture::new();
    let o = f.train("boom", &["--learning-rate", "1e300"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("divergence"), "{}", stderr(&o));
}
