use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
    "buys": [
        {"id": "A", "price": 1, "fail_prob": 0.1, "capacity": 1},
        {"id": "B", "price": 2, "fail_prob": 0.5, "capacity": 1}
    ],
    "sells": [{"id": "X", "price": 4, "penalty": 6, "capacity": 1}],
    "edges": [[0, 0], [1, 0]]
}"#;

fn stochmatch(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochmatch"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.json"), TINY).unwrap();
    dir
}

#[test]
fn solve_exact_prints_nine_decimals() {
    let dir = workdir();
    let out = stochmatch(
        dir.path(),
        &[
            "solve",
            "--instance",
            "tiny.json",
            "--method",
            "exact",
            "--out",
            "r.json",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stdout(&out).contains("value: 2.400000000"),
        "{}",
        stdout(&out)
    );

    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(doc["allocation"]["n"], serde_json::json!([1, 0]));
    assert_eq!(doc["allocation"]["m"], serde_json::json!([1]));
    assert_eq!(doc["bound_kind"], "exact");
}

#[test]
fn every_solve_method_reaches_the_tiny_optimum() {
    let dir = workdir();
    for method in ["pairwise", "diversified", "cluster-lower", "cluster-upper"] {
        let out = stochmatch(
            dir.path(),
            &[
                "solve",
                "--instance",
                "tiny.json",
                "--method",
                method,
                "--max-clusters",
                "4",
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{method}");
        assert!(
            stdout(&out).contains("value: 2.400000000"),
            "{method}: {}",
            stdout(&out)
        );
    }
}

#[test]
fn cluster_solve_accepts_probability_modes() {
    let dir = workdir();
    for extra in [
        &["--prob", "ie", "--ie-depth", "2"][..],
        &["--prob", "mc", "--mc-samples", "5000"],
    ] {
        let mut args = vec![
            "solve",
            "--instance",
            "tiny.json",
            "--method",
            "cluster-lower",
            "--reorder",
            "off",
        ];
        args.extend_from_slice(extra);
        let out = stochmatch(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{extra:?}");
        assert!(stdout(&out).contains("bound: lower"));
    }
}

#[test]
fn evaluate_matches_exact_and_brackets_with_seeds() {
    let dir = workdir();
    fs::write(dir.path().join("a.json"), r#"{"n": [1, 0], "m": [1]}"#).unwrap();
    let exact = stochmatch(
        dir.path(),
        &[
            "evaluate",
            "--instance",
            "tiny.json",
            "--allocation",
            "a.json",
        ],
    );
    assert_eq!(stdout(&exact).trim(), "value: 2.400000000");

    fs::write(dir.path().join("seeds.json"), r#"["11", "10", "00"]"#).unwrap();
    let lower = stochmatch(
        dir.path(),
        &[
            "evaluate",
            "--instance",
            "tiny.json",
            "--allocation",
            "a.json",
            "--method",
            "cluster-lower",
            "--seeds",
            "seeds.json",
        ],
    );
    let value: f64 = stdout(&lower)
        .trim()
        .trim_start_matches("value: ")
        .parse()
        .unwrap();
    assert!(value <= 2.4 + 1e-9);
}

#[test]
fn generate_then_solve_round_trips() {
    let dir = workdir();
    let gen = stochmatch(
        dir.path(),
        &[
            "generate",
            "--q",
            "3",
            "--k",
            "2",
            "--density",
            "0.7",
            "--seed",
            "5",
            "--out",
            "g.json",
        ],
    );
    assert_eq!(gen.status.code(), Some(0));
    let a = stochmatch(
        dir.path(),
        &["solve", "--instance", "g.json", "--method", "exact"],
    );
    let b = stochmatch(
        dir.path(),
        &["solve", "--instance", "g.json", "--method", "exact"],
    );
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = workdir();
    fs::write(dir.path().join("bad.json"), r#"{"n": [2, 0], "m": [1]}"#).unwrap();
    let invalid = stochmatch(
        dir.path(),
        &[
            "evaluate",
            "--instance",
            "tiny.json",
            "--allocation",
            "bad.json",
        ],
    );
    assert_eq!(invalid.status.code(), Some(2));

    fs::write(dir.path().join("broken.json"), "{").unwrap();
    let syntax = stochmatch(
        dir.path(),
        &["solve", "--instance", "broken.json", "--method", "exact"],
    );
    assert_eq!(syntax.status.code(), Some(2));

    let usage = stochmatch(
        dir.path(),
        &["solve", "--instance", "tiny.json", "--method", "nope"],
    );
    assert_eq!(usage.status.code(), Some(2));

    stochmatch(
        dir.path(),
        &["generate", "--q", "20", "--k", "2", "--out", "big.json"],
    );
    let limit = stochmatch(
        dir.path(),
        &["solve", "--instance", "big.json", "--method", "exact"],
    );
    assert_eq!(limit.status.code(), Some(3));
}

#[test]
fn experiment_writes_deterministic_csv() {
    let dir = workdir();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"instance": {"file": "tiny.json"},
            "methods": ["exact", "pairwise", "diversified", {"cluster": {}}],
            "trials": 2, "max_clusters": 4, "rng_seed": 3}"#,
    )
    .unwrap();
    let strip = |p: &str| -> Vec<String> {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    for out in ["one.csv", "two.csv"] {
        let run = stochmatch(
            dir.path(),
            &["experiment", "--config", "cfg.json", "--out", out],
        );
        assert_eq!(run.status.code(), Some(0));
    }
    let rows = strip("one.csv");
    assert_eq!(rows, strip("two.csv"));
    assert_eq!(rows[0], "trial,variant,clusters,value,bound_kind");
    assert!(rows.contains(&"-1,exact,-1,2.400000000,exact".to_string()));
    assert!(rows.contains(&"-1,diversified,-1,2.400000000,exact".to_string()));
}

#[test]
fn experiment_without_output_is_rejected() {
    let dir = workdir();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"instance": {"file": "tiny.json"}, "methods": ["exact"]}"#,
    )
    .unwrap();
    let run = stochmatch(dir.path(), &["experiment", "--config", "cfg.json"]);
    assert_eq!(run.status.code(), Some(2));
}
