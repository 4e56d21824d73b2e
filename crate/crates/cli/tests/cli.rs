//! Command-line contract tests: exit codes, output schemas, determinism,
//! and no-partial-output behavior, driving the real binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drugtrace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn assert_fails_with_diagnostic(out: &Output) {
    assert!(!out.status.success(), "command unexpectedly succeeded");
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr was: {stderr}");
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

struct Workspace {
    #[allow(dead_code)]
    dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        Self { dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    /// Small corpus shared by most tests.
    fn synth_small(&self) -> (String, String, String) {
        let config = r#"{
            "seed": 7,
            "n_accounts": 24,
            "posts_per_account_min": 4,
            "posts_per_account_max": 8,
            "web_posts_per_class": 6
        }"#;
        std::fs::write(self.path("synth.json"), config).unwrap();
        let out = run(&[
            "synth",
            "--config",
            &self.arg("synth.json"),
            "--out",
            &self.arg("corpus"),
        ]);
        assert_ok(&out);
        (
            self.arg("corpus/posts.jsonl"),
            self.arg("corpus/accounts.jsonl"),
            self.arg("corpus/blacklist.txt"),
        )
    }

    fn train_small_bundle(&self, posts: &str) -> String {
        let bundle = self.arg("bundle.json");
        let out = run(&[
            "train-post",
            "--posts",
            posts,
            "--out",
            &bundle,
            "--epochs",
            "3",
            "--hidden",
            "6",
            "--seed",
            "1",
        ]);
        assert_ok(&out);
        bundle
    }
}

#[test]
fn synth_writes_expected_files_and_counts() {
    let ws = Workspace::new();
    let (posts, accounts, blacklist) = ws.synth_small();
    let account_lines = read(Path::new(&accounts)).lines().count();
    assert_eq!(account_lines, 24);
    let post_lines = read(Path::new(&posts)).lines().count();
    assert!(post_lines >= 24 * 4 + 18, "only {post_lines} posts");
    assert!(read(Path::new(&blacklist)).lines().any(|l| !l.starts_with('#')));
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let ws = Workspace::new();
    ws.synth_small();
    let first_posts = read(&ws.path("corpus/posts.jsonl"));
    let first_accounts = read(&ws.path("corpus/accounts.jsonl"));
    let out = run(&[
        "synth",
        "--config",
        &ws.arg("synth.json"),
        "--out",
        &ws.arg("corpus2"),
    ]);
    assert_ok(&out);
    assert_eq!(read(&ws.path("corpus2/posts.jsonl")), first_posts);
    assert_eq!(read(&ws.path("corpus2/accounts.jsonl")), first_accounts);
}

#[test]
fn synth_missing_config_file_fails_cleanly() {
    let ws = Workspace::new();
    let out = run(&[
        "synth",
        "--config",
        &ws.arg("nope.json"),
        "--out",
        &ws.arg("corpus"),
    ]);
    assert_fails_with_diagnostic(&out);
}

#[test]
fn train_post_is_deterministic_and_schema_valid() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    let bundle = ws.train_small_bundle(&posts);
    let first = read(Path::new(&bundle));

    let parsed: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(parsed["format_version"], 1);
    for section in ["tfidf", "nb", "mlp", "fusion"] {
        assert!(!parsed[section].is_null(), "missing section {section}");
    }
    assert!(parsed["normalizer"].is_null());

    let out = run(&[
        "train-post",
        "--posts",
        &posts,
        "--out",
        &ws.arg("bundle_again.json"),
        "--epochs",
        "3",
        "--hidden",
        "6",
        "--seed",
        "1",
    ]);
    assert_ok(&out);
    assert_eq!(read(&ws.path("bundle_again.json")), first);
}

#[test]
fn train_post_zero_epochs_writes_untrained_bundle() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    let out = run(&[
        "train-post",
        "--posts",
        &posts,
        "--out",
        &ws.arg("untrained.json"),
        "--epochs",
        "0",
        "--hidden",
        "6",
    ]);
    assert_ok(&out);
    let parsed: serde_json::Value =
        serde_json::from_str(&read(&ws.path("untrained.json"))).unwrap();
    assert_eq!(parsed["mlp"]["config"]["epochs"], 0);
}

#[test]
fn train_post_unlabeled_corpus_fails_without_partial_output() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    // Strip every label.
    let unlabeled: String = read(Path::new(&posts))
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["label"] = serde_json::Value::Null;
            format!("{v}\n")
        })
        .collect();
    std::fs::write(ws.path("unlabeled.jsonl"), unlabeled).unwrap();
    let out = run(&[
        "train-post",
        "--posts",
        &ws.arg("unlabeled.jsonl"),
        "--out",
        &ws.arg("nope_bundle.json"),
        "--epochs",
        "1",
    ]);
    assert_fails_with_diagnostic(&out);
    assert!(!ws.path("nope_bundle.json").exists(), "partial output left behind");
}

#[test]
fn classify_posts_covers_every_post_and_is_stable() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    let bundle = ws.train_small_bundle(&posts);
    for name in ["preds.jsonl", "preds2.jsonl"] {
        let out = run(&[
            "classify-posts",
            "--bundle",
            &bundle,
            "--posts",
            &posts,
            "--out",
            &ws.arg(name),
        ]);
        assert_ok(&out);
    }
    let preds = read(&ws.path("preds.jsonl"));
    assert_eq!(preds, read(&ws.path("preds2.jsonl")));
    assert_eq!(
        preds.lines().count(),
        read(Path::new(&posts)).lines().count()
    );
    let first: serde_json::Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    for key in ["post_id", "p_image", "p_text", "p_fused", "decision"] {
        assert!(first.get(key).is_some(), "prediction missing {key}");
    }
}

#[test]
fn classify_posts_missing_bundle_fails() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    let out = run(&[
        "classify-posts",
        "--bundle",
        &ws.arg("missing.json"),
        "--posts",
        &posts,
        "--out",
        &ws.arg("preds.jsonl"),
    ]);
    assert_fails_with_diagnostic(&out);
    assert!(!ws.path("preds.jsonl").exists());
}

fn extract_small(ws: &Workspace) -> (String, String, String) {
    let (posts, accounts, blacklist) = ws.synth_small();
    let bundle = ws.train_small_bundle(&posts);
    assert_ok(&run(&[
        "classify-posts",
        "--bundle",
        &bundle,
        "--posts",
        &posts,
        "--out",
        &ws.arg("preds.jsonl"),
    ]));
    assert_ok(&run(&[
        "extract-accounts",
        "--accounts",
        &accounts,
        "--predictions",
        &ws.arg("preds.jsonl"),
        "--blacklist",
        &blacklist,
        "--out",
        &ws.arg("features.csv"),
    ]));
    (ws.arg("features.csv"), accounts, bundle)
}

#[test]
fn extract_accounts_emits_fixed_header_one_row_per_account() {
    let ws = Workspace::new();
    let (features, accounts, _) = extract_small(&ws);
    let content = read(Path::new(&features));
    let mut lines = content.lines();
    assert_eq!(
        lines.next().unwrap(),
        "account_id,P,H1,H2,H3,H4,R1,R2,R3,E"
    );
    assert_eq!(lines.count(), read(Path::new(&accounts)).lines().count());
}

#[test]
fn extract_accounts_empty_blacklist_fails() {
    let ws = Workspace::new();
    let (posts, accounts, _) = ws.synth_small();
    let bundle = ws.train_small_bundle(&posts);
    assert_ok(&run(&[
        "classify-posts",
        "--bundle",
        &bundle,
        "--posts",
        &posts,
        "--out",
        &ws.arg("preds.jsonl"),
    ]));
    std::fs::write(ws.path("empty.txt"), "# nothing\n").unwrap();
    let out = run(&[
        "extract-accounts",
        "--accounts",
        &accounts,
        "--predictions",
        &ws.arg("preds.jsonl"),
        "--blacklist",
        &ws.arg("empty.txt"),
        "--out",
        &ws.arg("features.csv"),
    ]);
    assert_fails_with_diagnostic(&out);
    assert!(!ws.path("features.csv").exists());
}

#[test]
fn train_dealer_then_detect_flags_high_probability_accounts() {
    let ws = Workspace::new();
    let (features, accounts, bundle) = extract_small(&ws);
    assert_ok(&run(&[
        "train-dealer",
        "--features",
        &features,
        "--accounts",
        &accounts,
        "--labels",
        "exp1",
        "--bundle",
        &bundle,
        "--out",
        &ws.arg("full_bundle.json"),
        "--select",
    ]));
    let parsed: serde_json::Value =
        serde_json::from_str(&read(&ws.path("full_bundle.json"))).unwrap();
    for section in ["tfidf", "nb", "mlp", "fusion", "normalizer", "dealer_lr"] {
        assert!(!parsed[section].is_null(), "missing section {section}");
    }
    assert_ok(&run(&[
        "detect-dealers",
        "--bundle",
        &ws.arg("full_bundle.json"),
        "--features",
        &features,
        "--out",
        &ws.arg("flagged.csv"),
    ]));
    let flagged = read(&ws.path("flagged.csv"));
    let mut lines = flagged.lines();
    assert_eq!(lines.next().unwrap(), "account_id,probability");
    for line in lines {
        let prob: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(prob >= 0.5, "flagged below threshold: {line}");
    }
}

#[test]
fn train_dealer_rerun_is_byte_identical() {
    let ws = Workspace::new();
    let (features, accounts, _) = extract_small(&ws);
    for name in ["d1.json", "d2.json"] {
        assert_ok(&run(&[
            "train-dealer",
            "--features",
            &features,
            "--accounts",
            &accounts,
            "--labels",
            "exp1",
            "--out",
            &ws.arg(name),
        ]));
    }
    assert_eq!(read(&ws.path("d1.json")), read(&ws.path("d2.json")));
}

#[test]
fn train_dealer_huge_lambda_degenerates_gracefully() {
    let ws = Workspace::new();
    let (features, accounts, _) = extract_small(&ws);
    assert_ok(&run(&[
        "train-dealer",
        "--features",
        &features,
        "--accounts",
        &accounts,
        "--labels",
        "exp1",
        "--lambda",
        "1000",
        "--out",
        &ws.arg("huge.json"),
    ]));
    assert_ok(&run(&[
        "detect-dealers",
        "--bundle",
        &ws.arg("huge.json"),
        "--features",
        &features,
        "--out",
        &ws.arg("flagged.csv"),
    ]));
    // All weights zeroed: output driven by the prior alone; with 10%
    // dealers nothing reaches 0.5.
    let flagged = read(&ws.path("flagged.csv"));
    assert_eq!(flagged.lines().count(), 1, "{flagged}");
}

#[test]
fn train_dealer_unknown_expert_lists_available_ids() {
    let ws = Workspace::new();
    let (features, accounts, _) = extract_small(&ws);
    let out = run(&[
        "train-dealer",
        "--features",
        &features,
        "--accounts",
        &accounts,
        "--labels",
        "nobody",
        "--out",
        &ws.arg("d.json"),
    ]);
    assert_fails_with_diagnostic(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("exp1") && stderr.contains("exp2"), "{stderr}");
}

#[test]
fn evaluate_posts_emits_table_one_row_set() {
    let ws = Workspace::new();
    let (posts, _, _) = ws.synth_small();
    assert_ok(&run(&[
        "evaluate",
        "--mode",
        "posts",
        "--posts",
        &posts,
        "--k",
        "3",
        "--seed",
        "2",
        "--epochs",
        "2",
        "--hidden",
        "6",
        "--out",
        &ws.arg("posts_report.csv"),
    ]));
    let report = read(&ws.path("posts_report.csv"));
    assert!(report.starts_with("method,expert,fold,accuracy,precision,recall,f1,auc\n"));
    for method in ["mlp", "mt_mlp", "tags_only", "caption_only", "combined", "late_fusion"] {
        assert!(
            report.lines().any(|l| l.starts_with(&format!("{method},,mean,"))),
            "missing mean row for {method}"
        );
        assert_eq!(
            report
                .lines()
                .filter(|l| l.starts_with(&format!("{method},,")))
                .count(),
            4,
            "expected 3 fold rows + mean for {method}"
        );
    }
}

#[test]
fn evaluate_dealers_emits_table_two_row_set() {
    let ws = Workspace::new();
    let (posts, accounts, blacklist) = ws.synth_small();
    assert_ok(&run(&[
        "evaluate",
        "--mode",
        "dealers",
        "--accounts",
        &accounts,
        "--posts",
        &posts,
        "--blacklist",
        &blacklist,
        "--experts",
        "exp1,exp2",
        "--k",
        "3",
        "--seed",
        "2",
        "--epochs",
        "2",
        "--hidden",
        "6",
        "--out",
        &ws.arg("dealers_report.csv"),
    ]));
    let report = read(&ws.path("dealers_report.csv"));
    for (method, expert) in [
        ("lr", "exp1"),
        ("lr", "exp2"),
        ("lr_select", "exp1"),
        ("lr_select", "exp2"),
    ] {
        assert!(
            report
                .lines()
                .any(|l| l.starts_with(&format!("{method},{expert},mean,"))),
            "missing mean row for {method}/{expert}: {report}"
        );
    }
}

#[test]
fn report_renders_four_svg_panels() {
    let ws = Workspace::new();
    let (features, accounts, _) = extract_small(&ws);
    assert_ok(&run(&[
        "report",
        "--features",
        &features,
        "--accounts",
        &accounts,
        "--expert",
        "exp1",
        "--out",
        &ws.arg("panels"),
    ]));
    for panel in ["percentage.svg", "hours.svg", "relational.svg", "transaction.svg"] {
        let svg = read(&ws.path("panels").join(panel));
        assert!(svg.starts_with("<svg"), "{panel} is not svg");
        assert!(svg.contains("dealers"));
    }
}
