//! Exit codes and outputs of the `differentia` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::server::{bin, write_config, Server};
use differentia::campaign::{CampaignSpec, CampaignStore};
use differentia::hierarchy::Hierarchy;
use differentia::localization::{ImageRecord, LocalizationStrategy};
use differentia::traversal::{AskAnswer, LabelingScheme, TraversalConfig};
use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn fixture_path() -> String {
    concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/musical_instruments.json"
    )
    .to_owned()
}

#[test]
fn validate_fixture_passes_with_two_warnings() {
    let o = run(&["validate", &fixture_path()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("warning[")).count(),
        2
    );
    assert!(text.contains("0 error(s), 2 warning(s)"));

    let o = run(&["--json", "validate", "--hierarchy", &fixture_path()]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["warnings"], 2);
    assert_eq!(v["errors"], 0);
}

#[test]
fn validate_error_cases() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = Hierarchy::musical_instruments().to_document();
    doc.nodes[6].differentia = "With 6 strings".into();
    let collide = write(
        dir.path(),
        "collide.json",
        &serde_json::to_string(&doc).unwrap(),
    );
    let o = run(&["validate", &collide]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("error[sibling-differentia-collision]"));

    let broken = write(dir.path(), "broken.json", "{\"root\": \"1\", \"nodes\": [");
    assert_eq!(run(&["validate", &broken]).status.code(), Some(1));
    assert_eq!(
        run(&["validate", "/does/not/exist.json"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["validate"]).status.code(), Some(2));
}

#[test]
fn simulate_reports_agreement() {
    let o = run(&[
        "simulate",
        "--model",
        "perfect",
        "--annotators",
        "8",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let alpha_line = text.lines().find(|l| l.starts_with("all ")).unwrap();
    assert!(
        alpha_line.contains("Krippendorff's alpha") && alpha_line.ends_with("1.0000"),
        "{text}"
    );
    assert!(text.contains("Acoustic Guitar"));

    let again = run(&[
        "simulate",
        "--model",
        "perfect",
        "--annotators",
        "8",
        "--seed",
        "3",
    ]);
    assert_eq!(o.stdout, again.stdout);
    assert_eq!(
        run(&["simulate", "--model", "noisy:1.5"]).status.code(),
        Some(1)
    );
    assert_eq!(
        run(&["simulate", "--model", "oracle"]).status.code(),
        Some(1)
    );
}

#[test]
fn simulate_knowledge_limited_on_leaves_is_generic_or_correct() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(
        dir.path(),
        "gold.jsonl",
        concat!(
            "{\"task_id\":\"a\",\"label\":\"1_1_1_1\"}\n",
            "{\"task_id\":\"b\",\"label\":\"Electric Guitar\"}\n",
            "{\"task_id\":\"c\",\"label\":\"with 13 Strings\"}\n",
            "{\"task_id\":\"d\",\"label\":\"1_2\"}\n",
            "{\"task_id\":\"e\",\"label\":\"1_3\"}\n",
        ),
    );
    let records = dir.path().join("records.jsonl");
    let o = run(&[
        "--json",
        "simulate",
        "--gold",
        &gold,
        "--model",
        "knowledge_limited:2",
        "--annotators",
        "4",
        "--seed",
        "9",
        "--records-out",
        records.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let counts = &v["audit"]["counts"];
    assert_eq!(
        counts["generic"].as_u64().unwrap() + counts["correct"].as_u64().unwrap(),
        20
    );
    assert_eq!(
        std::fs::read_to_string(records).unwrap().lines().count(),
        20
    );
}

#[test]
fn alpha_command() {
    let dir = tempfile::tempdir().unwrap();
    let agree = write(
        dir.path(),
        "agree.csv",
        "unit,a1,a2\nu1,1_2,1_2\nu2,1_3,1_3\n",
    );
    let o = run(&["alpha", &agree]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1.0000"));

    let disagree = write(dir.path(), "disagree.csv", "unit,a1,a2\nu1,a,b\nu2,b,a\n");
    let o = run(&["alpha", &disagree]);
    assert!(stdout(&o).contains("-0.5000"), "{}", stdout(&o));
    let o = run(&["--json", "alpha", &disagree]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["alpha_exact"], "-1/2");

    let empty = write(dir.path(), "empty.csv", "");
    assert_eq!(run(&["alpha", &empty]).status.code(), Some(1));
    let lonely = write(dir.path(), "lonely.csv", "unit,a1,a2\nu1,a,\n");
    assert_eq!(run(&["alpha", &lonely]).status.code(), Some(1));
    assert_eq!(run(&["alpha", "/missing.csv"]).status.code(), Some(2));
}

#[test]
fn audit_command() {
    let dir = tempfile::tempdir().unwrap();
    let gold = write(
        dir.path(),
        "gold.jsonl",
        "{\"task_id\":\"t1\",\"label\":\"1_1_1_1\"}\n{\"task_id\":\"t2\",\"label\":\"1_3\"}\n",
    );
    let labels = write(
        dir.path(),
        "labels.jsonl",
        "{\"task_id\":\"t1\",\"annotator_id\":\"a\",\"label\":\"1_1_1\"}\n{\"task_id\":\"t2\",\"label\":\"DISCHARGED\"}\n",
    );
    let o = run(&["--json", "audit", "--records", &labels, "--gold", &gold]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["counts"]["generic"], 1);
    assert_eq!(v["counts"]["discharged_vs_gold"], 1);
    assert_eq!(v["counts"]["correct"], 0);

    let all_gold = write(
        dir.path(),
        "all_gold.jsonl",
        "{\"task_id\":\"t1\",\"annotator_id\":\"a\",\"label\":\"1_1_1_1\"}\n\
         {\"task_id\":\"t1\",\"annotator_id\":\"b\",\"label\":\"Acoustic Guitar\"}\n\
         {\"task_id\":\"t2\",\"annotator_id\":\"a\",\"label\":\"1_3\"}\n",
    );
    let o = run(&["--json", "audit", "--records", &all_gold, "--gold", &gold]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["counts"]["correct"], 3);
    let text = stdout(&run(&["audit", "--records", &all_gold, "--gold", &gold]));
    assert!(
        text.contains("Acoustic Guitar") && text.contains("with No Input Jack"),
        "{text}"
    );

    let orphan = write(
        dir.path(),
        "orphan.jsonl",
        "{\"task_id\":\"t9\",\"label\":\"1\"}\n",
    );
    assert_eq!(
        run(&["audit", "--records", &orphan, "--gold", &gold])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn tasks_command_counts_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(
        dir.path(),
        "ds.jsonl",
        concat!(
            "{\"image_id\":\"a\",\"uri\":\"a.jpg\",\"width\":10,\"height\":10}\n",
            "{\"image_id\":\"b\",\"uri\":\"b.jpg\",\"width\":10,\"height\":10,\"regions\":[",
            "{\"region_id\":\"x\",\"polygon\":[[0,0],[4,0],[4,4]]},{\"region_id\":\"y\",\"polygon\":[[5,5],[9,5],[9,9]]}]}\n",
        ),
    );
    for (strategy, n) in [("discard", 1), ("split", 3), ("polygons", 3)] {
        let o = run(&[
            "--json",
            "tasks",
            "--dataset",
            &manifest,
            "--strategy",
            strategy,
        ]);
        assert_eq!(o.status.code(), Some(0));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["tasks"].as_array().unwrap().len(), n, "{strategy}");
    }
    assert_eq!(
        run(&["tasks", "--dataset", &manifest, "--strategy", "crop"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn serve_refuses_an_occupied_port() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&write_config(dir.path(), ""));
    let other = tempfile::tempdir().unwrap();
    let cfg = other.path().join("c.toml");
    std::fs::write(
        &cfg,
        format!("port = {}\ndata_dir = \"d\"\n", server.port()),
    )
    .unwrap();
    let o = run(&["serve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cannot bind"));
    assert_eq!(
        run(&["serve", "--config", "/no/config.toml"]).status.code(),
        Some(2)
    );
}

#[test]
fn serve_refuses_a_corrupt_journal_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    std::fs::create_dir_all(dir.path().join("data")).unwrap();
    std::fs::write(dir.path().join("data/journal.jsonl"), "not json\n").unwrap();
    let o = run(&["serve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("corrupt at line 1") && err.contains("hint:"),
        "{err}"
    );
}

#[test]
fn export_command_reads_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    {
        let h = Hierarchy::musical_instruments();
        let mut s = CampaignStore::open(dir.path().join("data")).unwrap();
        let version = s.register_hierarchy(&h).unwrap();
        s.create_campaign(CampaignSpec {
            campaign_id: "c".into(),
            hierarchy_version: version,
            images: (0..5)
                .map(|i| ImageRecord::new(format!("i{i}"), 8, 8))
                .collect(),
            strategy: LocalizationStrategy::BoundingPolygons,
            labeling_scheme: LabelingScheme::Category,
            traversal: TraversalConfig::default(),
        })
        .unwrap();
        s.open_campaign("c").unwrap();
        for i in 0..5 {
            let sid = s
                .start_session("c", &format!("i{i}"), "a")
                .unwrap()
                .session
                .session_id
                .clone();
            for a in [AskAnswer::Yes, AskAnswer::No, AskAnswer::Yes] {
                s.submit_answer(&sid, a).unwrap();
            }
        }
        let c = cfg.to_str().unwrap();
        assert_eq!(
            run(&["export", "--config", c, "--campaign", "c"])
                .status
                .code(),
            Some(1)
        );
        s.close_campaign("c").unwrap();
    }
    let c = cfg.to_str().unwrap();
    let a = run(&["export", "--config", c, "--campaign", "c", "--seed", "4"]);
    assert_eq!(a.status.code(), Some(0));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 5);
    assert!(text
        .lines()
        .all(|l| l.contains("\"label\":\"Keyboard Instrument\"")));
    assert_eq!(text.matches("\"split\":\"train\"").count(), 4);
    let b = run(&["export", "--config", c, "--campaign", "c", "--seed", "4"]);
    assert_eq!(a.stdout, b.stdout);
    let d = run(&[
        "export",
        "--config",
        c,
        "--campaign",
        "c",
        "--scheme",
        "differentia",
    ]);
    assert!(stdout(&d).contains("\"label\":\"with Keyboard\""));
}
