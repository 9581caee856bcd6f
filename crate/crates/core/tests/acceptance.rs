//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! measured time against a pinned limit; any failure makes the target exit
//! non-zero.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::server::{write_config, Client, Server};
use differentia::agreement::{
    agreement_report, build_reliability, krippendorff_alpha, ReliabilityMatrix,
};
use differentia::hierarchy::{DiagnosticCode, Hierarchy, HierarchyError, Severity};
use differentia::localization::{
    dataset_task_count, expand_dataset, expand_tasks, LocalizationStrategy,
};
use differentia::outcomes::{
    classify_outcome, simulate_label, AnnotatorModel, OutcomeKind, SimulatedAnnotatorModel,
};
use differentia::simulate::{gold_per_node, simulate_records};
use differentia::traversal::{
    classify_with_oracle, path_oracle, run_with_oracle, AskAnswer, TerminalLabel, TraversalConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const ALPHA_TOLERANCE: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
type ModelCase = (
    &'static str,
    fn(u64) -> AnnotatorModel,
    &'static [OutcomeKind],
);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn fixture() -> Hierarchy {
    Hierarchy::musical_instruments()
}

fn fixture_file(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// 1. The path oracle reaches every fixture node; all-no discharges.
fn path_oracle_soundness() -> Outcome {
    let h = fixture();
    let cfg = TraversalConfig::default();
    let mut hits = 0;
    for n in h.nodes() {
        let got = classify_with_oracle(&h, path_oracle(&h, &n.node_id).unwrap(), cfg).unwrap();
        ensure!(
            got.node_id.as_deref() == Some(n.node_id.as_str()),
            "target {} gave {got:?}",
            n.node_id
        );
        hits += 1;
    }
    let none = classify_with_oracle(&h, |_| AskAnswer::No, cfg).unwrap();
    ensure!(none.is_discharged(), "all-no gave {none:?}");
    hits += 1;
    ensure!(hits == 10, "{hits}/10");
    Ok("10/10".into())
}

/// 2. Affirming a node's path and rejecting all its children stops there.
fn get_specific_stop() -> Outcome {
    let h = fixture();
    let mut checked = 0;
    for n in h.nodes() {
        let kids = h.children(&n.node_id).unwrap();
        if kids.is_empty() {
            continue;
        }
        let path: Vec<String> = h
            .path_to(&n.node_id)
            .unwrap()
            .into_iter()
            .map(String::from)
            .collect();
        for rejection in [AskAnswer::No, AskAnswer::Unsure] {
            let s = run_with_oracle(
                &h,
                |id| {
                    if path.iter().any(|p| p == id) {
                        AskAnswer::Yes
                    } else {
                        rejection
                    }
                },
                TraversalConfig::default(),
            )
            .unwrap();
            let got = s.result.clone().unwrap();
            ensure!(
                got.node_id.as_deref() == Some(n.node_id.as_str()),
                "stop at {} gave {got:?}",
                n.node_id
            );
            let asked_children: BTreeSet<&str> = s
                .answer_log
                .iter()
                .filter(|a| {
                    h.node(&a.node_id).unwrap().parent.as_deref() == Some(n.node_id.as_str())
                })
                .map(|a| a.node_id.as_str())
                .collect();
            ensure!(
                asked_children.len() == kids.len(),
                "not every child of {} was asked",
                n.node_id
            );
        }
        checked += 1;
    }
    ensure!(checked == 3, "expected 3 internal nodes, saw {checked}");
    Ok(format!("{checked} internal stop points x {{no, unsure}}"))
}

/// 3. Every (annotated, gold) pair against the parent-walk oracle.
fn outcome_taxonomy() -> Outcome {
    let h = fixture();
    let links = common::parent_links(&h.to_document());
    let mut labels: Vec<TerminalLabel> = h
        .nodes()
        .map(|n| TerminalLabel::node(&h, &n.node_id).unwrap())
        .collect();
    labels.push(TerminalLabel::discharged());
    // The second discharged case comes out of a traversal rather than a constructor.
    labels.push(classify_with_oracle(&h, |_| AskAnswer::No, TraversalConfig::default()).unwrap());
    ensure!(labels.len() == 11, "{} labels", labels.len());
    let mut pairs = 0;
    for a in &labels {
        for g in &labels {
            let got = classify_outcome(&h, a, g).unwrap().as_str();
            let want = common::expected_outcome(&links, a.node_id.as_deref(), g.node_id.as_deref());
            ensure!(got == want, "{a:?} vs {g:?}: {got} != {want}");
            pairs += 1;
        }
    }
    let guitar = TerminalLabel::resolve(&h, "Guitar").unwrap();
    let acoustic = TerminalLabel::resolve(&h, "Acoustic Guitar").unwrap();
    let instrument = TerminalLabel::resolve(&h, "Musical Instrument").unwrap();
    ensure!(
        classify_outcome(&h, &guitar, &acoustic).unwrap() == OutcomeKind::Generic,
        "Guitar vs Acoustic Guitar"
    );
    ensure!(
        classify_outcome(&h, &guitar, &instrument).unwrap() == OutcomeKind::Restricted,
        "Guitar vs Musical Instrument"
    );
    Ok(format!("{pairs} pairs + 2 anchors"))
}

/// 4. Each simulated mistake source lands only in its own outcome classes.
fn simulation_alignment() -> Outcome {
    let h = fixture();
    let nodes: Vec<String> = h.nodes().map(|n| n.node_id.clone()).collect();
    let cases: [ModelCase; 3] = [
        (
            "perfect",
            |_| AnnotatorModel::Perfect,
            &[OutcomeKind::Correct],
        ),
        (
            "knowledge_limited",
            |r| AnnotatorModel::KnowledgeLimited {
                depth_cap: 1 + (r / 9 % 4) as u32,
            },
            &[OutcomeKind::Correct, OutcomeKind::Generic],
        ),
        (
            "partial_view",
            |r| AnnotatorModel::PartialView {
                overshoot: 1 + (r % 3) as u32,
            },
            &[OutcomeKind::Correct, OutcomeKind::Restricted],
        ),
    ];
    let mut summary = Vec::new();
    for (name, model, allowed) in cases {
        let mut seen = BTreeSet::new();
        for run in 0..1000u64 {
            let gold = TerminalLabel::node(&h, &nodes[run as usize % nodes.len()]).unwrap();
            let sim = SimulatedAnnotatorModel::new(model(run), run);
            let got = simulate_label(&h, &gold, &sim).unwrap();
            let kind = classify_outcome(&h, &got, &gold).unwrap();
            ensure!(
                allowed.contains(&kind),
                "{name} run {run}: {kind:?} for gold {:?}",
                gold.node_id
            );
            seen.insert(kind.as_str());
        }
        summary.push(format!(
            "{name} {{{}}}",
            seen.into_iter().collect::<Vec<_>>().join(",")
        ));
    }
    Ok(format!("1000 runs each: {}", summary.join("; ")))
}

/// 5. Alpha: exact anchors, oracle agreement, and degradation under noise.
fn alpha_correctness() -> Outcome {
    let perfect = ReliabilityMatrix::from_rows(&[
        vec![Some("1_2"), Some("1_2"), Some("1_2")],
        vec![Some("1_3"), Some("1_3"), Some("1_3")],
        vec![Some("1_1"), Some("1_1"), None],
    ]);
    let a = krippendorff_alpha(&perfect).unwrap();
    ensure!(a == 1.0, "perfect agreement gave {a}");
    ensure!(
        agreement_report(&perfect).unwrap().alpha_exact == "1/1",
        "perfect exact"
    );

    // Coincidences o_ab = o_ba = 2, n = 4: Do = 1, De = 8/12, alpha = -1/2.
    let opposed =
        ReliabilityMatrix::from_rows(&[vec![Some("a"), Some("b")], vec![Some("b"), Some("a")]]);
    let a = krippendorff_alpha(&opposed).unwrap();
    ensure!(a == -0.5, "2x2 disagreement gave {a}");

    let mut rng = ChaCha8Rng::seed_from_u64(0xA1FA);
    let mut compared = 0;
    let mut worst: f64 = 0.0;
    let mut undefined = 0;
    let mut i = 0;
    while compared < 200 {
        i += 1;
        let rows = common::random_rows(&mut rng, 20, 5, 5);
        let got = krippendorff_alpha(&ReliabilityMatrix::from_rows(&rows)).ok();
        match (got, common::alpha_oracle(&rows)) {
            (Some(x), Some(y)) => {
                worst = worst.max((x - y).abs());
                ensure!(
                    (x - y).abs() < ALPHA_TOLERANCE,
                    "matrix {i}: {x} vs oracle {y}"
                );
                compared += 1;
            }
            (None, None) => undefined += 1,
            (x, y) => return Err(format!("matrix {i}: library {x:?}, oracle {y:?}")),
        }
    }

    let h = fixture();
    let golds = gold_per_node(&h, 2);
    let mut means = Vec::new();
    for eps in [0.0, 0.1, 0.2, 0.4] {
        let mut sum = 0.0;
        for seed in 0..30 {
            let records =
                simulate_records(&h, &golds, AnnotatorModel::Noisy { epsilon: eps }, 5, seed)
                    .unwrap();
            sum += krippendorff_alpha(&build_reliability(&records).unwrap()).unwrap();
        }
        means.push(sum / 30.0);
    }
    ensure!(means[0] == 1.0, "noise-free mean {}", means[0]);
    ensure!(
        means.windows(2).all(|w| w[1] < w[0]),
        "means not decreasing: {means:?}"
    );
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.4}")).collect();
    Ok(format!("{compared} oracle matrices (max diff {worst:.1e}, {undefined} undefined skipped); means {}", shown.join(" > ")))
}

/// 6. The stored matrix renders byte-identically to the stored report.
fn report_fidelity() -> Outcome {
    let h = fixture();
    let csv = std::fs::read(fixture_file("report_matrix.csv")).unwrap();
    let golden = std::fs::read_to_string(fixture_file("report_matrix.txt")).unwrap();
    let m = ReliabilityMatrix::from_csv(csv.as_slice()).unwrap();
    let report =
        differentia::agreement::agreement_report_with(&m, Some(&h), Default::default()).unwrap();
    // By hand: o(1_2,1_2)=3, o(1_3,1_3)=1, o(1_2,1_3)=o(1_3,1_2)=2,
    // o(1_1_1,1_1_1)=3; n=11, Do=4/11, De=78/110, alpha=19/39.
    ensure!(
        report.alpha_exact == "19/39",
        "exact alpha {}",
        report.alpha_exact
    );
    let first = report.render(Some(&h));
    let second = differentia::agreement::agreement_report_with(&m, Some(&h), Default::default())
        .unwrap()
        .render(Some(&h));
    ensure!(first == second, "render differs between runs");
    ensure!(
        first == golden,
        "render differs from stored report:\n{first}"
    );
    ensure!(
        first.contains("0.4872\n"),
        "alpha not printed at four decimals"
    );
    Ok(format!("{} bytes identical, alpha 19/39", first.len()))
}

fn session(c: &Client, task: &str, annotator: &str, answers: &[&str]) -> Result<String, String> {
    let (status, body) = c.post(
        "/sessions",
        json!({"task_id": task, "annotator_id": annotator}),
    );
    ensure!(status == 201, "start {task}: {body}");
    let id = body["session"]["session"]["session_id"]
        .as_str()
        .unwrap()
        .to_owned();
    for a in answers {
        let (status, body) = c.post(&format!("/sessions/{id}/answer"), json!({ "value": a }));
        ensure!(status == 200, "answer {a} on {task}: {body}");
    }
    Ok(id)
}

fn snapshot(c: &Client) -> (Value, Value) {
    let (_, health) = c.get("/health");
    let (_, stats) = c.get("/campaigns/k/stats");
    (health, stats)
}

/// 7. SIGKILL mid-campaign, restart, identical state.
fn persistence_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let server = Server::start(&cfg);
    let c = Client::new(&server.url);
    let images: Vec<Value> = (0..6)
        .map(|i| json!({"image_id": format!("img{i}"), "uri": format!("img{i}.jpg"), "width": 64, "height": 48}))
        .collect();
    let (status, body) = c.post("/campaigns", json!({"campaign_id": "k", "images": images}));
    ensure!(status == 201, "create: {body}");
    c.post_empty("/campaigns/k/open");
    session(&c, "img0", "ann1", &["yes", "yes", "yes", "yes"])?;
    session(&c, "img1", "ann1", &["yes", "no", "yes"])?;
    session(&c, "img2", "ann2", &["no"])?;
    session(&c, "img0", "ann2", &["yes", "yes", "unsure", "no", "no"])?;
    let open = session(&c, "img3", "ann1", &["yes", "yes"])?;
    let before = snapshot(&c);
    server.kill();

    let server = Server::start(&cfg);
    let c = Client::new(&server.url);
    let after = snapshot(&c);
    ensure!(
        before.0["digest"] == after.0["digest"],
        "digest {} vs {}",
        before.0["digest"],
        after.0["digest"]
    );
    ensure!(
        before.0["events"] == after.0["events"],
        "event count changed"
    );
    ensure!(
        before.1 == after.1,
        "stats differ:\n{}\n{}",
        before.1,
        after.1
    );
    let records = after.1["records"].clone();
    ensure!(records == json!(4), "records {records}");
    let (status, q) = c.get(&format!("/sessions/{open}/question"));
    ensure!(
        status == 200 && q.get("question").is_some(),
        "open session not resumable: {q}"
    );
    Ok(format!(
        "digest {} with 4 records",
        &after.0["digest"].as_str().unwrap_or("?")[..12]
    ))
}

/// 8. Task counts agree with expansion on random datasets.
fn localization_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10CA1);
    let mut datasets = 0;
    for strategy in LocalizationStrategy::ALL {
        for d in 0..100 {
            let n = rand::Rng::random_range(&mut rng, 0..25);
            let images: Vec<_> = (0..n)
                .map(|i| common::random_image(&mut rng, i, 4))
                .collect();
            let summed: usize = images
                .iter()
                .map(|img| expand_tasks(img, strategy).unwrap().len())
                .sum();
            let counted = dataset_task_count(&images, strategy);
            ensure!(
                counted == summed,
                "{strategy:?} dataset {d}: {counted} vs {summed}"
            );
            ensure!(
                expand_dataset(&images, strategy).unwrap().len() == summed,
                "{strategy:?} dataset {d}"
            );
            if strategy == LocalizationStrategy::DiscardMoi {
                let single = images.iter().filter(|img| img.regions.len() <= 1).count();
                ensure!(
                    counted == single,
                    "discard dataset {d}: {counted} vs {single}"
                );
            }
            datasets += 1;
        }
    }
    Ok(format!("{datasets} datasets"))
}

/// 9. Fixture warnings, and one mutation per error code.
fn hierarchy_validation() -> Outcome {
    use DiagnosticCode as C;
    let h = fixture();
    let diags = h.validate();
    let mut found: Vec<(Severity, C, Option<String>)> = diags
        .iter()
        .map(|d| (d.severity, d.code, d.node_id.clone()))
        .collect();
    found.sort();
    let expected = vec![
        (
            Severity::Warning,
            C::NotVisuallyCheckable,
            Some("1".to_owned()),
        ),
        (
            Severity::Warning,
            C::ParentEmptyingDifferentia,
            Some("1_1_1_1".to_owned()),
        ),
    ];
    ensure!(found == expected, "fixture diagnostics {found:?}");
    let pair = diags
        .iter()
        .find(|d| d.code == C::ParentEmptyingDifferentia)
        .unwrap();
    ensure!(
        pair.message.contains("1_1_1_2"),
        "negative pair message: {}",
        pair.message
    );

    let base = h.to_document();
    let index = |id: &str| base.nodes.iter().position(|n| n.id == id).unwrap();
    type Mutation = Box<dyn Fn(&mut differentia::hierarchy::HierarchyDocument)>;
    let (g_acoustic, g_electric, g_keys, g_wind, g_root, g_strings) = (
        index("1_1_1_1"),
        index("1_1_1_2"),
        index("1_2"),
        index("1_3"),
        index("1"),
        index("1_1"),
    );
    let mutations: Vec<(C, Mutation)> = vec![
        (
            C::SiblingDifferentiaCollision,
            Box::new(move |d| d.nodes[g_electric].differentia = "  WITH no input JACK ".into()),
        ),
        (
            C::DuplicateSenseId,
            Box::new(move |d| d.nodes[g_wind].sense_id = d.nodes[g_keys].sense_id.clone()),
        ),
        (
            C::EmptySenseId,
            Box::new(move |d| d.nodes[g_keys].sense_id = " ".into()),
        ),
        (
            C::EmptyDifferentia,
            Box::new(move |d| d.nodes[g_wind].differentia = "".into()),
        ),
        (
            C::EmptySynset,
            Box::new(move |d| d.nodes[g_acoustic].synset.clear()),
        ),
        (
            C::DuplicateLemma,
            Box::new(move |d| d.nodes[g_keys].synset = vec!["keyboard".into(), "Keyboard".into()]),
        ),
        (
            C::MissingRootGenus,
            Box::new(move |d| d.nodes[g_root].root_genus_term = None),
        ),
    ];
    let mut tripped = 0;
    for (code, mutate) in &mutations {
        let mut doc = base.clone();
        mutate(&mut doc);
        let m = Hierarchy::from_document(doc).map_err(|e| format!("{code}: {e}"))?;
        let errors: Vec<C> = m
            .validate()
            .iter()
            .filter(|d| d.is_error())
            .map(|d| d.code)
            .collect();
        ensure!(errors == vec![*code], "{code} mutation gave {errors:?}");
        ensure!(!m.is_usable(), "{code} mutation still usable");
        tripped += 1;
    }
    let error_codes = C::ALL
        .iter()
        .filter(|c| c.severity() == Severity::Error)
        .count();
    ensure!(
        tripped == error_codes,
        "{tripped} of {error_codes} error codes covered"
    );

    type Structural = (
        &'static str,
        Box<dyn Fn(&mut differentia::hierarchy::HierarchyDocument)>,
    );
    let structural: Vec<Structural> = vec![
        (
            "duplicate id",
            Box::new(move |d| d.nodes[g_wind].id = "1_2".into()),
        ),
        (
            "dangling parent",
            Box::new(move |d| d.nodes[g_wind].parent = Some("9".into())),
        ),
        (
            "two roots",
            Box::new(move |d| d.nodes[g_wind].parent = None),
        ),
        (
            "cycle",
            Box::new(move |d| d.nodes[g_strings].parent = Some("1_1_1".into())),
        ),
        ("root mismatch", Box::new(|d| d.root = "1_1".into())),
    ];
    for (name, mutate) in &structural {
        let mut doc = base.clone();
        mutate(&mut doc);
        ensure!(Hierarchy::from_document(doc).is_err(), "{name} loaded");
    }
    ensure!(
        matches!(
            Hierarchy::from_json("{\"root\":"),
            Err(HierarchyError::Syntax { .. })
        ),
        "truncated JSON loaded"
    );
    Ok(format!(
        "2 warnings, 0 errors; {tripped} error codes + {} load errors tripped",
        structural.len() + 1
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            1,
            "path-oracle soundness",
            Duration::from_secs(1),
            path_oracle_soundness,
        ),
        (
            2,
            "stop at deepest affirmed node",
            Duration::from_secs(1),
            get_specific_stop,
        ),
        (
            3,
            "outcome taxonomy",
            Duration::from_secs(1),
            outcome_taxonomy,
        ),
        (
            4,
            "simulation/taxonomy alignment",
            Duration::from_secs(10),
            simulation_alignment,
        ),
        (
            5,
            "alpha correctness",
            Duration::from_secs(30),
            alpha_correctness,
        ),
        (
            6,
            "report fidelity",
            Duration::from_secs(1),
            report_fidelity,
        ),
        (
            7,
            "persistence replay",
            Duration::from_secs(10),
            persistence_replay,
        ),
        (
            8,
            "localization arithmetic",
            Duration::from_secs(1),
            localization_arithmetic,
        ),
        (
            9,
            "hierarchy validation",
            Duration::from_secs(1),
            hierarchy_validation,
        ),
    ];
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {n} {name}: PASS ({took:.2?} <= {limit:?}) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({took:.2?}, limit {limit:?}) {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
