//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so every line reaches the output; the
//! process exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use finegrain::config::KeyValues;
use finegrain::dataset::{generate_synthetic, split_by_prompt, Split, SyntheticSpec};
use finegrain::eval::{annotation_cost, mean_auc_by_model, roc_auc, run_sweep_with_jobs, CostModel, SweepSpec};
use finegrain::model::{
    aggregator, coarse_labels_of, load_model, model_from_str, model_to_string, train_cbm, MlpConfig, MlpModel,
    ModelKind,
};
use finegrain::oracles::{categorize_question, normalize_yes_no, AlignmentCategory, YesNoScores};
use finegrain::sxs::{
    chosen_model, ingest_sxs, read_sxs_log, report_to_string, side_of, AnnotationPlan, AnnotationService,
    AssignmentView, Choice, Side, SxSReport,
};
use finegrain::targets::{attach_tree_labels, DecisionTree, DEFAULT_TREE_ATTRIBUTES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

// 1 ---------------------------------------------------------------------------

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let nets = 120;
    for net in 0..nets {
        let input_dim = rng.random_range(1..=8);
        let hidden: Vec<usize> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(1..=8)).collect();
        let heads = rng.random_range(1..=3);
        let config = MlpConfig { hidden_dims: hidden, seed: net, ..MlpConfig::new(input_dim, heads) };
        let mut model = MlpModel::init(config.clone()).unwrap();
        // Nonzero biases so every parameter is exercised.
        for p in model.parameters_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..heads).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let analytic = model.gradient(&x, &y).unwrap();
        let params = model.parameters().to_vec();
        for (i, &g) in analytic.as_slice().iter().enumerate() {
            let mut plus = params.clone();
            plus[i] += h;
            let mut minus = params.clone();
            minus[i] -= h;
            let lp = MlpModel::from_parameters(config.clone(), plus).unwrap().loss(&x, &y).unwrap();
            let lm = MlpModel::from_parameters(config.clone(), minus).unwrap().loss(&x, &y).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            // Floor the scale so exactly-zero gradients compare absolutely.
            let rel = (g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 10.0,
        format!("{nets} nets, {checked} parameters, max relative error {worst:.2e}, {secs:.2}s"),
    )
}

// 2 ---------------------------------------------------------------------------

fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let fixed = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut instances = 0;
    let mut with_ties = 0;
    let mut worst: f64 = 0.0;
    while instances < 1500 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(1..=n.max(2));
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / 7.0).collect();
        let p = rng.random_range(0.05..0.95);
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            continue;
        }
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            with_ties += 1;
        }
        worst = worst.max((roc_auc(&scores, &labels).unwrap() - brute_force_auc(&scores, &labels)).abs());
        instances += 1;
    }
    check(
        worst <= 1e-12 && fixed == 0.75 && with_ties > 0,
        format!("{instances} instances ({with_ties} with ties), max |diff| {worst:.1e}, fixed example {fixed}"),
    )
}

// 3 ---------------------------------------------------------------------------

/// Default architecture and schedule; input and head counts are filled in per model.
fn default_mlp() -> MlpConfig {
    MlpConfig::new(1, 1)
}

fn tree_realizability() -> Outcome {
    let start = Instant::now();
    let (ds, fb) = generate_synthetic(&SyntheticSpec::balanced(2000, 16, 9, 0.0, 3)).unwrap();
    let ds = split_by_prompt(&ds, (0.5, 0.25, 0.25), 3).unwrap();
    let fb = attach_tree_labels(&ds, &DecisionTree::default_tree(), &fb).unwrap();
    let coarse = coarse_labels_of(&fb);
    let tree_attrs = strings(&DEFAULT_TREE_ATTRIBUTES);

    let test = ds.examples_in(Split::Test);
    let xs: Vec<Vec<f64>> = test.iter().map(|e| e.features()).collect();
    let ys: Vec<bool> = test.iter().map(|e| coarse[&e.example_id]).collect();
    let cbm = train_cbm(&ds, &fb, &tree_attrs, &default_mlp()).unwrap();
    let auc = roc_auc(&cbm.score_many(&xs).unwrap(), &ys).unwrap();

    let truth = |ids: &[&finegrain::dataset::Example]| -> Vec<Vec<f64>> {
        ids.iter()
            .map(|e| tree_attrs.iter().map(|a| f64::from(fb[&e.example_id].attribute_labels[a] as u8)).collect())
            .collect()
    };
    let train = ds.examples_in(Split::Train);
    let train_y: Vec<bool> = train.iter().map(|e| coarse[&e.example_id]).collect();
    let fit = aggregator::train(&truth(&train), &train_y).unwrap();
    let wrong = truth(&test)
        .iter()
        .zip(&ys)
        .filter(|(f, &y)| (fit.aggregator.predict(f) > 0.5) != y)
        .count();
    let secs = start.elapsed().as_secs_f64();
    check(
        (auc - 1.0).abs() <= 1e-6 && wrong == 0 && secs < 120.0,
        format!(
            "held-out auc {auc:.9} on {} examples; ground-truth aggregator misclassifies {wrong}; {secs:.1}s",
            ys.len()
        ),
    )
}

// 4 ---------------------------------------------------------------------------

fn attribute_mismatch_ordering() -> Outcome {
    let start = Instant::now();
    let (ds, fb) = generate_synthetic(&SyntheticSpec::balanced(2400, 16, 9, 1.0, 4)).unwrap();
    let ds = split_by_prompt(&ds, (0.5, 0.25, 0.25), 4).unwrap();
    let fb = attach_tree_labels(&ds, &DecisionTree::default_tree(), &fb).unwrap();
    let coarse = coarse_labels_of(&fb);
    let sizes = vec![100, 250, 500, 1000];
    let spec = SweepSpec {
        train_sizes: sizes.clone(),
        attribute_sets: vec![
            ("tree".into(), strings(&DEFAULT_TREE_ATTRIBUTES)),
            ("disjoint".into(), strings(&["distorted", "bright", "captivating", "disturbing", "funny", "blurry"])),
        ],
        seeds: vec![0, 1, 2, 3, 4],
        model_kinds: vec![ModelKind::Coarse, ModelKind::Cbm],
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let costs = CostModel::unit(&ds.attribute_names);
    let outcome = run_sweep_with_jobs(&ds, &fb, &coarse, &spec, &costs, &default_mlp(), jobs).unwrap();
    let means = mean_auc_by_model(&outcome.points);
    let mut ok = outcome.failures.is_empty() && outcome.points.len() == 4 * 5 * 3;
    let mut rows = Vec::new();
    for n in sizes {
        let tree = means[&("cbm:tree".to_string(), n)];
        let base = means[&("coarse".to_string(), n)];
        let off = means[&("cbm:disjoint".to_string(), n)];
        ok &= tree >= base && tree - off >= 0.05;
        rows.push(format!("N={n} tree {tree:.3} coarse {base:.3} disjoint {off:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    check(ok, format!("{}; {secs:.1}s", rows.join(", ")))
}

// 5 ---------------------------------------------------------------------------

fn cost_accounting() -> Outcome {
    let twelve: Vec<String> = (0..12).map(|j| format!("attr_{j}")).collect();
    let mut unit = CostModel::unit(&twelve);
    let coarse = annotation_cost(&unit, 100, &twelve, ModelKind::Coarse).unwrap();
    let with = annotation_cost(&unit, 100, &twelve, ModelKind::Cbm).unwrap();
    unit.include_coarse_for_cbm = false;
    let without = annotation_cost(&unit, 100, &twelve, ModelKind::Cbm).unwrap();

    let kv = KeyValues::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/table2_costs.toml")).unwrap();
    let timed = CostModel::from_key_values(&kv).unwrap();
    let all = [
        "distorted", "bright", "captivating", "photorealistic", "chaotic", "visually_compelling", "disturbing", "funny",
    ];
    let cases: [(usize, &[&str], ModelKind, f64); 4] = [
        (100, &[], ModelKind::Coarse, 100.0 * 52.7),
        (10, &["photorealistic", "funny"], ModelKind::Cbm, 10.0 * (19.4 + 12.8 + 52.7)),
        (250, &DEFAULT_TREE_ATTRIBUTES, ModelKind::Cbm, 250.0 * (19.4 + 16.2 + 24.1 + 52.7)),
        (
            1000,
            &all,
            ModelKind::Cbm,
            1000.0 * (56.1 + 18.4 + 20.2 + 19.4 + 24.1 + 16.2 + 19.2 + 12.8 + 52.7),
        ),
    ];
    let mut worst: f64 = 0.0;
    for (n, attrs, kind, expected) in cases {
        worst = worst.max((annotation_cost(&timed, n, attrs, kind).unwrap() - expected).abs());
    }
    check(
        coarse == 100.0 && with == 1300.0 && without == 1200.0 && worst <= 1e-9,
        format!("unit costs {coarse}/{with}/{without}; timed costs max |diff| {worst:.1e}"),
    )
}

// 6 ---------------------------------------------------------------------------

fn table_rows_match(report: &SxSReport) -> (bool, f64) {
    let mut worst: f64 = 0.0;
    for ((task, _, _), (a, b, u)) in common::PREFERENCE_TABLE.iter().zip(common::PREFERENCE_PERCENT) {
        let t = report.task(task).unwrap();
        for (got, want) in [(t.pct_model_a, a), (t.pct_model_b, b), (t.pct_unsure, u)] {
            worst = worst.max((got - want).abs());
        }
    }
    (worst <= 0.1 + 1e-9, worst)
}

fn timings_exact(report: &SxSReport) -> bool {
    common::ANSWER_SECONDS.iter().all(|(task, secs)| report.task(task).unwrap().mean_response_seconds == *secs)
}

/// Raters work through the plan over HTTP, voting per task as in the table.
async fn annotate_online(plan: &AnnotationPlan, log: &Path) -> String {
    let svc = AnnotationService::open(plan.clone(), log).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(svc.serve(listener, None, async {
        let _ = stopped.await;
    }));

    let by_id: BTreeMap<&str, Side> =
        plan.assignments.iter().map(|a| (a.assignment_id.as_str(), a.left_model)).collect();
    let quota: BTreeMap<&str, (u64, u64, u64)> =
        common::PREFERENCE_TABLE.iter().zip(common::ANSWER_SECONDS).map(|(&(t, a, b), (_, s))| (t, (a, b, (s * 1000.0).round() as u64))).collect();
    let mut answered: BTreeMap<String, u64> = BTreeMap::new();
    let client = reqwest::Client::new();
    let mut raters: Vec<String> = (0..plan.raters_per_pair).map(|r| format!("rater{r}")).collect();
    while !raters.is_empty() {
        let mut still = Vec::new();
        for rater in raters {
            let resp = client.get(format!("{base}/api/assignment?rater={rater}")).send().await.unwrap();
            if resp.status() == reqwest::StatusCode::NO_CONTENT {
                continue;
            }
            let view: AssignmentView = resp.json().await.unwrap();
            let left = by_id[view.assignment_id.as_str()];
            let (a, b, base_ms) = quota[view.task.as_str()];
            let i = answered.entry(view.task.clone()).or_default();
            let choice = if *i < a {
                side_of(Side::A, left)
            } else if *i < a + b {
                side_of(Side::B, left)
            } else {
                Choice::Unsure
            };
            let offset = 100 + (*i / 2) % 7 * 150;
            let ms = if i.is_multiple_of(2) { base_ms - offset } else { base_ms + offset };
            *i += 1;
            let body = serde_json::json!({
                "pair_id": view.pair_id, "task": view.task, "rater_id": rater,
                "choice": choice, "response_ms": ms,
            });
            let status = client.post(format!("{base}/api/response")).json(&body).send().await.unwrap().status();
            assert_eq!(status, reqwest::StatusCode::CREATED);
            still.push(rater);
        }
        raters = still;
    }
    let report = client.get(format!("{base}/api/report")).send().await.unwrap().text().await.unwrap();
    let _ = stop.send(());
    server.await.unwrap().unwrap();
    report
}

fn sxs_report_fixture() -> Outcome {
    let plan = common::table_plan();
    let offline = ingest_sxs(&common::table_records(&plan), &plan).unwrap();
    let agg = offline.task("aggregate").unwrap();
    let (rows_ok, worst) = table_rows_match(&offline);
    let times_ok = timings_exact(&offline);

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("online.jsonl");
    let rt = tokio::runtime::Runtime::new().unwrap();
    let online = rt.block_on(annotate_online(&plan, &log));
    let records = read_sxs_log(&log).unwrap();
    let replayed = report_to_string(&ingest_sxs(&records, &plan).unwrap()).unwrap();
    let online_report: SxSReport = serde_json::from_str(&online).unwrap();
    let (online_rows_ok, online_worst) = table_rows_match(&online_report);
    // The simulated raters' votes round-trip through the blind left/right UI.
    let consistent = records.iter().all(|r| r.choice == Choice::Unsure || chosen_model(r.choice, r.left_model).is_some());

    check(
        rows_ok && times_ok && online == replayed && online_rows_ok && timings_exact(&online_report) && consistent
            && records.len() == plan.assignments.len(),
        format!(
            "aggregate ({:.1}, {:.1}, {:.1}); all rows within {worst:.2} offline, {online_worst:.2} online; \
             timings exact {times_ok}; {} records online, reports byte-equal {}",
            agg.pct_model_a,
            agg.pct_model_b,
            agg.pct_unsure,
            records.len(),
            online == replayed
        ),
    )
}

// 7 ---------------------------------------------------------------------------

fn categorizer_fixture() -> Outcome {
    let appendix = [
        ("is there a dog?", AlignmentCategory::ObjectNoun),
        ("is the dog green?", AlignmentCategory::AttributeAdjective),
        ("is the dog running?", AlignmentCategory::ActionVerb),
        ("is the dog to the left of the river?", AlignmentCategory::Relation),
    ];
    let appendix_ok = appendix.iter().filter(|(q, c)| categorize_question(q) == *c).count();

    let gold = include_str!("../data/categorizer_gold.tsv");
    let (mut total, mut correct) = (0, 0);
    for line in gold.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let (category, question) = line.split_once('\t').unwrap();
        total += 1;
        if categorize_question(question).as_str() == category {
            correct += 1;
        }
    }
    let acc = correct as f64 / total as f64;
    check(
        appendix_ok == 4 && total == 60 && acc >= 0.9,
        format!("appendix examples {appendix_ok}/4; gold corpus {correct}/{total} ({:.1}%)", 100.0 * acc),
    )
}

// 8 ---------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_finegrain"))
        .args(args)
        .current_dir(dir)
        .env_clear()
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn pipeline(dir: &Path) {
    let mlp = ["--hidden", "16", "--epochs", "15", "--learning-rate", "0.01", "--batch-size", "32"];
    run_cli(dir, &["synth", "--n", "800", "--dim", "8", "--seed", "5", "--out", "d.jsonl", "--feedback-out", "f.jsonl"]);
    run_cli(dir, &["split", "--dataset", "d.jsonl", "--out", "s.jsonl", "--seed", "5"]);
    run_cli(dir, &["tree-label", "--dataset", "s.jsonl", "--feedback", "f.jsonl", "--out", "t.jsonl"]);
    let train = [&["train-cbm", "--dataset", "s.jsonl", "--feedback", "t.jsonl", "--out", "cbm.json"][..], &mlp[..]].concat();
    run_cli(dir, &train);
    run_cli(dir, &["score", "--model", "cbm.json", "--dataset", "s.jsonl", "--out", "scores.csv"]);
    let sweep = [
        &["sweep", "--dataset", "s.jsonl", "--feedback", "t.jsonl", "--out", "curve.csv", "--sizes", "50,150"][..],
        &["--seeds", "0,1", "--attribute-set", "tree=photorealistic,visually_compelling,chaotic", "--jobs", "3"],
        &mlp[..],
    ]
    .concat();
    run_cli(dir, &sweep);
}

fn determinism() -> Outcome {
    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for r in &runs {
        pipeline(r.path());
    }
    let read = |i: usize, name: &str| std::fs::read(runs[i].path().join(name)).unwrap();
    let same: Vec<&str> = ["d.jsonl", "s.jsonl", "t.jsonl", "cbm.json", "scores.csv", "curve.csv"]
        .into_iter()
        .filter(|n| read(0, n) == read(1, n))
        .collect();

    let model = load_model(&runs[0].path().join("cbm.json")).unwrap();
    let ds = finegrain::dataset::load_dataset(&runs[0].path().join("s.jsonl")).unwrap();
    let xs: Vec<Vec<f64>> = ds.examples.iter().map(|e| e.features()).collect();
    let direct = model.score_many(&xs).unwrap();
    let reloaded = model_from_str(&model_to_string(&model).unwrap()).unwrap().score_many(&xs).unwrap();
    let csv = String::from_utf8(read(0, "scores.csv")).unwrap();
    let from_cli: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    let bit_identical = bits(&direct) == bits(&reloaded) && bits(&direct) == bits(&from_cli);
    check(
        same.len() == 6 && bit_identical,
        format!("byte-identical across runs: {same:?}; reloaded scores bit-identical {bit_identical}"),
    )
}

// 9 ---------------------------------------------------------------------------

fn softmax_normalization() -> Outcome {
    let p = |y: f64, n: f64| normalize_yes_no(YesNoScores { yes_logit: y, no_logit: n }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut anti, mut shift): (f64, f64) = (0.0, 0.0);
    let trials = 100_000;
    for _ in 0..trials {
        let y = rng.random_range(-50.0..50.0);
        let n = rng.random_range(-50.0..50.0);
        let t = rng.random_range(-100.0..100.0);
        anti = anti.max((p(y, n) + p(n, y) - 1.0).abs());
        shift = shift.max((p(y + t, n + t) - p(y, n)).abs());
    }
    let extremes = [p(1000.0, -1000.0), p(-1000.0, 1000.0), p(1000.0, 1000.0), p(-1000.0, -1000.0)];
    let extremes_ok = extremes == [1.0, 0.0, 0.5, 0.5];
    check(
        anti <= 1e-12 && shift <= 1e-12 && extremes_ok,
        format!("{trials} pairs: antisymmetry {anti:.1e}, translation {shift:.1e}; |logit|=1000 gives {extremes:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("gradient oracle", gradient_oracle),
        ("auc oracle", auc_oracle),
        ("tree realizability", tree_realizability),
        ("attribute mismatch ordering", attribute_mismatch_ordering),
        ("cost accounting", cost_accounting),
        ("sxs report fixture", sxs_report_fixture),
        ("categorizer fixture", categorizer_fixture),
        ("determinism", determinism),
        ("softmax normalization", softmax_normalization),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = Duration::from_secs_f64(start.elapsed().as_secs_f64());
        match result {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{took:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail} [{took:.1?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
