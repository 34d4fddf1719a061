//! Parameterised checks. Each returns a one-line summary on success and a
//! description of the first disagreement on failure.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use shortcut_core::corpus::{LabeledExample, SplitTag};
use shortcut_core::identify::{identify, ReportContext, Thresholds};
use shortcut_core::matchindex::{build_index, MatchMode};
use shortcut_core::metrics::{macro_f1, PatternStats, PredictionCache, ScoreOptions, Scorer};
use shortcut_core::miner::{CandidateRecord, CandidateSet, InferencePattern};
use shortcut_core::pipeline::{self, BenchOptions, RunConfig};
use shortcut_core::reduction::reduce;
use shortcut_core::synthbench::BenchSpec;

use super::*;

pub type Check = std::result::Result<String, String>;

pub fn reduction_oracle(inputs: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut fallbacks = 0;
    for case in 0..inputs {
        let n_labels = r.gen_range(2..=4);
        let v = vocab(r.gen_range(3..=10));
        let spec = random_linear(&mut r, n_labels, &v);
        let model = to_model(&spec);
        let tokens = random_tokens(&mut r, &v, 1, 12);
        let ex = LabeledExample {
            id: case.to_string(),
            text: tokens.join(" "),
            tokens: tokens.clone(),
            gold_label: 0,
        };
        let got = reduce(&ex, &model).map_err(|e| format!("case {case}: {e}"))?;
        let want = oracle_reduce(&spec, &tokens);
        fallbacks += want.fallback as usize;
        let same = got.trigger == want.trigger
            && got.label == want.label
            && got.steps == want.steps
            && got.fallback == want.fallback;
        if !same {
            return Err(format!(
                "case {case} {tokens:?}: got {got:?}, oracle {want:?}"
            ));
        }
    }
    Ok(format!("{inputs}/{inputs} agree ({fallbacks} fallbacks)"))
}

fn zipf_doc(r: &mut ChaCha8Rng, v: &[String], min: usize, max: usize) -> Vec<String> {
    let len = r.gen_range(min..=max);
    (0..len)
        .map(|_| {
            // squaring a uniform skews towards low ids, giving frequent and rare tokens
            let u: f64 = r.gen();
            v[((u * u) * v.len() as f64) as usize].clone()
        })
        .collect()
}

pub fn index_oracle(docs: usize, triggers: usize, extensions: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let v = vocab(150);
    let texts: Vec<Vec<String>> = (0..docs).map(|_| zipf_doc(&mut r, &v, 1, 12)).collect();
    let golds = vec![0; docs];
    let corpus = corpus_from(&texts, &golds, 2, SplitTag::Ood);
    let index = build_index(&corpus).map_err(|e| e.to_string())?;

    let random_trigger = |r: &mut ChaCha8Rng| -> Vec<String> {
        if r.gen_bool(0.5) {
            // a subsequence of a real document, so most of these match something
            let d = &texts[r.gen_range(0..texts.len())];
            let mut picks: Vec<usize> = (0..d.len()).filter(|_| r.gen_bool(0.4)).collect();
            if picks.is_empty() {
                picks.push(r.gen_range(0..d.len()));
            }
            picks.truncate(4);
            picks.into_iter().map(|i| d[i].clone()).collect()
        } else {
            zipf_doc(r, &v, 1, 4)
        }
    };

    let mut nonempty = 0;
    for t in 0..triggers {
        let trig = random_trigger(&mut r);
        for (mode, oracle) in [
            (
                MatchMode::Subsequence,
                oracle_contains as fn(&[String], &[String]) -> bool,
            ),
            (MatchMode::Contiguous, oracle_contains_contiguous),
        ] {
            let want: Vec<usize> = (0..docs).filter(|&i| oracle(&texts[i], &trig)).collect();
            let got = index.find_matches(&trig, mode).map_err(|e| e.to_string())?;
            if got.indices != want {
                return Err(format!(
                    "trigger {t} {trig:?} ({mode:?}): index {} hits, scan {} hits",
                    got.indices.len(),
                    want.len()
                ));
            }
            if mode == MatchMode::Subsequence && !want.is_empty() {
                nonempty += 1;
            }
        }
    }
    for e in 0..extensions {
        let w = random_trigger(&mut r);
        let t = zipf_doc(&mut r, &v, 1, 2);
        let ext: Vec<String> = w.iter().chain(&t).cloned().collect();
        let base: BTreeSet<usize> = index
            .find_matches(&w, MatchMode::Subsequence)
            .map_err(|e| e.to_string())?
            .indices
            .into_iter()
            .collect();
        let longer = index
            .find_matches(&ext, MatchMode::Subsequence)
            .map_err(|e| e.to_string())?;
        if let Some(x) = longer.indices.iter().find(|i| !base.contains(i)) {
            return Err(format!(
                "extension {e}: doc {x} matches {ext:?} but not {w:?}"
            ));
        }
    }
    Ok(format!(
        "{triggers} triggers x 2 modes exact over {docs} docs ({nonempty} non-empty), {extensions} extensions monotone"
    ))
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9,
        _ => false,
    }
}

pub fn metric_oracle(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut undefined_iid_acc = 0;
    for case in 0..instances {
        let n_labels = r.gen_range(2..=4);
        let v = vocab(6);
        let make = |r: &mut ChaCha8Rng, n: usize| {
            let docs: Vec<Vec<String>> = (0..n).map(|_| random_tokens(r, &v, 1, 6)).collect();
            let golds: Vec<usize> = (0..n).map(|_| r.gen_range(0..n_labels)).collect();
            let preds: Vec<usize> = (0..n).map(|_| r.gen_range(0..n_labels)).collect();
            (docs, golds, preds)
        };
        let n_iid = r.gen_range(1..=30);
        let n_ood = r.gen_range(1..=30);
        let (id, ig, ip) = make(&mut r, n_iid);
        let (od, og, op) = make(&mut r, n_ood);
        let iid = corpus_from(&id, &ig, n_labels, SplitTag::Iid);
        let ood = corpus_from(&od, &og, n_labels, SplitTag::Ood);
        let scorer = Scorer::with_predictions(
            &iid,
            &ood,
            PredictionCache::from_labels(ip.clone()),
            PredictionCache::from_labels(op.clone()),
            ScoreOptions::default(),
        )
        .map_err(|e| e.to_string())?;

        let base = oracle_macro_f1(&op, &og, n_labels);
        let lib = macro_f1(&op, &og, n_labels).map_err(|e| e.to_string())?;
        if (lib - base).abs() > 1e-9 || (scorer.baseline_f1() - base).abs() > 1e-9 {
            return Err(format!("case {case}: macro-F1 {lib} vs oracle {base}"));
        }

        // "all" prefixes every OOD document of the second scorer, so Δ for it must be exactly 0
        let od_all: Vec<Vec<String>> = od
            .iter()
            .map(|d| {
                std::iter::once("all".to_string())
                    .chain(d.iter().cloned())
                    .collect()
            })
            .collect();
        let all_ood = corpus_from(&od_all, &og, n_labels, SplitTag::Ood);
        let all_scorer = Scorer::with_predictions(
            &iid,
            &all_ood,
            PredictionCache::from_labels(ip.clone()),
            PredictionCache::from_labels(op.clone()),
            ScoreOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let whole = vec!["all".to_string()];
        let trials = [
            (random_tokens(&mut r, &v, 1, 2), &scorer, &od),
            (whole.clone(), &all_scorer, &od_all),
        ];
        for (trig, scorer_ref, ood_docs) in trials {
            let label = r.gen_range(0..n_labels);
            let pattern = InferencePattern::new(trig.clone(), label).unwrap();
            let got = scorer_ref.score(&pattern).map_err(|e| e.to_string())?;
            let want = oracle_stats(
                &trig,
                label,
                &Split {
                    docs: &id,
                    golds: &ig,
                    preds: &ip,
                },
                &Split {
                    docs: ood_docs,
                    golds: &og,
                    preds: &op,
                },
                n_labels,
            );
            if want.iid_acc.is_none() && want.support_iid > 0 {
                undefined_iid_acc += 1;
            }
            let ok = close(got.g, want.g)
                && close(got.iid_acc, want.iid_acc)
                && close(got.delta, want.delta)
                && got.support_iid == want.support_iid
                && got.support_ood == want.support_ood;
            if !ok {
                return Err(format!(
                    "case {case} {trig:?}->{label}: got g={:?} acc={:?} d={:?}, oracle g={:?} acc={:?} d={:?}",
                    got.g, got.iid_acc, got.delta, want.g, want.iid_acc, want.delta
                ));
            }
            if trig == whole && got.delta != Some(0.0) {
                return Err(format!(
                    "case {case}: Δ over the whole corpus is {:?}",
                    got.delta
                ));
            }
        }
    }
    if undefined_iid_acc == 0 {
        return Err("no instance exercised the zero-denominator case".into());
    }
    Ok(format!(
        "{instances} instances exact to 1e-9 ({undefined_iid_acc} zero-denominator iid_acc cases, whole-corpus Δ = 0)"
    ))
}

pub fn random_stats_table(r: &mut ChaCha8Rng, rows: usize) -> (CandidateSet, Vec<PatternStats>) {
    let v = vocab(40);
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    while records.len() < rows {
        let trig = random_tokens(r, &v, 1, 3);
        let label = r.gen_range(0..3);
        if !seen.insert((trig.clone(), label)) {
            continue;
        }
        records.push(CandidateRecord {
            trigger: trig,
            label,
            extraction_count: r.gen_range(1..5),
            fallback_count: 0,
            source_ids: vec!["x".into()],
        });
    }
    let set = CandidateSet::from_records(records.clone()).unwrap();
    let maybe = |r: &mut ChaCha8Rng, lo: f64, hi: f64| r.gen_bool(0.9).then(|| r.gen_range(lo..hi));
    let stats = records
        .into_iter()
        .map(|rec| PatternStats {
            pattern: InferencePattern::new(rec.trigger, rec.label).unwrap(),
            g: maybe(r, 0.0, 100.0),
            iid_acc: maybe(r, 0.0, 100.0),
            delta: maybe(r, -40.0, 20.0),
            support_iid: r.gen_range(0..400),
            support_ood: r.gen_range(0..400),
            n_pred_l_iid: 1,
            undefined: Vec::new(),
        })
        .collect();
    (set, stats)
}

pub fn threshold_monotonicity(tables: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let ctx = ReportContext {
        label_names: labels(3),
        baseline_f1_ood: 50.0,
        run: Default::default(),
    };
    let mut comparisons = 0;
    let mut shrank = 0;
    for table in 0..tables {
        let (set, stats) = random_stats_table(&mut r, 60);
        let base = Thresholds {
            lambda1: r.gen_range(0.0..80.0),
            lambda2: r.gen_range(34.0..90.0),
            lambda3: r.gen_range(-20.0..-0.5),
            min_support_ood: r.gen_range(0..200),
        };
        let reported =
            |t: &Thresholds| -> std::result::Result<BTreeSet<(Vec<String>, usize)>, String> {
                Ok(identify(&set, &stats, t, &ctx)
                    .map_err(|e| e.to_string())?
                    .shortcuts
                    .into_iter()
                    .map(|s| (s.trigger, s.label))
                    .collect())
            };
        let before = reported(&base)?;
        for knob in 0..4 {
            let mut tight = base;
            match knob {
                0 => tight.lambda1 += r.gen_range(0.0..30.0),
                1 => tight.lambda2 += r.gen_range(0.0..10.0),
                2 => tight.lambda3 -= r.gen_range(0.0..10.0),
                _ => tight.min_support_ood += r.gen_range(0..100),
            }
            let after = reported(&tight)?;
            if !after.is_subset(&before) {
                return Err(format!(
                    "table {table}, knob {knob}: {tight:?} reports more than {base:?}"
                ));
            }
            shrank += (after.len() < before.len()) as usize;
            comparisons += 1;
        }
    }
    if shrank == 0 {
        return Err("no tightening ever removed a pattern; the tables are too easy".into());
    }
    Ok(format!(
        "{tables} tables, {comparisons} tightenings never grew the report ({shrank} shrank it)"
    ))
}

pub fn planted_recovery(seeds: u64, out: &Path) -> Check {
    let spec = BenchSpec::default();
    if spec.plants.iter().any(|p| p.iid_plant_rate < 0.9)
        || spec.n_iid != 2000
        || spec.n_ood != 2000
    {
        return Err("default bench spec drifted from the acceptance setting".into());
    }
    let opts = BenchOptions {
        seeds,
        ..BenchOptions::default()
    };
    let summary = pipeline::run_bench(&spec, &opts, out).map_err(|e| e.to_string())?;
    let min_recall = summary.min_recall.unwrap_or(0.0);
    if min_recall < 1.0 {
        return Err(format!("min recall {min_recall:.3} over {seeds} seeds"));
    }
    if summary.min_precision < 0.8 {
        return Err(format!("min precision {:.3}", summary.min_precision));
    }
    if summary.genuine_reported > 0 {
        return Err(format!(
            "{} genuine tokens reported",
            summary.genuine_reported
        ));
    }
    Ok(format!(
        "{seeds} seeds: recall {:.3} (min {min_recall:.3}), precision {:.3} (min {:.3}), 0 genuine",
        summary.mean_recall.unwrap_or(0.0),
        summary.mean_precision,
        summary.min_precision
    ))
}

pub const PIPELINE_FILES: [&str; 4] = ["candidates.json", "stats.json", "report.json", "report.md"];

/// Writes a small benchmark and returns a run config for it.
pub fn bench_config(dir: &Path, seed: u64) -> RunConfig {
    let spec = BenchSpec {
        n_iid: 600,
        n_ood: 600,
        seed,
        ..BenchSpec::default()
    };
    let bench = shortcut_core::synthbench::generate(&spec).unwrap();
    bench.write(dir).unwrap();
    let mut cfg = RunConfig::new(
        dir.join("iid.jsonl"),
        dir.join("ood.jsonl"),
        pipeline::AdapterConfig::Toy {
            weights: dir.join("model.json"),
        },
    );
    cfg.n_samples = 300;
    cfg.seed = seed;
    cfg.thresholds.min_support_ood = 30;
    cfg
}

pub fn determinism(root: &Path) -> Check {
    let data = root.join("data");
    let base = bench_config(&data, 7);
    let mut runs = Vec::new();
    for (name, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let mut cfg = base.clone();
        cfg.output_dir = root.join(name);
        cfg.workers = workers;
        let session = pipeline::open_adapter(&cfg).map_err(|e| e.to_string())?;
        pipeline::run_all(&cfg, &session).map_err(|e| e.to_string())?;
        runs.push(cfg.output_dir);
    }
    let mut bytes = 0;
    for f in PIPELINE_FILES {
        let first = std::fs::read(runs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        for other in &runs[1..] {
            let b = std::fs::read(other.join(f)).map_err(|e| format!("{f}: {e}"))?;
            if b != first {
                return Err(format!(
                    "{f} differs between {} and {}",
                    runs[0].display(),
                    other.display()
                ));
            }
        }
        bytes += first.len();
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(runs[0].join("report.json")).unwrap()).unwrap();
    if report["shortcuts"].as_array().map_or(0, Vec::len) == 0 {
        return Err("determinism run reported nothing; the comparison is vacuous".into());
    }
    Ok(format!(
        "3 runs (1, 1 and 4 workers) byte-identical over {} files ({bytes} bytes)",
        PIPELINE_FILES.len()
    ))
}

/// Shuffles in place with the test RNG; handy for order-invariance tests.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut rng(seed));
    v
}

fn expect_keys(
    v: &serde_json::Value,
    keys: &[&str],
    what: &str,
) -> std::result::Result<(), String> {
    let obj = v.as_object().ok_or(format!("{what} is not an object"))?;
    for k in keys {
        if !obj.contains_key(*k) {
            return Err(format!("{what} lacks '{k}'"));
        }
    }
    Ok(())
}

/// Runs a 50-example slice of each split through the wire client against an
/// HTTP server backed by a toy model, then checks the report's shape.
pub fn schema_smoke(root: &Path) -> Check {
    let data = root.join("data");
    let spec = BenchSpec {
        n_iid: 200,
        n_ood: 200,
        seed: 3,
        ..BenchSpec::default()
    };
    let bench = shortcut_core::synthbench::generate(&spec).map_err(|e| e.to_string())?;
    bench.write(&data).map_err(|e| e.to_string())?;
    for split in ["iid", "ood"] {
        let full = std::fs::read_to_string(data.join(format!("{split}.jsonl")))
            .map_err(|e| e.to_string())?;
        let slice: String = full.lines().take(50).map(|l| format!("{l}\n")).collect();
        std::fs::write(data.join(format!("{split}50.jsonl")), slice).map_err(|e| e.to_string())?;
    }
    let server = super::server::spawn(super::server::toy_handler(bench.model.clone()));
    let mut cfg = RunConfig::new(
        data.join("iid50.jsonl"),
        data.join("ood50.jsonl"),
        pipeline::AdapterConfig::Remote(shortcut_core::adapter::RemoteConfig {
            base_url: server.url.clone(),
            batch_size: 8,
            ..Default::default()
        }),
    );
    cfg.label_names = spec.label_names.clone();
    cfg.n_samples = 50;
    cfg.output_dir = root.join("out");
    cfg.thresholds.min_support_ood = 3;
    let session = pipeline::open_adapter(&cfg).map_err(|e| e.to_string())?;
    pipeline::run_all(&cfg, &session).map_err(|e| e.to_string())?;

    let read =
        |f: &str| std::fs::read_to_string(cfg.output_dir.join(f)).map_err(|e| format!("{f}: {e}"));
    let report: serde_json::Value =
        serde_json::from_str(&read("report.json")?).map_err(|e| e.to_string())?;
    expect_keys(
        &report,
        &["config", "baseline_f1_ood", "shortcuts", "diagnostics"],
        "report",
    )?;
    expect_keys(
        &report["config"],
        &["thresholds", "label_names", "run"],
        "report.config",
    )?;
    expect_keys(
        &report["config"]["thresholds"],
        &["lambda1", "lambda2", "lambda3", "min_support_ood"],
        "thresholds",
    )?;
    let baseline = report["baseline_f1_ood"]
        .as_f64()
        .ok_or("baseline is not a number")?;
    if !(0.0..=100.0).contains(&baseline) {
        return Err(format!("baseline {baseline} outside [0, 100]"));
    }
    let shortcuts = report["shortcuts"]
        .as_array()
        .ok_or("shortcuts is not an array")?;
    for s in shortcuts {
        expect_keys(
            s,
            &[
                "trigger",
                "label",
                "label_name",
                "g",
                "iid_acc",
                "delta",
                "support_iid",
                "support_ood",
            ],
            "shortcut row",
        )?;
        let trig = s["trigger"].as_array().ok_or("trigger is not an array")?;
        if trig.is_empty() || !trig.iter().all(|t| t.is_string()) {
            return Err("trigger must be a non-empty token list".into());
        }
        for k in ["g", "iid_acc"] {
            let v = s[k].as_f64().ok_or(format!("{k} is not a number"))?;
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{k} = {v} outside [0, 100]"));
            }
        }
        if s["delta"].as_f64().is_none_or(|d| d >= 0.0) {
            return Err("reported delta must be negative".into());
        }
    }
    let md = read("report.md")?;
    if !md.contains("| pattern | g | iid_acc | Δ |") {
        return Err("markdown table header missing".into());
    }
    if server.hits.load(std::sync::atomic::Ordering::SeqCst) == 0 {
        return Err("the mock server was never called".into());
    }
    Ok(format!(
        "report schema valid: {} shortcut row(s), {} diagnostic(s), baseline {baseline:.1}, {} HTTP requests",
        shortcuts.len(),
        report["diagnostics"].as_array().map_or(0, Vec::len),
        server.hits.load(std::sync::atomic::Ordering::SeqCst)
    ))
}
