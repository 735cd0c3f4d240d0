//! Acceptance checks, one line per criterion.
//!
//! Runs with its own `main` so every criterion reports PASS or FAIL even
//! when an earlier one fails. Exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cefrkit::calibration::{fit_calibration, predict_calibrated};
use cefrkit::cli::{self, Context};
use cefrkit::corpus::{sample_eval_set, Corpus, LabeledText};
use cefrkit::difficulty::DifficultyReport;
use cefrkit::providers::{cosine, EmbeddingVector, MockEmbedder, RecordingTransport, Transport};
use cefrkit::readability::{self, Coefficients};
use cefrkit::simplify::{
    aggregate_traces, iterate_simplify, simplification_accuracy, tag_text, w_score, StepDownSimplifier, TagProxy,
    Verdict, WScoreFormula,
};
use cefrkit::softmax::{Hyper, LinearSoftmax};
use cefrkit::textproc::TextStats;
use cefrkit::{Label, LabelScheme};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol
}

// 1
fn wscore_table() -> Check {
    let start = Instant::now();
    // (system, A, S, printed w-score)
    let rows = [
        ("GPT-3.5 one-shot", 0.35, 0.91, 0.51),
        ("GPT-3.5 fine-tuned", 0.34, 0.91, 0.50),
        ("Mistral-7B one-shot", 0.31, 0.93, 0.47),
        ("Mistral-7B fine-tuned", 0.28, 0.93, 0.43),
        ("Davinci-002", 0.24, 0.83, 0.38),
    ];
    let mut misses = Vec::new();
    let mut line = Vec::new();
    for (name, a, s, printed) in rows {
        let w = w_score(a, s, 0.5, WScoreFormula::Harmonic).map_err(|e| e.to_string())?;
        line.push(format!("{w:.4}"));
        if !close(w, printed, 0.005) {
            misses.push(format!("{name}: ({a}, {s}) -> {w:.5}, printed {printed}, off by {:.5}", (w - printed).abs()));
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    if misses.is_empty() {
        Ok(format!("computed [{}]", line.join(", ")))
    } else {
        Err(misses.join("; "))
    }
}

// 2
fn wscore_literal() -> Check {
    let literal = w_score(0.35, 0.91, 0.5, WScoreFormula::Literal).map_err(|e| e.to_string())?;
    let harmonic = w_score(0.35, 0.91, 0.5, WScoreFormula::Harmonic).map_err(|e| e.to_string())?;
    ensure(close(literal, 0.253, 0.001), || format!("literal gave {literal}"))?;
    ensure(!close(literal, 0.51, 0.005), || format!("literal {literal} matches the printed 0.51"))?;
    Ok(format!("literal {literal:.5} vs harmonic {harmonic:.5}"))
}

fn stats(sentences: usize, words: usize, chars: usize, syllables: usize, complex: usize) -> TextStats {
    TextStats { n_sentences: sentences, n_words: words, n_chars: chars, n_syllables: syllables, n_complex_words: complex }
}

// 3
fn readability_exactness() -> Check {
    let gfi = readability::gfi(&stats(2, 20, 0, 0, 2)).map_err(|e| e.to_string())?;
    let fkgl = readability::fkgl(&stats(2, 20, 0, 30, 0)).map_err(|e| e.to_string())?;
    let ari = readability::ari(&stats(2, 20, 100, 0, 0)).map_err(|e| e.to_string())?;
    ensure(close(gfi, 8.0, 1e-9), || format!("gfi {gfi}"))?;
    ensure(close(fkgl, 6.01, 1e-9), || format!("fkgl {fkgl}"))?;
    ensure(close(ari, 7.12, 1e-9), || format!("ari {ari}"))?;
    ensure(close(readability::fkgl(&stats(1, 1, 1, 1, 0)).unwrap(), -3.40, 1e-9), || "fkgl minimal".into())?;
    ensure(close(readability::ari(&stats(1, 1, 1, 1, 0)).unwrap(), -16.22, 1e-9), || "ari minimal".into())?;
    ensure(readability::gfi(&stats(0, 5, 5, 5, 0)).is_err(), || "zero sentences accepted".into())?;

    let c = Coefficients::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let words = rng.gen_range(1..400usize);
        let base = stats(
            rng.gen_range(1..40),
            words,
            rng.gen_range(words..words * 12),
            rng.gen_range(words..words * 4),
            rng.gen_range(0..=words),
        );
        let s0 = c.scores(&base).unwrap();
        // words per sentence up, every other per-word ratio held fixed
        let per_word = TextStats {
            n_sentences: base.n_sentences,
            n_words: base.n_words * 2,
            n_chars: base.n_chars * 2,
            n_syllables: base.n_syllables * 2,
            n_complex_words: base.n_complex_words * 2,
        };
        let s1 = c.scores(&per_word).unwrap();
        ensure(s1.gfi > s0.gfi && s1.fkgl > s0.fkgl && s1.ari > s0.ari, || format!("case {case}: words/sentence"))?;
        let syl = c.scores(&TextStats { n_syllables: base.n_syllables + 1, ..base }).unwrap();
        ensure(syl.fkgl > s0.fkgl, || format!("case {case}: syllables"))?;
        if base.n_complex_words < base.n_words {
            let cx = c.scores(&TextStats { n_complex_words: base.n_complex_words + 1, ..base }).unwrap();
            ensure(cx.gfi > s0.gfi, || format!("case {case}: complex words"))?;
        }
        let ch = c.scores(&TextStats { n_chars: base.n_chars + 1, ..base }).unwrap();
        ensure(ch.ari > s0.ari, || format!("case {case}: chars"))?;
    }
    Ok(format!("gfi {gfi}, fkgl {fkgl:.10}, ari {ari:.10}; 1000 monotonicity cases"))
}

// 4
fn calibration_correctness() -> Check {
    let start = Instant::now();
    let scheme = LabelScheme::cefr();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pairs = Vec::new();
    for (name, centre) in [("A1", -4.0), ("B1", 6.0), ("C2", 16.0)] {
        let label = scheme.label(name).unwrap();
        for _ in 0..30 {
            pairs.push((centre + rng.gen_range(-1.5..1.5), label.clone()));
        }
    }
    let model = fit_calibration(&pairs, &scheme, &Hyper::default()).map_err(|e| e.to_string())?;
    let correct = pairs.iter().filter(|(s, l)| predict_calibrated(&model, *s).unwrap().label == *l).count();
    ensure(correct == pairs.len(), || format!("training accuracy {correct}/{}", pairs.len()))?;

    // predicted rank never drops as the score grows
    let mut last = 0;
    for i in 0..=400 {
        let rank = predict_calibrated(&model, -8.0 + i as f64 * 0.07).unwrap().label.rank();
        ensure(rank >= last, || format!("decision regions not monotone at step {i}"))?;
        last = rank;
    }

    let trace = &model.loss_trace;
    ensure(trace.windows(2).all(|w| w[1] <= w[0]), || "loss trace increases".into())?;

    // central differences on the calibration objective (one standardized feature)
    let xs: Vec<Vec<f64>> = pairs.iter().map(|(s, _)| vec![(s - model.feature_mean) / model.feature_std]).collect();
    let ys: Vec<usize> = pairs.iter().map(|(_, l)| l.rank()).collect();
    let (k, h, l2) = (scheme.len(), 1e-5, Hyper::default().l2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let flat: Vec<f64> = (0..2 * k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let point = LinearSoftmax::from_flat(k, 1, &flat);
        let (_, grad) = point.loss_and_gradient(&xs, &ys, l2);
        let analytic = grad.to_flat();
        for j in 0..flat.len() {
            let mut up = flat.clone();
            let mut down = flat.clone();
            up[j] += h;
            down[j] -= h;
            let numeric = (LinearSoftmax::from_flat(k, 1, &up).loss(&xs, &ys, l2)
                - LinearSoftmax::from_flat(k, 1, &down).loss(&xs, &ys, l2))
                / (2.0 * h);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || format!("gradient relative error {worst:e}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "accuracy 1.0 on {} items, {} epochs, max grad rel err {worst:.1e}, {elapsed:.2?}",
        pairs.len(),
        trace.len() - 1
    ))
}

// 5
fn accuracy_oracle() -> Check {
    let scheme = LabelScheme::cefr();
    let proxy = TagProxy::new(scheme.clone());
    let (mut valid, mut skipped) = (0, 0);
    for o in scheme.labels() {
        for s in scheme.labels() {
            let out = simplification_accuracy(&proxy, &tag_text(&o, "Le texte."), &tag_text(&s, "Le texte."))
                .map_err(|e| e.to_string())?;
            let expected = if o.rank() == 0 {
                Verdict::Skipped
            } else if o.rank() == s.rank() + 1 {
                Verdict::Valid
            } else {
                Verdict::Invalid
            };
            ensure(out.verdict == expected, || format!("{o} -> {s}: {:?}", out.verdict))?;
            match out.verdict {
                Verdict::Valid => valid += 1,
                Verdict::Skipped => skipped += 1,
                Verdict::Invalid => ensure(out.verdict.value() == Some(0), || "invalid must score 0".into())?,
            }
        }
    }
    ensure(valid == 5 && skipped == 6, || format!("{valid} valid, {skipped} skipped"))?;
    Ok("36 pairs: 5 valid, 6 skipped, 25 zero".into())
}

// 6
fn iterative_shape() -> Check {
    let scheme = LabelScheme::cefr();
    let simplifier = StepDownSimplifier::new(scheme.clone());
    let proxy = TagProxy::new(scheme.clone());
    let embedder = MockEmbedder::new(256).unwrap();
    let c2 = scheme.label("C2").unwrap();
    let start = tag_text(&c2, "Les négociations diplomatiques se poursuivirent jusqu'à l'aube.");
    let trace = iterate_simplify(&simplifier, &proxy, &embedder, &start, 8).map_err(|e| e.to_string())?;
    ensure(trace.complete && trace.steps.len() == 9, || format!("{} steps", trace.steps.len()))?;
    let names: Vec<String> = trace.steps.iter().map(|s| s.proxy_level.name().to_string()).collect();
    ensure(names == ["C2", "C1", "B2", "B1", "A2", "A1", "A1", "A1", "A1"], || format!("levels {names:?}"))?;
    let first_a1 = names.iter().position(|n| n == "A1");
    ensure(first_a1 == Some(5), || format!("A1 first at {first_a1:?}"))?;
    ensure(trace.steps[0].similarity_to_step0 == 1.0, || format!("step-0 similarity {}", trace.steps[0].similarity_to_step0))?;
    let traces = vec![trace; 100];
    let means = aggregate_traces(&traces, &scheme).map_err(|e| e.to_string())?;
    ensure(means.windows(2).all(|w| w[1].mean_rank <= w[0].mean_rank), || "mean rank increases".into())?;
    Ok(format!("levels {}", names.join(">")))
}

fn level_corpus(scheme: &LabelScheme, name: &str, per_label: usize) -> Corpus {
    let items = scheme
        .labels()
        .flat_map(|label| {
            (0..per_label).map(move |i| LabeledText {
                id: format!("{name}-{label}-{i}"),
                text: format!("Phrase {i} du niveau {label}."),
                label: Some(label.clone()),
                source: name.to_string(),
            })
        })
        .collect();
    Corpus::new(scheme.clone(), items).unwrap()
}

// 7
fn sampling_arithmetic() -> Check {
    let scheme = LabelScheme::cefr();
    let corpora = [level_corpus(&scheme, "ljl", 120), level_corpus(&scheme, "wiki", 150)];
    let levels: Vec<Label> = scheme.labels().skip(1).collect();
    let sample = sample_eval_set(&corpora, 100, &levels, 0).map_err(|e| e.to_string())?;
    ensure(sample.len() == 1000, || format!("{} items", sample.len()))?;
    let per_cell_ok = corpora.iter().all(|c| {
        levels.iter().all(|l| {
            sample.items().iter().filter(|i| i.source == c.items()[0].source && i.label.as_ref() == Some(l)).count() == 100
        })
    });
    ensure(per_cell_ok, || "uneven draw".into())?;
    Ok("5 levels x 100 x 2 corpora = 1000".into())
}

fn brute_force_f1(k: usize, pairs: &[(usize, usize)]) -> (Vec<Vec<usize>>, f64, f64) {
    let mut confusion = vec![vec![0; k]; k];
    for &(g, p) in pairs {
        confusion[g][p] += 1;
    }
    let mut f1s = Vec::new();
    let mut supports = Vec::new();
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count() as f64;
        let fnn = pairs.iter().filter(|&&(g, p)| g == c && p != c).count() as f64;
        // F1 = 2TP / (2TP + FP + FN)
        let denom = 2.0 * tp + fp + fnn;
        f1s.push(if denom == 0.0 { 0.0 } else { 2.0 * tp / denom });
        supports.push(tp + fnn);
    }
    let macro_f1 = f1s.iter().sum::<f64>() / k as f64;
    let weighted = f1s.iter().zip(&supports).map(|(f, s)| f * s).sum::<f64>() / pairs.len() as f64;
    (confusion, macro_f1, weighted)
}

// 8
fn f1_oracle() -> Check {
    let scheme = LabelScheme::cefr();
    let k = scheme.len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for set in 0..100 {
        let n = rng.gen_range(1..300);
        let pairs: Vec<(usize, usize)> = (0..n).map(|_| (rng.gen_range(0..k), rng.gen_range(0..k))).collect();
        let report = DifficultyReport::from_predictions(&scheme, &pairs, 0);
        let (confusion, macro_f1, weighted) = brute_force_f1(k, &pairs);
        ensure(report.confusion == confusion, || format!("set {set}: confusion differs"))?;
        ensure(close(report.macro_f1, macro_f1, 1e-12), || format!("set {set}: macro {} vs {macro_f1}", report.macro_f1))?;
        ensure(close(report.weighted_f1, weighted, 1e-12), || format!("set {set}: weighted {} vs {weighted}", report.weighted_f1))?;
        ensure(report.n_evaluated == n, || format!("set {set}: n_evaluated"))?;
    }
    let two = LabelScheme::new("two", ["x", "y"]).unwrap();
    let constant = DifficultyReport::from_predictions(&two, &[(0, 0), (0, 0), (1, 0), (1, 0)], 0);
    ensure(constant.per_class_f1 == [2.0 / 3.0, 0.0], || format!("per-class {:?}", constant.per_class_f1))?;
    ensure(constant.macro_f1 == 1.0 / 3.0, || format!("macro {}", constant.macro_f1))?;
    Ok("100 random sets match; constant classifier macro = 1/3".into())
}

fn run_cli(args: &[&str], transport: Arc<dyn Transport>) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = {
        let mut ctx = Context { stdout: &mut out, stderr: &mut err, transport: Some(transport) };
        cli::run(args.iter().map(|s| s.to_string()).collect(), &mut ctx)
    };
    (code, String::from_utf8_lossy(&err).into_owned())
}

// 9
fn determinism_offline(suite_start: Instant) -> Check {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini_cefr.csv");
    let fixture = fixture.to_str().unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let recorder = Arc::new(RecordingTransport::default());
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let out = out.to_str().unwrap();
        let (code, err) = run_cli(
            &["cefrkit", "eval-simplification", "--mock", "--seed", "7", "--in", fixture, "--out", out, "--parallelism", "4"],
            recorder.clone(),
        );
        ensure(code == 0, || format!("run {run} exited {code}: {err}"))?;
        let report = std::fs::read(dir.path().join(run).join("report.json")).map_err(|e| e.to_string())?;
        let records = std::fs::read(dir.path().join(run).join("records.jsonl")).map_err(|e| e.to_string())?;
        reports.push((report, records));
    }
    ensure(reports[0] == reports[1], || "reports differ between runs".into())?;
    ensure(recorder.calls() == 0, || format!("{} network calls in mock mode", recorder.calls()))?;
    let elapsed = suite_start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("suite took {elapsed:?}"))?;
    Ok(format!("byte-identical reports ({} bytes), 0 network calls, suite so far {elapsed:.2?}", reports[0].0.len()))
}

// 10
fn cosine_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..1000 {
        let dim = rng.gen_range(1..64);
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let scale = rng.gen_range(0.001..1000.0);
        let u = EmbeddingVector::new(a.clone()).unwrap();
        let v = EmbeddingVector::new(b).unwrap();
        let su = EmbeddingVector::new(a.iter().map(|x| x * scale).collect()).unwrap();
        let (Ok(uv), Ok(vu), Ok(suv)) = (cosine(&u, &v), cosine(&v, &u), cosine(&su, &v)) else {
            // a random draw of all zeros is the only way to get here
            continue;
        };
        ensure(close(uv, vu, 1e-9), || format!("case {case}: asymmetric {uv} {vu}"))?;
        ensure(close(uv, suv, 1e-9), || format!("case {case}: scale {scale} changed {uv} to {suv}"))?;
        ensure((-1.0 - 1e-9..=1.0 + 1e-9).contains(&uv), || format!("case {case}: out of bounds {uv}"))?;
    }
    Ok("symmetry, scale invariance, bounds over 1000 pairs".into())
}

fn main() {
    let suite_start = Instant::now();
    type Criterion = (&'static str, Box<dyn Fn() -> Check>);
    let criteria: Vec<Criterion> = vec![
        ("w-score table reproduction", Box::new(wscore_table)),
        ("literal w-score discrepancy", Box::new(wscore_literal)),
        ("readability exactness and monotonicity", Box::new(readability_exactness)),
        ("calibration correctness", Box::new(calibration_correctness)),
        ("simplification-accuracy oracle", Box::new(accuracy_oracle)),
        ("iterative driver shape", Box::new(iterative_shape)),
        ("sampling arithmetic", Box::new(sampling_arithmetic)),
        ("F1 harness oracle", Box::new(f1_oracle)),
        ("determinism and offline integrity", Box::new(move || determinism_offline(suite_start))),
        ("cosine properties", Box::new(cosine_properties)),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed, {:.2?}", criteria.len() - failed, suite_start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
