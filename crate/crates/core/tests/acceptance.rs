//! Acceptance criteria A1–A9. Each criterion prints one PASS/FAIL line to
//! stderr (uncaptured) and the test fails if any criterion fails.

mod common;

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use cookcnn::data::{scan_dataset, AugConfig, Dataset, Preprocess, Split, Stats};
use cookcnn::metrics::{classification_report, f1_score, normalize_cm};
use cookcnn::model::{count_params, preset_proposed, preset_tiny, ModelGraph, ProposedOptions};
use cookcnn::nn::softmax_cross_entropy;
use cookcnn::optim::{
    AdamParams, LrSchedule, Optimizer, OptimizerConfig, OptimizerKind, SgdParams,
};
use cookcnn::train::{train, EarlyStopping, TrainConfig, TrainOutcome};
use cookcnn::verify::{run_suite, Check, DEFAULT_SEEDS, TOLERANCE};
use cookcnn::{Rng, Tensor};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn report(id: &str, title: &str, elapsed: Duration, outcome: &Outcome) {
    let (status, detail) = match outcome {
        Ok(d) => ("PASS", d.as_str()),
        Err(d) => ("FAIL", d.as_str()),
    };
    let _ = writeln!(
        std::io::stderr(),
        "[acceptance] {id} {status} {title} ({:.1}s): {detail}",
        elapsed.as_secs_f64()
    );
}

/// A1: 290,283 parameters, per-layer breakdown against a closed-form count.
fn a1() -> Outcome {
    let started = Instant::now();
    let spec = preset_proposed(ProposedOptions::default());
    let total = count_params(&spec).map_err(|e| e.to_string())?;
    ensure(total == 290_283, format!("count {total} != 290283"))?;

    let channels = [3usize, 16, 32, 32, 64, 128, 128];
    let mut expected: Vec<(usize, usize, usize)> = channels
        .windows(2)
        .map(|w| (9 * w[0] * w[1], w[1], 2 * w[1]))
        .collect();
    expected.push((128 * 5 * 5 * 11, 11, 0));
    let oracle_total: usize = expected.iter().map(|(w, b, bn)| w + b + bn).sum();
    ensure(oracle_total == 290_283, format!("oracle total {oracle_total}"))?;

    let rows = spec.param_breakdown().map_err(|e| e.to_string())?;
    let got: Vec<(usize, usize, usize)> = rows.iter().map(|r| (r.weights, r.biases, r.batchnorm)).collect();
    ensure(got == expected, format!("breakdown {got:?} != {expected:?}"))?;
    let graph = ModelGraph::<f32>::new(&spec, 0).map_err(|e| e.to_string())?;
    ensure(graph.count_params() == total, "graph parameter count differs from spec count")?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 1.0, format!("took {secs:.2}s"))?;
    Ok(format!("{total} parameters, {} layers match the oracle", rows.len()))
}

/// A2: every layer and the tiny network within 1e-4 over five seeds.
fn a2() -> Outcome {
    let started = Instant::now();
    let report = run_suite(&preset_tiny(), &Check::ALL, &DEFAULT_SEEDS, None).map_err(|e| e.to_string())?;
    let worst = report.results.iter().map(|r| r.worst).fold(0.0, f64::max);
    ensure(
        report.passed(),
        format!("failing: {:?}\n{}", report.failures(), report.to_text()),
    )?;
    ensure(report.results.iter().all(|r| r.seeds >= 5), "fewer than 5 seeds")?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, format!("took {secs:.1}s"))?;
    Ok(format!(
        "{} checks x {} seeds, worst relative error {worst:.2e} (tolerance {TOLERANCE:e})",
        report.results.len(),
        DEFAULT_SEEDS.len()
    ))
}

fn a3_config(root: &Path, out: &str) -> TrainConfig {
    TrainConfig {
        data: root.join("data"),
        out: root.join(out),
        optimizer: OptimizerConfig::Sgd(SgdParams {
            momentum: 0.9,
            weight_decay: 0.0,
        }),
        schedule: LrSchedule::step_decay(),
        batch_size: 8,
        max_epochs: 150,
        seed: 7,
        augment: false,
        preload: true,
        ..TrainConfig::default()
    }
}

/// A3: 22 synthetic 224×224 images, proposed preset, SGD + step decay,
/// batch 8: training accuracy reaches 95%.
fn a3(root: &Path) -> Result<(String, TrainOutcome), String> {
    let started = Instant::now();
    let outcome = train(&a3_config(root, "run_a")).map_err(|e| e.to_string())?;
    let h = &outcome.history.records;
    let first = h.iter().find(|r| r.train_acc >= 0.95);
    let secs = started.elapsed().as_secs_f64();
    let Some(first) = first else {
        let best = h.iter().map(|r| r.train_acc).fold(0.0, f64::max);
        return Err(format!("best training accuracy {best:.4} over {} epochs", h.len()));
    };
    ensure(h.len() <= 150, "more than 150 epochs")?;
    ensure(secs < 900.0, format!("took {secs:.0}s"))?;
    let detail = format!(
        "training accuracy {:.4} at epoch {} ({} epochs run, best val {:.4} at {})",
        first.train_acc,
        first.epoch,
        h.len(),
        outcome.best_val_accuracy,
        outcome.best_epoch
    );
    Ok((detail, outcome))
}

/// A4: untrained proposed model, one image per class, eval mode.
fn a4(root: &Path) -> Outcome {
    let manifest = scan_dataset(root.join("data")).map_err(|e| e.to_string())?;
    let mut one_per_class = Vec::new();
    for r in manifest.split(Split::Train) {
        if !one_per_class.iter().any(|o: &cookcnn::data::Record| o.label == r.label) {
            one_per_class.push(r);
        }
    }
    ensure(one_per_class.len() == 11, "fixture lacks a class")?;
    let stats = cookcnn::data::compute_stats(&manifest, Split::Train, 256, 224).map_err(|e| e.to_string())?;
    let ds = Dataset::new(one_per_class, Preprocess::new(256, 224, stats), None).map_err(|e| e.to_string())?;
    let batch = ds.batch(&(0..11).collect::<Vec<_>>(), &Rng::new(0), 0).map_err(|e| e.to_string())?;
    let spec = preset_proposed(ProposedOptions::default());
    let target = 11f64.ln();
    let mut losses = Vec::new();
    for seed in [0u64, 1, 2, 3, 4] {
        let graph = ModelGraph::<f32>::new(&spec, seed).map_err(|e| e.to_string())?;
        let logits = graph.forward_eval(&batch.inputs).map_err(|e| e.to_string())?;
        let (loss, _) = softmax_cross_entropy(&logits, &batch.labels).map_err(|e| e.to_string())?;
        ensure(
            (loss - target).abs() <= 0.15,
            format!("seed {seed}: loss {loss:.4} outside ln(11) ± 0.15"),
        )?;
        losses.push(loss);
    }
    Ok(format!("losses {losses:.4?} vs ln(11) = {target:.4}"))
}

/// A5: learning-rate table at the boundary epochs.
fn a5() -> Outcome {
    let s = LrSchedule::step_decay();
    let expected = [
        (1, 1e-3),
        (54, 1e-3),
        (55, 1e-4),
        (70, 1e-4),
        (71, 1e-5),
        (80, 1e-5),
        (81, 1e-6),
        (85, 1e-6),
        (86, 1e-7),
        (90, 1e-7),
        (91, 1e-8),
        (150, 1e-8),
    ];
    for (epoch, lr) in expected {
        let got = s.lr_at_epoch(epoch);
        ensure(got == lr, format!("epoch {epoch}: {got:e} != {lr:e}"))?;
    }
    Ok(format!("{} boundary epochs exact", expected.len()))
}

fn step_once(cfg: OptimizerConfig, w: f64, g: f64, lr: f64) -> f64 {
    let mut opt = Optimizer::new(cfg).expect("valid config");
    let mut p = Tensor::new(&[1], vec![w]).unwrap();
    opt.step(&mut [&mut p], &[Tensor::new(&[1], vec![g]).unwrap()], lr).unwrap();
    p.data()[0]
}

/// A6: hand-derived first steps, fixed points, AdamW decay, quadratic.
fn a6() -> Outcome {
    let started = Instant::now();
    let (w, g, lr) = (1.0f64, 0.5f64, 0.1f64);
    let d = OptimizerConfig::defaults;
    // first-step closed forms under default hyperparameters
    let oracle = [
        (OptimizerKind::Sgd, w - lr * g),
        (OptimizerKind::Asgd, w * (1.0 - 1e-4 * lr) - lr * g),
        (OptimizerKind::Adadelta, w - lr * (1e-6f64).sqrt() / (0.1 * g * g + 1e-6).sqrt() * g),
        (OptimizerKind::Adagrad, w - lr * g / (g.abs() + 1e-10)),
        (OptimizerKind::Adam, w - lr * (0.1 * g / 0.1) / ((0.001 * g * g / 0.001).sqrt() + 1e-8)),
        (OptimizerKind::Adamax, w - lr / 0.1 * (0.1 * g) / (g.abs() + 1e-8)),
        (
            OptimizerKind::AdamW,
            w * (1.0 - lr * 0.01) - lr * (0.1 * g / 0.1) / ((0.001 * g * g / 0.001).sqrt() + 1e-8),
        ),
        (OptimizerKind::RmsProp, w - lr * g / ((0.01 * g * g).sqrt() + 1e-8)),
    ];
    for (kind, expect) in oracle {
        let got = step_once(d(kind), w, g, lr);
        ensure((got - expect).abs() <= 1e-10, format!("{kind}: {got} vs {expect}"))?;
    }

    for kind in OptimizerKind::ALL {
        let mut cfg = d(kind);
        if let OptimizerConfig::AdamW(p) = &mut cfg {
            p.weight_decay = 0.0;
        }
        let got = step_once(cfg, 0.75, 0.0, lr);
        if kind == OptimizerKind::Asgd {
            let expect = 0.75 * (1.0 - 1e-4 * lr);
            ensure((got - expect).abs() <= 1e-12, format!("asgd zero-gradient step {got}"))?;
        } else {
            ensure(got == 0.75, format!("{kind} moved under a zero gradient: {got}"))?;
        }
    }
    let decayed = step_once(d(OptimizerKind::AdamW), 2.0, 0.0, 0.1);
    ensure((decayed - 2.0 * (1.0 - 0.001)).abs() <= 1e-12, format!("adamw decay {decayed}"))?;
    let adam_unit = step_once(
        OptimizerConfig::Adam(AdamParams {
            eps: 0.0,
            ..AdamParams::default()
        }),
        1.0,
        -3.0,
        0.1,
    );
    ensure(((adam_unit - 1.0).abs() - 0.1).abs() <= 1e-10, "adam first step is not lr")?;

    let mut converged = 0;
    for kind in OptimizerKind::ALL {
        let mut opt = Optimizer::with_defaults(kind);
        let mut p = Tensor::new(&[1], vec![1.0f64]).unwrap();
        let mut prev = 1.0f64;
        let mut monotone = true;
        for _ in 0..200 {
            let grad = p.clone();
            opt.step(&mut [&mut p], &[grad], 0.1).unwrap();
            let now = p.data()[0].abs();
            monotone &= now < prev;
            prev = now;
        }
        if kind == OptimizerKind::Adadelta {
            ensure(monotone, "adadelta |w| not monotone")?;
        } else {
            ensure(prev < 1e-2, format!("{kind} ended at |w| = {prev:e}"))?;
            converged += 1;
        }
    }
    ensure(converged == 7, "convergence count")?;
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, format!("took {secs:.1}s"))?;
    Ok("8 first steps within 1e-10, fixed points hold, 7/8 converge, adadelta monotone".into())
}

/// Precision, recall, F1 and support of each class as printed in the
/// reference validation report.
const VALIDATION_REPORT: [(&str, f64, f64, f64, u64); 11] = [
    ("creamy_paste", 0.66, 0.60, 0.63, 124),
    ("diced", 0.74, 0.74, 0.74, 144),
    ("floured", 0.71, 0.77, 0.74, 110),
    ("grated", 0.71, 0.75, 0.73, 131),
    ("juiced", 0.78, 0.82, 0.80, 147),
    ("julienne", 0.59, 0.72, 0.65, 110),
    ("mixed", 0.75, 0.82, 0.78, 99),
    ("other", 0.44, 0.31, 0.36, 164),
    ("peeled", 0.67, 0.67, 0.67, 102),
    ("sliced", 0.63, 0.69, 0.66, 237),
    ("whole", 0.68, 0.61, 0.64, 175),
];

/// A7: F1 arithmetic of every reference row, macro averages, and
/// row-normalized confusion matrices.
fn a7() -> Outcome {
    let mut worst = 0.0f64;
    for (name, p, r, f1, _) in VALIDATION_REPORT {
        let got = f1_score(p, r);
        let dev = (got - f1).abs();
        worst = worst.max(dev);
        ensure(dev <= 0.005, format!("{name}: F1 {got:.4} vs printed {f1}"))?;
    }
    let juiced = f1_score(0.78, 0.82);
    ensure((juiced - 0.7995).abs() < 1e-4, format!("juiced F1 {juiced}"))?;
    let mean = |f: fn(&(&str, f64, f64, f64, u64)) -> f64| VALIDATION_REPORT.iter().map(f).sum::<f64>() / 11.0;
    for (label, got, printed) in [
        ("precision", mean(|r| r.1), 0.67),
        ("recall", mean(|r| r.2), 0.68),
        ("f1", mean(|r| r.3), 0.67),
    ] {
        ensure((got - printed).abs() <= 0.005, format!("average {label} {got:.4} vs {printed}"))?;
    }
    let support: u64 = VALIDATION_REPORT.iter().map(|r| r.4).sum();
    ensure(support == 1543, format!("support {support}"))?;

    let two = classification_report(&[vec![5, 5], vec![0, 10]]);
    ensure(
        two.classes[0].precision == 1.0
            && two.classes[0].recall == 0.5
            && (two.classes[0].f1 - 2.0 / 3.0).abs() < 1e-12,
        "2-class reduction",
    )?;

    let mut rng = Rng::new(77);
    let cm: Vec<Vec<u64>> = (0..11)
        .map(|i| (0..11).map(|_| if i == 7 { 0 } else { rng.below(50) }).collect())
        .collect();
    let norm = normalize_cm(&cm);
    for (i, row) in norm.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if i == 7 {
            ensure(s == 0.0, "zero row not kept at zero")?;
        } else {
            ensure((s - 1.0).abs() <= 1e-9, format!("row {i} sums to {s}"))?;
        }
    }
    Ok(format!("11 rows within ±0.005 (worst {worst:.4}), averages and support 1543 agree"))
}

/// Stop epoch and best epoch for a scripted accuracy sequence.
fn trace(seq: &[f64], patience: usize) -> (usize, usize) {
    let mut s = EarlyStopping::new(patience);
    for (i, &a) in seq.iter().enumerate() {
        if s.update(a).stop {
            return (i + 1, s.best_epoch());
        }
    }
    (seq.len(), s.best_epoch())
}

/// A8: hand-traced stopping points.
fn a8() -> Outcome {
    let flat_after = |rise: usize, len: usize| -> Vec<f64> {
        (1..=len).map(|e| 0.01 * e.min(rise) as f64).collect()
    };
    let mut reset = flat_after(10, 60);
    reset[24] = 0.5;
    for v in reset.iter_mut().skip(25) {
        *v = 0.5;
    }
    let cases: Vec<(Vec<f64>, usize, (usize, usize))> = vec![
        (vec![0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6], 3, (5, 2)),
        (vec![0.1, 0.2, 0.2, 0.3], 1, (3, 2)),
        (vec![0.4, 0.3, 0.9], 1, (2, 1)),
        (vec![0.2; 10], 3, (4, 1)),
        (flat_after(10, 60), 20, (30, 10)),
        (reset, 20, (45, 25)),
        (flat_after(60, 60), 20, (60, 60)),
    ];
    for (seq, patience, expected) in &cases {
        let got = trace(seq, *patience);
        ensure(got == *expected, format!("patience {patience}: got {got:?}, expected {expected:?}"))?;
        ensure(got.0 <= got.1 + patience, "ran past best + patience")?;
    }
    Ok(format!("{} scripted sequences over patience {{1, 3, 20}}", cases.len()))
}

fn strip_seconds(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(a, _)| a).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A9: a second A3 run reproduces history and checkpoint bytes; augmented
/// batches do not depend on the worker count.
fn a9(root: &Path, first: &TrainOutcome) -> Outcome {
    let second = train(&a3_config(root, "run_b")).map_err(|e| e.to_string())?;
    let read = |run: &str, f: &str| std::fs::read(root.join(run).join(f)).map_err(|e| e.to_string());
    let ha = String::from_utf8(read("run_a", "history.csv")?).unwrap();
    let hb = String::from_utf8(read("run_b", "history.csv")?).unwrap();
    ensure(strip_seconds(&ha) == strip_seconds(&hb), "history.csv differs")?;
    ensure(read("run_a", "best.ckpt")? == read("run_b", "best.ckpt")?, "best.ckpt differs")?;
    ensure(first.history.records.len() == second.history.records.len(), "epoch counts differ")?;

    let manifest = scan_dataset(root.join("data")).map_err(|e| e.to_string())?;
    let pre = Preprocess::new(
        256,
        224,
        Stats {
            mean: [0.5; 3],
            std: [0.25; 3],
        },
    );
    let ds = Dataset::new(manifest.split(Split::Train), pre, Some(AugConfig::default())).map_err(|e| e.to_string())?;
    let rng = Rng::new(7);
    let indices: Vec<usize> = (0..ds.len()).collect();
    let with_threads = |n: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| ds.batch(&indices, &rng, 3))
            .map_err(|e| e.to_string())
    };
    let one = with_threads(1)?;
    let four = with_threads(4)?;
    ensure(one.inputs == four.inputs, "augmented batch depends on thread count")?;
    Ok(format!(
        "{} epochs, history (minus wall-clock column) and checkpoint byte-identical; augmentation identical on 1 and 4 threads",
        second.history.records.len()
    ))
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    common::write_dataset(&root.join("data"), 2, 224);

    let mut failed = Vec::new();
    let mut record = |id: &str, title: &str, started: Instant, outcome: Outcome| {
        report(id, title, started.elapsed(), &outcome);
        if outcome.is_err() {
            failed.push(id.to_string());
        }
    };

    let t = Instant::now();
    record("A1", "parameter count", t, a1());
    let t = Instant::now();
    record("A2", "gradient suite", t, a2());
    let t = Instant::now();
    let a3_result = a3(root);
    let first = a3_result.as_ref().ok().map(|(_, o)| o.clone());
    record("A3", "overfit oracle", t, a3_result.map(|(d, _)| d));
    let t = Instant::now();
    record("A4", "initial loss", t, a4(root));
    let t = Instant::now();
    record("A5", "schedule table", t, a5());
    let t = Instant::now();
    record("A6", "optimizer oracles", t, a6());
    let t = Instant::now();
    record("A7", "metrics arithmetic", t, a7());
    let t = Instant::now();
    record("A8", "early stopping", t, a8());
    let t = Instant::now();
    let a9_outcome = match &first {
        Some(o) => a9(root, o),
        None => Err("no first A3 run to compare against".into()),
    };
    record("A9", "determinism", t, a9_outcome);

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
