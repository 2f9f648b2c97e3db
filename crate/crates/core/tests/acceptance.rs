//! Acceptance suite: every criterion runs in order inside one test, prints
//! one PASS/FAIL line, and the test fails if any criterion failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqmine_core::autodiff::check_gradients;
use seqmine_core::data::{
    nearest_motif_class, parse_ts, parse_ts_str, synth_motif_dataset, to_ts_string, SynthSpec,
    TsError,
};
use seqmine_core::experiment::{
    prepare, run_training, sweep_length, sweep_window, ExperimentConfig, DEFAULT_LENGTH_GRID,
    DEFAULT_WINDOW_GRID,
};
use seqmine_core::metrics::{report, ConfusionMatrix};
use seqmine_core::model::{batch_loss, forward, ModelConfig, ModelParams};
use seqmine_core::recurrent::BiLstmParams;
use seqmine_core::training::{
    evaluate, load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, Trainer,
};
use seqmine_core::{Graph, Tensor};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
    )
    .unwrap()
}

fn composite_gradient_check() -> Outcome {
    let started = Instant::now();
    let config = ModelConfig {
        input_dim: 3,
        hidden_size: 4,
        window_lengths: vec![3, 7],
        num_classes: 3,
    };
    let params = ModelParams::init(&config, 17).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = [
        random_tensor(&mut rng, &[9, 3], 1.0),
        random_tensor(&mut rng, &[9, 3], 1.0),
    ];
    let labels = [0, 2];
    let batch: Vec<(&Tensor, usize)> = xs.iter().zip(labels).collect();

    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let loss = batch_loss(&mut g, &bound, &batch).map_err(|e| e.to_string())?;
    g.backward(loss).map_err(|e| e.to_string())?;
    let analytic: Vec<Tensor> = bound
        .vars()
        .into_iter()
        .map(|v| g.grad_or_zeros(v))
        .collect();

    let objective = |ts: &[Tensor]| {
        let p = ModelParams::from_tensors(&config, ts.to_vec()).unwrap();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let l = batch_loss(&mut g, &b, &batch).unwrap();
        g.value(l).item().unwrap()
    };
    let rep = check_gradients(objective, &params.to_tensors(), &analytic, 1e-5)
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(rep.checked == params.num_parameters(), || {
        format!("checked {} of {}", rep.checked, params.num_parameters())
    })?;
    ensure(rep.passes(1e-4), || {
        let name = &params.tensor_names()[rep.tensor];
        format!(
            "max rel error {:.3e} at {name}[{}] ({} vs {})",
            rep.max_rel_error, rep.index, rep.analytic, rep.numeric
        )
    })?;
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{} parameters, max rel error {:.2e}, {:.2?}",
        rep.checked, rep.max_rel_error, elapsed
    ))
}

fn weights(e: &[f64], w: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let v = g.constant(Tensor::from_vec(e.to_vec()).unwrap());
    let a = g.window_softmax(v, w).unwrap();
    g.value(a).data().to_vec()
}

fn attention_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let t = rng.random_range(1..60usize);
        let w = rng.random_range(0..t + 3);
        let e: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = weights(&e, w);
        for i in 0..t {
            let (lo, hi) = (i.saturating_sub(w), (i + w).min(t - 1));
            let denom: f64 = e[lo..=hi].iter().map(|v| v.exp()).sum();
            let err = (alpha[i] * denom - e[i].exp()).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || {
                format!("(a) normalization off by {err:e} at T={t}, w={w}, t={i}")
            })?;
        }
        let global = weights(&e, t - 1 + rng.random_range(0..3usize));
        let sum: f64 = global.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-12, || {
            format!("(b) global reduction sums to {sum}")
        })?;
        ensure(weights(&e, 0).iter().all(|&a| a == 1.0), || {
            "(c) w = 0 is not all ones".into()
        })?;
        let shift = rng.random_range(-5.0..5.0);
        let shifted: Vec<f64> = e.iter().map(|v| v + shift).collect();
        let diff = alpha
            .iter()
            .zip(weights(&shifted, w))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(diff <= 1e-12, || {
            format!("(d) shift by {shift} moved weights by {diff:e}")
        })?;
    }
    Ok(format!(
        "100 instances, worst normalization residual {worst:.1e}"
    ))
}

fn bilstm_structure() -> Outcome {
    let (t_len, d, h) = (11, 3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = BiLstmParams::init(d, h, &mut rng).map_err(|e| e.to_string())?;
    let x = random_tensor(&mut rng, &[t_len, d], 1.5);
    let hs = p.encode(&x).map_err(|e| e.to_string())?;

    let mut rows: Vec<Vec<f64>> = x.rows().map(<[f64]>::to_vec).collect();
    rows.reverse();
    let reversed = Tensor::from_rows(&rows).unwrap();
    let hr = p.swapped().encode(&reversed).map_err(|e| e.to_string())?;
    let mut sym = 0.0f64;
    for t in 0..t_len {
        let src = hs.row(t_len - 1 - t);
        let expect: Vec<f64> = src[h..].iter().chain(&src[..h]).copied().collect();
        for (a, b) in hr.row(t).iter().zip(&expect) {
            sym = sym.max((a - b).abs());
        }
    }
    ensure(sym <= 1e-12, || format!("reversal symmetry off by {sym:e}"))?;

    for k in 0..t_len {
        let mut data = x.data().to_vec();
        for c in 0..d {
            data[k * d + c] += 0.75;
        }
        let hp = p
            .encode(&Tensor::new(vec![t_len, d], data).unwrap())
            .map_err(|e| e.to_string())?;
        for t in 0..t_len {
            if t < k {
                ensure(hp.row(t)[..h] == hs.row(t)[..h], || {
                    format!("forward state {t} saw step {k}")
                })?;
            }
            if t > k {
                ensure(hp.row(t)[h..] == hs.row(t)[h..], || {
                    format!("backward state {t} saw step {k}")
                })?;
            }
        }
        ensure(hp.row(k) != hs.row(k), || {
            format!("perturbing step {k} changed nothing")
        })?;
    }
    Ok(format!(
        "reversal residual {sym:.1e}, causality exact for all {t_len} perturbations"
    ))
}

fn surrogate_learning() -> Outcome {
    let started = Instant::now();
    let spec = SynthSpec::default();
    let data = synth_motif_dataset(&spec).map_err(|e| e.to_string())?;
    ensure(
        data.train.class_counts() == vec![50; 4] && data.test.class_counts() == vec![25; 4],
        || "split sizes".into(),
    )?;
    let oracle = data
        .test
        .samples
        .iter()
        .filter(|s| nearest_motif_class(&s.values, &data.motifs) == s.label)
        .count();

    let config = ExperimentConfig::default();
    let outcome = run_training(&config, &data.train, Some(&data.test), spec.seed)
        .map_err(|e| e.to_string())?;
    let prepared =
        prepare(&data.train, None, config.normalize, config.length).map_err(|e| e.to_string())?;
    let train_acc = evaluate(&outcome.params, &prepared.train)
        .map_err(|e| e.to_string())?
        .report
        .accuracy;
    let test_acc = outcome.test.as_ref().expect("test split").report.accuracy;
    let elapsed = started.elapsed();
    let summary = format!(
        "train acc {:.4}, test acc {:.4} after {} epochs, matcher oracle {}/100, {:.1?}",
        train_acc,
        test_acc,
        outcome.history.len(),
        oracle,
        elapsed
    );
    ensure(outcome.history.len() <= 200, || {
        format!("{} epochs", outcome.history.len())
    })?;
    ensure(train_acc >= 0.99, || summary.clone())?;
    ensure(test_acc >= 0.90, || summary.clone())?;
    ensure(elapsed < Duration::from_secs(300), || summary.clone())?;
    Ok(summary)
}

fn sweep_harnesses() -> Outcome {
    let data = synth_motif_dataset(&SynthSpec::default()).map_err(|e| e.to_string())?;
    let config = ExperimentConfig {
        model: ModelConfig {
            hidden_size: 8,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            max_epochs: 3,
            batch_size: 32,
            learning_rate: 0.01,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let run = || -> Result<(String, String), String> {
        let lengths = sweep_length(&config, &data.train, &data.test, &DEFAULT_LENGTH_GRID, 7)
            .map_err(|e| e.to_string())?;
        let windows = sweep_window(&config, &data.train, &data.test, &DEFAULT_WINDOW_GRID, 7)
            .map_err(|e| e.to_string())?;
        for (table, n) in [
            (&lengths, DEFAULT_LENGTH_GRID.len()),
            (&windows, DEFAULT_WINDOW_GRID.len()),
        ] {
            ensure(table.rows.len() == n, || {
                format!("{} rows for {n} grid points", table.rows.len())
            })?;
            for row in &table.rows {
                let m = row
                    .result
                    .as_ref()
                    .map_err(|e| format!("{} {} failed: {e}", table.parameter, row.value))?;
                for v in [m.accuracy, m.precision, m.recall] {
                    ensure(v.is_finite() && (0.0..=1.0).contains(&v), || {
                        format!("{} {}: metric {v}", table.parameter, row.value)
                    })?;
                }
            }
        }
        Ok((lengths.to_csv(), windows.to_csv()))
    };
    let first = run()?;
    let second = run()?;
    ensure(first == second, || {
        "re-run produced different CSV bytes".into()
    })?;
    Ok(format!(
        "{} length rows and {} window rows, identical across re-runs (h = 8, 3 epochs)",
        DEFAULT_LENGTH_GRID.len(),
        DEFAULT_WINDOW_GRID.len()
    ))
}

fn checkpoint_round_trip() -> Outcome {
    let spec = SynthSpec {
        samples_per_class: 12,
        ..SynthSpec::default()
    };
    let data = synth_motif_dataset(&spec).map_err(|e| e.to_string())?;
    let config = ModelConfig {
        input_dim: 3,
        hidden_size: 16,
        window_lengths: vec![3, 7, 11],
        num_classes: 4,
    };
    let train_cfg = TrainConfig {
        max_epochs: 4,
        batch_size: 8,
        seed: 3,
        learning_rate: 0.005,
        ..TrainConfig::default()
    };
    let fresh = || Trainer::new(ModelParams::init(&config, 3).unwrap(), train_cfg.clone()).unwrap();

    let mut full = fresh();
    full.fit(&data.train, None).map_err(|e| e.to_string())?;

    let mut half = fresh();
    for _ in 0..2 {
        half.run_epoch(&data.train, None)
            .map_err(|e| e.to_string())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("half.ckpt");
    save_checkpoint(&path, &half.checkpoint()).map_err(|e| e.to_string())?;
    let loaded: Checkpoint = load_checkpoint(&path).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..10 {
        let x = random_tensor(&mut rng, &[20 + i, 3], 2.0);
        let a = forward(&x, half.params()).map_err(|e| e.to_string())?;
        let b = forward(&x, &loaded.model).map_err(|e| e.to_string())?;
        let same = a
            .probs
            .data()
            .iter()
            .zip(b.probs.data())
            .all(|(p, q)| p.to_bits() == q.to_bits());
        ensure(same, || {
            format!("input {i}: predictions differ after reload")
        })?;
    }

    let mut resumed = Trainer::resume(loaded, None).map_err(|e| e.to_string())?;
    resumed.fit(&data.train, None).map_err(|e| e.to_string())?;
    let (a, b) = (resumed.history().losses(), full.history().losses());
    ensure(a.len() == b.len(), || {
        format!("{} vs {} epochs", a.len(), b.len())
    })?;
    let diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ensure(diff <= 1e-12, || {
        format!("resumed losses differ by {diff:e}")
    })?;
    Ok(format!(
        "10 inputs bitwise identical, {} epoch losses match (max diff {diff:.1e})",
        a.len()
    ))
}

fn parser_fixtures() -> Outcome {
    let mut checked = 0;
    for name in ["valid_multivariate_TRAIN.ts", "missing_values_TEST.ts"] {
        let ds = parse_ts(fixture(name)).map_err(|e| format!("{name}: {e}"))?;
        let back = parse_ts_str(&to_ts_string(&ds), ds.split)
            .map_err(|e| format!("{name} reparse: {e}"))?;
        ensure(back == ds, || format!("{name} does not round-trip"))?;
        checked += 1;
    }
    let valid = parse_ts(fixture("valid_multivariate_TRAIN.ts")).map_err(|e| e.to_string())?;
    ensure(
        valid.len() == 4 && valid.channels == 3 && valid.labels() == vec![0, 1, 2, 0],
        || "valid fixture content".into(),
    )?;
    let missing = parse_ts(fixture("missing_values_TEST.ts")).map_err(|e| e.to_string())?;
    let col = |s: usize, c: usize| {
        (0..5)
            .map(|t| missing.samples[s].values.at(t, c))
            .collect::<Vec<_>>()
    };
    ensure(col(0, 0) == [1.0, 2.0, 3.0, 4.0, 5.0], || {
        format!("imputed {:?}", col(0, 0))
    })?;
    ensure(col(0, 1) == [2.0, 2.0, 2.0, 5.0, 8.0], || {
        format!("imputed {:?}", col(0, 1))
    })?;
    ensure(col(1, 0) == [1.0, 1.0, 1.0, 2.0, 2.0], || {
        format!("imputed {:?}", col(1, 0))
    })?;

    match parse_ts(fixture("bad_dimensions.ts")) {
        Err(TsError::DimensionMismatch {
            line: 11,
            expected: 2,
            found: 3,
        }) => {}
        other => return Err(format!("bad_dimensions.ts gave {other:?}")),
    }
    match parse_ts(fixture("unknown_label.ts")) {
        Err(TsError::UnknownLabel {
            line: 11,
            ref label,
        }) if label == "sideways" => {}
        other => return Err(format!("unknown_label.ts gave {other:?}")),
    }
    Ok(format!(
        "{checked} valid fixtures round-trip, 2 malformed fixtures rejected with their errors"
    ))
}

fn metrics_oracle() -> Outcome {
    let r = report(&ConfusionMatrix {
        counts: vec![vec![2, 0], vec![1, 1]],
    })
    .map_err(|e| e.to_string())?;
    ensure(r.accuracy == 0.75, || format!("accuracy {}", r.accuracy))?;
    ensure((r.precision - 5.0 / 6.0).abs() <= 1e-12, || {
        format!("precision {}", r.precision)
    })?;
    ensure((r.recall - 0.75).abs() <= 1e-12, || {
        format!("recall {}", r.recall)
    })?;
    Ok(format!(
        "acc {}, precision {:.12}, recall {}",
        r.accuracy, r.precision, r.recall
    ))
}

#[test]
fn acceptance_suite() {
    let criteria: [Criterion; 8] = [
        ("composite gradient check", composite_gradient_check),
        ("attention identities", attention_identities),
        ("bilstm reversal symmetry and causality", bilstm_structure),
        ("surrogate learning", surrogate_learning),
        ("sweep harnesses", sweep_harnesses),
        ("checkpoint round trip", checkpoint_round_trip),
        ("parser fixtures", parser_fixtures),
        ("metrics oracle", metrics_oracle),
    ];
    let mut failed = Vec::new();
    for (name, criterion) in criteria {
        let result = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                println!("[FAIL] {name}: {detail}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
