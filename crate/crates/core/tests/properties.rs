use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqmine_core::attention::{AttentionScaleParams, MultiScaleParams};
use seqmine_core::autodiff::check_gradients;
use seqmine_core::data::{
    pad_or_trim, parse_ts_str, to_ts_string, znorm, SequenceDataset, SequenceSample, Split,
};
use seqmine_core::metrics::{confusion, report, report_with, Averaging};
use seqmine_core::recurrent::{bilstm_encode, BiLstmParams, LstmParams};
use seqmine_core::{Graph, Tensor};

fn tensor(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
    Tensor::new(shape, data).unwrap()
}

#[test]
fn bilstm_gradients_match_finite_differences() {
    let (t_len, d, h) = (6, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = BiLstmParams::init(d, h, &mut rng).unwrap();
    let x = tensor(
        vec![t_len, d],
        (0..t_len * d)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    );
    let weights: Vec<f64> = (0..t_len * 2 * h)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let weights = tensor(vec![t_len, 2 * h], weights);

    let to_tensors = |p: &BiLstmParams| {
        let mut v = Vec::new();
        for dir in [&p.forward, &p.backward] {
            v.extend([
                dir.input_weights.clone(),
                dir.recurrent_weights.clone(),
                dir.bias.clone(),
            ]);
        }
        v.push(x.clone());
        v
    };
    let objective = |ts: &[Tensor]| -> (Graph, seqmine_core::Var, Vec<seqmine_core::Var>) {
        let mut g = Graph::new();
        let fwd = LstmParams::new(ts[0].clone(), ts[1].clone(), ts[2].clone()).unwrap();
        let bwd = LstmParams::new(ts[3].clone(), ts[4].clone(), ts[5].clone()).unwrap();
        let bound = BiLstmParams::new(fwd, bwd).unwrap().bind(&mut g);
        let xv = g.param(ts[6].clone());
        let hs = bilstm_encode(&mut g, xv, &bound).unwrap();
        let w = g.constant(weights.clone());
        let prod = g.mul(hs.states, w).unwrap();
        let loss = g.sum(prod).unwrap();
        let mut vars = Vec::new();
        for b in [&bound.forward, &bound.backward] {
            vars.extend([b.input_weights, b.recurrent_weights, b.bias]);
        }
        vars.push(xv);
        (g, loss, vars)
    };

    let params = to_tensors(&p);
    let (mut g, loss, vars) = objective(&params);
    g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| g.grad_or_zeros(v)).collect();
    let f = |ts: &[Tensor]| {
        let (g, loss, _) = objective(ts);
        g.value(loss).item().unwrap()
    };
    let rep = check_gradients(f, &params, &analytic, 1e-5).unwrap();
    assert!(rep.passes(1e-6), "{rep:?}");
}

#[test]
fn attention_context_is_convex_mix_for_global_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let hidden = tensor(
        vec![7, 4],
        (0..28).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let scale = AttentionScaleParams::init(4, 6, &mut rng).unwrap();
    let (ctx, trace) = MultiScaleParams::new(vec![scale])
        .unwrap()
        .context(&hidden)
        .unwrap();
    let weights = &trace.scales[0].weights;
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for c in 0..4 {
        let col: Vec<f64> = (0..7).map(|t| hidden.at(t, c)).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = ctx.fused.data()[c];
        assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
}

fn window_weights(e: &[f64], w: usize) -> Vec<f64> {
    let mut g = Graph::new();
    let v = g.constant(tensor(vec![e.len()], e.to_vec()));
    let a = g.window_softmax(v, w).unwrap();
    g.value(a).data().to_vec()
}

proptest! {
    #[test]
    fn window_weights_positive_and_bounded(e in prop::collection::vec(-1.0f64..1.0, 1..40), w in 0usize..45) {
        let a = window_weights(&e, w);
        for (t, &v) in a.iter().enumerate() {
            prop_assert!(v > 0.0 && v <= 1.0);
            let width = (t + w).min(e.len() - 1) - t.saturating_sub(w) + 1;
            // each weight is at least the window's smallest share
            prop_assert!(v >= (-2.0f64).exp() / width as f64 - 1e-15);
        }
    }

    #[test]
    fn window_weights_shift_invariant(e in prop::collection::vec(-1.0f64..1.0, 1..40), w in 0usize..10, c in -20.0f64..20.0) {
        let shifted: Vec<f64> = e.iter().map(|v| v + c).collect();
        for (a, b) in window_weights(&e, w).iter().zip(window_weights(&shifted, w)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn ts_round_trip(
        len in 1usize..8,
        channels in 1usize..4,
        labels in prop::collection::vec(0usize..3, 1..6),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<SequenceSample> = labels
            .iter()
            .map(|&l| {
                let data = (0..len * channels).map(|_| rng.random_range(-1e6..1e6)).collect();
                SequenceSample::new(tensor(vec![len, channels], data), l).unwrap()
            })
            .collect();
        let names = vec!["x".to_string(), "y".into(), "z".into()];
        let ds = SequenceDataset::new("prop", samples, names, channels, Split::Train).unwrap();
        let back = parse_ts_str(&to_ts_string(&ds), Split::Train).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn pad_or_trim_idempotent(len in 1usize..20, target in 1usize..20, d in 1usize..3) {
        let s = SequenceSample::new(tensor(vec![len, d], (0..len * d).map(|i| i as f64 + 1.0).collect()), 0).unwrap();
        let once = pad_or_trim(&s, target).unwrap();
        prop_assert_eq!(once.len(), target);
        prop_assert_eq!(pad_or_trim(&once, target).unwrap(), once.clone());
        let keep = len.min(target) * d;
        prop_assert_eq!(&once.values.data()[..keep], &s.values.data()[..keep]);
    }

    #[test]
    fn znorm_centers_train(values in prop::collection::vec(-100.0f64..100.0, 4..40)) {
        let n = values.len() / 2 * 2;
        let s = SequenceSample::new(tensor(vec![n / 2, 2], values[..n].to_vec()), 0).unwrap();
        let ds = SequenceDataset::new("z", vec![s], vec!["a".into()], 2, Split::Train).unwrap();
        let (normed, _, stats) = znorm(&ds, None).unwrap();
        let v = &normed.samples[0].values;
        for c in 0..2 {
            let col: Vec<f64> = (0..n / 2).map(|t| v.at(t, c)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            if stats.std[c] > 1e-6 {
                let var = col.iter().map(|x| x * x).sum::<f64>() / col.len() as f64;
                prop_assert!((var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn metrics_permutation_invariant(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60), rot in 1usize..4) {
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let perm = |k: usize| (k + rot) % 4;
        let pp: Vec<usize> = preds.iter().map(|&k| perm(k)).collect();
        let pl: Vec<usize> = labels.iter().map(|&k| perm(k)).collect();
        let a = report(&confusion(&preds, &labels, 4).unwrap()).unwrap();
        let b = report(&confusion(&pp, &pl, 4).unwrap()).unwrap();
        prop_assert!((a.accuracy - b.accuracy).abs() <= 1e-12);
        prop_assert!((a.precision - b.precision).abs() <= 1e-12);
        prop_assert!((a.recall - b.recall).abs() <= 1e-12);
        for k in 0..4 {
            prop_assert_eq!(a.per_class_precision[k], b.per_class_precision[perm(k)]);
            prop_assert_eq!(a.per_class_recall[k], b.per_class_recall[perm(k)]);
        }
        for v in [a.accuracy, a.precision, a.recall] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let micro = report_with(&confusion(&preds, &labels, 4).unwrap(), Averaging::Micro).unwrap();
        prop_assert_eq!(micro.recall, a.accuracy);
    }
}

#[test]
fn random_predictions_score_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let labels: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    let preds: Vec<usize> = (0..1000).map(|_| rng.random_range(0..2)).collect();
    let r = report(&confusion(&preds, &labels, 2).unwrap()).unwrap();
    assert!((r.accuracy - 0.5).abs() <= 0.1, "{}", r.accuracy);
}
