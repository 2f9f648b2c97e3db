//! End-to-end classifier: BiLSTM encoder, multi-scale attention, and a
//! softmax head trained with cross-entropy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{
    multi_scale_context, AttentionScaleParams, AttentionTrace, BoundScale, MultiScaleParams,
    MultiScaleVars,
};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::ModelError;
use crate::recurrent::{bilstm_encode, BiLstmParams, BoundBiLstm, LstmParams};

/// Lower bound applied to the true-class probability before the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_size: usize,
    /// Full odd window lengths `2 w_s + 1`, one per attention scale.
    pub window_lengths: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_size: 64,
            window_lengths: vec![3, 7, 11],
            num_classes: 2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.hidden_size == 0 {
            return Err(ModelError::Config(
                "input_dim and hidden_size must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.window_lengths.is_empty() {
            return Err(ModelError::Config(
                "at least one attention window is required".into(),
            ));
        }
        if let Some(w) = self.window_lengths.iter().find(|&&w| w == 0 || w % 2 == 0) {
            return Err(ModelError::Config(format!(
                "window length {w} must be odd and at least 1"
            )));
        }
        Ok(())
    }

    pub fn half_widths(&self) -> Vec<usize> {
        self.window_lengths.iter().map(|w| (w - 1) / 2).collect()
    }

    pub fn num_scales(&self) -> usize {
        self.window_lengths.len()
    }

    /// Length of the fused context `S * 2h`.
    pub fn context_width(&self) -> usize {
        self.num_scales() * 2 * self.hidden_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    /// `[C, S * 2h]`
    pub weight: Tensor,
    /// `[C]`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: BiLstmParams,
    pub attention: MultiScaleParams,
    pub head: ClassifierHead,
}

/// Every trainable tensor of a model bound into one graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub encoder: BoundBiLstm,
    pub scales: Vec<BoundScale>,
    pub head_weight: Var,
    pub head_bias: Var,
}

impl BoundModel {
    /// Leaves in [`ModelParams::tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        for d in [&self.encoder.forward, &self.encoder.backward] {
            v.extend([d.input_weights, d.recurrent_weights, d.bias]);
        }
        for s in &self.scales {
            v.extend([s.weight, s.bias]);
        }
        v.extend([self.head_weight, self.head_bias]);
        v
    }
}

impl ModelParams {
    /// Seeded initialization: encoder and attention uniform in `±1/sqrt(fan)`,
    /// head weight uniform in `±1/sqrt(S * 2h)`, head bias zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_size;
        let encoder = BiLstmParams::init(config.input_dim, h, &mut rng)?;
        let scales = config
            .half_widths()
            .into_iter()
            .map(|w| AttentionScaleParams::init(2 * h, w, &mut rng))
            .collect::<Result<_, _>>()?;
        let width = config.context_width();
        let head = ClassifierHead {
            weight: Tensor::uniform(
                &[config.num_classes, width],
                1.0 / (width as f64).sqrt(),
                &mut rng,
            )?,
            bias: Tensor::zeros(&[config.num_classes])?,
        };
        Self::assemble(
            config.clone(),
            encoder,
            MultiScaleParams::new(scales)?,
            head,
        )
    }

    pub fn assemble(
        config: ModelConfig,
        encoder: BiLstmParams,
        attention: MultiScaleParams,
        head: ClassifierHead,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        let p = Self {
            config,
            encoder,
            attention,
            head,
        };
        p.check_dims()?;
        Ok(p)
    }

    fn check_dims(&self) -> Result<(), ModelError> {
        let c = &self.config;
        let dim = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(ModelError::Dimension {
                    what,
                    expected,
                    found,
                })
            }
        };
        dim("encoder input dim", c.input_dim, self.encoder.input_dim())?;
        dim(
            "encoder hidden size",
            c.hidden_size,
            self.encoder.hidden_size(),
        )?;
        dim(
            "attention scales",
            c.num_scales(),
            self.attention.num_scales(),
        )?;
        dim(
            "attention feature width",
            2 * c.hidden_size,
            self.attention.feature_width(),
        )?;
        for (s, w) in self.attention.scales.iter().zip(c.half_widths()) {
            dim("attention half width", w, s.half_width)?;
        }
        let hw = self.head.weight.shape();
        if hw.len() != 2 {
            return Err(ModelError::Config(format!(
                "head weight must be rank 2, got {hw:?}"
            )));
        }
        dim("head rows", c.num_classes, hw[0])?;
        dim("head columns", c.context_width(), hw[1])?;
        dim("head bias", c.num_classes, self.head.bias.numel())?;
        Ok(())
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for d in [&self.encoder.forward, &self.encoder.backward] {
            v.extend([&d.input_weights, &d.recurrent_weights, &d.bias]);
        }
        for s in &self.attention.scales {
            v.extend([&s.weight, &s.bias]);
        }
        v.extend([&self.head.weight, &self.head.bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for d in [&mut self.encoder.forward, &mut self.encoder.backward] {
            v.extend([&mut d.input_weights, &mut d.recurrent_weights, &mut d.bias]);
        }
        for s in &mut self.attention.scales {
            v.extend([&mut s.weight, &mut s.bias]);
        }
        v.extend([&mut self.head.weight, &mut self.head.bias]);
        v
    }

    /// Names aligned with [`ModelParams::tensors`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for dir in ["forward", "backward"] {
            for part in ["input_weights", "recurrent_weights", "bias"] {
                v.push(format!("encoder.{dir}.{part}"));
            }
        }
        for s in 0..self.attention.num_scales() {
            v.push(format!("attention.{s}.weight"));
            v.push(format!("attention.{s}.bias"));
        }
        v.push("head.weight".into());
        v.push("head.bias".into());
        v
    }

    pub fn to_tensors(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Rebuilds a model from tensors in [`ModelParams::tensors`] order.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = 6 + 2 * config.num_scales() + 2;
        if tensors.len() != expected {
            return Err(ModelError::ParamCount {
                expected,
                found: tensors.len(),
            });
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("count checked");
        let forward = LstmParams::new(next(), next(), next())?;
        let backward = LstmParams::new(next(), next(), next())?;
        let scales = config
            .half_widths()
            .into_iter()
            .map(|w| AttentionScaleParams::new(next(), next(), w))
            .collect::<Result<_, _>>()?;
        let head = ClassifierHead {
            weight: next(),
            bias: next(),
        };
        Self::assemble(
            config.clone(),
            BiLstmParams::new(forward, backward)?,
            MultiScaleParams::new(scales)?,
            head,
        )
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(g),
            scales: self.attention.bind(g),
            head_weight: g.param(self.head.weight.clone()),
            head_bias: g.param(self.head.bias.clone()),
        }
    }
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub logits: Var,
    pub probs: Var,
    pub attention: MultiScaleVars,
}

/// `y' = softmax(W_c c + b_c)` for one sequence `x: [T, d]`.
pub fn forward_graph(g: &mut Graph, model: &BoundModel, x: Var) -> Result<ForwardVars, ModelError> {
    let hidden = bilstm_encode(g, x, &model.encoder)?;
    let attention = multi_scale_context(g, &hidden, &model.scales)?;
    let width = g.shape(model.head_weight)[1];
    let fused = g.value(attention.fused).numel();
    if width != fused {
        return Err(ModelError::Dimension {
            what: "head columns",
            expected: fused,
            found: width,
        });
    }
    let scores = g.matvec(model.head_weight, attention.fused)?;
    let logits = g.add(scores, model.head_bias)?;
    let probs = g.softmax(logits)?;
    Ok(ForwardVars {
        logits,
        probs,
        attention,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Tensor,
    pub predicted_class: usize,
    pub trace: Option<AttentionTrace>,
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

fn check_input(p: &ModelParams, x: &Tensor) -> Result<(), ModelError> {
    if x.rank() != 2 {
        return Err(ModelError::Config(format!(
            "input must be [T, d], got {:?}",
            x.shape()
        )));
    }
    if x.shape()[1] != p.config.input_dim {
        return Err(ModelError::Dimension {
            what: "input features",
            expected: p.config.input_dim,
            found: x.shape()[1],
        });
    }
    Ok(())
}

/// Class probabilities and attention trace for one sequence.
pub fn forward(x: &Tensor, p: &ModelParams) -> Result<Prediction, ModelError> {
    check_input(p, x)?;
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let xv = g.constant(x.clone());
    let out = forward_graph(&mut g, &bound, xv)?;
    let probs = g.value(out.probs).clone();
    Ok(Prediction {
        predicted_class: argmax(probs.data()),
        probs,
        trace: Some(out.attention.trace(&g, &bound.scales)),
    })
}

/// `-log(max(probs[label], 1e-12))`.
pub fn cross_entropy(g: &mut Graph, probs: Var, label: usize) -> Result<Var, ModelError> {
    let classes = g.value(probs).numel();
    if label >= classes {
        return Err(ModelError::LabelOutOfRange { label, classes });
    }
    let p = g.select(probs, label)?;
    let p = g.clamp_min(p, PROB_FLOOR)?;
    let log_p = g.log(p)?;
    Ok(g.scale(log_p, -1.0)?)
}

/// One labelled sequence.
pub type Example<'a> = (&'a Tensor, usize);

/// Mean cross-entropy over a batch, recorded on a single graph.
pub fn batch_loss(
    g: &mut Graph,
    model: &BoundModel,
    batch: &[Example<'_>],
) -> Result<Var, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut losses = Vec::with_capacity(batch.len());
    for &(x, label) in batch {
        let xv = g.constant(x.clone());
        let out = forward_graph(g, model, xv)?;
        losses.push(cross_entropy(g, out.probs, label)?);
    }
    let stacked = g.concat(&losses)?;
    Ok(g.mean(stacked)?)
}

/// Loss and predicted class of one example plus its parameter gradients.
pub struct ExampleGrad {
    pub loss: f64,
    pub predicted_class: usize,
    pub grads: Vec<Vec<f64>>,
}

fn example_grad(p: &ModelParams, x: &Tensor, label: usize) -> Result<ExampleGrad, ModelError> {
    check_input(p, x)?;
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let xv = g.constant(x.clone());
    let out = forward_graph(&mut g, &bound, xv)?;
    let loss = cross_entropy(&mut g, out.probs, label)?;
    let predicted_class = argmax(g.value(out.probs).data());
    let loss_value = g.value(loss).item()?;
    g.backward(loss)?;
    let grads = bound
        .vars()
        .into_iter()
        .map(|v| g.grad_or_zeros(v).into_data())
        .collect();
    Ok(ExampleGrad {
        loss: loss_value,
        predicted_class,
        grads,
    })
}

/// Batch result of [`loss_and_gradients`].
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub predictions: Vec<usize>,
}

/// Mean loss and its gradient, one graph per example evaluated in parallel.
///
/// Per-example results are reduced in batch order, so the output is
/// independent of thread scheduling.
pub fn loss_and_gradients(
    p: &ModelParams,
    batch: &[Example<'_>],
) -> Result<BatchGradients, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let parts: Vec<ExampleGrad> = batch
        .par_iter()
        .map(|&(x, label)| example_grad(p, x, label))
        .collect::<Result<_, _>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut sums: Vec<Vec<f64>> = p.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
    let mut loss = 0.0;
    for part in &parts {
        loss += part.loss;
        for (acc, g) in sums.iter_mut().zip(&part.grads) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    let grads = p
        .tensors()
        .iter()
        .zip(sums)
        .map(|(t, s)| {
            Tensor::new(
                t.shape().to_vec(),
                s.into_iter().map(|v| v * scale).collect(),
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(BatchGradients {
        loss: loss * scale,
        grads,
        predictions: parts.iter().map(|e| e.predicted_class).collect(),
    })
}

/// Mean loss without gradients.
pub fn mean_loss(p: &ModelParams, batch: &[Example<'_>]) -> Result<f64, ModelError> {
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let loss = batch_loss(&mut g, &bound, batch)?;
    Ok(g.value(loss).item()?)
}

/// Predicted classes for many sequences, evaluated in parallel.
pub fn predict_all(p: &ModelParams, xs: &[&Tensor]) -> Result<Vec<usize>, ModelError> {
    xs.par_iter()
        .map(|x| forward(x, p).map(|pr| pr.predicted_class))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            input_dim: 3,
            hidden_size: 4,
            window_lengths: vec![3, 7],
            num_classes: 5,
        }
    }

    fn sample(t: usize, d: usize) -> Tensor {
        Tensor::new(
            vec![t, d],
            (0..t * d)
                .map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut p = ModelParams::init(&small_config(), 1).unwrap();
        p.head.weight = Tensor::zeros(p.head.weight.shape()).unwrap();
        let pr = forward(&sample(6, 3), &p).unwrap();
        for &v in pr.probs.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn biased_head() {
        let mut cfg = small_config();
        cfg.num_classes = 3;
        let mut p = ModelParams::init(&cfg, 1).unwrap();
        p.head.weight = Tensor::zeros(p.head.weight.shape()).unwrap();
        p.head.bias = Tensor::from_vec(vec![10.0, 0.0, 0.0]).unwrap();
        let pr = forward(&sample(4, 3), &p).unwrap();
        let z = 10f64.exp() + 2.0;
        assert!((pr.probs.data()[0] - 10f64.exp() / z).abs() < 1e-15);
        assert!((pr.probs.data()[0] - 0.99991).abs() < 1e-5);
        assert!((pr.probs.data()[1] - 0.000045).abs() < 1e-6);
        assert_eq!(pr.predicted_class, 0);
    }

    #[test]
    fn output_shape_and_trace() {
        let p = ModelParams::init(&small_config(), 2).unwrap();
        let pr = forward(&sample(7, 3), &p).unwrap();
        assert_eq!(pr.probs.shape(), &[5]);
        let trace = pr.trace.unwrap();
        assert_eq!(trace.scales.len(), 2);
        assert_eq!(trace.scales[1].window_length, 7);
        assert_eq!(trace.scales[0].weights.len(), 7);
    }

    #[test]
    fn input_dim_mismatch() {
        let p = ModelParams::init(&small_config(), 2).unwrap();
        assert!(matches!(
            forward(&sample(7, 2), &p),
            Err(ModelError::Dimension { .. })
        ));
    }

    fn ce(probs: &[f64], label: usize) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_vec(probs.to_vec()).unwrap());
        let l = cross_entropy(&mut g, p, label)?;
        Ok(g.value(l).item().unwrap())
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(ce(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        assert!((ce(&[0.25; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((ce(&[0.5, 0.5], 0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((ce(&[1.0, 0.0], 1).unwrap() - (-PROB_FLOOR.ln())).abs() < 1e-12);
        assert!(matches!(
            ce(&[0.5, 0.5], 2),
            Err(ModelError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn batch_loss_is_mean() {
        let p = ModelParams::init(&small_config(), 3).unwrap();
        let (a, b) = (sample(5, 3), sample(8, 3));
        let la = mean_loss(&p, &[(&a, 1)]).unwrap();
        let lb = mean_loss(&p, &[(&b, 4)]).unwrap();
        let both = mean_loss(&p, &[(&a, 1), (&b, 4)]).unwrap();
        assert!((both - (la + lb) / 2.0).abs() < 1e-15);

        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let single = batch_loss(&mut g, &bound, &[(&a, 1)]).unwrap();
        let xa = g.constant(a.clone());
        let out = forward_graph(&mut g, &bound, xa).unwrap();
        let direct = cross_entropy(&mut g, out.probs, 1).unwrap();
        assert_eq!(
            g.value(single).item().unwrap(),
            g.value(direct).item().unwrap()
        );

        assert!(matches!(mean_loss(&p, &[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn parallel_gradients_match_single_graph() {
        let p = ModelParams::init(&small_config(), 4).unwrap();
        let (a, b) = (sample(5, 3), sample(6, 3));
        let batch = [(&a, 0), (&b, 3)];
        let par = loss_and_gradients(&p, &batch).unwrap();

        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let loss = batch_loss(&mut g, &bound, &batch).unwrap();
        assert!((g.value(loss).item().unwrap() - par.loss).abs() < 1e-12);
        g.backward(loss).unwrap();
        for (v, t) in bound.vars().into_iter().zip(&par.grads) {
            for (x, y) in g.grad_or_zeros(v).data().iter().zip(t.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tensor_round_trip() {
        let p = ModelParams::init(&small_config(), 5).unwrap();
        let q = ModelParams::from_tensors(&p.config, p.to_tensors()).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.tensor_names().len(), p.tensors().len());
        assert!(matches!(
            ModelParams::from_tensors(&p.config, vec![]),
            Err(ModelError::ParamCount { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.window_lengths = vec![4];
        assert!(c.validate().is_err());
        c.window_lengths = vec![];
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.num_classes = 1;
        assert!(c.validate().is_err());
    }
}
