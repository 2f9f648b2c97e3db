//! Multi-scale windowed attention over encoder states.
//!
//! For each scale `s` with half-width `w_s`:
//!
//! ```text
//! e_t   = tanh(W_s h_t + b_s)
//! a_t   = exp(e_t) / sum_{k in win(t)} exp(e_k),  win(t) = [t - w_s, t + w_s] clamped to the sequence
//! c^(s) = sum_{t=1..T} a_t h_t
//! ```
//!
//! The weights are normalized per window but summed over the whole
//! sequence, so `sum_t a_t` is generally not 1 and the context magnitude
//! grows with `T`. Only when `w_s >= T - 1` does every window cover the full
//! sequence and the weights reduce to an ordinary softmax.
//!
//! The fused representation `c` is the in-order concatenation of all `c^(s)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::ModelError;
use crate::recurrent::HiddenSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionScaleParams {
    /// `[1, 2h]`
    pub weight: Tensor,
    /// `[1]`
    pub bias: Tensor,
    pub half_width: usize,
}

impl AttentionScaleParams {
    pub fn new(weight: Tensor, bias: Tensor, half_width: usize) -> Result<Self, ModelError> {
        if weight.rank() != 2 || weight.shape()[0] != 1 {
            return Err(ModelError::Config(format!(
                "attention weight must be [1, 2h], got {:?}",
                weight.shape()
            )));
        }
        if !bias.is_scalar() {
            return Err(ModelError::Config(format!(
                "attention bias must be a scalar, got {:?}",
                bias.shape()
            )));
        }
        Ok(Self {
            weight,
            bias,
            half_width,
        })
    }

    /// Uniform `(-1/sqrt(2h), 1/sqrt(2h))` initialization for both weight and bias.
    pub fn init<R: Rng + ?Sized>(
        feature_width: usize,
        half_width: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let bound = 1.0 / (feature_width as f64).sqrt();
        Self::new(
            Tensor::uniform(&[1, feature_width], bound, rng)?,
            Tensor::uniform(&[1], bound, rng)?,
            half_width,
        )
    }

    pub fn feature_width(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Full window length `2 w_s + 1`.
    pub fn window_length(&self) -> usize {
        2 * self.half_width + 1
    }

    pub fn bind(&self, g: &mut Graph) -> BoundScale {
        BoundScale {
            weight: g.param(self.weight.clone()),
            bias: g.param(self.bias.clone()),
            half_width: self.half_width,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundScale {
    pub weight: Var,
    pub bias: Var,
    pub half_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleParams {
    pub scales: Vec<AttentionScaleParams>,
}

impl MultiScaleParams {
    pub fn new(scales: Vec<AttentionScaleParams>) -> Result<Self, ModelError> {
        let first = scales
            .first()
            .ok_or_else(|| ModelError::Config("at least one attention scale is required".into()))?;
        let width = first.feature_width();
        if let Some(s) = scales.iter().find(|s| s.feature_width() != width) {
            return Err(ModelError::Dimension {
                what: "attention feature width",
                expected: width,
                found: s.feature_width(),
            });
        }
        Ok(Self { scales })
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn feature_width(&self) -> usize {
        self.scales[0].feature_width()
    }

    pub fn bind(&self, g: &mut Graph) -> Vec<BoundScale> {
        self.scales.iter().map(|s| s.bind(g)).collect()
    }

    /// Runs all scales over a fixed hidden sequence `[T, 2h]`.
    pub fn context(&self, hidden: &Tensor) -> Result<(ContextVector, AttentionTrace), ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let states = g.constant(hidden.clone());
        let hs = HiddenSequence::from_var(&g, states)?;
        let out = multi_scale_context(&mut g, &hs, &bound)?;
        Ok((out.context(&g), out.trace(&g, &bound)))
    }
}

/// `e_t = tanh(W_s h_t + b_s)` for every step, as a `[T]` node.
pub fn energies(
    g: &mut Graph,
    hidden: &HiddenSequence,
    scale: &BoundScale,
) -> Result<Var, ModelError> {
    let width = g.shape(scale.weight)[1];
    if width != hidden.width {
        return Err(ModelError::Dimension {
            what: "attention weight width",
            expected: hidden.width,
            found: width,
        });
    }
    let w = g.reshape(scale.weight, &[width])?;
    let scores = g.matvec(hidden.states, w)?;
    let shifted = g.add_scalar(scores, scale.bias)?;
    Ok(g.tanh(shifted)?)
}

/// Locally normalized attention weights over clamped windows of half-width `half_width`.
pub fn windowed_weights(
    g: &mut Graph,
    energies: Var,
    half_width: usize,
) -> Result<Var, ModelError> {
    Ok(g.window_softmax(energies, half_width)?)
}

/// `c = sum_t a_t h_t` over all `T` steps.
pub fn scale_context(
    g: &mut Graph,
    weights: Var,
    hidden: &HiddenSequence,
) -> Result<Var, ModelError> {
    let len = g.value(weights).numel();
    if len != hidden.len {
        return Err(ModelError::Dimension {
            what: "attention weight length",
            expected: hidden.len,
            found: len,
        });
    }
    Ok(g.vecmat(weights, hidden.states)?)
}

/// Graph nodes produced by [`multi_scale_context`].
#[derive(Debug, Clone)]
pub struct MultiScaleVars {
    pub energies: Vec<Var>,
    pub weights: Vec<Var>,
    pub per_scale: Vec<Var>,
    pub fused: Var,
}

impl MultiScaleVars {
    pub fn context(&self, g: &Graph) -> ContextVector {
        ContextVector {
            per_scale: self.per_scale.iter().map(|&v| g.value(v).clone()).collect(),
            fused: g.value(self.fused).clone(),
        }
    }

    pub fn trace(&self, g: &Graph, scales: &[BoundScale]) -> AttentionTrace {
        let scales = scales
            .iter()
            .zip(self.energies.iter().zip(&self.weights))
            .map(|(s, (&e, &a))| ScaleTrace {
                half_width: s.half_width,
                window_length: 2 * s.half_width + 1,
                energies: g.value(e).data().to_vec(),
                weights: g.value(a).data().to_vec(),
            })
            .collect();
        AttentionTrace { scales }
    }
}

pub fn multi_scale_context(
    g: &mut Graph,
    hidden: &HiddenSequence,
    scales: &[BoundScale],
) -> Result<MultiScaleVars, ModelError> {
    if scales.is_empty() {
        return Err(ModelError::Config(
            "at least one attention scale is required".into(),
        ));
    }
    let mut out = MultiScaleVars {
        energies: vec![],
        weights: vec![],
        per_scale: vec![],
        fused: hidden.states,
    };
    for scale in scales {
        let e = energies(g, hidden, scale)?;
        let a = windowed_weights(g, e, scale.half_width)?;
        let c = scale_context(g, a, hidden)?;
        out.energies.push(e);
        out.weights.push(a);
        out.per_scale.push(c);
    }
    out.fused = g.concat(&out.per_scale)?;
    Ok(out)
}

/// Per-scale context vectors and their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub per_scale: Vec<Tensor>,
    pub fused: Tensor,
}

/// Energies and weights of one scale, kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleTrace {
    pub half_width: usize,
    pub window_length: usize,
    pub energies: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub scales: Vec<ScaleTrace>,
}
