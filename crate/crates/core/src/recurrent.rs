//! LSTM cell and the bidirectional encoder.
//!
//! Gate rows of every weight matrix are stacked in the fixed order
//! input, forget, cell candidate, output:
//!
//! ```text
//! z   = W_ih x_t + W_hh h_{t-1} + b
//! i,f,o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o)
//! g   = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! Both directions start from `h_0 = c_0 = 0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `[4h, d]`
    pub input_weights: Tensor,
    /// `[4h, h]`
    pub recurrent_weights: Tensor,
    /// `[4h]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn new(
        input_weights: Tensor,
        recurrent_weights: Tensor,
        bias: Tensor,
    ) -> Result<Self, ModelError> {
        let p = Self {
            input_weights,
            recurrent_weights,
            bias,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let wr = self.recurrent_weights.shape();
        if wr.len() != 2 || wr[0] != 4 * wr[1] {
            return Err(ModelError::Config(format!(
                "recurrent weights must be [4h, h], got {wr:?}"
            )));
        }
        let h = wr[1];
        let wi = self.input_weights.shape();
        if wi.len() != 2 || wi[0] != 4 * h {
            return Err(ModelError::Dimension {
                what: "input weight rows",
                expected: 4 * h,
                found: wi[0],
            });
        }
        if self.bias.shape() != [4 * h] {
            return Err(ModelError::Dimension {
                what: "bias length",
                expected: 4 * h,
                found: self.bias.numel(),
            });
        }
        Ok(())
    }

    /// Uniform `(-1/sqrt(h), 1/sqrt(h))` initialization.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self::new(
            Tensor::uniform(&[4 * hidden, input_dim], bound, rng)?,
            Tensor::uniform(&[4 * hidden, hidden], bound, rng)?,
            Tensor::uniform(&[4 * hidden], bound, rng)?,
        )
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Result<Self, ModelError> {
        Self::new(
            Tensor::zeros(&[4 * hidden, input_dim])?,
            Tensor::zeros(&[4 * hidden, hidden])?,
            Tensor::zeros(&[4 * hidden])?,
        )
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.shape()[1]
    }

    pub fn bind(&self, g: &mut Graph) -> BoundLstm {
        BoundLstm {
            input_weights: g.param(self.input_weights.clone()),
            recurrent_weights: g.param(self.recurrent_weights.clone()),
            bias: g.param(self.bias.clone()),
            hidden: self.hidden_size(),
        }
    }
}

/// [`LstmParams`] recorded as leaves of a graph.
#[derive(Debug, Clone, Copy)]
pub struct BoundLstm {
    pub input_weights: Var,
    pub recurrent_weights: Var,
    pub bias: Var,
    pub hidden: usize,
}

/// One LSTM step. Returns `(h_t, c_t)`.
pub fn lstm_cell_step(
    g: &mut Graph,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
    p: &BoundLstm,
) -> Result<(Var, Var), ModelError> {
    let h = p.hidden;
    if g.shape(h_prev) != [h] || g.shape(c_prev) != [h] {
        return Err(ModelError::Dimension {
            what: "recurrent state length",
            expected: h,
            found: g.value(h_prev).numel(),
        });
    }
    let d = g.shape(p.input_weights)[1];
    if g.shape(x_t) != [d] {
        return Err(ModelError::Dimension {
            what: "input features",
            expected: d,
            found: g.value(x_t).numel(),
        });
    }
    let from_input = g.matvec(p.input_weights, x_t)?;
    let from_state = g.matvec(p.recurrent_weights, h_prev)?;
    let z = g.add(from_input, from_state)?;
    let z = g.add(z, p.bias)?;

    let zi = g.narrow(z, 0, h)?;
    let zf = g.narrow(z, h, h)?;
    let zg = g.narrow(z, 2 * h, h)?;
    let zo = g.narrow(z, 3 * h, h)?;
    let input_gate = g.sigmoid(zi)?;
    let forget_gate = g.sigmoid(zf)?;
    let candidate = g.tanh(zg)?;
    let output_gate = g.sigmoid(zo)?;

    let kept = g.mul(forget_gate, c_prev)?;
    let written = g.mul(input_gate, candidate)?;
    let c_t = g.add(kept, written)?;
    let squashed = g.tanh(c_t)?;
    let h_t = g.mul(output_gate, squashed)?;
    Ok((h_t, c_t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn new(forward: LstmParams, backward: LstmParams) -> Result<Self, ModelError> {
        if forward.hidden_size() != backward.hidden_size() {
            return Err(ModelError::Dimension {
                what: "backward hidden size",
                expected: forward.hidden_size(),
                found: backward.hidden_size(),
            });
        }
        if forward.input_dim() != backward.input_dim() {
            return Err(ModelError::Dimension {
                what: "backward input dim",
                expected: forward.input_dim(),
                found: backward.input_dim(),
            });
        }
        Ok(Self { forward, backward })
    }

    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let forward = LstmParams::init(input_dim, hidden, rng)?;
        let backward = LstmParams::init(input_dim, hidden, rng)?;
        Self::new(forward, backward)
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    /// Same parameters with the two directions exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            forward: self.backward.clone(),
            backward: self.forward.clone(),
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundBiLstm {
        BoundBiLstm {
            forward: self.forward.bind(g),
            backward: self.backward.bind(g),
        }
    }

    /// Encodes `x: [T, d]` into `H: [T, 2h]` on a throwaway graph.
    pub fn encode(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let hs = bilstm_encode(&mut g, xv, &bound)?;
        Ok(g.value(hs.states).clone())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundBiLstm {
    pub forward: BoundLstm,
    pub backward: BoundLstm,
}

/// Encoder output `H: [T, 2h]`; row `t` is `[forward h_t ; backward h_t]`.
#[derive(Debug, Clone, Copy)]
pub struct HiddenSequence {
    pub states: Var,
    pub len: usize,
    pub width: usize,
}

impl HiddenSequence {
    /// Wraps an existing `[T, width]` node.
    pub fn from_var(g: &Graph, states: Var) -> Result<Self, ModelError> {
        match *g.shape(states) {
            [len, width] => Ok(Self { states, len, width }),
            ref s => Err(ModelError::Tensor(crate::autodiff::TensorError::Rank {
                op: "hidden_sequence",
                expected: 2,
                shape: s.to_vec(),
            })),
        }
    }
}

/// Runs the forward scan over `t = 1..T` and the backward scan over
/// `t = T..1`, then concatenates the two states at each step.
pub fn bilstm_encode(g: &mut Graph, x: Var, p: &BoundBiLstm) -> Result<HiddenSequence, ModelError> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 {
        return Err(ModelError::Tensor(crate::autodiff::TensorError::Rank {
            op: "bilstm_encode",
            expected: 2,
            shape,
        }));
    }
    let (len, d) = (shape[0], shape[1]);
    if len == 0 {
        return Err(ModelError::EmptySequence);
    }
    let expected_d = g.shape(p.forward.input_weights)[1];
    if d != expected_d {
        return Err(ModelError::Dimension {
            what: "input features",
            expected: expected_d,
            found: d,
        });
    }
    let h = p.forward.hidden;

    let steps: Vec<Var> = (0..len).map(|t| g.row(x, t)).collect::<Result<_, _>>()?;
    let zero = Tensor::zeros(&[h])?;

    let mut forward = Vec::with_capacity(len);
    let (mut hs, mut cs) = (g.constant(zero.clone()), g.constant(zero.clone()));
    for &x_t in &steps {
        (hs, cs) = lstm_cell_step(g, x_t, hs, cs, &p.forward)?;
        forward.push(hs);
    }

    let mut backward = vec![hs; len];
    let (mut hs, mut cs) = (g.constant(zero.clone()), g.constant(zero));
    for t in (0..len).rev() {
        (hs, cs) = lstm_cell_step(g, steps[t], hs, cs, &p.backward)?;
        backward[t] = hs;
    }

    let rows: Vec<Var> = forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| g.concat(&[f, b]))
        .collect::<Result<_, _>>()?;
    let states = g.stack_rows(&rows)?;
    Ok(HiddenSequence {
        states,
        len,
        width: 2 * h,
    })
}
