use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, one flat buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update applied in place.
///
/// Every gradient is checked before anything is modified, so a non-finite
/// gradient leaves both the parameters and the state untouched.
pub fn adam_step(
    params: &mut [&mut Tensor],
    names: &[String],
    grads: &[Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::GradientCount {
            expected: params.len(),
            found: grads.len(),
        });
    }
    let name = |i: usize| {
        names
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("tensor {i}"))
    };
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(TrainError::GradientShape {
                tensor: name(i),
                expected: p.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
        if let Some(index) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                tensor: name(i),
                index,
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let AdamConfig {
        learning_rate: lr,
        beta1: b1,
        beta2: b2,
        epsilon: eps,
    } = *config;
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, (theta, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if let Some(index) = p.data().iter().position(|v| !v.is_finite()) {
            return Err(TrainError::NonFiniteParameter {
                tensor: name(i),
                index,
            });
        }
    }
    Ok(())
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before and after clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> (f64, f64) {
    let norm = global_norm(grads);
    if norm <= max_norm {
        return (norm, norm);
    }
    let factor = max_norm / norm * (1.0 - 4.0 * f64::EPSILON);
    for g in grads.iter_mut() {
        for v in g.data_mut() {
            *v *= factor;
        }
    }
    (norm, global_norm(grads))
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(theta: &mut Tensor, grad: f64, state: &mut AdamState, cfg: &AdamConfig) {
        let g = Tensor::filled(theta.shape(), grad).unwrap();
        adam_step(&mut [theta], &[], &[g], state, cfg).unwrap();
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut theta = Tensor::from_vec(vec![0.5, -1.5]).unwrap();
        let mut state = AdamState::new(&[&theta]);
        run(&mut theta, 0.0, &mut state, &AdamConfig::default());
        assert_eq!(theta.data(), &[0.5, -1.5]);
        assert_eq!(state.m, vec![vec![0.0, 0.0]]);
        assert_eq!(state.v, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut theta = Tensor::scalar(1.0).unwrap();
        let mut state = AdamState::new(&[&theta]);
        run(&mut theta, 2.0, &mut state, &cfg);
        // m_hat = 2, v_hat = 4, so the step is lr * 2 / (2 + eps)
        assert!((theta.item().unwrap() - (1.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut theta = Tensor::scalar(0.0).unwrap();
        let mut state = AdamState::new(&[&theta]);
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = theta.item().unwrap();
            run(&mut theta, -0.3, &mut state, &cfg);
            last = theta.item().unwrap() - before;
        }
        assert!((last - 0.01).abs() < 1e-6, "{last}");
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut a = Tensor::scalar(1.0).unwrap();
        let mut b = Tensor::from_vec(vec![1.0, 2.0]).unwrap();
        let mut state = AdamState::new(&[&a, &b]);
        let grads = vec![Tensor::scalar(1.0).unwrap(), Tensor::scalar(1.0).unwrap()];
        let names = vec!["a".to_string(), "b".to_string()];
        let err = adam_step(
            &mut [&mut a, &mut b],
            &names,
            &grads,
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, TrainError::GradientShape { ref tensor, .. } if tensor == "b"));

        let mut bad = Tensor::from_vec(vec![0.0, 0.0]).unwrap();
        bad.data_mut()[1] = f64::NAN;
        let grads = vec![Tensor::scalar(1.0).unwrap(), bad];
        let err = adam_step(
            &mut [&mut a, &mut b],
            &names,
            &grads,
            &mut state,
            &AdamConfig::default(),
        )
        .unwrap_err();
        assert!(
            matches!(err, TrainError::NonFiniteGradient { ref tensor, index: 1 } if tensor == "b")
        );
        assert_eq!(state.step, 0);
        assert_eq!(a.item().unwrap(), 1.0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut grads = vec![
            Tensor::from_vec(vec![3.0, 4.0]).unwrap(),
            Tensor::scalar(12.0).unwrap(),
        ];
        let (pre, post) = clip_global_norm(&mut grads, 1.3);
        assert_eq!(pre, 13.0);
        assert!(post <= 1.3 && post > 1.3 - 1e-12);
        assert!(global_norm(&grads) <= 1.3);

        let mut small = vec![Tensor::from_vec(vec![0.3, 0.4]).unwrap()];
        assert_eq!(clip_global_norm(&mut small, 1.0), (0.5, 0.5));
        assert_eq!(small[0].data(), &[0.3, 0.4]);
    }
}
