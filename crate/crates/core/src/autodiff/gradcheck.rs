use super::{Tensor, TensorError};

/// Central-difference gradient of `f` at `params`.
///
/// Each coordinate is perturbed by `±eps` in turn; the result has one tensor
/// per input tensor, shaped like it.
pub fn finite_diff_grad<F>(
    mut f: F,
    params: &[Tensor],
    eps: f64,
) -> Result<Vec<Tensor>, TensorError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::InvalidStep(eps));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for ti in 0..params.len() {
        let mut grad = vec![0.0; params[ti].numel()];
        for (ci, slot) in grad.iter_mut().enumerate() {
            let orig = params[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + eps;
            let plus = f(&work);
            work[ti].data_mut()[ci] = orig - eps;
            let minus = f(&work);
            work[ti].data_mut()[ci] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(TensorError::NonFiniteObjective {
                    tensor: ti,
                    index: ci,
                });
            }
            *slot = (plus - minus) / (2.0 * eps);
        }
        out.push(Tensor::new(params[ti].shape().to_vec(), grad)?);
    }
    Ok(out)
}

/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Worst disagreement between two gradient sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares analytic gradients against finite differences of `f`.
pub fn check_gradients<F>(
    f: F,
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let numeric = finite_diff_grad(f, params, eps)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        tensor: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (ti, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        if a.shape() != n.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "check_gradients",
                left: a.shape().to_vec(),
                right: n.shape().to_vec(),
            });
        }
        for (ci, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let err = relative_error(av, nv);
            report.checked += 1;
            if err > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: err,
                    tensor: ti,
                    index: ci,
                    analytic: av,
                    numeric: nv,
                    ..report
                };
            }
        }
    }
    Ok(report)
}
