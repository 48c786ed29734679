//! Central finite-difference gradient checking. This is the independent
//! oracle every registered op is validated against; it never touches the
//! analytic backward path when computing its reference values.

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Maximum relative error between analytic gradients and central differences.
///
/// `build` must construct a scalar loss from leaves created for `inputs`
/// (all marked `requires_grad`). Every input element is perturbed by ±h.
pub fn max_relative_error<F>(inputs: &[Tensor], build: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    // analytic pass
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &vars)?;
    if !g.value(loss).is_scalar() {
        return Err(TensorError::NonScalarLoss(g.value(loss).shape().to_vec()));
    }
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).map(|s| s.to_vec()).unwrap_or_default())
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut max_err = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let orig = input.data()[i];
            work[ti].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[ti].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[ti].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][i];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            let err = (a - numeric).abs() / denom;
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes() {
        let x = Tensor::from_vec(vec![3], vec![0.3, -0.7, 1.2]).unwrap();
        let err = max_relative_error(
            &[x],
            |g, vars| {
                let sq = g.mul(vars[0], vars[0])?;
                Ok(g.sum(sq))
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-8, "err {err}");
    }
}
