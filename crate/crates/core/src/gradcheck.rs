//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Relative disagreement between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares the reverse-mode gradient of a scalar function against central
/// differences with step `h`, returning the maximum relative error over every
/// element of every parameter.
///
/// `f` receives a fresh graph and one parameter handle per entry of `params`
/// and must return a scalar node.
pub fn grad_check<F>(params: &[Tensor<f64>], h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::contract(format!("step size must be positive, got {h}")));
    }
    let eval = |ps: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let out = f(&mut g, &vars)?;
        if !g.value(out).is_scalar() {
            return Err(Error::contract(format!(
                "grad_check needs a scalar-valued function, got shape {:?}",
                g.value(out).shape()
            )));
        }
        Ok((g, vars, out))
    };

    let (mut g, vars, out) = eval(params)?;
    g.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();

    let scalar_at = |ps: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, out) = eval(ps)?;
        Ok(g.value(out).data()[0])
    };

    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let orig = params[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + h;
            let up = scalar_at(&work)?;
            work[pi].data_mut()[ei] = orig - h;
            let down = scalar_at(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(analytic[pi].data()[ei], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = grad_check(&[Tensor::scalar(3.0)], 1e-5, |g, v| g.mul(v[0], v[0])).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = grad_check(&[Tensor::scalar(3.0)], 1e-5, |g, _| {
            Ok(g.constant(Tensor::scalar(2.0)))
        })
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let p = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let r = grad_check(&[p], 1e-5, |g, v| Ok(g.relu(v[0])));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn step_must_be_positive() {
        let r = grad_check(&[Tensor::scalar(1.0)], 0.0, |g, v| g.mul(v[0], v[0]));
        assert!(r.is_err());
    }
}
