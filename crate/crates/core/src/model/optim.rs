//! Adam with L2 regularization folded into the gradient.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Matrix<T>]) -> Self {
        let zeros = || params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update of every tensor.
///
/// `names` is only used to label errors. On a non-finite gradient nothing is
/// modified.
pub fn adam_step<T: Scalar>(params: &mut [Matrix<T>], grads: &[Matrix<T>], state: &mut AdamState<T>, names: &[String]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape("parameter, gradient and moment counts differ".into()));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if (p.rows(), p.cols()) != (g.rows(), g.cols()) {
            return Err(Error::Shape(format!("gradient shape mismatch for tensor {k}")));
        }
        if let Some(pos) = g.as_slice().iter().position(|x| !x.is_finite()) {
            let name = names.get(k).map_or("?", String::as_str);
            return Err(Error::Numeric(format!(
                "non-finite gradient in `{name}` at offset {pos} (step {})",
                state.step + 1
            )));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let lr = T::of(c.lr);
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (one, eps, l2) = (T::one(), T::of(c.epsilon), T::of(c.l2));
    let bc1 = T::of(1.0 - c.beta1.powi(t));
    let bc2 = T::of(1.0 - c.beta2.powi(t));
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (j, theta) in p.as_mut_slice().iter_mut().enumerate() {
            let grad = g[j] + l2 * *theta;
            m[j] = b1 * m[j] + (one - b1) * grad;
            v[j] = b2 * v[j] + (one - b2) * grad * grad;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Vec<Matrix<f64>> {
        vec![Matrix::from_vec(1, 1, vec![x]).unwrap()]
    }

    #[test]
    fn zero_gradient_without_l2_is_a_fixed_point() {
        let cfg = AdamConfig { l2: 0.0, ..Default::default() };
        let mut p = scalar(0.7);
        let mut s = AdamState::new(cfg, &p);
        adam_step(&mut p, &scalar(0.0), &mut s, &[]).unwrap();
        assert_eq!(p[0].as_slice(), &[0.7]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_the_learning_rate() {
        let cfg = AdamConfig { l2: 0.0, ..Default::default() };
        let mut p = scalar(0.0);
        let mut s = AdamState::new(cfg, &p);
        adam_step(&mut p, &scalar(1.0), &mut s, &[]).unwrap();
        // m_hat = 1, v_hat = 1
        let expect = -0.01 / (1.0 + 1e-8);
        assert!((p[0].as_slice()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn repeated_gradient_keeps_step_size() {
        let cfg = AdamConfig { l2: 0.0, ..Default::default() };
        let mut p = scalar(0.0);
        let mut s = AdamState::new(cfg, &p);
        adam_step(&mut p, &scalar(0.3), &mut s, &[]).unwrap();
        let first = p[0].as_slice()[0];
        adam_step(&mut p, &scalar(0.3), &mut s, &[]).unwrap();
        let ratio = (p[0].as_slice()[0] - first) / first;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }

    #[test]
    fn l2_shrinks_parameters_on_zero_gradient() {
        let mut p = vec![Matrix::from_vec(1, 3, vec![0.5, -2.0, 1.0]).unwrap()];
        let before: f64 = p[0].as_slice().iter().map(|x| x * x).sum();
        let mut s = AdamState::new(AdamConfig::default(), &p);
        adam_step(&mut p, &[Matrix::zeros(1, 3)], &mut s, &[]).unwrap();
        let after: f64 = p[0].as_slice().iter().map(|x| x * x).sum();
        assert!(after < before);
    }

    #[test]
    fn non_finite_gradient_is_rejected_untouched() {
        let mut p = scalar(1.0);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        let err = adam_step(&mut p, &scalar(f64::NAN), &mut s, &["w".into()]).unwrap_err();
        assert!(err.to_string().contains('w'));
        assert_eq!(p[0].as_slice(), &[1.0]);
        assert_eq!(s.step, 0);
    }
}
