//! Trainable parameters and their optimizer state.

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;

/// A named parameter with gradient buffer and Adam moment state.
///
/// `trainable` says whether the tensor can ever receive updates; `frozen`
/// switches updates off for tensors that trained in an earlier session and
/// must now stay bit-identical.
#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub trainable: bool,
    pub frozen: bool,
    moment1: Matrix,
    moment2: Matrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix, trainable: bool) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            name: name.into(),
            grad: Matrix::zeros(r, c),
            moment1: Matrix::zeros(r, c),
            moment2: Matrix::zeros(r, c),
            value,
            trainable,
            frozen: false,
        }
    }

    /// True when an optimizer step may touch this tensor.
    pub fn updatable(&self) -> bool {
        self.trainable && !self.frozen
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = 0.0;
        }
    }

    pub fn reset_optimizer_state(&mut self) {
        let (r, c) = self.value.shape();
        self.moment1 = Matrix::zeros(r, c);
        self.moment2 = Matrix::zeros(r, c);
    }
}

/// One Adam update over `params`, using each tensor's stored gradient and
/// per-tensor moment state. `step` is the 1-based update count used for bias
/// correction. Frozen and non-trainable tensors are skipped entirely, moments
/// included.
pub fn adam_step(
    params: &mut [&mut ParamTensor],
    lr: f64,
    betas: (f64, f64),
    eps: f64,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(Error::Config("adam step count must start at 1".into()));
    }
    let (b1, b2) = betas;
    let bias1 = 1.0 - b1.powi(step as i32);
    let bias2 = 1.0 - b2.powi(step as i32);
    for p in params.iter_mut() {
        if !p.updatable() {
            continue;
        }
        if p.grad.shape() != p.value.shape() {
            return Err(shape_err(format!(
                "param '{}': grad {}x{} vs value {}x{}",
                p.name,
                p.grad.shape().0,
                p.grad.shape().1,
                p.value.shape().0,
                p.value.shape().1
            )));
        }
        let n = p.value.len();
        for i in 0..n {
            let g = p.grad.data()[i];
            let m = b1 * p.moment1.data()[i] + (1.0 - b1) * g;
            let v = b2 * p.moment2.data()[i] + (1.0 - b2) * g * g;
            p.moment1.data_mut()[i] = m;
            p.moment2.data_mut()[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            p.value.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Central-difference gradient of `loss_fn` with respect to every entry of
/// `at`: (f(x + h e_i) - f(x - h e_i)) / 2h. The reference for every analytic
/// backward in this crate.
pub fn finite_diff_grad(
    mut loss_fn: impl FnMut(&Matrix) -> f64,
    at: &Matrix,
    h: f64,
) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite difference step h={h} must be > 0")));
    }
    let mut grad = Matrix::zeros(at.rows(), at.cols());
    let mut probe = at.clone();
    for i in 0..at.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = loss_fn(&probe);
        probe.data_mut()[i] = orig - h;
        let down = loss_fn(&probe);
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss produced {up} / {down} at probe entry {i}"
            )));
        }
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Worst relative disagreement between two gradients. Entries are compared
/// relative to their own magnitude; entries below `floor` on both sides are
/// compared absolutely against `floor` so that near-zero gradients do not
/// blow up the ratio.
pub fn max_rel_err(analytic: &Matrix, reference: &Matrix, floor: f64) -> f64 {
    debug_assert_eq!(analytic.shape(), reference.shape());
    let mut worst = 0.0f64;
    for (a, r) in analytic.data().iter().zip(reference.data()) {
        let scale = a.abs().max(r.abs()).max(floor);
        worst = worst.max((a - r).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> ParamTensor {
        let mut p = ParamTensor::new("p", Matrix::scalar(v), true);
        p.grad = Matrix::scalar(g);
        p
    }

    #[test]
    fn adam_first_step_matches_hand_computation() {
        // grad 1, lr 0.02: m=0.1, v=0.001, m_hat=1, v_hat=1,
        // delta = 0.02 / (1 + 1e-8).
        let mut p = scalar_param(1.0, 1.0);
        adam_step(&mut [&mut p], 0.02, (0.9, 0.999), 1e-8, 1).unwrap();
        let expected = 1.0 - 0.02 * 1.0 / (1.0 + 1e-8);
        assert!((p.value.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn adam_two_steps_constant_grad_keeps_unit_ratio() {
        // With a constant gradient, m_hat / sqrt(v_hat) stays 1 regardless
        // of step, so each update is close to -lr.
        let mut p = scalar_param(0.0, 1.0);
        adam_step(&mut [&mut p], 0.02, (0.9, 0.999), 1e-8, 1).unwrap();
        let after1 = p.value.get(0, 0);
        p.grad = Matrix::scalar(1.0);
        adam_step(&mut [&mut p], 0.02, (0.9, 0.999), 1e-8, 2).unwrap();
        let after2 = p.value.get(0, 0);
        assert!((after1 + 0.02).abs() < 1e-9);
        assert!((after2 - after1 + 0.02).abs() < 1e-9);
    }

    #[test]
    fn frozen_param_is_never_mutated() {
        let mut p = scalar_param(1.0, 123.0);
        p.frozen = true;
        let before_value = p.value.clone();
        let before_m = p.moment1.clone();
        adam_step(&mut [&mut p], 0.5, (0.9, 0.999), 1e-8, 1).unwrap();
        assert_eq!(p.value.data(), before_value.data());
        assert_eq!(p.moment1.data(), before_m.data());
    }

    #[test]
    fn zero_grad_leaves_value_essentially_unchanged() {
        let mut p = scalar_param(2.5, 0.0);
        adam_step(&mut [&mut p], 0.02, (0.9, 0.999), 1e-8, 1).unwrap();
        assert!((p.value.get(0, 0) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn adam_rejects_step_zero() {
        let mut p = scalar_param(1.0, 1.0);
        assert!(adam_step(&mut [&mut p], 0.02, (0.9, 0.999), 1e-8, 0).is_err());
    }

    #[test]
    fn finite_diff_on_quadratic() {
        // f(x) = sum x_i^2 has gradient 2x.
        let at = Matrix::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let grad = finite_diff_grad(|m| m.data().iter().map(|x| x * x).sum(), &at, 1e-5).unwrap();
        for i in 0..4 {
            let want = 2.0 * at.data()[i];
            assert!((grad.data()[i] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_rejects_bad_step_and_nonfinite_loss() {
        let at = Matrix::scalar(1.0);
        assert!(finite_diff_grad(|m| m.get(0, 0), &at, 0.0).is_err());
        let err = finite_diff_grad(|m| (m.get(0, 0) - 1.0).ln(), &at, 1e-5);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn rel_err_floor_handles_zero_gradients() {
        let a = Matrix::row_vector(vec![0.0, 1.0]);
        let b = Matrix::row_vector(vec![1e-12, 1.0]);
        assert!(max_rel_err(&a, &b, 1e-6) < 1e-5);
    }
}
