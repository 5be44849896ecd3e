//! Combined L1 + lambda * L2 loss under the mean convention.
//!
//! `L = mean(|d|) + lambda * mean(d^2)` with `d = pred - target`, the mean
//! taken over every element. The mean convention keeps lambda's balance
//! independent of patch size. `sign(0) = 0` in the L1 gradient.

use super::LayerError;
use crate::tensor::Tensor;

/// Returns the scalar loss and its gradient with respect to `pred`:
/// `(sign(d) + 2 * lambda * d) / count`.
pub fn loss_l1l2(
    pred: &Tensor,
    target: &Tensor,
    lambda: f32,
) -> Result<(f32, Tensor), LayerError> {
    if pred.shape() != target.shape() {
        return Err(LayerError::ShapeMismatch {
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let count = pred.len() as f64;
    let mut abs_sum = 0.0f64;
    let mut sq_sum = 0.0f64;
    let mut grad = vec![0.0f32; pred.len()];
    let inv_count = (1.0 / count) as f32;
    for ((g, &p), &t) in grad.iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        let dd = d as f64;
        abs_sum += dd.abs();
        sq_sum += dd * dd;
        let sign = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        *g = (sign + 2.0 * lambda * d) * inv_count;
    }
    let loss = (abs_sum / count + lambda as f64 * (sq_sum / count)) as f32;
    Ok((loss, Tensor::new(pred.shape(), grad).expect("same shape")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_difference_gives_zero_loss_and_grad() {
        let x = Tensor::new(&[2, 2], vec![0.1, -0.5, 0.9, 0.0]).unwrap();
        let (loss, grad) = loss_l1l2(&x, &x, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn constant_difference_matches_arithmetic() {
        // d = 0.1 everywhere, lambda = 0.1: L = 0.1 + 0.1 * 0.01 = 0.101
        let pred = Tensor::full(&[4, 4], 0.6);
        let target = Tensor::full(&[4, 4], 0.5);
        let (loss, grad) = loss_l1l2(&pred, &target, 0.1).unwrap();
        assert!((loss - 0.101).abs() < 1e-6, "{loss}");
        // grad = (1 + 2*0.1*0.1)/16
        let expected = (1.0 + 0.02 * 1.0) / 16.0;
        for &g in grad.data() {
            assert!((g - expected).abs() < 1e-7);
        }
    }

    #[test]
    fn lambda_enters_linearly() {
        let pred = Tensor::new(&[3], vec![0.2, 0.5, 0.9]).unwrap();
        let target = Tensor::new(&[3], vec![0.1, 0.7, 0.4]).unwrap();
        let (l1, _) = loss_l1l2(&pred, &target, 0.1).unwrap();
        let (l2, _) = loss_l1l2(&pred, &target, 0.2).unwrap();
        let mean_sq = (0.1f64.powi(2) + 0.2f64.powi(2) + 0.5f64.powi(2)) / 3.0;
        assert!(((l2 - l1) as f64 - 0.1 * mean_sq).abs() < 1e-7);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(matches!(
            loss_l1l2(&a, &b, 0.1).unwrap_err(),
            LayerError::ShapeMismatch { .. }
        ));
    }
}
