//! Adam optimizer with bias correction.

use super::LayerError;
use crate::tensor::Tensor;

/// Optimizer constants. The canonical defaults are beta1 0.9, beta2 0.999,
/// eps 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamParams {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second-moment accumulators, one pair per parameter tensor, in the
/// caller's canonical parameter order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub params: AdamParams,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    /// Zero-initialized moments shaped after the given parameter tensors.
    pub fn new(params: AdamParams, shapes: &[&Tensor]) -> Self {
        Self {
            params,
            t: 0,
            m: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            v: shapes.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// One optimizer step over all parameters. `names` is used only for error
    /// reporting and must parallel `params`/`grads`.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[&Tensor],
        names: &[&str],
    ) -> Result<(), LayerError> {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "grads must pair with params");
        for ((g, p), name) in grads.iter().zip(params.iter()).zip(names) {
            if g.shape() != p.shape() {
                return Err(LayerError::ShapeMismatch {
                    left: g.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(LayerError::NonFiniteGradient((*name).to_string()));
            }
        }
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            eps,
        } = self.params;
        let bc1 = 1.0 - (beta1 as f64).powi(self.t as i32);
        let bc2 = 1.0 - (beta2 as f64).powi(self.t as i32);
        let inv_bc1 = (1.0 / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for ((pv, &gv), (mv, vv)) in
                pd.iter_mut().zip(g.data()).zip(md.iter_mut().zip(vd.iter_mut()))
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv * inv_bc1;
                let v_hat = *vv * inv_bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_toward_sign() {
        // at t=1 bias correction gives m_hat = g, v_hat = g^2, so the step is
        // -lr * g / (|g| + eps) which is approximately -lr for g = 0.5
        let mut p = Tensor::full(&[4], 1.0);
        let g = Tensor::full(&[4], 0.5);
        let mut state = AdamState::new(AdamParams::with_lr(0.001), &[&p]);
        state.step(&mut [&mut p], &[&g], &["w"]).unwrap();
        for &v in p.data() {
            assert!((v - (1.0 - 0.001)).abs() < 1e-6, "{v}");
        }
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut state = AdamState::new(AdamParams::with_lr(0.001), &[&p]);
        for _ in 0..10 {
            state.step(&mut [&mut p], &[&g], &["w"]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut p = Tensor::full(&[8], 0.25);
            let mut state = AdamState::new(AdamParams::with_lr(0.01), &[&p]);
            for i in 1..=20 {
                let g = Tensor::full(&[8], (i as f32 * 0.13).sin());
                state.step(&mut [&mut p], &[&g], &["w"]).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Tensor::full(&[2], 1.0);
        let g = Tensor::new(&[2], vec![0.0, f32::NAN]).unwrap();
        let mut state = AdamState::new(AdamParams::with_lr(0.001), &[&p]);
        let err = state
            .step(&mut [&mut p], &[&g], &["block1.conv.weight"])
            .unwrap_err();
        assert_eq!(
            err,
            LayerError::NonFiniteGradient("block1.conv.weight".into())
        );
    }

    #[test]
    fn step_counter_increments_by_one() {
        let mut p = Tensor::full(&[1], 1.0);
        let g = Tensor::full(&[1], 0.1);
        let mut state = AdamState::new(AdamParams::with_lr(0.001), &[&p]);
        for expect in 1..=5 {
            state.step(&mut [&mut p], &[&g], &["w"]).unwrap();
            assert_eq!(state.t, expect);
        }
    }
}
