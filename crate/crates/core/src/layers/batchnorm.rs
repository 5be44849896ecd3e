//! Batch normalization over `(N, C, H, W)` with per-channel statistics.

use super::LayerError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Trainable scale/shift plus running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f32,
    pub momentum: f32,
}

impl BatchNormParams {
    /// Identity-initialized batchnorm: gamma 1, beta 0, running mean 0, var 1.
    pub fn identity(channels: usize, eps: f32, momentum: f32) -> Self {
        Self {
            gamma: Tensor::full(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Values the backward pass needs; only train-mode caches are differentiable.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: BnMode,
    shape: Vec<usize>,
    xhat: Vec<f32>,
    inv_std: Vec<f32>,
}

fn check_input(input: &Tensor, p: &BatchNormParams) -> Result<(usize, usize, usize, usize), LayerError> {
    let &[n, c, h, w] = input.shape() else {
        return Err(LayerError::BadRank {
            expected: 4,
            shape: input.shape().to_vec(),
        });
    };
    if c != p.channels() {
        return Err(LayerError::ChannelMismatch {
            expected: p.channels(),
            actual: c,
        });
    }
    Ok((n, c, h, w))
}

/// Normalizes with batch statistics (train) or running statistics (infer).
///
/// Train mode uses the biased per-channel variance and folds it into the
/// running statistics as `r <- (1 - momentum) * r + momentum * batch_stat`.
pub fn batchnorm_forward(
    input: &Tensor,
    p: &mut BatchNormParams,
    mode: BnMode,
) -> Result<(Tensor, BatchNormCache), LayerError> {
    let (n, c, h, w) = check_input(input, p)?;
    let plane = h * w;
    let m = n * plane;
    let mut out = vec![0.0f32; input.len()];

    match mode {
        BnMode::Train => {
            if m < 2 {
                return Err(LayerError::DegenerateBatch(m));
            }
            let mut xhat = vec![0.0f32; input.len()];
            let mut inv_std = vec![0.0f32; c];
            for ch in 0..c {
                // stats in f64: the sums run over up to N*H*W values
                let mut sum = 0.0f64;
                let mut sum_sq = 0.0f64;
                for nb in 0..n {
                    let pl = &input.data()[(nb * c + ch) * plane..][..plane];
                    for &v in pl {
                        let v = v as f64;
                        sum += v;
                        sum_sq += v * v;
                    }
                }
                let mean = sum / m as f64;
                let var = (sum_sq / m as f64 - mean * mean).max(0.0);
                let istd = 1.0 / (var + p.eps as f64).sqrt();

                let mean32 = mean as f32;
                let istd32 = istd as f32;
                inv_std[ch] = istd32;
                let g = p.gamma.data()[ch];
                let b = p.beta.data()[ch];
                for nb in 0..n {
                    let base = (nb * c + ch) * plane;
                    let src = &input.data()[base..base + plane];
                    for (idx, &v) in src.iter().enumerate() {
                        let xh = (v - mean32) * istd32;
                        xhat[base + idx] = xh;
                        out[base + idx] = g * xh + b;
                    }
                }
                let mom = p.momentum;
                let rm = &mut p.running_mean.data_mut()[ch];
                *rm = (1.0 - mom) * *rm + mom * mean32;
                let rv = &mut p.running_var.data_mut()[ch];
                *rv = (1.0 - mom) * *rv + mom * var as f32;
            }
            let cache = BatchNormCache {
                mode,
                shape: input.shape().to_vec(),
                xhat,
                inv_std,
            };
            Ok((Tensor::new(input.shape(), out).expect("sized above"), cache))
        }
        BnMode::Infer => {
            infer_raw(
                input.data(),
                n,
                c,
                plane,
                p.gamma.data(),
                p.beta.data(),
                p.running_mean.data(),
                p.running_var.data(),
                p.eps,
                &mut out,
            );
            let cache = BatchNormCache {
                mode,
                shape: input.shape().to_vec(),
                xhat: Vec::new(),
                inv_std: Vec::new(),
            };
            Ok((Tensor::new(input.shape(), out).expect("sized above"), cache))
        }
    }
}

/// Infer-mode normalization as a per-channel affine map. Shared by the model's
/// pure inference path.
#[allow(clippy::too_many_arguments)]
pub(crate) fn infer_raw(
    input: &[f32],
    n: usize,
    c: usize,
    plane: usize,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    eps: f32,
    out: &mut [f32],
) {
    for ch in 0..c {
        let scale = gamma[ch] / (running_var[ch] + eps).sqrt();
        let shift = beta[ch] - running_mean[ch] * scale;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            let src = &input[base..base + plane];
            let dst = &mut out[base..base + plane];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = s * scale + shift;
            }
        }
    }
}

/// Standard train-mode adjoint including the mean/variance coupling terms.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    p: &BatchNormParams,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), LayerError> {
    if cache.mode == BnMode::Infer {
        return Err(LayerError::InferModeCache);
    }
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(LayerError::ShapeMismatch {
            left: grad_out.shape().to_vec(),
            right: cache.shape.clone(),
        });
    }
    let (n, c, h, w) = (cache.shape[0], cache.shape[1], cache.shape[2], cache.shape[3]);
    let plane = h * w;
    let m = (n * plane) as f64;

    let mut grad_input = vec![0.0f32; grad_out.len()];
    let mut grad_gamma = vec![0.0f32; c];
    let mut grad_beta = vec![0.0f32; c];

    for ch in 0..c {
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            let g = &grad_out.data()[base..base + plane];
            let xh = &cache.xhat[base..base + plane];
            for (gv, xv) in g.iter().zip(xh) {
                sum_g += *gv as f64;
                sum_gx += *gv as f64 * *xv as f64;
            }
        }
        grad_beta[ch] = sum_g as f32;
        grad_gamma[ch] = sum_gx as f32;

        let gamma = p.gamma.data()[ch] as f64;
        let istd = cache.inv_std[ch] as f64;
        let mean_g = sum_g / m;
        let mean_gx = sum_gx / m;
        for nb in 0..n {
            let base = (nb * c + ch) * plane;
            let g = &grad_out.data()[base..base + plane];
            let xh = &cache.xhat[base..base + plane];
            let dst = &mut grad_input[base..base + plane];
            for ((d, gv), xv) in dst.iter_mut().zip(g).zip(xh) {
                *d = (gamma * istd * (*gv as f64 - mean_g - *xv as f64 * mean_gx)) as f32;
            }
        }
    }
    Ok((
        Tensor::new(&cache.shape, grad_input).expect("sized above"),
        Tensor::new(&[c], grad_gamma).expect("sized above"),
        Tensor::new(&[c], grad_beta).expect("sized above"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_z_scores_match_analytic() {
        // channel values {1,2,3}: biased var 2/3, z-scores +-1.224745
        let input = Tensor::new(&[1, 1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut p = BatchNormParams::identity(1, 1e-12, 0.1);
        let (out, _) = batchnorm_forward(&input, &mut p, BnMode::Train).unwrap();
        let expected = [-1.224_744_9_f32, 0.0, 1.224_744_9];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-4, "{o} vs {e}");
        }
    }

    #[test]
    fn infer_mode_with_identity_stats_is_identity() {
        let input = Tensor::new(&[1, 2, 1, 2], vec![0.3, -0.7, 1.5, 2.5]).unwrap();
        let mut p = BatchNormParams::identity(2, 1e-5, 0.1);
        let (out, _) = batchnorm_forward(&input, &mut p, BnMode::Infer).unwrap();
        for (o, i) in out.data().iter().zip(input.data()) {
            assert!((o - i).abs() < 1e-4);
        }
    }

    #[test]
    fn train_output_is_standardized_per_channel() {
        let mut vals = Vec::new();
        let mut state = 12345u64;
        for _ in 0..(4 * 3 * 5 * 5) {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            vals.push(((state >> 33) as f32 / (1u64 << 31) as f32) * 4.0 - 2.0);
        }
        let input = Tensor::new(&[4, 3, 5, 5], vals).unwrap();
        let mut p = BatchNormParams::identity(3, 1e-7, 0.1);
        let (out, _) = batchnorm_forward(&input, &mut p, BnMode::Train).unwrap();
        let plane = 25;
        for ch in 0..3 {
            let mut sum = 0.0f64;
            let mut sum_sq = 0.0f64;
            for nb in 0..4 {
                for &v in &out.data()[(nb * 3 + ch) * plane..][..plane] {
                    sum += v as f64;
                    sum_sq += (v as f64) * (v as f64);
                }
            }
            let m = 100.0;
            let mean = sum / m;
            let var = sum_sq / m - mean * mean;
            assert!(mean.abs() < 1e-5, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let input = Tensor::new(&[1, 1, 1, 2], vec![0.0, 2.0]).unwrap();
        let mut p = BatchNormParams::identity(1, 1e-5, 0.1);
        batchnorm_forward(&input, &mut p, BnMode::Train).unwrap();
        // batch mean 1, biased var 1: r = 0.9*init + 0.1*stat
        assert!((p.running_mean.data()[0] - 0.1).abs() < 1e-6);
        assert!((p.running_var.data()[0] - (0.9 + 0.1)).abs() < 1e-6);
    }

    #[test]
    fn single_element_batch_is_degenerate() {
        let input = Tensor::new(&[1, 2, 1, 1], vec![1.0, 2.0]).unwrap();
        let mut p = BatchNormParams::identity(2, 1e-5, 0.1);
        let err = batchnorm_forward(&input, &mut p, BnMode::Train).unwrap_err();
        assert_eq!(err, LayerError::DegenerateBatch(1));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let input = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut p = BatchNormParams::identity(1, 1e-5, 0.1);
        let (_, cache) = batchnorm_forward(&input, &mut p, BnMode::Train).unwrap();
        let (gi, gg, gb) = batchnorm_backward(&cache, &p, &Tensor::zeros(&[1, 1, 2, 2])).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert_eq!(gg.data(), &[0.0]);
        assert_eq!(gb.data(), &[0.0]);
    }

    #[test]
    fn grad_beta_is_channel_sum_of_grad_out() {
        let input = Tensor::new(&[2, 1, 1, 2], vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let mut p = BatchNormParams::identity(1, 1e-5, 0.1);
        let (_, cache) = batchnorm_forward(&input, &mut p, BnMode::Train).unwrap();
        let g = Tensor::new(&[2, 1, 1, 2], vec![0.25, 0.5, 1.0, -0.25]).unwrap();
        let (_, _, gb) = batchnorm_backward(&cache, &p, &g).unwrap();
        assert!((gb.data()[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn backward_rejects_infer_cache() {
        let input = Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let mut p = BatchNormParams::identity(1, 1e-5, 0.1);
        let (_, cache) = batchnorm_forward(&input, &mut p, BnMode::Infer).unwrap();
        let err = batchnorm_backward(&cache, &p, &Tensor::zeros(&[1, 1, 1, 2])).unwrap_err();
        assert_eq!(err, LayerError::InferModeCache);
    }
}
