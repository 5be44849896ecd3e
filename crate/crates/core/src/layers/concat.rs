//! Channel concatenation for dense-block wiring, plus the splitting adjoint.

use super::LayerError;
use crate::tensor::Tensor;

/// Concatenates `(N, C_i, H, W)` tensors along the channel axis, preserving
/// order. All inputs must agree on N, H, W.
pub fn concat_channels(tensors: &[&Tensor]) -> Result<Tensor, LayerError> {
    assert!(!tensors.is_empty(), "concat of zero tensors");
    let &[n, _, h, w] = tensors[0].shape() else {
        return Err(LayerError::BadRank {
            expected: 4,
            shape: tensors[0].shape().to_vec(),
        });
    };
    let mut c_total = 0;
    for t in tensors {
        match *t.shape() {
            [tn, tc, th, tw] if tn == n && th == h && tw == w => c_total += tc,
            _ => {
                return Err(LayerError::ShapeMismatch {
                    left: tensors[0].shape().to_vec(),
                    right: t.shape().to_vec(),
                })
            }
        }
    }
    let plane = h * w;
    let mut out = vec![0.0f32; n * c_total * plane];
    for nb in 0..n {
        let mut c_off = 0;
        for t in tensors {
            let tc = t.shape()[1];
            let src = &t.data()[nb * tc * plane..(nb + 1) * tc * plane];
            let dst = &mut out[(nb * c_total + c_off) * plane..][..tc * plane];
            dst.copy_from_slice(src);
            c_off += tc;
        }
    }
    Ok(Tensor::new(&[n, c_total, h, w], out).expect("sized above"))
}

/// Adjoint of [`concat_channels`]: slices the gradient back into per-input
/// pieces with the given channel counts.
pub fn split_channels(grad_out: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>, LayerError> {
    let &[n, c, h, w] = grad_out.shape() else {
        return Err(LayerError::BadRank {
            expected: 4,
            shape: grad_out.shape().to_vec(),
        });
    };
    let sum: usize = channels.iter().sum();
    if sum != c {
        return Err(LayerError::Incompatible {
            what: "channel split vs tensor channels",
            left: channels.to_vec(),
            right: vec![c],
        });
    }
    let plane = h * w;
    let mut parts = Vec::with_capacity(channels.len());
    let mut c_off = 0;
    for &tc in channels {
        let mut data = vec![0.0f32; n * tc * plane];
        for nb in 0..n {
            let src = &grad_out.data()[(nb * c + c_off) * plane..][..tc * plane];
            data[nb * tc * plane..(nb + 1) * tc * plane].copy_from_slice(src);
        }
        parts.push(Tensor::new(&[n, tc, h, w], data).expect("sized above"));
        c_off += tc;
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_sums_channel_dimension() {
        let a = Tensor::full(&[1, 3, 8, 8], 1.0);
        let b = Tensor::full(&[1, 3, 8, 8], 2.0);
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[1, 6, 8, 8]);
        assert_eq!(cat.data()[0], 1.0);
        assert_eq!(cat.data()[3 * 64], 2.0);
    }

    #[test]
    fn concat_then_split_roundtrips() {
        let a = Tensor::new(&[2, 1, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let b = Tensor::new(&[2, 2, 2, 2], (8..24).map(|v| v as f32).collect()).unwrap();
        let cat = concat_channels(&[&a, &b]).unwrap();
        let parts = split_channels(&cat, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn concat_of_one_is_identity() {
        let a = Tensor::new(&[1, 2, 3, 3], (0..18).map(|v| v as f32).collect()).unwrap();
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
    }

    #[test]
    fn spatial_mismatch_is_an_error() {
        let a = Tensor::full(&[1, 3, 8, 8], 1.0);
        let b = Tensor::full(&[1, 3, 4, 8], 1.0);
        assert!(matches!(
            concat_channels(&[&a, &b]).unwrap_err(),
            LayerError::ShapeMismatch { .. }
        ));
    }
}
