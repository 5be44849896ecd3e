//! Dense row-major f32 tensor.
//!
//! The canonical layout is channels-first: `(C, H, W)` for single images and
//! `(N, C, H, W)` for batches. Values are immutable once constructed unless
//! the owner explicitly asks for `data_mut`, so shared read-only access across
//! threads is safe.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape {shape:?} has {expected} elements but {actual} were provided")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} contains a zero-sized dimension")]
    ZeroDim(Vec<usize>),
    #[error("shape mismatch: left is {left:?}, right is {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
}

/// N-dimensional array of 32-bit floats with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor after checking that `data` fills `shape` exactly and
    /// every dimension is at least 1.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroDim(shape.to_vec()));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::LengthMismatch {
                shape: shape.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        assert!(shape.iter().all(|&d| d >= 1), "zero-sized dimension");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n: usize = shape.iter().product();
        assert!(shape.iter().all(|&d| d >= 1), "zero-sized dimension");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Elementwise sum; shapes must match exactly (no broadcasting).
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.zip_with(rhs, |a, b| a + b)
    }

    /// Elementwise difference.
    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.zip_with(rhs, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        self.zip_with(rhs, |a, b| a * b)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn zip_with(&self, rhs: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor, TensorError> {
        if self.shape != rhs.shape {
            return Err(TensorError::ShapeMismatch {
                left: self.shape.clone(),
                right: rhs.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn new_rejects_length_mismatch() {
        let err = Tensor::new(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::LengthMismatch { expected: 6, actual: 5, .. }));
    }

    #[test]
    fn new_rejects_zero_dim() {
        let err = Tensor::new(&[2, 0], vec![]).unwrap_err();
        assert_eq!(err, TensorError::ZeroDim(vec![2, 0]));
    }

    #[test]
    fn add_identity_with_zeros() {
        let x = Tensor::new(&[2, 2], vec![1.0, -2.5, 3.25, 0.0]).unwrap();
        let z = Tensor::zeros(&[2, 2]);
        assert_eq!(x.add(&z).unwrap(), x);
    }

    #[test]
    fn sub_self_is_zero() {
        let x = Tensor::new(&[3], vec![1.5, -0.25, 7.0]).unwrap();
        assert_eq!(x.sub(&x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn add_does_not_clamp() {
        let a = Tensor::new(&[1], vec![0.9]).unwrap();
        let b = Tensor::new(&[1], vec![0.15]).unwrap();
        let sum = a.add(&b).unwrap();
        assert_eq!(sum.data()[0], 0.9f32 + 0.15f32);
        assert!(sum.data()[0] > 1.0);
    }

    #[test]
    fn mismatched_shapes_name_both() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        let msg = a.add(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    }

    proptest! {
        // add(sub(a, b), b) == a for dyadic rationals (exact in f32).
        #[test]
        fn add_sub_roundtrip(seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let dyadic = |rng: &mut Rng| ((rng.next_u64() % 513) as f32 - 256.0) / 64.0;
            let a_data: Vec<f32> = (0..24).map(|_| dyadic(&mut rng)).collect();
            let b_data: Vec<f32> = (0..24).map(|_| dyadic(&mut rng)).collect();
            let a = Tensor::new(&[2, 3, 4], a_data).unwrap();
            let b = Tensor::new(&[2, 3, 4], b_data).unwrap();
            let roundtrip = a.sub(&b).unwrap().add(&b).unwrap();
            prop_assert_eq!(roundtrip, a);
        }

        #[test]
        fn elementwise_preserves_shape(h in 1usize..8, w in 1usize..8) {
            let a = Tensor::full(&[2, h, w], 1.5);
            let b = Tensor::full(&[2, h, w], -0.5);
            let product = a.mul(&b).unwrap();
            prop_assert_eq!(product.shape(), &[2, h, w]);
        }
    }
}
