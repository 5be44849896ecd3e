//! Leaky ReLU. The derivative at exactly zero is defined as 1 (the x >= 0
//! branch) so forward and backward agree deterministically.

use crate::tensor::Tensor;

pub fn leaky_relu(input: &Tensor, slope: f32) -> Tensor {
    debug_assert!(slope > 0.0 && slope < 1.0, "slope must be in (0,1)");
    let data = input
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}

/// Multiplies the upstream gradient by 1 where the forward input was >= 0 and
/// by `slope` elsewhere. Takes the forward *input*, not its output.
pub fn leaky_relu_backward(input: &Tensor, grad_out: &Tensor, slope: f32) -> Tensor {
    assert_eq!(input.shape(), grad_out.shape(), "forward/backward shape mismatch");
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::new(input.shape(), data).expect("same shape")
}
