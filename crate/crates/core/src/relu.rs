use crate::error::Result;
use crate::tensor::Tensor4;

/// Element-wise `max(0, x)`.
pub fn relu_forward(input: &Tensor4) -> Tensor4 {
    input.map(|x| x.max(0.0))
}

/// Passes `grad_output` where `input > 0`. The subgradient at exactly zero is 0.
pub fn relu_backward(input: &Tensor4, grad_output: &Tensor4) -> Result<Tensor4> {
    input.zip_map(grad_output, |x, g| if x > 0.0 { g } else { 0.0 })
}
