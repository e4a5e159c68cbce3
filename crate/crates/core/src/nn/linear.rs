//! Affine map `y = x W^T + b` with `x: [B, D]`, `W: [K, D]`, `b: [K]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn linear_forward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    b: Option<&Tensor<F>>,
) -> Result<Tensor<F>> {
    if x.rank() != 2 || w.rank() != 2 || x.dims()[1] != w.dims()[1] {
        return Err(Error::shape(
            "linear",
            format!("x {:?} does not match w {:?}", x.dims(), w.dims()),
        ));
    }
    let y = x.matmul_nt(w)?;
    match b {
        Some(b) => y.add(b),
        None => Ok(y),
    }
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn linear_backward<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    if grad_out.dims() != [x.dims()[0], w.dims()[0]] {
        return Err(Error::shape(
            "linear_backward",
            format!(
                "grad dims {:?}, expected [{}, {}]",
                grad_out.dims(),
                x.dims()[0],
                w.dims()[0]
            ),
        ));
    }
    let grad_x = grad_out.matmul(w)?;
    let grad_w = grad_out.matmul_tn(x)?;
    let grad_b = grad_out.sum_axis(0)?;
    Ok((grad_x, grad_w, grad_b))
}
