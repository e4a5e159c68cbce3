//! Stabilized softmax cross-entropy, the comparison baseline.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CrossEntropyForward<F: Scalar> {
    pub loss: F,
    pub probs: Tensor<F>,
}

/// Mean negative log-likelihood over the batch with max-subtraction.
pub fn cross_entropy_loss<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> Result<CrossEntropyForward<F>> {
    if logits.rank() != 2 {
        return Err(Error::shape(
            "cross_entropy",
            format!("logits must be [N, C], got {:?}", logits.dims()),
        ));
    }
    let (n, c) = (logits.dims()[0], logits.dims()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    if !logits.all_finite() {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    let mut probs = Tensor::zeros(&[n, c])?;
    let mut total = 0.0f64;
    for i in 0..n {
        let y = labels[i];
        if y >= c {
            return Err(Error::Input(format!(
                "label {y} at row {i} out of range for {c} classes"
            )));
        }
        let row = logits.row(i);
        let m = row.iter().fold(F::neg_infinity(), |a, &b| if b > a { b } else { a });
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v - m).exp().as_f64();
        }
        let lse = m.as_f64() + denom.ln();
        total += lse - row[y].as_f64();
        for j in 0..c {
            probs.set(&[i, j], F::of_f64((row[j].as_f64() - lse).exp()));
        }
    }
    Ok(CrossEntropyForward {
        loss: F::of_f64(total / n as f64),
        probs,
    })
}

/// `grad_logits = (probs - onehot) / N`
pub fn cross_entropy_backward<F: Scalar>(
    fwd: &CrossEntropyForward<F>,
    labels: &[usize],
) -> Result<Tensor<F>> {
    let (n, _c) = (fwd.probs.dims()[0], fwd.probs.dims()[1]);
    let inv_n = F::of_f64(1.0 / n as f64);
    let mut grad = fwd.probs.scale(inv_n);
    for (i, &y) in labels.iter().enumerate() {
        let v = grad.at(&[i, y]);
        grad.set(&[i, y], v - inv_n);
    }
    Ok(grad)
}
