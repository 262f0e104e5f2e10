use ndarray::Array2;

use super::activation::softplus;
use super::GnnError;
use crate::data::Labels;

/// Probability floor inside logarithms.
pub const PROB_EPS: f64 = 1e-10;

/// Row-wise softmax of the logits.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Class probabilities: softmax for single-label, element-wise sigmoid for
/// multi-label.
pub fn probabilities(logits: &Array2<f64>, labels: &Labels) -> Array2<f64> {
    match labels {
        Labels::Single(_) => softmax(logits),
        Labels::Multi(_) => logits.mapv(super::activation::sigmoid),
    }
}

fn masked_count(mask: &[bool]) -> Result<usize, GnnError> {
    match mask.iter().filter(|&&m| m).count() {
        0 => Err(GnnError::Config("loss over an empty mask".into())),
        m => Ok(m),
    }
}

/// Masked mean cross-entropy (single-label) or masked mean of the binary
/// cross-entropy summed over labels (multi-label).
pub fn loss(logits: &Array2<f64>, labels: &Labels, mask: &[bool]) -> Result<f64, GnnError> {
    loss_inner(logits, labels, mask, false).map(|(l, _)| l)
}

/// Loss together with its gradient with respect to the logits.
pub fn loss_and_grad(
    logits: &Array2<f64>,
    labels: &Labels,
    mask: &[bool],
) -> Result<(f64, Array2<f64>), GnnError> {
    loss_inner(logits, labels, mask, true).map(|(l, g)| (l, g.expect("requested")))
}

fn loss_inner(
    logits: &Array2<f64>,
    labels: &Labels,
    mask: &[bool],
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>), GnnError> {
    let n = logits.nrows();
    if mask.len() != n {
        return Err(GnnError::Config(format!(
            "mask length {} does not match {n} nodes",
            mask.len()
        )));
    }
    let m = masked_count(mask)? as f64;
    let log_eps = PROB_EPS.ln();
    let mut grad = want_grad.then(|| Array2::<f64>::zeros(logits.raw_dim()));
    let mut total = 0.0;
    match labels {
        Labels::Single(ys) => {
            let probs = softmax(logits);
            for i in (0..n).filter(|&i| mask[i]) {
                let y = ys[i].ok_or_else(|| {
                    GnnError::Config(format!("node {i} is in the mask but has no label"))
                })? as usize;
                if y >= logits.ncols() {
                    return Err(GnnError::Config(format!("label {y} >= {} classes", logits.ncols())));
                }
                let p = probs[[i, y]];
                total -= p.max(PROB_EPS).ln();
                if let (Some(g), true) = (grad.as_mut(), p > PROB_EPS) {
                    for c in 0..logits.ncols() {
                        let target = if c == y { 1.0 } else { 0.0 };
                        g[[i, c]] = (probs[[i, c]] - target) / m;
                    }
                }
            }
        }
        Labels::Multi(ys) => {
            if ys.dim() != logits.dim() {
                return Err(GnnError::Config("multi-label matrix shape mismatch".into()));
            }
            for i in (0..n).filter(|&i| mask[i]) {
                for c in 0..logits.ncols() {
                    let z = logits[[i, c]];
                    let positive = ys[[i, c]] == 1;
                    // log sigmoid(z) = -softplus(-z), log(1 - sigmoid(z)) = -softplus(z)
                    let log_p = if positive { -softplus(-z) } else { -softplus(z) };
                    total -= log_p.max(log_eps);
                    if let (Some(g), true) = (grad.as_mut(), log_p > log_eps) {
                        let s = super::activation::sigmoid(z);
                        g[[i, c]] = (if positive { s - 1.0 } else { s }) / m;
                    }
                }
            }
        }
    }
    Ok((total / m, grad))
}
