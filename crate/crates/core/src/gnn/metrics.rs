use ndarray::Array2;

use super::GnnError;
use crate::data::Labels;

/// Micro-averaged F1 over every (node, label) cell: `2TP / (2TP + FP + FN)`.
/// Two all-zero matrices score 1.
pub fn micro_f1(pred: &Array2<u8>, labels: &Array2<u8>) -> Result<f64, GnnError> {
    if pred.dim() != labels.dim() {
        return Err(GnnError::Config(format!(
            "prediction shape {:?} does not match label shape {:?}",
            pred.dim(),
            labels.dim()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &y) in pred.iter().zip(labels.iter()) {
        match (p != 0, y != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return Ok(1.0);
    }
    Ok((2 * tp) as f64 / denom as f64)
}

/// Split metric: arg-max accuracy for single-label tasks, micro-F1 at a 0.5
/// probability threshold for multi-label tasks. Only masked nodes count.
pub fn split_metric(logits: &Array2<f64>, labels: &Labels, mask: &[bool]) -> Result<f64, GnnError> {
    let rows: Vec<usize> = (0..logits.nrows()).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(GnnError::Config("metric over an empty split".into()));
    }
    match labels {
        Labels::Single(ys) => {
            let mut correct = 0usize;
            for &i in &rows {
                let row = logits.row(i);
                let best = (0..row.len())
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                if ys[i] == Some(best as u32) {
                    correct += 1;
                }
            }
            Ok(correct as f64 / rows.len() as f64)
        }
        Labels::Multi(ys) => {
            let c = logits.ncols();
            // sigmoid(z) >= 0.5 exactly when z >= 0
            let pred = Array2::from_shape_fn((rows.len(), c), |(r, j)| {
                (logits[[rows[r], j]] >= 0.0) as u8
            });
            let truth = Array2::from_shape_fn((rows.len(), c), |(r, j)| ys[[rows[r], j]]);
            micro_f1(&pred, &truth)
        }
    }
}
