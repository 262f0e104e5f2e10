use ndarray::Array2;

use super::attention::HeadLayout;
use super::graph::Neighborhoods;
use crate::genome::Aggregator;

/// Aggregated node states (`n x heads*hidden`) and, for `max`, the edge that
/// won each cell.
#[derive(Debug, Clone)]
pub struct Aggregated {
    pub values: Array2<f64>,
    pub argmax: Option<Vec<usize>>,
}

/// Combines the messages `alpha[e, h] * p_j[h]` of every destination's
/// incoming edges with sum, mean or element-wise max.
pub fn aggregate(
    kind: Aggregator,
    projected: &Array2<f64>,
    alpha: &Array2<f64>,
    layout: HeadLayout,
    nb: &Neighborhoods,
) -> Aggregated {
    let n = projected.nrows();
    let (heads, d, width) = (layout.heads, layout.hidden, layout.width());
    let p = projected.as_slice().expect("standard layout");
    let a = alpha.as_slice().expect("standard layout");
    let mut values = Array2::<f64>::zeros((n, width));
    let out = values.as_slice_mut().unwrap();
    let mut argmax = (kind == Aggregator::Max).then(|| vec![usize::MAX; n * width]);

    for i in 0..n {
        let range = nb.offsets[i]..nb.offsets[i + 1];
        let row = &mut out[i * width..(i + 1) * width];
        match kind {
            Aggregator::Sum | Aggregator::Mean => {
                for e in range.clone() {
                    let j = nb.sources[e];
                    let src = &p[j * width..(j + 1) * width];
                    for h in 0..heads {
                        let w = a[e * heads + h];
                        for c in h * d..(h + 1) * d {
                            row[c] += w * src[c];
                        }
                    }
                }
                if kind == Aggregator::Mean {
                    let scale = 1.0 / range.len() as f64;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
            }
            Aggregator::Max => {
                let winners = &mut argmax.as_mut().unwrap()[i * width..(i + 1) * width];
                row.fill(f64::NEG_INFINITY);
                for e in range.clone() {
                    let j = nb.sources[e];
                    let src = &p[j * width..(j + 1) * width];
                    for h in 0..heads {
                        let w = a[e * heads + h];
                        for c in h * d..(h + 1) * d {
                            let m = w * src[c];
                            if m > row[c] || winners[c] == usize::MAX {
                                row[c] = m;
                                winners[c] = e;
                            }
                        }
                    }
                }
            }
        }
    }
    Aggregated { values, argmax }
}

/// Reverse pass. Returns the gradient with respect to the projected
/// features and, when requested, with respect to `alpha`.
pub fn aggregate_backward(
    kind: Aggregator,
    projected: &Array2<f64>,
    alpha: &Array2<f64>,
    layout: HeadLayout,
    nb: &Neighborhoods,
    aggregated: &Aggregated,
    d_out: &Array2<f64>,
    want_alpha: bool,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let n = projected.nrows();
    let (heads, d, width) = (layout.heads, layout.hidden, layout.width());
    let p = projected.as_slice().expect("standard layout");
    let a = alpha.as_slice().expect("standard layout");
    let g = d_out.as_slice().expect("standard layout");
    let mut d_proj = Array2::<f64>::zeros((n, width));
    let dp = d_proj.as_slice_mut().unwrap();
    let mut d_alpha = want_alpha.then(|| Array2::<f64>::zeros(alpha.raw_dim()));

    match kind {
        Aggregator::Sum | Aggregator::Mean => {
            for i in 0..n {
                let range = nb.offsets[i]..nb.offsets[i + 1];
                let scale = if kind == Aggregator::Mean {
                    1.0 / range.len() as f64
                } else {
                    1.0
                };
                let gi = &g[i * width..(i + 1) * width];
                for e in range {
                    let j = nb.sources[e];
                    for h in 0..heads {
                        let w = a[e * heads + h] * scale;
                        let mut acc = 0.0;
                        for c in h * d..(h + 1) * d {
                            dp[j * width + c] += w * gi[c];
                            acc += gi[c] * p[j * width + c];
                        }
                        if let Some(da) = d_alpha.as_mut() {
                            da.as_slice_mut().unwrap()[e * heads + h] += acc * scale;
                        }
                    }
                }
            }
        }
        Aggregator::Max => {
            let winners = aggregated.argmax.as_ref().expect("max aggregation keeps argmax");
            for i in 0..n {
                for c in 0..width {
                    let e = winners[i * width + c];
                    let j = nb.sources[e];
                    let h = c / d;
                    let gc = g[i * width + c];
                    dp[j * width + c] += a[e * heads + h] * gc;
                    if let Some(da) = d_alpha.as_mut() {
                        da.as_slice_mut().unwrap()[e * heads + h] += gc * p[j * width + c];
                    }
                }
            }
        }
    }
    (d_proj, d_alpha)
}
