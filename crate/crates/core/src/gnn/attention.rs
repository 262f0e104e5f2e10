//! Per-edge attention coefficients and their reverse pass.
//!
//! Scores are computed per head on the projected features `p = W z`:
//!
//! | kind         | raw score for edge `j -> i`                         |
//! |--------------|-----------------------------------------------------|
//! | `const`      | `1`                                                 |
//! | `gcn`        | `1 / sqrt(d_i d_j)` (degrees of `A + I`)            |
//! | `gat`        | `LeakyReLU(a_l . p_i + a_r . p_j)`                  |
//! | `sym_gat`    | `gat(i, j) + gat(j, i)`                             |
//! | `cos`        | `cos(p_i, p_j)`, 0 when either vector is zero       |
//! | `linear`     | `tanh(a_r . p_j)`                                   |
//! | `gen_linear` | `w_g . tanh(a_l * p_i + a_r * p_j)` (element-wise)  |
//!
//! Every kind except `const` and `gcn` is then softmax-normalized over the
//! incoming edges of each destination.

use ndarray::Array2;

use super::graph::Neighborhoods;
use super::model::LayerParams;
use crate::genome::AttentionFn;

/// Negative slope inside GAT-style scores.
pub const GAT_SLOPE: f64 = 0.2;

fn lrelu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        GAT_SLOPE * x
    }
}

fn lrelu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        GAT_SLOPE
    }
}

/// Layout of a projected feature matrix: `heads` blocks of `hidden` columns.
#[derive(Debug, Clone, Copy)]
pub struct HeadLayout {
    pub heads: usize,
    pub hidden: usize,
}

impl HeadLayout {
    pub fn width(&self) -> usize {
        self.heads * self.hidden
    }

    #[inline]
    fn slice<'a>(&self, p: &'a [f64], node: usize, head: usize) -> &'a [f64] {
        let start = node * self.width() + head * self.hidden;
        &p[start..start + self.hidden]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `s[i, h] = a[h] . p_i[h]` for every node and head.
fn node_scores(p: &[f64], att: &Array2<f64>, layout: HeadLayout, n: usize) -> Vec<f64> {
    let att = att.as_slice().expect("standard layout");
    let mut out = vec![0.0; n * layout.heads];
    for i in 0..n {
        for h in 0..layout.heads {
            out[i * layout.heads + h] = dot(
                layout.slice(p, i, h),
                &att[h * layout.hidden..(h + 1) * layout.hidden],
            );
        }
    }
    out
}

fn required<'a>(t: &'a Option<Array2<f64>>, what: &str) -> &'a Array2<f64> {
    t.as_ref()
        .unwrap_or_else(|| panic!("attention kind requires {what} parameters"))
}

/// Unnormalized scores, one row per edge and one column per head.
pub fn attention_scores(
    kind: AttentionFn,
    projected: &Array2<f64>,
    layout: HeadLayout,
    params: &LayerParams,
    nb: &Neighborhoods,
) -> Array2<f64> {
    let n = projected.nrows();
    let heads = layout.heads;
    let edges = nb.edge_count();
    let p = projected.as_slice().expect("standard layout");
    let mut scores = Array2::<f64>::zeros((edges, heads));
    let out = scores.as_slice_mut().expect("standard layout");
    match kind {
        AttentionFn::Const => out.fill(1.0),
        AttentionFn::Gcn => {
            for e in 0..edges {
                let w = 1.0
                    / ((nb.degree(nb.targets[e]) * nb.degree(nb.sources[e])) as f64).sqrt();
                out[e * heads..(e + 1) * heads].fill(w);
            }
        }
        AttentionFn::Gat | AttentionFn::SymGat => {
            let sd = node_scores(p, required(&params.att_dst, "a_l"), layout, n);
            let ss = node_scores(p, required(&params.att_src, "a_r"), layout, n);
            let sym = kind == AttentionFn::SymGat;
            for e in 0..edges {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let mut v = lrelu(sd[i * heads + h] + ss[j * heads + h]);
                    if sym {
                        v += lrelu(sd[j * heads + h] + ss[i * heads + h]);
                    }
                    out[e * heads + h] = v;
                }
            }
        }
        AttentionFn::Cos => {
            for e in 0..edges {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let (pi, pj) = (layout.slice(p, i, h), layout.slice(p, j, h));
                    let norm = (dot(pi, pi) * dot(pj, pj)).sqrt();
                    out[e * heads + h] = if norm > 0.0 { dot(pi, pj) / norm } else { 0.0 };
                }
            }
        }
        AttentionFn::Linear => {
            let ss = node_scores(p, required(&params.att_src, "a_r"), layout, n);
            for e in 0..edges {
                let j = nb.sources[e];
                for h in 0..heads {
                    out[e * heads + h] = ss[j * heads + h].tanh();
                }
            }
        }
        AttentionFn::GenLinear => {
            let al = required(&params.att_dst, "a_l").as_slice().unwrap();
            let ar = required(&params.att_src, "a_r").as_slice().unwrap();
            let wg = required(&params.att_gate, "w_g").as_slice().unwrap();
            let d = layout.hidden;
            for e in 0..edges {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let (pi, pj) = (layout.slice(p, i, h), layout.slice(p, j, h));
                    let base = h * d;
                    let mut v = 0.0;
                    for c in 0..d {
                        v += wg[base + c] * (al[base + c] * pi[c] + ar[base + c] * pj[c]).tanh();
                    }
                    out[e * heads + h] = v;
                }
            }
        }
    }
    scores
}

/// In-place softmax over the incoming edges of every destination, per head.
pub fn softmax_by_destination(scores: &mut Array2<f64>, nb: &Neighborhoods) {
    let heads = scores.ncols();
    let s = scores.as_slice_mut().expect("standard layout");
    for i in 0..nb.offsets.len() - 1 {
        let range = nb.offsets[i]..nb.offsets[i + 1];
        for h in 0..heads {
            let max = range
                .clone()
                .map(|e| s[e * heads + h])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for e in range.clone() {
                let v = (s[e * heads + h] - max).exp();
                s[e * heads + h] = v;
                total += v;
            }
            for e in range.clone() {
                s[e * heads + h] /= total;
            }
        }
    }
}

/// Normalized per-edge weights (`E x heads`).
pub fn attention_coefficients(
    kind: AttentionFn,
    projected: &Array2<f64>,
    layout: HeadLayout,
    params: &LayerParams,
    nb: &Neighborhoods,
) -> Array2<f64> {
    let mut scores = attention_scores(kind, projected, layout, params, nb);
    if kind.is_softmax_normalized() {
        softmax_by_destination(&mut scores, nb);
    }
    scores
}

/// Propagates `d_alpha` back into the projected features and the attention
/// parameters. `alpha` must be the output of [`attention_coefficients`].
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    kind: AttentionFn,
    projected: &Array2<f64>,
    layout: HeadLayout,
    params: &LayerParams,
    nb: &Neighborhoods,
    alpha: &Array2<f64>,
    d_alpha: &Array2<f64>,
    d_projected: &mut Array2<f64>,
    grads: &mut LayerParams,
) {
    if !kind.is_softmax_normalized() {
        return;
    }
    let n = projected.nrows();
    let heads = layout.heads;
    let d = layout.hidden;
    let p = projected.as_slice().expect("standard layout");
    let a = alpha.as_slice().expect("standard layout");
    let da = d_alpha.as_slice().expect("standard layout");

    // softmax reverse pass: de = alpha * (d_alpha - sum(alpha * d_alpha))
    let mut de = vec![0.0; a.len()];
    for i in 0..n {
        let range = nb.offsets[i]..nb.offsets[i + 1];
        for h in 0..heads {
            let inner: f64 = range
                .clone()
                .map(|e| a[e * heads + h] * da[e * heads + h])
                .sum();
            for e in range.clone() {
                de[e * heads + h] = a[e * heads + h] * (da[e * heads + h] - inner);
            }
        }
    }

    let dp = d_projected.as_slice_mut().expect("standard layout");
    match kind {
        AttentionFn::Const | AttentionFn::Gcn => unreachable!(),
        AttentionFn::Gat | AttentionFn::SymGat => {
            let att_dst = required(&params.att_dst, "a_l");
            let att_src = required(&params.att_src, "a_r");
            let sd = node_scores(p, att_dst, layout, n);
            let ss = node_scores(p, att_src, layout, n);
            let mut dsd = vec![0.0; n * heads];
            let mut dss = vec![0.0; n * heads];
            for e in 0..nb.edge_count() {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let g = de[e * heads + h];
                    let g1 = g * lrelu_grad(sd[i * heads + h] + ss[j * heads + h]);
                    dsd[i * heads + h] += g1;
                    dss[j * heads + h] += g1;
                    if kind == AttentionFn::SymGat {
                        let g2 = g * lrelu_grad(sd[j * heads + h] + ss[i * heads + h]);
                        dsd[j * heads + h] += g2;
                        dss[i * heads + h] += g2;
                    }
                }
            }
            scatter_node_scores(p, dp, att_dst, &dsd, layout, n, grads.att_dst.as_mut().unwrap());
            scatter_node_scores(p, dp, att_src, &dss, layout, n, grads.att_src.as_mut().unwrap());
        }
        AttentionFn::Linear => {
            let att_src = required(&params.att_src, "a_r");
            let ss = node_scores(p, att_src, layout, n);
            let mut dss = vec![0.0; n * heads];
            for e in 0..nb.edge_count() {
                let j = nb.sources[e];
                for h in 0..heads {
                    let t = ss[j * heads + h].tanh();
                    dss[j * heads + h] += de[e * heads + h] * (1.0 - t * t);
                }
            }
            scatter_node_scores(p, dp, att_src, &dss, layout, n, grads.att_src.as_mut().unwrap());
        }
        AttentionFn::Cos => {
            for e in 0..nb.edge_count() {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let g = de[e * heads + h];
                    if g == 0.0 {
                        continue;
                    }
                    let (pi, pj) = (layout.slice(p, i, h), layout.slice(p, j, h));
                    let (ni2, nj2) = (dot(pi, pi), dot(pj, pj));
                    if ni2 == 0.0 || nj2 == 0.0 {
                        continue;
                    }
                    let inv = 1.0 / (ni2 * nj2).sqrt();
                    let cos = dot(pi, pj) * inv;
                    let bi = i * layout.width() + h * d;
                    let bj = j * layout.width() + h * d;
                    for c in 0..d {
                        let (xi, xj) = (p[bi + c], p[bj + c]);
                        dp[bi + c] += g * (xj * inv - cos * xi / ni2);
                        dp[bj + c] += g * (xi * inv - cos * xj / nj2);
                    }
                }
            }
        }
        AttentionFn::GenLinear => {
            let al = required(&params.att_dst, "a_l").as_slice().unwrap();
            let ar = required(&params.att_src, "a_r").as_slice().unwrap();
            let wg = required(&params.att_gate, "w_g").as_slice().unwrap();
            let mut gal = vec![0.0; al.len()];
            let mut gar = vec![0.0; ar.len()];
            let mut gwg = vec![0.0; wg.len()];
            for e in 0..nb.edge_count() {
                let (i, j) = (nb.targets[e], nb.sources[e]);
                for h in 0..heads {
                    let g = de[e * heads + h];
                    let base = h * d;
                    let bi = i * layout.width() + base;
                    let bj = j * layout.width() + base;
                    for c in 0..d {
                        let (xi, xj) = (p[bi + c], p[bj + c]);
                        let t = (al[base + c] * xi + ar[base + c] * xj).tanh();
                        gwg[base + c] += g * t;
                        let dq = g * wg[base + c] * (1.0 - t * t);
                        gal[base + c] += dq * xi;
                        gar[base + c] += dq * xj;
                        dp[bi + c] += dq * al[base + c];
                        dp[bj + c] += dq * ar[base + c];
                    }
                }
            }
            add_slice(grads.att_dst.as_mut().unwrap(), &gal);
            add_slice(grads.att_src.as_mut().unwrap(), &gar);
            add_slice(grads.att_gate.as_mut().unwrap(), &gwg);
        }
    }
}

fn add_slice(target: &mut Array2<f64>, values: &[f64]) {
    for (t, v) in target.iter_mut().zip(values) {
        *t += v;
    }
}

/// Reverse pass of [`node_scores`] given `ds[i, h]`.
fn scatter_node_scores(
    p: &[f64],
    dp: &mut [f64],
    att: &Array2<f64>,
    ds: &[f64],
    layout: HeadLayout,
    n: usize,
    grad_att: &mut Array2<f64>,
) {
    let att = att.as_slice().unwrap();
    let ga = grad_att.as_slice_mut().unwrap();
    let (heads, d) = (layout.heads, layout.hidden);
    for i in 0..n {
        for h in 0..heads {
            let g = ds[i * heads + h];
            if g == 0.0 {
                continue;
            }
            let base = i * layout.width() + h * d;
            for c in 0..d {
                ga[h * d + c] += g * p[base + c];
                dp[base + c] += g * att[h * d + c];
            }
        }
    }
}
