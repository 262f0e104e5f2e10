use ndarray::Array2;
use rand::Rng;

use super::GnnError;
use crate::genome::{layer_input_dim, ArchitectureGenome, AttentionFn};

/// Learnable tensors of one message-passing layer.
///
/// `weight` maps the concatenated layer input to all heads at once
/// (`input_dim x heads*hidden`). Attention vectors are stored one row per
/// head (`heads x hidden`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Array2<f64>,
    /// Scores the destination node (`a_l`).
    pub att_dst: Option<Array2<f64>>,
    /// Scores the source node (`a_r`).
    pub att_src: Option<Array2<f64>>,
    /// Output weights of the generalized linear score (`w_g`).
    pub att_gate: Option<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layers: Vec<LayerParams>,
    /// Output head `last_width x classes`.
    pub output: Array2<f64>,
}

struct LayerShape {
    input_dim: usize,
    heads: usize,
    hidden: usize,
    attention: AttentionFn,
}

fn layer_shapes(
    genome: &ArchitectureGenome,
    feature_dim: usize,
) -> Result<Vec<LayerShape>, GnnError> {
    (1..=genome.depth())
        .map(|k| {
            let gene = &genome.layers[k - 1];
            Ok(LayerShape {
                input_dim: layer_input_dim(genome, k, feature_dim)?,
                heads: gene.heads as usize,
                hidden: gene.hidden_dim as usize,
                attention: gene.attention_fn,
            })
        })
        .collect()
}

fn attention_tensors(kind: AttentionFn) -> (bool, bool, bool) {
    match kind {
        AttentionFn::Const | AttentionFn::Gcn | AttentionFn::Cos => (false, false, false),
        AttentionFn::Gat | AttentionFn::SymGat => (true, true, false),
        AttentionFn::Linear => (false, true, false),
        AttentionFn::GenLinear => (true, true, true),
    }
}

/// Number of learnable scalars the genome needs on `feature_dim` inputs.
pub fn parameter_count(genome: &ArchitectureGenome, feature_dim: usize) -> Result<usize, GnnError> {
    let mut total = 0usize;
    for shape in layer_shapes(genome, feature_dim)? {
        let (dst, src, gate) = attention_tensors(shape.attention);
        let width = shape.heads * shape.hidden;
        total += shape.input_dim * width;
        total += (dst as usize + src as usize + gate as usize) * width;
    }
    let last = genome.output_width(genome.depth(), feature_dim);
    Ok(total + last * genome.output_classes as usize)
}

fn glorot<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..=limit))
}

/// Allocates and Glorot-initializes every tensor the genome needs.
pub fn build_model<R: Rng + ?Sized>(
    genome: &ArchitectureGenome,
    feature_dim: usize,
    rng: &mut R,
    param_cap: usize,
) -> Result<Model, GnnError> {
    if genome.layers.is_empty() {
        return Err(GnnError::Config("genome has no layers".into()));
    }
    let count = parameter_count(genome, feature_dim)?;
    if count > param_cap {
        return Err(GnnError::Capacity {
            parameters: count,
            cap: param_cap,
        });
    }
    let mut layers = Vec::with_capacity(genome.depth());
    for shape in layer_shapes(genome, feature_dim)? {
        let width = shape.heads * shape.hidden;
        let weight = glorot(rng, shape.input_dim, width, shape.input_dim, width);
        let (dst, src, gate) = attention_tensors(shape.attention);
        let mut vector = |present: bool| {
            present.then(|| glorot(rng, shape.heads, shape.hidden, shape.hidden, 1))
        };
        let att_dst = vector(dst);
        let att_src = vector(src);
        let att_gate = vector(gate);
        layers.push(LayerParams {
            weight,
            att_dst,
            att_src,
            att_gate,
        });
    }
    let last = genome.output_width(genome.depth(), feature_dim);
    let classes = genome.output_classes as usize;
    let output = glorot(rng, last, classes, last, classes);
    Ok(Model { layers, output })
}

impl Model {
    pub fn zeros_like(&self) -> Model {
        let z = |a: &Array2<f64>| Array2::zeros(a.raw_dim());
        Model {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: z(&l.weight),
                    att_dst: l.att_dst.as_ref().map(z),
                    att_src: l.att_src.as_ref().map(z),
                    att_gate: l.att_gate.as_ref().map(z),
                })
                .collect(),
            output: z(&self.output),
        }
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let k = i + 1;
            out.push((format!("layer{k}.weight"), &l.weight));
            if let Some(a) = &l.att_dst {
                out.push((format!("layer{k}.att_dst"), a));
            }
            if let Some(a) = &l.att_src {
                out.push((format!("layer{k}.att_src"), a));
            }
            if let Some(a) = &l.att_gate {
                out.push((format!("layer{k}.att_gate"), a));
            }
        }
        out.push(("output".to_string(), &self.output));
        out
    }

    /// Mutable tensors in the same order as [`Model::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.extend(l.att_dst.as_mut());
            out.extend(l.att_src.as_mut());
            out.extend(l.att_gate.as_mut());
        }
        out.push(&mut self.output);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}
