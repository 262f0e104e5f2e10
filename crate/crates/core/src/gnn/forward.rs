//! Forward and reverse passes over a whole genome.
//!
//! Layer `k` reads the ascending concatenation of its source layers
//! (`decode(skip_mask_k)` plus `k - 1`), projects it per head, weights the
//! neighbour messages with attention, aggregates, applies the activation and
//! concatenates (or, on the final layer, optionally averages) the heads. The
//! output head is a single linear map `H_L W_C`.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use super::activation;
use super::aggregate::{aggregate, aggregate_backward, Aggregated};
use super::attention::{attention_backward, attention_coefficients, HeadLayout};
use super::graph::Graph;
use super::model::Model;
use super::GnnError;
use crate::genome::ArchitectureGenome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// What one layer keeps for the reverse pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub sources: Vec<usize>,
    /// Concatenated input after dropout.
    pub input: Array2<f64>,
    /// Inverted-dropout scale per input cell (`0` or `1 / (1 - rate)`).
    pub dropout_mask: Option<Array2<f64>>,
    pub projected: Array2<f64>,
    pub alpha: Array2<f64>,
    pub aggregated: Aggregated,
    /// Per-head activations before any head averaging.
    pub activated: Array2<f64>,
}

/// Retained per-layer outputs; `states[0]` is the input feature matrix.
#[derive(Debug, Clone)]
pub struct LayerActivations {
    pub states: Vec<Array2<f64>>,
    pub layers: Vec<LayerCache>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Array2<f64>,
    pub activations: LayerActivations,
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<(), GnnError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GnnError::Numeric { layer })
    }
}

pub fn forward<R: Rng + ?Sized>(
    model: &Model,
    genome: &ArchitectureGenome,
    graph: &Graph,
    features: &Array2<f64>,
    mode: Mode,
    dropout: f64,
    rng: &mut R,
) -> Result<ForwardOutput, GnnError> {
    if features.nrows() != graph.node_count() {
        return Err(GnnError::Config(format!(
            "feature matrix has {} rows, graph has {} nodes",
            features.nrows(),
            graph.node_count()
        )));
    }
    if model.layers.len() != genome.depth() {
        return Err(GnnError::Config("model does not match genome depth".into()));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(GnnError::Config(format!("dropout {dropout} outside [0, 1)")));
    }
    let nb = graph.neighborhoods();
    let mut states = vec![features.as_standard_layout().into_owned()];
    let mut caches = Vec::with_capacity(genome.depth());

    for k in 1..=genome.depth() {
        let gene = &genome.layers[k - 1];
        let params = &model.layers[k - 1];
        let sources = genome.sources(k)?;
        let views: Vec<ArrayView2<f64>> = sources.iter().map(|&s| states[s].view()).collect();
        let mut input = concatenate(Axis(1), &views).expect("row counts agree");
        if input.ncols() != params.weight.nrows() {
            return Err(GnnError::Config(format!(
                "layer {k} input width {} does not match weight rows {}",
                input.ncols(),
                params.weight.nrows()
            )));
        }

        let dropout_mask = (mode == Mode::Train && dropout > 0.0).then(|| {
            let keep = 1.0 / (1.0 - dropout);
            Array2::from_shape_simple_fn(input.raw_dim(), || {
                if rng.random::<f64>() < dropout {
                    0.0
                } else {
                    keep
                }
            })
        });
        if let Some(mask) = &dropout_mask {
            input *= mask;
        }

        let layout = HeadLayout {
            heads: gene.heads as usize,
            hidden: gene.hidden_dim as usize,
        };
        let projected = input.dot(&params.weight);
        let alpha = attention_coefficients(gene.attention_fn, &projected, layout, params, nb);
        let aggregated = aggregate(gene.aggregator, &projected, &alpha, layout, nb);
        let activated = aggregated.values.mapv(|x| activation::apply(gene.activation, x));
        check_finite(&activated, k)?;

        let state = if genome.averages_heads(k) {
            average_heads(&activated, layout)
        } else {
            activated.clone()
        };
        states.push(state);
        caches.push(LayerCache {
            sources,
            input,
            dropout_mask,
            projected,
            alpha,
            aggregated,
            activated,
        });
    }

    let logits = states.last().unwrap().dot(&model.output);
    check_finite(&logits, genome.depth() + 1)?;
    Ok(ForwardOutput {
        logits,
        activations: LayerActivations {
            states,
            layers: caches,
        },
    })
}

fn average_heads(per_head: &Array2<f64>, layout: HeadLayout) -> Array2<f64> {
    let (heads, d) = (layout.heads, layout.hidden);
    let scale = 1.0 / heads as f64;
    Array2::from_shape_fn((per_head.nrows(), d), |(i, c)| {
        (0..heads).map(|h| per_head[[i, h * d + c]]).sum::<f64>() * scale
    })
}

/// Reverse pass from the gradient of the loss with respect to the logits.
/// Returns gradients shaped like the model.
pub fn backward(
    model: &Model,
    genome: &ArchitectureGenome,
    graph: &Graph,
    activations: &LayerActivations,
    d_logits: &Array2<f64>,
) -> Result<Model, GnnError> {
    let nb = graph.neighborhoods();
    let depth = genome.depth();
    let mut grads = model.zeros_like();
    let states = &activations.states;

    grads.output = states[depth].t().dot(d_logits);
    let mut d_states: Vec<Option<Array2<f64>>> = vec![None; depth + 1];
    d_states[depth] = Some(d_logits.dot(&model.output.t()));

    for k in (1..=depth).rev() {
        let Some(d_state) = d_states[k].take() else {
            continue;
        };
        let gene = &genome.layers[k - 1];
        let params = &model.layers[k - 1];
        let cache = &activations.layers[k - 1];
        let layout = HeadLayout {
            heads: gene.heads as usize,
            hidden: gene.hidden_dim as usize,
        };

        let d_activated = if genome.averages_heads(k) {
            let scale = 1.0 / layout.heads as f64;
            Array2::from_shape_fn(cache.activated.raw_dim(), |(i, c)| {
                d_state[[i, c % layout.hidden]] * scale
            })
        } else {
            d_state
        };
        let mut d_pre = d_activated;
        for ((g, &x), &y) in d_pre
            .iter_mut()
            .zip(cache.aggregated.values.iter())
            .zip(cache.activated.iter())
        {
            *g *= activation::derivative(gene.activation, x, y);
        }

        let needs_alpha = gene.attention_fn.is_softmax_normalized();
        let (mut d_projected, d_alpha) = aggregate_backward(
            gene.aggregator,
            &cache.projected,
            &cache.alpha,
            layout,
            nb,
            &cache.aggregated,
            &d_pre,
            needs_alpha,
        );
        if let Some(d_alpha) = d_alpha {
            attention_backward(
                gene.attention_fn,
                &cache.projected,
                layout,
                params,
                nb,
                &cache.alpha,
                &d_alpha,
                &mut d_projected,
                &mut grads.layers[k - 1],
            );
        }

        grads.layers[k - 1].weight = cache.input.t().dot(&d_projected);
        // layer 1 only reads the raw features
        if cache.sources.iter().all(|&s| s == 0) {
            continue;
        }
        let mut d_input = d_projected.dot(&params.weight.t());
        if let Some(mask) = &cache.dropout_mask {
            d_input *= mask;
        }
        let mut col = 0;
        for &s in &cache.sources {
            let width = states[s].ncols();
            if s > 0 {
                let part = d_input.slice(ndarray::s![.., col..col + width]);
                match &mut d_states[s] {
                    Some(acc) => *acc += &part,
                    slot @ None => *slot = Some(part.to_owned()),
                }
            }
            col += width;
        }
    }
    if !grads.is_finite() {
        return Err(GnnError::Numeric { layer: 0 });
    }
    Ok(grads)
}
