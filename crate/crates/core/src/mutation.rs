//! Single-state mutation, including the depth-growing layer duplication.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{
    mask_bound, pick, Activation, Aggregator, ArchitectureGenome, AttentionFn, GenomeSpace,
};

/// Depth cap applied when nothing else is configured.
pub const DEFAULT_MAX_LAYERS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MutationError {
    #[error("genome already has {depth} layers (max {max_layers})")]
    Capacity { depth: usize, max_layers: usize },
    #[error("layer index {index} out of range 1..={depth}")]
    LayerIndex { index: usize, depth: usize },
    #[error("no state of the genome can be mutated in this space")]
    NoMutableState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    AttentionFn,
    Heads,
    HiddenDim,
    Aggregator,
    Activation,
    SkipConnection,
    LayerAdd,
}

impl MutationKind {
    pub const ALL: [MutationKind; 7] = [
        MutationKind::AttentionFn,
        MutationKind::Heads,
        MutationKind::HiddenDim,
        MutationKind::Aggregator,
        MutationKind::Activation,
        MutationKind::SkipConnection,
        MutationKind::LayerAdd,
    ];
}

/// A gene value as it appears in a diff. Integer states (heads, hidden
/// width, skip mask, depth) share the `Count` variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneValue {
    Attention(AttentionFn),
    Aggregator(Aggregator),
    Activation(Activation),
    Count(u64),
}

/// What a mutation changed. For `layer_add`, `layer` is the duplicated
/// layer and the values are the depths before and after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationDiff {
    pub kind: MutationKind,
    pub layer: usize,
    pub old: GeneValue,
    pub new: GeneValue,
}

fn has_alternative<T: PartialEq>(set: &[T], current: &T) -> bool {
    set.iter().any(|v| v != current)
}

fn pick_other<R: Rng + ?Sized, T: Copy + PartialEq>(rng: &mut R, set: &[T], current: T) -> T {
    let others: Vec<T> = set.iter().copied().filter(|v| *v != current).collect();
    pick(rng, &others)
}

/// Kinds that would produce a real change at layer `k`.
pub fn mutable_kinds(
    genome: &ArchitectureGenome,
    k: usize,
    space: &GenomeSpace,
    max_layers: usize,
) -> Vec<MutationKind> {
    let gene = &genome.layers[k - 1];
    MutationKind::ALL
        .into_iter()
        .filter(|kind| match kind {
            MutationKind::AttentionFn => has_alternative(&space.attention_fns, &gene.attention_fn),
            MutationKind::Heads => has_alternative(&space.heads, &gene.heads),
            MutationKind::HiddenDim => has_alternative(&space.hidden_dims, &gene.hidden_dim),
            MutationKind::Aggregator => has_alternative(&space.aggregators, &gene.aggregator),
            MutationKind::Activation => has_alternative(&space.activations, &gene.activation),
            MutationKind::SkipConnection => k >= 2,
            MutationKind::LayerAdd => space.layer_add && genome.depth() < max_layers,
        })
        .collect()
}

/// Draws a layer uniformly, then one of its mutable states uniformly, and
/// changes it to a different value.
pub fn mutate<R: Rng + ?Sized>(
    genome: &ArchitectureGenome,
    rng: &mut R,
    space: &GenomeSpace,
    max_layers: usize,
) -> Result<(ArchitectureGenome, MutationDiff), MutationError> {
    let depth = genome.depth();
    let mut k = rng.random_range(1..=depth);
    let mut kinds = mutable_kinds(genome, k, space, max_layers);
    if kinds.is_empty() {
        let candidates: Vec<usize> = (1..=depth)
            .filter(|&j| !mutable_kinds(genome, j, space, max_layers).is_empty())
            .collect();
        if candidates.is_empty() {
            return Err(MutationError::NoMutableState);
        }
        k = pick(rng, &candidates);
        kinds = mutable_kinds(genome, k, space, max_layers);
    }
    let kind = pick(rng, &kinds);
    apply_kind(genome, k, kind, rng, space, max_layers)
}

/// Mutates the requested state of layer `k`. If that state cannot change
/// there (for example the skip mask of layer 1), another mutable state of
/// the same layer is drawn instead.
pub fn mutate_forced<R: Rng + ?Sized>(
    genome: &ArchitectureGenome,
    k: usize,
    kind: MutationKind,
    rng: &mut R,
    space: &GenomeSpace,
    max_layers: usize,
) -> Result<(ArchitectureGenome, MutationDiff), MutationError> {
    if k == 0 || k > genome.depth() {
        return Err(MutationError::LayerIndex {
            index: k,
            depth: genome.depth(),
        });
    }
    let kinds = mutable_kinds(genome, k, space, max_layers);
    let kind = if kinds.contains(&kind) {
        kind
    } else if kinds.is_empty() {
        return Err(MutationError::NoMutableState);
    } else {
        pick(rng, &kinds)
    };
    apply_kind(genome, k, kind, rng, space, max_layers)
}

fn apply_kind<R: Rng + ?Sized>(
    genome: &ArchitectureGenome,
    k: usize,
    kind: MutationKind,
    rng: &mut R,
    space: &GenomeSpace,
    max_layers: usize,
) -> Result<(ArchitectureGenome, MutationDiff), MutationError> {
    if kind == MutationKind::LayerAdd {
        let child = apply_layer_add(genome, k, max_layers)?;
        let diff = MutationDiff {
            kind,
            layer: k,
            old: GeneValue::Count(genome.depth() as u64),
            new: GeneValue::Count(child.depth() as u64),
        };
        return Ok((child, diff));
    }

    let mut child = genome.clone();
    let gene = &mut child.layers[k - 1];
    let (old, new) = match kind {
        MutationKind::AttentionFn => {
            let old = gene.attention_fn;
            gene.attention_fn = pick_other(rng, &space.attention_fns, old);
            (GeneValue::Attention(old), GeneValue::Attention(gene.attention_fn))
        }
        MutationKind::Heads => {
            let old = gene.heads;
            gene.heads = pick_other(rng, &space.heads, old);
            (GeneValue::Count(old as u64), GeneValue::Count(gene.heads as u64))
        }
        MutationKind::HiddenDim => {
            let old = gene.hidden_dim;
            gene.hidden_dim = pick_other(rng, &space.hidden_dims, old);
            (GeneValue::Count(old as u64), GeneValue::Count(gene.hidden_dim as u64))
        }
        MutationKind::Aggregator => {
            let old = gene.aggregator;
            gene.aggregator = pick_other(rng, &space.aggregators, old);
            (GeneValue::Aggregator(old), GeneValue::Aggregator(gene.aggregator))
        }
        MutationKind::Activation => {
            let old = gene.activation;
            gene.activation = pick_other(rng, &space.activations, old);
            (GeneValue::Activation(old), GeneValue::Activation(gene.activation))
        }
        MutationKind::SkipConnection => {
            let old = gene.skip_mask;
            // uniform over [0, bound) without the current value
            let mut draw = rng.random_range(0..mask_bound(k) - 1);
            if draw >= old {
                draw += 1;
            }
            gene.skip_mask = draw;
            (GeneValue::Count(old), GeneValue::Count(draw))
        }
        MutationKind::LayerAdd => unreachable!(),
    };
    Ok((
        child,
        MutationDiff {
            kind,
            layer: k,
            old,
            new,
        },
    ))
}

/// Inserts a zero bit at position `at`, shifting higher bits up by one.
fn insert_zero_bit(mask: u64, at: usize) -> u64 {
    let low = mask & ((1u64 << at) - 1);
    let high = mask >> at;
    low | (high << (at + 1))
}

/// Duplicates layer `idx` and inserts the copy directly after it.
///
/// Downstream masks are re-indexed so every explicit skip connection keeps
/// pointing at the same source layer; the new layer is not an explicit
/// source of any later layer.
pub fn apply_layer_add(
    genome: &ArchitectureGenome,
    idx: usize,
    max_layers: usize,
) -> Result<ArchitectureGenome, MutationError> {
    let depth = genome.depth();
    if idx == 0 || idx > depth {
        return Err(MutationError::LayerIndex { index: idx, depth });
    }
    if depth >= max_layers || depth >= 64 {
        return Err(MutationError::Capacity {
            depth,
            max_layers: max_layers.min(64),
        });
    }
    let mut child = genome.clone();
    let copy = genome.layers[idx - 1].clone();
    child.layers.insert(idx, copy);
    // new layer sits at 1-based position idx + 1
    for layer in child.layers.iter_mut().skip(idx + 1) {
        layer.skip_mask = insert_zero_bit(layer.skip_mask, idx + 1);
    }
    Ok(child)
}

/// Returns the single state change turning `a` into `b`, or `None` when
/// they differ in zero or several states.
pub fn mutation_diff(a: &ArchitectureGenome, b: &ArchitectureGenome) -> Option<MutationDiff> {
    if a.task != b.task || a.output_classes != b.output_classes || a.head_combine != b.head_combine
    {
        return None;
    }
    if b.depth() == a.depth() + 1 {
        return (1..=a.depth()).find_map(|idx| {
            let grown = apply_layer_add(a, idx, usize::MAX).ok()?;
            (grown == *b).then_some(MutationDiff {
                kind: MutationKind::LayerAdd,
                layer: idx,
                old: GeneValue::Count(a.depth() as u64),
                new: GeneValue::Count(b.depth() as u64),
            })
        });
    }
    if a.depth() != b.depth() {
        return None;
    }
    let mut found = None;
    for (i, (x, y)) in a.layers.iter().zip(&b.layers).enumerate() {
        let k = i + 1;
        let changes = [
            (x.attention_fn != y.attention_fn).then_some((
                MutationKind::AttentionFn,
                GeneValue::Attention(x.attention_fn),
                GeneValue::Attention(y.attention_fn),
            )),
            (x.heads != y.heads).then_some((
                MutationKind::Heads,
                GeneValue::Count(x.heads as u64),
                GeneValue::Count(y.heads as u64),
            )),
            (x.hidden_dim != y.hidden_dim).then_some((
                MutationKind::HiddenDim,
                GeneValue::Count(x.hidden_dim as u64),
                GeneValue::Count(y.hidden_dim as u64),
            )),
            (x.aggregator != y.aggregator).then_some((
                MutationKind::Aggregator,
                GeneValue::Aggregator(x.aggregator),
                GeneValue::Aggregator(y.aggregator),
            )),
            (x.activation != y.activation).then_some((
                MutationKind::Activation,
                GeneValue::Activation(x.activation),
                GeneValue::Activation(y.activation),
            )),
            (x.skip_mask != y.skip_mask).then_some((
                MutationKind::SkipConnection,
                GeneValue::Count(x.skip_mask),
                GeneValue::Count(y.skip_mask),
            )),
        ];
        for (kind, old, new) in changes.into_iter().flatten() {
            if found.is_some() {
                return None;
            }
            found = Some(MutationDiff {
                kind,
                layer: k,
                old,
                new,
            });
        }
    }
    found
}
