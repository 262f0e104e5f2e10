//! Architecture genomes: per-layer genes, the integer skip-mask encoding,
//! dimension arithmetic and the canonical genome file format.
//!
//! A skip mask `S_k` for layer `k` (1-based) is an integer whose bit `i`
//! says that layer `i` feeds layer `k` in addition to the implicit edge from
//! layer `k - 1`. Index 0 is the raw input features, so the valid bits are
//! `0..=k-2` and `0 <= S_k < 2^(k-1)`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version written into every genome file.
pub const GENOME_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("skip mask {mask} is out of range for layer {layer} (must be < 2^{})", layer.saturating_sub(1))]
    MaskOutOfRange { mask: u64, layer: usize },
    #[error("skip connection from layer {source_layer} is not allowed into layer {layer}")]
    BadConnection { source_layer: usize, layer: usize },
    #[error("duplicate skip connection from layer {0}")]
    DuplicateConnection(usize),
    #[error("layer index {index} out of range 1..={depth}")]
    LayerIndex { index: usize, depth: usize },
    #[error("invalid genome space: {0}")]
    Space(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("genome format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported genome format version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionFn {
    Const,
    Gcn,
    Gat,
    SymGat,
    Cos,
    Linear,
    GenLinear,
}

impl AttentionFn {
    pub const ALL: [AttentionFn; 7] = [
        AttentionFn::Const,
        AttentionFn::Gcn,
        AttentionFn::Gat,
        AttentionFn::SymGat,
        AttentionFn::Cos,
        AttentionFn::Linear,
        AttentionFn::GenLinear,
    ];

    /// Kinds whose raw scores go through a per-destination softmax.
    pub fn is_softmax_normalized(self) -> bool {
        !matches!(self, AttentionFn::Const | AttentionFn::Gcn)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttentionFn::Const => "const",
            AttentionFn::Gcn => "gcn",
            AttentionFn::Gat => "gat",
            AttentionFn::SymGat => "sym_gat",
            AttentionFn::Cos => "cos",
            AttentionFn::Linear => "linear",
            AttentionFn::GenLinear => "gen_linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Sum,
    Mean,
    Max,
}

impl Aggregator {
    pub const ALL: [Aggregator; 3] = [Aggregator::Sum, Aggregator::Mean, Aggregator::Max];

    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Sum => "sum",
            Aggregator::Mean => "mean",
            Aggregator::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu,
    Elu,
    Softplus,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 7] = [
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Elu,
        Activation::Softplus,
        Activation::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Elu => "elu",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadCombine {
    Concat,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SingleLabel,
    MultiLabel,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::SingleLabel => "single_label",
            Task::MultiLabel => "multi_label",
        })
    }
}

/// One message-passing layer: the six searchable states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerGene {
    pub attention_fn: AttentionFn,
    pub heads: u32,
    pub hidden_dim: u32,
    pub aggregator: Aggregator,
    pub activation: Activation,
    pub skip_mask: u64,
}

/// The unit of search: an ordered stack of layers plus the task head.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureGenome {
    pub layers: Vec<LayerGene>,
    /// Head combination of the final layer. Hidden layers always concatenate.
    pub head_combine: HeadCombine,
    pub output_classes: u32,
    pub task: Task,
}

/// Allowed values for every searchable state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenomeSpace {
    pub attention_fns: Vec<AttentionFn>,
    pub heads: Vec<u32>,
    pub hidden_dims: Vec<u32>,
    pub aggregators: Vec<Aggregator>,
    pub activations: Vec<Activation>,
    /// Whether the depth-growing mutation is available.
    pub layer_add: bool,
}

impl Default for GenomeSpace {
    fn default() -> Self {
        Self {
            attention_fns: AttentionFn::ALL.to_vec(),
            heads: vec![1, 2, 4, 6, 8],
            hidden_dims: vec![4, 8, 16, 32, 64, 128, 256],
            aggregators: Aggregator::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
            layer_add: true,
        }
    }
}

impl GenomeSpace {
    pub fn check(&self) -> Result<(), GenomeError> {
        let empty = [
            ("attention_fns", self.attention_fns.is_empty()),
            ("heads", self.heads.is_empty()),
            ("hidden_dims", self.hidden_dims.is_empty()),
            ("aggregators", self.aggregators.is_empty()),
            ("activations", self.activations.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(GenomeError::Space(format!("{name} is empty")));
        }
        if self.heads.contains(&0) || self.hidden_dims.contains(&0) {
            return Err(GenomeError::Space("heads and hidden_dims must be positive".into()));
        }
        Ok(())
    }

    /// Samples one layer gene with every state drawn uniformly and the skip
    /// mask drawn uniformly from the valid range for position `k`.
    pub fn sample_layer<R: Rng + ?Sized>(&self, rng: &mut R, k: usize) -> LayerGene {
        let attention_fn = pick(rng, &self.attention_fns);
        let heads = pick(rng, &self.heads);
        let hidden_dim = pick(rng, &self.hidden_dims);
        let aggregator = pick(rng, &self.aggregators);
        let activation = pick(rng, &self.activations);
        let skip_mask = if k <= 1 {
            0
        } else {
            rng.random_range(0..mask_bound(k))
        };
        LayerGene {
            attention_fn,
            heads,
            hidden_dim,
            aggregator,
            activation,
            skip_mask,
        }
    }
}

pub(crate) fn pick<R: Rng + ?Sized, T: Copy>(rng: &mut R, values: &[T]) -> T {
    values[rng.random_range(0..values.len())]
}

/// Exclusive upper bound on the skip mask of layer `k`: `2^(k-1)`.
pub fn mask_bound(k: usize) -> u64 {
    assert!(k >= 1 && k <= 64, "layer index {k} outside 1..=64");
    1u64 << (k - 1)
}

/// Decodes `mask` into the ascending list of extra source layers feeding
/// layer `k`. The implicit `k-1 -> k` edge is not included.
pub fn skip_mask_decode(mask: u64, k: usize) -> Result<Vec<usize>, GenomeError> {
    if k == 0 || k > 64 || mask >= mask_bound(k) {
        return Err(GenomeError::MaskOutOfRange { mask, layer: k });
    }
    Ok((0..k.saturating_sub(1))
        .filter(|i| mask >> i & 1 == 1)
        .collect())
}

/// Inverse of [`skip_mask_decode`].
pub fn skip_mask_encode(connections: &[usize], k: usize) -> Result<u64, GenomeError> {
    let mut mask = 0u64;
    for &i in connections {
        if k < 2 || i > k - 2 {
            return Err(GenomeError::BadConnection {
                source_layer: i,
                layer: k,
            });
        }
        if mask >> i & 1 == 1 {
            return Err(GenomeError::DuplicateConnection(i));
        }
        mask |= 1 << i;
    }
    Ok(mask)
}

/// Draws a fresh two-layer genome, every state uniform over its set.
pub fn new_initial_genome<R: Rng + ?Sized>(
    rng: &mut R,
    space: &GenomeSpace,
    classes: u32,
    task: Task,
) -> Result<ArchitectureGenome, GenomeError> {
    random_genome(rng, space, 2, classes, task)
}

/// Draws a genome of the given depth with uniformly sampled states and masks.
pub fn random_genome<R: Rng + ?Sized>(
    rng: &mut R,
    space: &GenomeSpace,
    depth: usize,
    classes: u32,
    task: Task,
) -> Result<ArchitectureGenome, GenomeError> {
    space.check()?;
    if classes == 0 {
        return Err(GenomeError::Config("output_classes must be >= 1".into()));
    }
    if depth == 0 || depth > 64 {
        return Err(GenomeError::Config(format!("depth {depth} outside 1..=64")));
    }
    let layers = (1..=depth).map(|k| space.sample_layer(rng, k)).collect();
    Ok(ArchitectureGenome {
        layers,
        head_combine: HeadCombine::Average,
        output_classes: classes,
        task,
    })
}

/// A single rule broken by a genome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// 1-based layer index, or `None` for genome-level fields.
    pub layer: Option<usize>,
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(k) => write!(f, "layer {k} {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

impl ArchitectureGenome {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// 1-based layer accessor.
    pub fn layer(&self, k: usize) -> Result<&LayerGene, GenomeError> {
        if k == 0 || k > self.layers.len() {
            return Err(GenomeError::LayerIndex {
                index: k,
                depth: self.layers.len(),
            });
        }
        Ok(&self.layers[k - 1])
    }

    /// Whether layer `k`'s heads are averaged rather than concatenated.
    pub fn averages_heads(&self, k: usize) -> bool {
        k == self.layers.len() && self.head_combine == HeadCombine::Average
    }

    /// Width of the output of layer `j`; layer 0 is the input features.
    pub fn output_width(&self, j: usize, feature_dim: usize) -> usize {
        if j == 0 {
            return feature_dim;
        }
        let layer = &self.layers[j - 1];
        if self.averages_heads(j) {
            layer.hidden_dim as usize
        } else {
            (layer.heads * layer.hidden_dim) as usize
        }
    }

    /// Ascending list of all source layers feeding layer `k`, including the
    /// implicit predecessor.
    pub fn sources(&self, k: usize) -> Result<Vec<usize>, GenomeError> {
        let layer = self.layer(k)?;
        let mut sources = skip_mask_decode(layer.skip_mask, k)?;
        sources.push(k - 1);
        Ok(sources)
    }

    pub fn validate(&self, space: &GenomeSpace) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        if self.layers.is_empty() {
            violations.push(Violation {
                layer: None,
                field: "layers",
                message: "genome has no layers".into(),
            });
        }
        if self.layers.len() > 64 {
            violations.push(Violation {
                layer: None,
                field: "layers",
                message: "more than 64 layers".into(),
            });
        }
        if self.output_classes == 0 {
            violations.push(Violation {
                layer: None,
                field: "output_classes",
                message: "must be >= 1".into(),
            });
        }
        for (idx, layer) in self.layers.iter().enumerate().take(64) {
            let k = idx + 1;
            let mut outside = |field: &'static str, shown: String| {
                violations.push(Violation {
                    layer: Some(k),
                    field,
                    message: format!("value outside space: {shown}"),
                })
            };
            if !space.attention_fns.contains(&layer.attention_fn) {
                outside("attention_fn", layer.attention_fn.name().into());
            }
            if !space.heads.contains(&layer.heads) {
                outside("heads", layer.heads.to_string());
            }
            if !space.hidden_dims.contains(&layer.hidden_dim) {
                outside("hidden_dim", layer.hidden_dim.to_string());
            }
            if !space.aggregators.contains(&layer.aggregator) {
                outside("aggregator", layer.aggregator.name().into());
            }
            if !space.activations.contains(&layer.activation) {
                outside("activation", layer.activation.name().into());
            }
            if layer.skip_mask >= mask_bound(k) {
                violations.push(Violation {
                    layer: Some(k),
                    field: "skip_mask",
                    message: format!("mask {} >= 2^(k-1) = {}", layer.skip_mask, mask_bound(k)),
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn to_canonical(&self) -> String {
        canonical_serialize(self)
    }
}

/// Input width of layer `k`: the implicit predecessor's width plus the
/// widths of every layer selected by its skip mask.
pub fn layer_input_dim(
    genome: &ArchitectureGenome,
    k: usize,
    feature_dim: usize,
) -> Result<usize, GenomeError> {
    Ok(genome
        .sources(k)?
        .into_iter()
        .map(|j| genome.output_width(j, feature_dim))
        .sum())
}

#[derive(Serialize)]
struct GenomeFileRef<'a> {
    version: u32,
    task: Task,
    output_classes: u32,
    head_combine: HeadCombine,
    layers: &'a [LayerGene],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenomeFile {
    version: u32,
    task: Task,
    output_classes: u32,
    head_combine: HeadCombine,
    layers: Vec<LayerGene>,
}

/// Canonical single-line JSON. Field order is fixed, so equal genomes give
/// equal bytes.
pub fn canonical_serialize(genome: &ArchitectureGenome) -> String {
    serde_json::to_string(&GenomeFileRef {
        version: GENOME_FORMAT_VERSION,
        task: genome.task,
        output_classes: genome.output_classes,
        head_combine: genome.head_combine,
        layers: &genome.layers,
    })
    .expect("genome serialization is infallible")
}

pub fn canonical_parse(text: &str) -> Result<ArchitectureGenome, GenomeError> {
    let file: GenomeFile = serde_json::from_str(text).map_err(|e| GenomeError::Format {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != GENOME_FORMAT_VERSION {
        return Err(GenomeError::Version(file.version));
    }
    Ok(ArchitectureGenome {
        layers: file.layers,
        head_combine: file.head_combine,
        output_classes: file.output_classes,
        task: file.task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(heads: u32, hidden: u32, mask: u64) -> LayerGene {
        LayerGene {
            attention_fn: AttentionFn::Gcn,
            heads,
            hidden_dim: hidden,
            aggregator: Aggregator::Sum,
            activation: Activation::Relu,
            skip_mask: mask,
        }
    }

    fn three_layer(mask3: u64) -> ArchitectureGenome {
        ArchitectureGenome {
            layers: vec![layer(1, 8, 0), layer(1, 8, 0), layer(1, 8, mask3)],
            head_combine: HeadCombine::Concat,
            output_classes: 3,
            task: Task::SingleLabel,
        }
    }

    #[test]
    fn initial_genome_has_two_layers() {
        let space = GenomeSpace::default();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = new_initial_genome(&mut rng, &space, 7, Task::SingleLabel).unwrap();
            assert_eq!(g.depth(), 2);
            assert_eq!(g.layers[0].skip_mask, 0);
            assert!(g.layers[1].skip_mask <= 1);
            assert!(g.validate(&space).is_ok());
        }
    }

    #[test]
    fn initial_genome_is_seed_deterministic() {
        let space = GenomeSpace::default();
        let a = new_initial_genome(&mut ChaCha8Rng::seed_from_u64(9), &space, 3, Task::MultiLabel);
        let b = new_initial_genome(&mut ChaCha8Rng::seed_from_u64(9), &space, 3, Task::MultiLabel);
        assert_eq!(a, b);
    }

    #[test]
    fn initial_genome_rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = GenomeSpace {
            heads: vec![],
            ..GenomeSpace::default()
        };
        assert!(matches!(
            new_initial_genome(&mut rng, &space, 2, Task::SingleLabel),
            Err(GenomeError::Space(_))
        ));
        assert!(new_initial_genome(&mut rng, &GenomeSpace::default(), 0, Task::SingleLabel).is_err());
    }

    #[test]
    fn decode_examples() {
        assert_eq!(skip_mask_decode(0, 4).unwrap(), Vec::<usize>::new());
        assert_eq!(skip_mask_decode(1, 3).unwrap(), vec![0]);
        assert_eq!(skip_mask_decode(5, 4).unwrap(), vec![0, 2]);
        assert!(skip_mask_decode(1, 1).is_err());
        assert!(skip_mask_decode(8, 4).is_err());
        assert_eq!(skip_mask_decode(0, 1).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn encode_examples() {
        assert_eq!(skip_mask_encode(&[], 2).unwrap(), 0);
        assert_eq!(skip_mask_encode(&[0], 3).unwrap(), 1);
        assert_eq!(skip_mask_encode(&[0, 2], 4).unwrap(), 5);
        assert!(matches!(
            skip_mask_encode(&[3], 4),
            Err(GenomeError::BadConnection { .. })
        ));
        assert!(skip_mask_encode(&[0], 1).is_err());
        assert_eq!(
            skip_mask_encode(&[1, 1], 4),
            Err(GenomeError::DuplicateConnection(1))
        );
    }

    #[test]
    fn encode_decode_exhaustive_small() {
        for k in 1..=8 {
            for s in 0..mask_bound(k) {
                let conns = skip_mask_decode(s, k).unwrap();
                assert_eq!(skip_mask_encode(&conns, k).unwrap(), s);
            }
        }
    }

    #[test]
    fn input_dim_examples() {
        assert_eq!(layer_input_dim(&three_layer(0), 3, 4).unwrap(), 8);
        assert_eq!(layer_input_dim(&three_layer(1), 3, 4).unwrap(), 12);
        // bits 0 and 1 at k = 3: input (4) + layer 1 (8) + implicit layer 2 (8)
        assert_eq!(layer_input_dim(&three_layer(3), 3, 4).unwrap(), 20);
        assert!(matches!(
            layer_input_dim(&three_layer(4), 3, 4),
            Err(GenomeError::MaskOutOfRange { .. })
        ));
        assert_eq!(layer_input_dim(&three_layer(0), 1, 4).unwrap(), 4);
    }

    #[test]
    fn final_layer_average_uses_hidden_width() {
        let mut g = three_layer(0);
        g.layers[2].heads = 4;
        g.layers[1].heads = 2;
        g.head_combine = HeadCombine::Average;
        assert_eq!(g.output_width(3, 4), 8);
        assert_eq!(g.output_width(2, 4), 16);
        g.head_combine = HeadCombine::Concat;
        assert_eq!(g.output_width(3, 4), 32);
    }

    #[test]
    fn validate_reports_violations() {
        let space = GenomeSpace::default();
        let mut g = three_layer(0);
        g.layers[1].skip_mask = 2;
        let v = g.validate(&space).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "skip_mask");
        assert!(v[0].message.contains(">= 2^(k-1)"));

        let mut g = three_layer(0);
        g.layers[0].hidden_dim = 5;
        let v = g.validate(&space).unwrap_err();
        assert_eq!(v[0].field, "hidden_dim");
        assert!(v[0].message.contains("outside space"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = canonical_serialize(&three_layer(1));
        let truncated = &text[..text.len() / 2];
        match canonical_parse(truncated) {
            Err(GenomeError::Format { line, column, .. }) => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            other => panic!("expected format error, got {other:?}"),
        }
        let bumped = text.replace("\"version\":1", "\"version\":7");
        assert_eq!(canonical_parse(&bumped), Err(GenomeError::Version(7)));
    }

    #[test]
    fn canonical_field_order() {
        let text = canonical_serialize(&three_layer(1));
        assert!(text.starts_with(
            r#"{"version":1,"task":"single_label","output_classes":3,"head_combine":"concat","layers":[{"attention_fn":"gcn""#
        ));
    }

    fn arb_genome() -> impl Strategy<Value = ArchitectureGenome> {
        (1usize..9, any::<u64>()).prop_map(|(depth, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut g =
                random_genome(&mut rng, &GenomeSpace::default(), depth, 5, Task::SingleLabel)
                    .unwrap();
            if seed % 2 == 0 {
                g.head_combine = HeadCombine::Concat;
                g.task = Task::MultiLabel;
            }
            g
        })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(g in arb_genome()) {
            let text = canonical_serialize(&g);
            let back = canonical_parse(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(canonical_serialize(&back), text);
        }

        #[test]
        fn input_dim_monotone_in_mask(g in arb_genome(), bit in 0usize..8) {
            for k in 2..=g.depth() {
                if bit > k - 2 { continue; }
                let mut more = g.clone();
                more.layers[k - 1].skip_mask |= 1 << bit;
                let before = layer_input_dim(&g, k, 11).unwrap();
                let after = layer_input_dim(&more, k, 11).unwrap();
                prop_assert!(after >= before);
            }
        }
    }
}
