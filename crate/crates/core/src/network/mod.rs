//! Layer chains of the form `head ∘ g_L ∘ h_L ∘ f_L ∘ … ∘ g_1 ∘ h_1 ∘ f_1`.
//!
//! Each [`LayerNode`] is one preactivation `f` (dense or convolutional), an
//! optional batch-norm `h` and a piecewise-linear activation `g`, in that
//! fixed order, followed by optional pooling and dropout. The order is a
//! property of the struct: there is no way to put an activation before its
//! normalisation.

mod forward;
mod snapshot;

pub use forward::{ForwardCache, Gradients, NodeCache};
pub use snapshot::{load_snapshot, read_snapshot, save_snapshot, write_snapshot, SNAPSHOT_MAGIC};

use crate::error::{Error, Result};
use crate::layers::{
    ActivationSpec, BatchNormState, ConvParams, DropoutSpec, LinearParams, Pooling,
};
use crate::numerics::{normal_sample, SeededRng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Preact {
    Linear(LinearParams),
    Conv(ConvParams),
}

impl Preact {
    pub fn weight(&self) -> &Tensor {
        match self {
            Preact::Linear(p) => &p.weight,
            Preact::Conv(p) => &p.kernels,
        }
    }

    pub fn bias(&self) -> &Tensor {
        match self {
            Preact::Linear(p) => &p.bias,
            Preact::Conv(p) => &p.bias,
        }
    }

    fn parts_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        match self {
            Preact::Linear(p) => (&mut p.weight, &mut p.bias),
            Preact::Conv(p) => (&mut p.kernels, &mut p.bias),
        }
    }

    /// Number of preactivation features (rows of `W`, or output channels).
    pub fn features(&self) -> usize {
        self.weight().shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub preact: Preact,
    pub bn: Option<BatchNormState>,
    pub act: ActivationSpec,
    /// Per-unit slopes, present iff `act` is PReLU.
    pub prelu_alpha: Option<Tensor>,
    pub pool: Option<Pooling>,
    pub dropout: Option<DropoutSpec>,
}

impl LayerNode {
    /// A node with zeroed parameters; `units * act.lanes()` preactivation features.
    pub fn new(preact: Preact, with_bn: bool, act: ActivationSpec) -> Result<Self> {
        act.validate()?;
        let features = preact.features();
        if features % act.lanes() != 0 {
            return Err(Error::Spec(format!(
                "{features} preactivation features cannot form {}-lane units",
                act.lanes()
            )));
        }
        let units = features / act.lanes();
        Ok(LayerNode {
            preact,
            bn: with_bn.then(|| BatchNormState::new(features)),
            act,
            prelu_alpha: matches!(act, ActivationSpec::PRelu)
                .then(|| Tensor::filled(&[units], crate::layers::PRELU_INIT)),
            pool: None,
            dropout: None,
        })
    }

    pub fn with_pool(mut self, pool: Pooling) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn with_dropout(mut self, d: DropoutSpec) -> Self {
        self.dropout = Some(d);
        self
    }

    /// Piecewise-linear units per spatial position.
    pub fn units(&self) -> usize {
        self.preact.features() / self.act.lanes()
    }

    /// Output extents (without batch) for the given input extents.
    pub fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut dims = match &self.preact {
            Preact::Linear(p) => {
                let n: usize = input.iter().product();
                if n != p.in_dim() {
                    return Err(Error::Spec(format!(
                        "dense layer with {} inputs fed {:?}",
                        p.in_dim(),
                        input
                    )));
                }
                vec![self.units()]
            }
            Preact::Conv(p) => {
                if input.len() != 3 || input[0] != p.in_channels() {
                    return Err(Error::Spec(format!(
                        "conv layer with {} input channels fed {:?}",
                        p.in_channels(),
                        input
                    )));
                }
                let (oh, ow) = p.output_hw(input[1], input[2])?;
                vec![self.units(), oh, ow]
            }
        };
        if let Some(pool) = &self.pool {
            if dims.len() != 3 {
                return Err(Error::Spec("pooling needs a feature map".into()));
            }
            let (h, w) = pool.output_hw(dims[1], dims[2])?;
            dims = vec![dims[0], h, w];
        }
        Ok(dims)
    }
}

/// Classifier on top of the last node.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    /// Dense layer to class logits.
    Linear(LinearParams),
    /// The last node already emits one value per class.
    Flatten,
}

/// Role of a parameter tensor, used by the optimiser for weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
    Alpha,
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    input_dims: Vec<usize>,
    nodes: Vec<LayerNode>,
    head: Head,
    classes: usize,
    /// Bumped whenever parameters may have changed; stale caches are rejected.
    version: u64,
}

impl PartialEq for NetworkSpec {
    fn eq(&self, other: &Self) -> bool {
        self.input_dims == other.input_dims
            && self.nodes == other.nodes
            && self.head == other.head
            && self.classes == other.classes
    }
}

impl NetworkSpec {
    pub fn new(input_dims: Vec<usize>, nodes: Vec<LayerNode>, head: Head) -> Result<Self> {
        if input_dims.is_empty() || input_dims.contains(&0) {
            return Err(Error::Spec(format!("invalid input extents {input_dims:?}")));
        }
        let mut dims = input_dims.clone();
        for (i, node) in nodes.iter().enumerate() {
            dims = node
                .output_dims(&dims)
                .map_err(|e| Error::Spec(format!("node {i}: {e}")))?;
        }
        let flat: usize = dims.iter().product();
        let classes = match &head {
            Head::Linear(p) => {
                if p.in_dim() != flat {
                    return Err(Error::Spec(format!(
                        "head expects {} inputs but the body emits {dims:?}",
                        p.in_dim()
                    )));
                }
                p.out_dim()
            }
            Head::Flatten => flat,
        };
        if classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {classes}")));
        }
        Ok(NetworkSpec {
            input_dims,
            nodes,
            head,
            classes,
            version: 0,
        })
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    /// Mutable node access; invalidates outstanding caches.
    pub fn nodes_mut(&mut self) -> &mut [LayerNode] {
        self.version += 1;
        &mut self.nodes
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Head {
        self.version += 1;
        &mut self.head
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn depth(&self) -> usize {
        self.nodes.len()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.nodes.iter().any(|n| n.bn.is_some())
    }

    /// Trainable tensors in declaration order.
    pub fn params(&self) -> Vec<(ParamKind, &Tensor)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            out.push((ParamKind::Weight, node.preact.weight()));
            out.push((ParamKind::Bias, node.preact.bias()));
            if let Some(bn) = &node.bn {
                out.push((ParamKind::Gamma, &bn.gamma));
                out.push((ParamKind::Beta, &bn.beta));
            }
            if let Some(a) = &node.prelu_alpha {
                out.push((ParamKind::Alpha, a));
            }
        }
        if let Head::Linear(p) = &self.head {
            out.push((ParamKind::Weight, &p.weight));
            out.push((ParamKind::Bias, &p.bias));
        }
        out
    }

    /// Same order as [`NetworkSpec::params`].
    pub fn params_mut(&mut self) -> Vec<(ParamKind, &mut Tensor)> {
        self.version += 1;
        let mut out = Vec::new();
        for node in &mut self.nodes {
            let (w, b) = node.preact.parts_mut();
            out.push((ParamKind::Weight, w));
            out.push((ParamKind::Bias, b));
            if let Some(bn) = &mut node.bn {
                out.push((ParamKind::Gamma, &mut bn.gamma));
                out.push((ParamKind::Beta, &mut bn.beta));
            }
            if let Some(a) = &mut node.prelu_alpha {
                out.push((ParamKind::Alpha, a));
            }
        }
        if let Head::Linear(p) = &mut self.head {
            out.push((ParamKind::Weight, &mut p.weight));
            out.push((ParamKind::Bias, &mut p.bias));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Total piecewise-linear units per input, layer-major (spatial maps count every position).
    pub fn unit_count(&self) -> usize {
        let mut dims = self.input_dims.clone();
        let mut total = 0;
        for node in &self.nodes {
            let pre = match &node.preact {
                Preact::Linear(_) => 1,
                Preact::Conv(p) => {
                    let (h, w) = p.output_hw(dims[1], dims[2]).expect("validated at construction");
                    h * w
                }
            };
            total += node.units() * pre;
            dims = node.output_dims(&dims).expect("validated at construction");
        }
        total
    }
}

/// Multiplier for `N(0, 1)` weight draws, per weight tensor in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct InitScheme {
    /// Entry `i` scales the `i`-th weight tensor; the last entry repeats.
    pub scales: Vec<f64>,
    /// Biases are drawn as `bias_scale * N(0, 1)`; 0 gives zero biases.
    pub bias_scale: f64,
}

impl InitScheme {
    /// The same weight scale for every layer, zero biases.
    pub fn uniform(scale: f64) -> Self {
        InitScheme {
            scales: vec![scale],
            bias_scale: 0.0,
        }
    }

    /// 0.01 for the very first layer, 0.05 for everything after it.
    pub fn mim() -> Self {
        InitScheme {
            scales: vec![0.01, 0.05],
            bias_scale: 0.0,
        }
    }

    /// The toy-study scheme: weights and biases `0.01 * N(0, 1)` in every layer.
    pub fn toy() -> Self {
        InitScheme {
            scales: vec![0.01],
            bias_scale: 0.01,
        }
    }

    pub fn scale_for(&self, weight_index: usize) -> f64 {
        let i = weight_index.min(self.scales.len().saturating_sub(1));
        self.scales.get(i).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() || self.scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Spec("init scales must be nonempty and positive".into()));
        }
        if !(self.bias_scale >= 0.0) {
            return Err(Error::Spec("bias scale must be nonnegative".into()));
        }
        Ok(())
    }
}

impl NetworkSpec {
    /// Draws weights, resets biases, batch-norm state and PReLU slopes.
    pub fn init_params(&mut self, rng: &mut SeededRng, scheme: &InitScheme) -> Result<()> {
        scheme.validate()?;
        let mut weight_index = 0;
        for (kind, t) in self.params_mut() {
            match kind {
                ParamKind::Weight => {
                    let scale = scheme.scale_for(weight_index);
                    *t = normal_sample(rng, t.shape(), scale);
                    weight_index += 1;
                }
                ParamKind::Bias => *t = normal_sample(rng, t.shape(), scheme.bias_scale),
                ParamKind::Gamma => t.data_mut().fill(1.0),
                ParamKind::Beta => t.data_mut().fill(0.0),
                ParamKind::Alpha => t.data_mut().fill(crate::layers::PRELU_INIT),
            }
        }
        for node in &mut self.nodes {
            if let Some(bn) = &mut node.bn {
                bn.running_mean.data_mut().fill(0.0);
                bn.running_var.data_mut().fill(1.0);
            }
        }
        Ok(())
    }
}

/// Dense network for 2-D toy problems: `depth` hidden nodes of `width` units, a
/// linear head and softmax over 2 classes.
pub fn build_mlp(
    n0: usize,
    depth: usize,
    width: usize,
    act: ActivationSpec,
    with_bn: bool,
    dropout_p: Option<f64>,
) -> Result<NetworkSpec> {
    build_mlp_classes(n0, depth, width, act, with_bn, dropout_p, 2)
}

pub fn build_mlp_classes(
    n0: usize,
    depth: usize,
    width: usize,
    act: ActivationSpec,
    with_bn: bool,
    dropout_p: Option<f64>,
    classes: usize,
) -> Result<NetworkSpec> {
    if n0 == 0 || depth == 0 || width == 0 {
        return Err(Error::Spec(format!(
            "mlp extents must be positive (n0={n0}, L={depth}, width={width})"
        )));
    }
    act.validate()?;
    let dropout = dropout_p.map(DropoutSpec::new).transpose()?;
    let mut nodes = Vec::with_capacity(depth);
    let mut fan_in = n0;
    for _ in 0..depth {
        let pre = Preact::Linear(LinearParams::zeros(fan_in, width * act.lanes()));
        let mut node = LayerNode::new(pre, with_bn, act)?;
        node.dropout = dropout;
        nodes.push(node);
        fan_in = width;
    }
    NetworkSpec::new(vec![n0], nodes, Head::Linear(LinearParams::zeros(width, classes)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MimVariant {
    Cifar,
    Mnist,
}

/// One maxout-conv layer of the MIM table: kernel size, units, stride, pad.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MimLayer {
    pub kernel: usize,
    pub units: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Per-block layer rows of the MIM architecture, plus input geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MimLayout {
    pub input: [usize; 3],
    pub blocks: [[MimLayer; 3]; 3],
    pub classes: usize,
}

impl MimVariant {
    pub fn layout(self) -> MimLayout {
        let l = |kernel, units, pad| MimLayer {
            kernel,
            units,
            stride: 1,
            pad,
        };
        match self {
            MimVariant::Cifar => MimLayout {
                input: [3, 32, 32],
                blocks: [
                    [l(5, 192, 2), l(1, 160, 0), l(1, 96, 0)],
                    [l(5, 192, 2), l(1, 192, 0), l(1, 192, 0)],
                    [l(3, 192, 0), l(1, 160, 0), l(1, 10, 0)],
                ],
                classes: 10,
            },
            MimVariant::Mnist => MimLayout {
                input: [1, 28, 28],
                blocks: [
                    [l(5, 128, 2), l(1, 96, 0), l(1, 48, 0)],
                    [l(5, 128, 2), l(1, 96, 0), l(1, 48, 0)],
                    [l(3, 128, 0), l(1, 96, 0), l(1, 10, 0)],
                ],
                classes: 10,
            },
        }
    }
}

/// Knobs for [`build_mim_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct MimOptions {
    /// Multiplier on every hidden unit count; the class layer is never scaled.
    pub width_scale: f64,
    /// Dropout between blocks.
    pub dropout: f64,
    pub k: usize,
    /// Override for the class count (CIFAR-100 uses 100).
    pub classes: Option<usize>,
}

impl Default for MimOptions {
    fn default() -> Self {
        MimOptions {
            width_scale: 1.0,
            dropout: 0.5,
            k: 2,
            classes: None,
        }
    }
}

/// Maxout network in maxout network at full width.
pub fn build_mim(variant: MimVariant) -> Result<NetworkSpec> {
    build_mim_with(variant, &MimOptions::default())
}

/// Three blocks of maxout-conv followed by two 1x1 maxout-mlp layers, each
/// with batch norm. Blocks 1 and 2 end in 3x3/2 max pooling and dropout,
/// block 3 in global average pooling whose channels are the class logits.
pub fn build_mim_with(variant: MimVariant, opts: &MimOptions) -> Result<NetworkSpec> {
    if !(opts.width_scale > 0.0) {
        return Err(Error::Spec("width scale must be positive".into()));
    }
    let layout = variant.layout();
    let classes = opts.classes.unwrap_or(layout.classes);
    let act = ActivationSpec::maxout(opts.k)?;
    let dropout = DropoutSpec::new(opts.dropout)?;
    let mut nodes = Vec::new();
    let mut cin = layout.input[0];
    for (b, block) in layout.blocks.iter().enumerate() {
        for (i, layer) in block.iter().enumerate() {
            let last = b == 2 && i == 2;
            let units = if last {
                classes
            } else {
                ((layer.units as f64 * opts.width_scale).round() as usize).max(1)
            };
            let conv = ConvParams::zeros(cin, units * opts.k, layer.kernel, layer.kernel, layer.stride, layer.pad);
            let mut node = LayerNode::new(Preact::Conv(conv), true, act)?;
            if i == 2 {
                if b < 2 {
                    node = node.with_pool(Pooling::max(3, 2, 1)).with_dropout(dropout);
                } else {
                    node = node.with_pool(Pooling::GlobalAvg);
                }
            }
            nodes.push(node);
            cin = units;
        }
    }
    NetworkSpec::new(layout.input.to_vec(), nodes, Head::Flatten)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::PoolKind;

    #[test]
    fn toy_mlp_structure_and_parameter_count() {
        let net = build_mlp(2, 2, 4, ActivationSpec::Maxout { k: 2 }, true, None).unwrap();
        assert_eq!(net.depth(), 2);
        for node in net.nodes() {
            assert_eq!(node.preact.features(), 8);
            assert!(node.bn.is_some());
            assert!(node.act.is_maxout());
        }
        // 8x2 + 8, 8x4 + 8, head 2x4 + 2, two BN layers of 8 gammas + 8 betas
        assert_eq!(net.param_count(), 24 + 40 + 10 + 32);
    }

    #[test]
    fn minimal_chain() {
        let net = build_mlp(2, 1, 1, ActivationSpec::Relu, false, None).unwrap();
        assert_eq!(net.depth(), 1);
        assert_eq!(net.unit_count(), 1);
    }

    #[test]
    fn invalid_extents_are_spec_errors() {
        for (n0, l, w) in [(0, 1, 1), (2, 0, 1), (2, 1, 0)] {
            assert!(matches!(
                build_mlp(n0, l, w, ActivationSpec::Relu, false, None),
                Err(Error::Spec(_))
            ));
        }
        assert!(build_mlp(2, 2, 2, ActivationSpec::Maxout { k: 1 }, false, None).is_err());
    }

    fn conv_shape(node: &LayerNode) -> (usize, usize, usize, usize, usize) {
        match &node.preact {
            Preact::Conv(p) => {
                let (kh, _) = p.kernel_size();
                (kh, p.out_channels() / node.act.lanes(), p.stride, p.pad, node.act.lanes())
            }
            Preact::Linear(_) => panic!("MIM nodes are convolutional"),
        }
    }

    #[test]
    fn mim_cifar_layer_table() {
        let net = build_mim(MimVariant::Cifar).unwrap();
        let expect = [
            (5, 192, 1, 2),
            (1, 160, 1, 0),
            (1, 96, 1, 0),
            (5, 192, 1, 2),
            (1, 192, 1, 0),
            (1, 192, 1, 0),
            (3, 192, 1, 0),
            (1, 160, 1, 0),
            (1, 10, 1, 0),
        ];
        assert_eq!(net.depth(), 9);
        for (node, (k, units, stride, pad)) in net.nodes().iter().zip(expect) {
            assert_eq!(conv_shape(node), (k, units, stride, pad, 2));
            assert!(node.bn.is_some());
        }
        for i in [2, 5] {
            assert_eq!(
                net.nodes()[i].pool,
                Some(Pooling::Window { kind: PoolKind::Max, window: 3, stride: 2, pad: 1 })
            );
            assert_eq!(net.nodes()[i].dropout.map(|d| d.p()), Some(0.5));
        }
        assert_eq!(net.nodes()[8].pool, Some(Pooling::GlobalAvg));
        assert_eq!(net.classes(), 10);
        assert_eq!(net.head(), &Head::Flatten);
    }

    #[test]
    fn mim_mnist_layer_table() {
        let net = build_mim(MimVariant::Mnist).unwrap();
        let units: Vec<_> = net.nodes().iter().map(|n| conv_shape(n).1).collect();
        assert_eq!(units, vec![128, 96, 48, 128, 96, 48, 128, 96, 10]);
        let kernels: Vec<_> = net.nodes().iter().map(|n| conv_shape(n).0).collect();
        assert_eq!(kernels, vec![5, 1, 1, 5, 1, 1, 3, 1, 1]);
        assert!(net.nodes().iter().all(|n| n.bn.is_some()));
        assert_eq!(net.input_dims(), &[1, 28, 28]);
    }

    #[test]
    fn mim_cifar100_class_layer() {
        let opts = MimOptions { classes: Some(100), ..MimOptions::default() };
        let net = build_mim_with(MimVariant::Cifar, &opts).unwrap();
        assert_eq!(conv_shape(&net.nodes()[8]).1, 100);
        assert_eq!(net.classes(), 100);
    }

    #[test]
    fn quarter_width_mnist() {
        let opts = MimOptions { width_scale: 0.25, ..MimOptions::default() };
        let net = build_mim_with(MimVariant::Mnist, &opts).unwrap();
        let units: Vec<_> = net.nodes().iter().map(|n| conv_shape(n).1).collect();
        assert_eq!(units, vec![32, 24, 12, 32, 24, 12, 32, 24, 10]);
    }

    #[test]
    fn init_schemes() {
        let mut net = build_mlp(2, 3, 4, ActivationSpec::Relu, true, None).unwrap();
        net.init_params(&mut SeededRng::new(1), &InitScheme::toy()).unwrap();
        for (kind, t) in net.params() {
            match kind {
                ParamKind::Bias => {
                    assert!(t.data().iter().all(|&v| v != 0.0 && v.abs() < 0.05));
                }
                ParamKind::Weight => {
                    let rms = (t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64).sqrt();
                    assert!(rms > 0.002 && rms < 0.03, "rms {rms}");
                }
                ParamKind::Beta => assert!(t.data().iter().all(|&v| v == 0.0)),
                ParamKind::Gamma => assert!(t.data().iter().all(|&v| v == 1.0)),
                ParamKind::Alpha => unreachable!(),
            }
        }
        let s = InitScheme::mim();
        assert_eq!((s.scale_for(0), s.scale_for(1), s.scale_for(8)), (0.01, 0.05, 0.05));
    }

    #[test]
    fn mismatched_chain_is_rejected() {
        let a = LayerNode::new(Preact::Linear(LinearParams::zeros(2, 4)), false, ActivationSpec::Relu).unwrap();
        let b = LayerNode::new(Preact::Linear(LinearParams::zeros(3, 4)), false, ActivationSpec::Relu).unwrap();
        let r = NetworkSpec::new(vec![2], vec![a, b], Head::Linear(LinearParams::zeros(4, 2)));
        assert!(matches!(r, Err(Error::Spec(_))));
    }
}
