//! Builders for the four network components — texture module T, color
//! module C, backbone B, classifier F — and their end-to-end composition.
//!
//! Components are ordered layer lists owning their parameter tensors. A
//! forward pass records onto a fresh [`Graph`]; training forwards leaf the
//! parameters (so gradients flow to them) and update batch-norm running
//! statistics, eval forwards insert parameters as constants over frozen
//! weights.

use crate::error::{Error, Result};
use crate::tensor::{Graph, NodeId, Tensor};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;

/// Model variants: plain backbone, texture+color adaptation, and
/// texture+color trained with the texture-preservation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Base,
    Tc,
    TcGlcm,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Tc => "tc",
            Variant::TcGlcm => "tc_glcm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "tc" => Ok(Variant::Tc),
            "tc_glcm" | "tc-glcm" => Ok(Variant::TcGlcm),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected base, tc, tc-glcm)"
            ))),
        }
    }

    fn code(&self) -> f32 {
        match self {
            Variant::Base => 0.0,
            Variant::Tc => 1.0,
            Variant::TcGlcm => 2.0,
        }
    }

    pub(crate) fn from_code(code: f32) -> Result<Self> {
        match code as i32 {
            0 => Ok(Variant::Base),
            1 => Ok(Variant::Tc),
            2 => Ok(Variant::TcGlcm),
            other => Err(Error::Checkpoint(format!("unknown variant code {other}"))),
        }
    }
}

/// Backbone source: fresh small CNN or weights donated by a checkpoint.
#[derive(Debug, Clone)]
pub enum BackboneSpec {
    SmallCnn,
    FromCheckpoint(PathBuf),
}

/// Stack construction parameters.
#[derive(Debug, Clone)]
pub struct StackConfig {
    pub variant: Variant,
    pub input_h: usize,
    pub input_w: usize,
    pub num_classes: usize,
    /// Channel multiplier for the texture module.
    pub width: usize,
    pub dropout_p: f32,
    pub hidden: usize,
    pub backbone: BackboneSpec,
    pub seed: u64,
}

impl StackConfig {
    pub fn new(
        variant: Variant,
        input_h: usize,
        input_w: usize,
        num_classes: usize,
        seed: u64,
    ) -> Self {
        StackConfig {
            variant,
            input_h,
            input_w,
            num_classes,
            width: 1,
            dropout_p: 0.5,
            hidden: 128,
            backbone: BackboneSpec::SmallCnn,
            seed,
        }
    }
}

const BN_EPS: f32 = 1e-5;
const BN_MOMENTUM: f32 = 0.1;

/// Backbone feature width after global average pooling.
pub const BACKBONE_FEATURES: usize = 64;

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Conv2d { weight: Tensor, bias: Tensor, stride: usize, padding: usize },
    TConv2d { weight: Tensor, bias: Tensor, stride: usize, padding: usize },
    BatchNorm2d { gamma: Tensor, beta: Tensor, running_mean: Vec<f32>, running_var: Vec<f32> },
    Relu,
    Sigmoid,
    MaxPool2d { window: usize, stride: usize },
    GlobalAvgPool,
    Dense { weight: Tensor, bias: Tensor },
    Dropout { p: f32 },
}

/// One of the four stack components: a named, ordered layer list.
#[derive(Debug, Clone)]
pub struct Component {
    pub name: &'static str,
    pub(crate) layers: Vec<Layer>,
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let bound = (6.0 / fan_in as f32).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f32> = (0..numel).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(data, shape).unwrap().with_grad()
}

fn conv_layer(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Layer {
    Layer::Conv2d {
        weight: kaiming_uniform(rng, cin * k * k, &[cout, cin, k, k]),
        bias: Tensor::zeros(&[cout]).with_grad(),
        stride,
        padding,
    }
}

fn tconv_layer(
    rng: &mut ChaCha8Rng,
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Layer {
    Layer::TConv2d {
        weight: kaiming_uniform(rng, cin * k * k, &[cin, cout, k, k]),
        bias: Tensor::zeros(&[cout]).with_grad(),
        stride,
        padding,
    }
}

fn bn_layer(c: usize) -> Layer {
    Layer::BatchNorm2d {
        gamma: Tensor::filled(1.0, &[c]).with_grad(),
        beta: Tensor::zeros(&[c]).with_grad(),
        running_mean: vec![0.0; c],
        running_var: vec![1.0; c],
    }
}

fn dense_layer(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Layer {
    Layer::Dense {
        weight: kaiming_uniform(rng, din, &[dout, din]),
        bias: Tensor::zeros(&[dout]).with_grad(),
    }
}

/// Texture module: a small autoencoder. The encoder narrows through two
/// conv–bn–relu–pool blocks to a single-channel bottleneck map; the decoder
/// reconstructs input resolution with two stride-2 transpose convolutions.
pub fn build_texture_module(
    input_h: usize,
    input_w: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Component> {
    if input_h < 8 || input_w < 8 {
        return Err(Error::Shape(format!(
            "texture module needs input of at least 8x8 for two pooling stages, got {input_h}x{input_w}"
        )));
    }
    if !input_h.is_multiple_of(4) || !input_w.is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "texture module needs input divisible by 4 to reconstruct exactly, got {input_h}x{input_w}"
        )));
    }
    let ch = 8 * width.max(1);
    Ok(Component {
        name: "texture",
        layers: vec![
            conv_layer(rng, 1, ch, 3, 1, 1),
            bn_layer(ch),
            Layer::Relu,
            Layer::MaxPool2d { window: 2, stride: 2 },
            conv_layer(rng, ch, 1, 3, 1, 1),
            bn_layer(1),
            Layer::Relu,
            Layer::MaxPool2d { window: 2, stride: 2 },
            tconv_layer(rng, 1, ch, 4, 2, 1),
            Layer::Relu,
            tconv_layer(rng, ch, 1, 4, 2, 1),
        ],
    })
}

/// Color module: one conv–bn–relu block plus a 3-channel projection conv,
/// bounded into \[0,1] by a sigmoid.
pub fn build_color_module(rng: &mut ChaCha8Rng) -> Component {
    Component {
        name: "color",
        layers: vec![
            conv_layer(rng, 1, 8, 3, 1, 1),
            bn_layer(8),
            Layer::Relu,
            conv_layer(rng, 8, 3, 3, 1, 1),
            Layer::Sigmoid,
        ],
    }
}

/// Backbone: three conv–bn–relu–pool stages (3→16→32→64) and a global
/// average pool producing a 64-dim feature. A checkpoint spec builds the
/// same architecture and then adopts the donor's `backbone.*` weights.
pub fn build_backbone(spec: &BackboneSpec, rng: &mut ChaCha8Rng) -> Result<Component> {
    let mut comp = Component {
        name: "backbone",
        layers: vec![
            conv_layer(rng, 3, 16, 3, 1, 1),
            bn_layer(16),
            Layer::Relu,
            Layer::MaxPool2d { window: 2, stride: 2 },
            conv_layer(rng, 16, 32, 3, 1, 1),
            bn_layer(32),
            Layer::Relu,
            Layer::MaxPool2d { window: 2, stride: 2 },
            conv_layer(rng, 32, 64, 3, 1, 1),
            bn_layer(64),
            Layer::Relu,
            Layer::MaxPool2d { window: 2, stride: 2 },
            Layer::GlobalAvgPool,
        ],
    };
    if let BackboneSpec::FromCheckpoint(path) = spec {
        crate::train::checkpoint::adopt_component_weights(&mut comp, path)?;
    }
    Ok(comp)
}

/// Classifier head: dense → relu → dropout → dense, returning logits.
pub fn build_classifier(
    feature_dim: usize,
    num_classes: usize,
    dropout_p: f32,
    hidden: usize,
    rng: &mut ChaCha8Rng,
) -> Component {
    Component {
        name: "classifier",
        layers: vec![
            dense_layer(rng, feature_dim, hidden),
            Layer::Relu,
            Layer::Dropout { p: dropout_p },
            dense_layer(rng, hidden, num_classes),
        ],
    }
}

/// Outputs of one recorded forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    /// Leaf node of the input batch.
    pub input: NodeId,
    /// `N×num_classes` logits.
    pub logits: NodeId,
    /// `N×3×H×W` image handed to the backbone (exposed for the GLCM loss).
    pub colorized: NodeId,
    /// Leaf node per parameter, aligned with [`ModelStack::named_params`]
    /// order. Empty for eval passes.
    pub param_nodes: Vec<NodeId>,
}

/// The composed four-component model.
#[derive(Debug, Clone)]
pub struct ModelStack {
    pub variant: Variant,
    pub input_h: usize,
    pub input_w: usize,
    pub num_classes: usize,
    pub width: usize,
    pub dropout_p: f32,
    pub hidden: usize,
    texture: Option<Component>,
    color: Option<Component>,
    backbone: Component,
    classifier: Component,
}

impl ModelStack {
    pub fn build(cfg: &StackConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (texture, color) = match cfg.variant {
            Variant::Base => (None, None),
            Variant::Tc | Variant::TcGlcm => (
                Some(build_texture_module(cfg.input_h, cfg.input_w, cfg.width, &mut rng)?),
                Some(build_color_module(&mut rng)),
            ),
        };
        if cfg.input_h < 8 || cfg.input_w < 8 {
            return Err(Error::Shape(format!(
                "backbone needs input of at least 8x8, got {}x{}",
                cfg.input_h, cfg.input_w
            )));
        }
        let backbone = build_backbone(&cfg.backbone, &mut rng)?;
        let classifier = build_classifier(
            BACKBONE_FEATURES,
            cfg.num_classes,
            cfg.dropout_p,
            cfg.hidden,
            &mut rng,
        );
        Ok(ModelStack {
            variant: cfg.variant,
            input_h: cfg.input_h,
            input_w: cfg.input_w,
            num_classes: cfg.num_classes,
            width: cfg.width,
            dropout_p: cfg.dropout_p,
            hidden: cfg.hidden,
            texture,
            color,
            backbone,
            classifier,
        })
    }

    /// Construction metadata serialized into checkpoints.
    pub(crate) fn meta(&self) -> [f32; 7] {
        [
            self.variant.code(),
            self.input_h as f32,
            self.input_w as f32,
            self.num_classes as f32,
            self.width as f32,
            self.dropout_p,
            self.hidden as f32,
        ]
    }

    fn components(&self) -> Vec<&Component> {
        let mut v = Vec::with_capacity(4);
        if let Some(t) = &self.texture {
            v.push(t);
        }
        if let Some(c) = &self.color {
            v.push(c);
        }
        v.push(&self.backbone);
        v.push(&self.classifier);
        v
    }

    fn components_mut(&mut self) -> Vec<&mut Component> {
        let mut v = Vec::with_capacity(4);
        if let Some(t) = &mut self.texture {
            v.push(t);
        }
        if let Some(c) = &mut self.color {
            v.push(c);
        }
        v.push(&mut self.backbone);
        v.push(&mut self.classifier);
        v
    }

    pub(crate) fn component_mut(&mut self, name: &str) -> Option<&mut Component> {
        self.components_mut().into_iter().find(|c| c.name == name)
    }

    /// Named parameters in deterministic order (components T,C,B,F; layers in
    /// order; weight/gamma before bias/beta).
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for comp in self.components() {
            for (i, layer) in comp.layers.iter().enumerate() {
                match layer {
                    Layer::Conv2d { weight, bias, .. }
                    | Layer::TConv2d { weight, bias, .. }
                    | Layer::Dense { weight, bias } => {
                        out.push((format!("{}.{}.weight", comp.name, i), weight));
                        out.push((format!("{}.{}.bias", comp.name, i), bias));
                    }
                    Layer::BatchNorm2d { gamma, beta, .. } => {
                        out.push((format!("{}.{}.gamma", comp.name, i), gamma));
                        out.push((format!("{}.{}.beta", comp.name, i), beta));
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for comp in self.components_mut() {
            let name = comp.name;
            for (i, layer) in comp.layers.iter_mut().enumerate() {
                match layer {
                    Layer::Conv2d { weight, bias, .. }
                    | Layer::TConv2d { weight, bias, .. }
                    | Layer::Dense { weight, bias } => {
                        out.push((format!("{name}.{i}.weight"), weight));
                        out.push((format!("{name}.{i}.bias"), bias));
                    }
                    Layer::BatchNorm2d { gamma, beta, .. } => {
                        out.push((format!("{name}.{i}.gamma"), gamma));
                        out.push((format!("{name}.{i}.beta"), beta));
                    }
                    _ => {}
                }
            }
        }
        out
    }

    /// Batch-norm running statistics, named like parameters.
    pub fn named_running_stats(&self) -> Vec<(String, &[f32])> {
        let mut out = Vec::new();
        for comp in self.components() {
            for (i, layer) in comp.layers.iter().enumerate() {
                if let Layer::BatchNorm2d { running_mean, running_var, .. } = layer {
                    out.push((
                        format!("{}.{}.running_mean", comp.name, i),
                        running_mean.as_slice(),
                    ));
                    out.push((
                        format!("{}.{}.running_var", comp.name, i),
                        running_var.as_slice(),
                    ));
                }
            }
        }
        out
    }

    pub fn total_param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.input_h || s[3] != self.input_w {
            return Err(Error::Shape(format!(
                "model input must be [N,1,{},{}], got {s:?}",
                self.input_h, self.input_w
            )));
        }
        Ok(())
    }

    /// Training-mode forward: parameters recorded as differentiable leaves,
    /// batch-norm running statistics updated, dropout masks drawn from `rng`.
    pub fn forward_train(
        &mut self,
        g: &mut Graph,
        x: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardPass> {
        self.check_input(x)?;
        let input = g.leaf(x);
        let mut params = Vec::new();
        let colorized = match self.variant {
            Variant::Base => g
                .replicate_channels(input, 3)
                .map_err(|e| junction("input→backbone", e))?,
            _ => {
                let t = self.texture.as_mut().expect("tc variants carry a texture module");
                let mid = t
                    .forward_train(g, input, rng, &mut params)
                    .map_err(|e| junction("input→texture", e))?;
                let c = self.color.as_mut().expect("tc variants carry a color module");
                c.forward_train(g, mid, rng, &mut params)
                    .map_err(|e| junction("texture→color", e))?
            }
        };
        let feat = self
            .backbone
            .forward_train(g, colorized, rng, &mut params)
            .map_err(|e| junction("color→backbone", e))?;
        let logits = self
            .classifier
            .forward_train(g, feat, rng, &mut params)
            .map_err(|e| junction("backbone→classifier", e))?;
        Ok(ForwardPass { input, logits, colorized, param_nodes: params })
    }

    /// Eval-mode forward over frozen weights: parameters enter as constants,
    /// batch norm uses running statistics, dropout is the identity. Gradients
    /// still flow to the input leaf when `x.requires_grad()`.
    pub fn forward_eval(&self, g: &mut Graph, x: &Tensor) -> Result<ForwardPass> {
        self.check_input(x)?;
        let input = g.leaf(x);
        let (logits, colorized) = self.forward_eval_node(g, input)?;
        Ok(ForwardPass { input, logits, colorized, param_nodes: vec![] })
    }

    /// Eval-mode forward from an existing graph node (used by the attacks,
    /// which differentiate w.r.t. the input). Returns `(logits, colorized)`.
    pub fn forward_eval_node(&self, g: &mut Graph, input: NodeId) -> Result<(NodeId, NodeId)> {
        let colorized = match self.variant {
            Variant::Base => g
                .replicate_channels(input, 3)
                .map_err(|e| junction("input→backbone", e))?,
            _ => {
                let t = self.texture.as_ref().expect("tc variants carry a texture module");
                let mid = t.forward_eval(g, input).map_err(|e| junction("input→texture", e))?;
                let c = self.color.as_ref().expect("tc variants carry a color module");
                c.forward_eval(g, mid).map_err(|e| junction("texture→color", e))?
            }
        };
        let feat = self
            .backbone
            .forward_eval(g, colorized)
            .map_err(|e| junction("color→backbone", e))?;
        let logits = self
            .classifier
            .forward_eval(g, feat)
            .map_err(|e| junction("backbone→classifier", e))?;
        Ok((logits, colorized))
    }

    /// Pulls this pass's parameter gradients from the graph into each
    /// parameter tensor's own grad store (adding to whatever is there).
    pub fn accumulate_grads(&mut self, g: &Graph, pass: &ForwardPass) {
        let mut params = self.named_params_mut();
        debug_assert_eq!(params.len(), pass.param_nodes.len());
        for ((_, p), node) in params.iter_mut().zip(&pass.param_nodes) {
            g.accumulate_grad_into(*node, p);
        }
    }
}

fn junction(name: &str, e: Error) -> Error {
    Error::Shape(format!("at junction {name}: {e}"))
}

impl Component {
    pub(crate) fn forward_train(
        &mut self,
        g: &mut Graph,
        mut x: NodeId,
        rng: &mut ChaCha8Rng,
        params: &mut Vec<NodeId>,
    ) -> Result<NodeId> {
        for layer in &mut self.layers {
            x = match layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    let w = g.leaf(weight);
                    let b = g.leaf(bias);
                    params.extend([w, b]);
                    g.conv2d(x, w, b, *stride, *padding)?
                }
                Layer::TConv2d { weight, bias, stride, padding } => {
                    let w = g.leaf(weight);
                    let b = g.leaf(bias);
                    params.extend([w, b]);
                    g.transpose_conv2d(x, w, b, *stride, *padding)?
                }
                Layer::BatchNorm2d { gamma, beta, running_mean, running_var } => {
                    let ga = g.leaf(gamma);
                    let be = g.leaf(beta);
                    params.extend([ga, be]);
                    let (y, mean, var) = g.batch_norm2d_train(x, ga, be, BN_EPS)?;
                    for (r, m) in running_mean.iter_mut().zip(&mean) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                    }
                    for (r, v) in running_var.iter_mut().zip(&var) {
                        *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
                    }
                    y
                }
                Layer::Relu => g.relu(x),
                Layer::Sigmoid => g.sigmoid(x),
                Layer::MaxPool2d { window, stride } => g.max_pool2d(x, *window, *stride)?,
                Layer::GlobalAvgPool => g.global_avg_pool(x)?,
                Layer::Dense { weight, bias } => {
                    let w = g.leaf(weight);
                    let b = g.leaf(bias);
                    params.extend([w, b]);
                    g.dense(x, w, b)?
                }
                Layer::Dropout { p } => g.dropout(x, *p, true, rng.next_u64())?,
            };
        }
        Ok(x)
    }

    pub(crate) fn forward_eval(&self, g: &mut Graph, mut x: NodeId) -> Result<NodeId> {
        for layer in &self.layers {
            x = match layer {
                Layer::Conv2d { weight, bias, stride, padding } => {
                    let w = g.constant(weight.data().to_vec(), weight.shape());
                    let b = g.constant(bias.data().to_vec(), bias.shape());
                    g.conv2d(x, w, b, *stride, *padding)?
                }
                Layer::TConv2d { weight, bias, stride, padding } => {
                    let w = g.constant(weight.data().to_vec(), weight.shape());
                    let b = g.constant(bias.data().to_vec(), bias.shape());
                    g.transpose_conv2d(x, w, b, *stride, *padding)?
                }
                Layer::BatchNorm2d { gamma, beta, running_mean, running_var } => {
                    let ga = g.constant(gamma.data().to_vec(), gamma.shape());
                    let be = g.constant(beta.data().to_vec(), beta.shape());
                    g.batch_norm2d_eval(x, ga, be, running_mean, running_var, BN_EPS)?
                }
                Layer::Relu => g.relu(x),
                Layer::Sigmoid => g.sigmoid(x),
                Layer::MaxPool2d { window, stride } => g.max_pool2d(x, *window, *stride)?,
                Layer::GlobalAvgPool => g.global_avg_pool(x)?,
                Layer::Dense { weight, bias } => {
                    let w = g.constant(weight.data().to_vec(), weight.shape());
                    let b = g.constant(bias.data().to_vec(), bias.shape());
                    g.dense(x, w, b)?
                }
                Layer::Dropout { .. } => x,
            };
        }
        Ok(x)
    }

    /// Overwrites parameters and running stats from `(name → (dims, values))`
    /// records keyed by this component's naming scheme. Every record under
    /// this component's prefix must be consumed.
    pub(crate) fn load_records(
        &mut self,
        records: &std::collections::BTreeMap<String, (Vec<usize>, Vec<f32>)>,
    ) -> Result<()> {
        let mut consumed = 0usize;
        let name = self.name;
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let fill = |suffix: &str, t: &mut Tensor| -> Result<()> {
                let key = format!("{name}.{i}.{suffix}");
                let (dims, values) = records
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter {key}")))?;
                if dims != t.shape() {
                    return Err(Error::Checkpoint(format!(
                        "parameter {key}: checkpoint shape {dims:?} does not match model shape {:?}",
                        t.shape()
                    )));
                }
                t.data_mut().copy_from_slice(values);
                Ok(())
            };
            match layer {
                Layer::Conv2d { weight, bias, .. }
                | Layer::TConv2d { weight, bias, .. }
                | Layer::Dense { weight, bias } => {
                    fill("weight", weight)?;
                    fill("bias", bias)?;
                    consumed += 2;
                }
                Layer::BatchNorm2d { gamma, beta, running_mean, running_var } => {
                    fill("gamma", gamma)?;
                    fill("beta", beta)?;
                    consumed += 2;
                    for (suffix, store) in
                        [("running_mean", running_mean), ("running_var", running_var)]
                    {
                        let key = format!("{name}.{i}.{suffix}");
                        let (dims, values) = records
                            .get(&key)
                            .ok_or_else(|| Error::Checkpoint(format!("missing state {key}")))?;
                        if dims.as_slice() != [store.len()] {
                            return Err(Error::Checkpoint(format!(
                                "state {key}: checkpoint shape {dims:?} does not match [{}]",
                                store.len()
                            )));
                        }
                        store.copy_from_slice(values);
                        consumed += 1;
                    }
                }
                _ => {}
            }
        }
        let prefix = format!("{name}.");
        let present = records.keys().filter(|k| k.starts_with(&prefix)).count();
        if consumed != present {
            return Err(Error::Checkpoint(format!(
                "component {name}: checkpoint holds {present} records but the architecture consumes {consumed}"
            )));
        }
        Ok(())
    }
}
