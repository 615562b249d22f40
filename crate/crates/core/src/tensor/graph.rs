//! Reverse-mode autodiff tape.
//!
//! A [`Graph`] records operation nodes in creation order, which is already a
//! topological order (an op's inputs must exist before the op). `backward`
//! walks the tape once in reverse, propagating a fresh gradient per call and
//! accumulating the result into per-node gradient stores, so repeated calls
//! accumulate until [`Graph::clear_grads`].

use super::kernels::{self, BnSaved, ConvDims, TConvDims};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Backward context handed to a [`FusedOp`].
pub struct FusedCtx<'a> {
    pub out_grad: &'a [f32],
    pub out_value: &'a [f32],
    /// `(value, shape)` per declared input, in declaration order.
    pub inputs: Vec<(&'a [f32], &'a [usize])>,
}

/// A fused operation with a hand-derived backward pass, used for composite
/// computations that would be wasteful to express as primitive nodes.
pub trait FusedOp: std::fmt::Debug {
    /// Gradient per input (`None` where no gradient flows). Each returned
    /// vector must match the corresponding input length.
    fn backward(&self, ctx: &FusedCtx<'_>) -> Vec<Option<Vec<f32>>>;
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Conv2d { dims: ConvDims },
    TConv2d { dims: TConvDims },
    MaxPool { n: usize, c: usize, h: usize, w: usize, arg: Vec<u32> },
    BnTrain { n: usize, c: usize, h: usize, w: usize, saved: BnSaved },
    BnEval { n: usize, c: usize, h: usize, w: usize, eps: f32, mean: Vec<f32>, var: Vec<f32> },
    Dense { n: usize, din: usize, dout: usize },
    Relu,
    Sigmoid,
    Dropout { mask: Vec<f32> },
    SoftmaxCe { n: usize, k: usize, labels: Vec<usize>, probs: Vec<f32> },
    Add,
    Sub,
    Mul,
    Scale { c: f32 },
    Sum,
    SliceBatch,
    GlobalAvgPool { n: usize, c: usize, h: usize, w: usize },
    ReplicateChannels { copies: usize },
    ChannelWeightedSum { weights: Vec<f32>, n: usize, c: usize, h: usize, w: usize },
    Custom(Box<dyn FusedOp>),
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    shape: Vec<usize>,
    value: Vec<f32>,
    needs_grad: bool,
}

/// Single-writer autodiff tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f32>>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Inserts a tensor as a leaf; it participates in gradients iff the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            needs_grad: t.requires_grad(),
        })
    }

    /// Inserts raw data as a non-differentiable constant.
    pub fn constant(&mut self, data: Vec<f32>, shape: &[usize]) -> NodeId {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        self.push(Node {
            op: Op::Constant,
            inputs: vec![],
            shape: shape.to_vec(),
            value: data,
            needs_grad: false,
        })
    }

    pub fn value(&self, id: NodeId) -> &[f32] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, id: NodeId) -> f32 {
        debug_assert_eq!(self.nodes[id.0].value.len(), 1);
        self.nodes[id.0].value[0]
    }

    pub fn to_tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(self.nodes[id.0].value.clone(), &self.nodes[id.0].shape)
            .expect("node value/shape are consistent by construction")
    }

    /// Accumulated gradient for a node, if any backward pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.grads[id.0].as_deref()
    }

    pub fn clear_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    /// Adds this node's accumulated gradient into the tensor's own store.
    pub fn accumulate_grad_into(&self, id: NodeId, t: &mut Tensor) {
        if let Some(g) = self.grad(id) {
            t.accumulate_grad(g);
        }
    }

    // ── forward ops ──────────────────────────────────────────────────

    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let dims = ConvDims::validate_conv(
            self.shape(x),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let value = kernels::conv2d_forward(
            self.value(x),
            self.value(kernel),
            self.value(bias),
            &dims,
        );
        let shape = vec![dims.n, dims.cout, dims.out_h(), dims.out_w()];
        Ok(self.push(Node {
            op: Op::Conv2d { dims },
            needs_grad: self.needs(&[x, kernel, bias]),
            inputs: vec![x, kernel, bias],
            shape,
            value,
        }))
    }

    pub fn transpose_conv2d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let dims = TConvDims::validate(
            self.shape(x),
            self.shape(kernel),
            self.shape(bias),
            stride,
            padding,
        )?;
        let value = kernels::transpose_conv2d_forward(
            self.value(x),
            self.value(kernel),
            self.value(bias),
            &dims,
        );
        let shape = vec![dims.n, dims.cout, dims.out_h(), dims.out_w()];
        Ok(self.push(Node {
            op: Op::TConv2d { dims },
            needs_grad: self.needs(&[x, kernel, bias]),
            inputs: vec![x, kernel, bias],
            shape,
            value,
        }))
    }

    pub fn max_pool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "max_pool2d: input must be rank 4, got {s:?}"
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (value, arg) = kernels::max_pool2d_forward(self.value(x), n, c, h, w, window, stride)?;
        let oh = (h - window) / stride + 1;
        let ow = (w - window) / stride + 1;
        Ok(self.push(Node {
            op: Op::MaxPool { n, c, h, w, arg },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: vec![n, c, oh, ow],
            value,
        }))
    }

    /// Training-mode batch norm. Returns the node and the batch statistics
    /// (for running-stat updates by the caller).
    pub fn batch_norm2d_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f32,
    ) -> Result<(NodeId, Vec<f32>, Vec<f32>)> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "batch_norm2d: input must be rank 4, got {s:?}"
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Shape(format!(
                "batch_norm2d: gamma/beta must have shape [{c}] matching channel axis 1"
            )));
        }
        let (value, saved) = kernels::batch_norm2d_train_forward(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            n,
            c,
            h,
            w,
            eps,
        )?;
        let (mean, var) = (saved.mean.clone(), saved.var.clone());
        let id = self.push(Node {
            op: Op::BnTrain { n, c, h, w, saved },
            needs_grad: self.needs(&[x, gamma, beta]),
            inputs: vec![x, gamma, beta],
            shape: s,
            value,
        });
        Ok((id, mean, var))
    }

    /// Eval-mode batch norm with frozen running statistics.
    pub fn batch_norm2d_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[f32],
        var: &[f32],
        eps: f32,
    ) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "batch_norm2d: input must be rank 4, got {s:?}"
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || mean.len() != c || var.len() != c
        {
            return Err(Error::Shape(format!(
                "batch_norm2d: gamma/beta/stats must have length {c} matching channel axis 1"
            )));
        }
        let value = kernels::batch_norm2d_eval_forward(
            self.value(x),
            self.value(gamma),
            self.value(beta),
            mean,
            var,
            n,
            c,
            h,
            w,
            eps,
        );
        Ok(self.push(Node {
            op: Op::BnEval { n, c, h, w, eps, mean: mean.to_vec(), var: var.to_vec() },
            needs_grad: self.needs(&[x, gamma, beta]),
            inputs: vec![x, gamma, beta],
            shape: s,
            value,
        }))
    }

    pub fn dense(&mut self, x: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        if xs.len() != 2 || ws.len() != 2 {
            return Err(Error::Shape(format!(
                "dense: expected x [N,Din] and weight [Dout,Din], got {xs:?} / {ws:?}"
            )));
        }
        let (n, din) = (xs[0], xs[1]);
        let (dout, wdin) = (ws[0], ws[1]);
        if wdin != din {
            return Err(Error::Shape(format!(
                "dense: inner axis mismatch — x axis 1 has {din}, weight axis 1 has {wdin}"
            )));
        }
        if self.shape(bias) != [dout] {
            return Err(Error::Shape(format!(
                "dense: bias must have shape [{dout}]"
            )));
        }
        let value =
            kernels::dense_forward(self.value(x), self.value(weight), self.value(bias), n, din, dout);
        Ok(self.push(Node {
            op: Op::Dense { n, din, dout },
            needs_grad: self.needs(&[x, weight, bias]),
            inputs: vec![x, weight, bias],
            shape: vec![n, dout],
            value,
        }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = kernels::relu_forward(self.value(x));
        self.push(Node {
            op: Op::Relu,
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: self.nodes[x.0].shape.clone(),
            value,
        })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = kernels::sigmoid_forward(self.value(x));
        self.push(Node {
            op: Op::Sigmoid,
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: self.nodes[x.0].shape.clone(),
            value,
        })
    }

    /// Inverted dropout. Eval mode is the identity (returns `x` unchanged);
    /// in training mode the mask is reproducible from `seed`.
    pub fn dropout(&mut self, x: NodeId, p: f32, training: bool, seed: u64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "dropout probability must be in [0,1), got {p}"
            )));
        }
        if !training {
            return Ok(x);
        }
        let mask = kernels::dropout_mask(self.value(x).len(), p, seed)?;
        let value: Vec<f32> = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        Ok(self.push(Node {
            op: Op::Dropout { mask },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: self.nodes[x.0].shape.clone(),
            value,
        }))
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 2 {
            return Err(Error::Shape(format!(
                "softmax_cross_entropy: logits must be rank 2 [N,K], got {s:?}"
            )));
        }
        let (n, k) = (s[0], s[1]);
        let (loss, probs) =
            kernels::softmax_cross_entropy_forward(self.value(logits), labels, n, k)?;
        Ok(self.push(Node {
            op: Op::SoftmaxCe { n, k, labels: labels.to_vec(), probs },
            needs_grad: self.needs(&[logits]),
            inputs: vec![logits],
            shape: vec![],
            value: vec![loss],
        }))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, op: Op, name: &str) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{name}: operand shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let value: Vec<f32> = match op {
            Op::Add => self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect(),
            Op::Sub => self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect(),
            Op::Mul => self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect(),
            _ => unreachable!(),
        };
        Ok(self.push(Node {
            needs_grad: self.needs(&[a, b]),
            inputs: vec![a, b],
            shape: self.nodes[a.0].shape.clone(),
            value,
            op,
        }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub, "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul, "mul")
    }

    pub fn scale(&mut self, x: NodeId, c: f32) -> NodeId {
        let value: Vec<f32> = self.value(x).iter().map(|&v| v * c).collect();
        self.push(Node {
            op: Op::Scale { c },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: self.nodes[x.0].shape.clone(),
            value,
        })
    }

    /// Full reduction to a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f32 = self.value(x).iter().sum();
        self.push(Node {
            op: Op::Sum,
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: vec![],
            value: vec![total],
        })
    }

    /// First `count` items along the batch axis (axis 0).
    pub fn slice_batch(&mut self, x: NodeId, count: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.is_empty() || count == 0 || count > s[0] {
            return Err(Error::Shape(format!(
                "slice_batch: cannot take {count} items from batch axis of {s:?}"
            )));
        }
        if count == s[0] {
            return Ok(x);
        }
        let per_item: usize = s[1..].iter().product();
        let mut shape = s.to_vec();
        shape[0] = count;
        let value = self.value(x)[..count * per_item].to_vec();
        Ok(self.push(Node {
            op: Op::SliceBatch,
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape,
            value,
        }))
    }

    /// `N×C×H×W → N×C` spatial mean.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 {
            return Err(Error::Shape(format!(
                "global_avg_pool: input must be rank 4, got {s:?}"
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let xv = self.value(x);
        let mut value = vec![0.0f32; n * c];
        for i in 0..n * c {
            value[i] = xv[i * plane..(i + 1) * plane].iter().sum::<f32>() / plane as f32;
        }
        Ok(self.push(Node {
            op: Op::GlobalAvgPool { n, c, h, w },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: vec![n, c],
            value,
        }))
    }

    /// Replicates a single-channel batch into `copies` identical channels.
    pub fn replicate_channels(&mut self, x: NodeId, copies: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 || s[1] != 1 {
            return Err(Error::Shape(format!(
                "replicate_channels: input must be [N,1,H,W], got {s:?}"
            )));
        }
        let (n, h, w) = (s[0], s[2], s[3]);
        let plane = h * w;
        let xv = self.value(x);
        let mut value = vec![0.0f32; n * copies * plane];
        for ni in 0..n {
            let src = &xv[ni * plane..(ni + 1) * plane];
            for k in 0..copies {
                value[(ni * copies + k) * plane..(ni * copies + k + 1) * plane]
                    .copy_from_slice(src);
            }
        }
        Ok(self.push(Node {
            op: Op::ReplicateChannels { copies },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: vec![n, copies, h, w],
            value,
        }))
    }

    /// Per-pixel weighted sum across channels, `N×C×H×W → N×1×H×W`.
    pub fn channel_weighted_sum(&mut self, x: NodeId, weights: &[f32]) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 4 || s[1] != weights.len() {
            return Err(Error::Shape(format!(
                "channel_weighted_sum: input {s:?} does not match {} channel weights (axis 1)",
                weights.len()
            )));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let plane = h * w;
        let xv = self.value(x);
        let mut value = vec![0.0f32; n * plane];
        // f64 accumulation so weights summing to 1 invert channel replication
        // exactly (relied on by the GLCM losses).
        for ni in 0..n {
            let base = ni * c * plane;
            let dst = &mut value[ni * plane..(ni + 1) * plane];
            for (i, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for (ci, &wc) in weights.iter().enumerate() {
                    acc += wc as f64 * xv[base + ci * plane + i] as f64;
                }
                *d = acc as f32;
            }
        }
        Ok(self.push(Node {
            op: Op::ChannelWeightedSum { weights: weights.to_vec(), n, c, h, w },
            needs_grad: self.needs(&[x]),
            inputs: vec![x],
            shape: vec![n, 1, h, w],
            value,
        }))
    }

    /// Appends a fused node whose forward value the caller computed itself.
    pub fn push_custom(
        &mut self,
        inputs: &[NodeId],
        value: Vec<f32>,
        shape: &[usize],
        op: Box<dyn FusedOp>,
    ) -> NodeId {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.push(Node {
            op: Op::Custom(op),
            needs_grad: self.needs(inputs),
            inputs: inputs.to_vec(),
            shape: shape.to_vec(),
            value,
        })
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse-mode sweep from a scalar loss node. Gradients of this pass are
    /// added into the per-node stores (so repeated calls accumulate).
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut pass: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        pass[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                pass[i] = None;
                continue;
            }
            let Some(g) = pass[i].take() else { continue };
            let input_grads = self.input_grads(i, &g);
            let inputs = self.nodes[i].inputs.clone();
            for (slot, delta) in inputs.iter().zip(input_grads) {
                let Some(delta) = delta else { continue };
                if !self.nodes[slot.0].needs_grad {
                    continue;
                }
                match &mut pass[slot.0] {
                    Some(existing) => {
                        for (e, d) in existing.iter_mut().zip(&delta) {
                            *e += d;
                        }
                    }
                    empty => *empty = Some(delta),
                }
            }
            match &mut self.grads[i] {
                Some(store) => {
                    for (s, d) in store.iter_mut().zip(&g) {
                        *s += d;
                    }
                }
                empty => *empty = Some(g),
            }
        }
        Ok(())
    }

    fn input_grads(&self, idx: usize, g: &[f32]) -> Vec<Option<Vec<f32>>> {
        let node = &self.nodes[idx];
        let val = |slot: usize| &self.nodes[node.inputs[slot].0].value;
        match &node.op {
            Op::Leaf | Op::Constant => vec![],
            Op::Conv2d { dims } => {
                let (dx, dk, db) = kernels::conv2d_backward(val(0), val(1), g, dims);
                vec![Some(dx), Some(dk), Some(db)]
            }
            Op::TConv2d { dims } => {
                let (dx, dk, db) = kernels::transpose_conv2d_backward(val(0), val(1), g, dims);
                vec![Some(dx), Some(dk), Some(db)]
            }
            Op::MaxPool { n, c, h, w, arg } => {
                vec![Some(kernels::max_pool2d_backward(g, arg, *n, *c, *h, *w))]
            }
            Op::BnTrain { n, c, h, w, saved } => {
                let (dx, dgamma, dbeta) =
                    kernels::batch_norm2d_train_backward(val(0), val(1), g, saved, *n, *c, *h, *w);
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            }
            Op::BnEval { n, c, h, w, eps, mean, var } => {
                let (dx, dgamma, dbeta) = kernels::batch_norm2d_eval_backward(
                    val(0),
                    val(1),
                    mean,
                    var,
                    g,
                    *n,
                    *c,
                    *h,
                    *w,
                    *eps,
                );
                vec![Some(dx), Some(dgamma), Some(dbeta)]
            }
            Op::Dense { n, din, dout } => {
                let (dx, dw, db) = kernels::dense_backward(val(0), val(1), g, *n, *din, *dout);
                vec![Some(dx), Some(dw), Some(db)]
            }
            Op::Relu => vec![Some(kernels::relu_backward(val(0), g))],
            Op::Sigmoid => vec![Some(kernels::sigmoid_backward(&node.value, g))],
            Op::Dropout { mask } => {
                vec![Some(g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect())]
            }
            Op::SoftmaxCe { n, k, labels, probs } => {
                vec![Some(kernels::softmax_cross_entropy_backward(
                    probs, labels, *n, *k, g[0],
                ))]
            }
            Op::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Op::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|v| -v).collect())],
            Op::Mul => {
                let da = g.iter().zip(val(1)).map(|(&gv, &b)| gv * b).collect();
                let db = g.iter().zip(val(0)).map(|(&gv, &a)| gv * a).collect();
                vec![Some(da), Some(db)]
            }
            Op::Scale { c } => vec![Some(g.iter().map(|&gv| gv * c).collect())],
            Op::Sum => vec![Some(vec![g[0]; val(0).len()])],
            Op::SliceBatch => {
                let mut dx = vec![0.0f32; val(0).len()];
                dx[..g.len()].copy_from_slice(g);
                vec![Some(dx)]
            }
            Op::GlobalAvgPool { n, c, h, w } => {
                let plane = h * w;
                let inv = 1.0 / plane as f32;
                let mut dx = vec![0.0f32; n * c * plane];
                for i in 0..n * c {
                    let gv = g[i] * inv;
                    for d in &mut dx[i * plane..(i + 1) * plane] {
                        *d = gv;
                    }
                }
                vec![Some(dx)]
            }
            Op::ReplicateChannels { copies } => {
                let plane = val(0).len() / node.shape[0];
                let n = node.shape[0];
                let mut dx = vec![0.0f32; n * plane];
                for ni in 0..n {
                    for k in 0..*copies {
                        let src = &g[(ni * copies + k) * plane..(ni * copies + k + 1) * plane];
                        let dst = &mut dx[ni * plane..(ni + 1) * plane];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                vec![Some(dx)]
            }
            Op::ChannelWeightedSum { weights, n, c, h, w } => {
                let plane = h * w;
                let mut dx = vec![0.0f32; n * c * plane];
                for ni in 0..*n {
                    let gn = &g[ni * plane..(ni + 1) * plane];
                    for (ci, &wc) in weights.iter().enumerate() {
                        let dst = &mut dx[(ni * c + ci) * plane..(ni * c + ci + 1) * plane];
                        for (d, &gv) in dst.iter_mut().zip(gn) {
                            *d = wc * gv;
                        }
                    }
                }
                vec![Some(dx)]
            }
            Op::Custom(op) => {
                let ctx = FusedCtx {
                    out_grad: g,
                    out_value: &node.value,
                    inputs: node
                        .inputs
                        .iter()
                        .map(|id| {
                            (
                                self.nodes[id.0].value.as_slice(),
                                self.nodes[id.0].shape.as_slice(),
                            )
                        })
                        .collect(),
                };
                op.backward(&ctx)
            }
        }
    }
}
