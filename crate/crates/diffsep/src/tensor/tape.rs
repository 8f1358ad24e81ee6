//! Eager tape autodiff.
//!
//! A [`Graph`] executes each kernel as it is recorded and keeps every
//! intermediate value, so [`Graph::backward`] can replay the tape in reverse.
//! Each `Op` arm of the backward match implements the hand-derived adjoint of
//! the corresponding forward kernel. Reductions and normalization statistics
//! accumulate in f64 regardless of the element type.

use rayon::prelude::*;

use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    ConvT1d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    GroupNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
    },
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Silu {
        x: NodeId,
    },
    Gelu {
        x: NodeId,
    },
    Relu {
        x: NodeId,
    },
    PRelu {
        x: NodeId,
        alpha: NodeId,
    },
    Film {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        factor: f64,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    AvgPool {
        x: NodeId,
        factor: usize,
    },
    AttnScores {
        q: NodeId,
        k: NodeId,
        heads: usize,
        scale: f64,
    },
    SoftmaxLast {
        x: NodeId,
    },
    AttnApply {
        scores: NodeId,
        v: NodeId,
        heads: usize,
    },
    Rotary {
        x: NodeId,
        base: f64,
    },
    MseLoss {
        pred: NodeId,
        target: NodeId,
    },
}

struct Node<T> {
    op: Op,
    value: Tensor<T>,
}

/// Gradients of one backward pass, indexed by node.
pub struct Gradients<T> {
    by_node: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn node(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.by_node[id.0].as_ref()
    }
}

const EPS_NORM: f64 = 1e-5;

/// Eagerly evaluated computation tape over one [`ParamStore`].
pub struct Graph<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, op: Op, value: Tensor<T>) -> NodeId {
        debug_assert!(
            value.is_all_finite(),
            "non-finite values after {:?}",
            op_name(&op)
        );
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a constant or input tensor.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// Lease a parameter into the graph.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.get(id).clone();
        self.push(Op::Param(id), value)
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let value = conv1d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        Ok(self.push(Op::Conv1d { x, w, b, stride, pad }, value))
    }

    pub fn conv_transpose1d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let value = conv_transpose1d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        Ok(self.push(Op::ConvT1d { x, w, b, stride, pad }, value))
    }

    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
    ) -> Result<NodeId> {
        let value = group_norm_forward(self.value(x), self.value(gamma), self.value(beta), groups)?;
        Ok(self.push(Op::GroupNorm { x, gamma, beta, groups }, value))
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let value = layer_norm_forward(self.value(x), self.value(gamma), self.value(beta))?;
        Ok(self.push(Op::LayerNorm { x, gamma, beta }, value))
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let value = map_unary(self.value(x), |v| {
            let s = sigmoid(v);
            v * s
        });
        self.push(Op::Silu { x }, value)
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = map_unary(self.value(x), gelu_tanh);
        self.push(Op::Gelu { x }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = map_unary(self.value(x), |v| v.max(0.0));
        self.push(Op::Relu { x }, value)
    }

    /// Per-channel parametric ReLU; `alpha` has shape `(1, C, 1)`.
    pub fn prelu(&mut self, x: NodeId, alpha: NodeId) -> Result<NodeId> {
        let xs = self.value(x);
        let al = self.value(alpha);
        if al.shape() != (1, xs.channels(), 1) {
            return Err(Error::invalid(format!(
                "prelu alpha shape {:?} does not match {} channels",
                al.shape(),
                xs.channels()
            )));
        }
        let mut out = xs.clone();
        for bidx in 0..xs.batch() {
            for c in 0..xs.channels() {
                let a = al.at(0, c, 0);
                for v in out.row_mut(bidx, c) {
                    if *v < T::zero() {
                        *v = a * *v;
                    }
                }
            }
        }
        Ok(self.push(Op::PRelu { x, alpha }, out))
    }

    /// Feature-wise affine modulation: `y[b,c,t] = scale[b,c] * x[b,c,t] + shift[b,c]`.
    pub fn film(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let xs = self.value(x);
        let sc = self.value(scale);
        let sh = self.value(shift);
        let want = (xs.batch(), xs.channels(), 1);
        if sc.shape() != want || sh.shape() != want {
            return Err(Error::invalid(format!(
                "film scale/shift shapes {:?}/{:?} do not match {:?}",
                sc.shape(),
                sh.shape(),
                want
            )));
        }
        let mut out = xs.clone();
        for b in 0..xs.batch() {
            for c in 0..xs.channels() {
                let s = sc.at(b, c, 0);
                let h = sh.at(b, c, 0);
                for v in out.row_mut(b, c) {
                    *v = s * *v + h;
                }
            }
        }
        Ok(self.push(Op::Film { x, scale, shift }, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::invalid(format!(
                "add shape mismatch {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut out = ta.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(tb.data()) {
            *o = *o + v;
        }
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let f = T::from_f64(factor);
        let value = map_unary_t(self.value(x), |v| v * f);
        self.push(Op::Scale { x, factor }, value)
    }

    /// Concatenate along the channel axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.batch() != tb.batch() || ta.len() != tb.len() {
            return Err(Error::invalid(format!(
                "concat needs matching batch/length: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (batch, ca, len) = ta.shape();
        let cb = tb.channels();
        let mut out = Tensor::zeros(batch, ca + cb, len);
        for bi in 0..batch {
            for c in 0..ca {
                out.row_mut(bi, c).copy_from_slice(ta.row(bi, c));
            }
            for c in 0..cb {
                out.row_mut(bi, ca + c).copy_from_slice(tb.row(bi, c));
            }
        }
        Ok(self.push(Op::Concat { a, b }, out))
    }

    /// Average pooling by an integer factor; length must divide evenly.
    pub fn avg_pool(&mut self, x: NodeId, factor: usize) -> Result<NodeId> {
        let xs = self.value(x);
        if factor == 0 || !xs.len().is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "pool factor {factor} does not divide length {}",
                xs.len()
            )));
        }
        if factor == 1 {
            let v = xs.clone();
            return Ok(self.push(Op::AvgPool { x, factor }, v));
        }
        let (batch, channels, len) = xs.shape();
        let out_len = len / factor;
        let mut out = Tensor::zeros(batch, channels, out_len);
        for b in 0..batch {
            for c in 0..channels {
                let src = xs.row(b, c);
                let dst = out.row_mut(b, c);
                for (j, d) in dst.iter_mut().enumerate() {
                    let mut acc = 0.0f64;
                    for &v in &src[j * factor..(j + 1) * factor] {
                        acc += v.as_f64();
                    }
                    *d = T::from_f64(acc / factor as f64);
                }
            }
        }
        Ok(self.push(Op::AvgPool { x, factor }, out))
    }

    /// Scaled dot-product attention scores `(B*H, L, L)` from `q`, `k` of
    /// shape `(B, C, L)` with `C = heads * head_dim`.
    pub fn attn_scores(&mut self, q: NodeId, k: NodeId, heads: usize) -> Result<NodeId> {
        let (tq, tk) = (self.value(q), self.value(k));
        if tq.shape() != tk.shape() {
            return Err(Error::invalid("attention q/k shape mismatch".to_string()));
        }
        if heads == 0 || tq.channels() % heads != 0 {
            return Err(Error::invalid(format!(
                "heads {heads} does not divide {} channels",
                tq.channels()
            )));
        }
        let head_dim = tq.channels() / heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let value = attn_scores_forward(tq, tk, heads, scale);
        Ok(self.push(Op::AttnScores { q, k, heads, scale }, value))
    }

    /// Row softmax over the time (last) axis.
    pub fn softmax_last(&mut self, x: NodeId) -> NodeId {
        let xs = self.value(x);
        let mut out = xs.clone();
        let len = xs.len();
        out.data_mut().par_chunks_mut(len).for_each(|row| {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut sum = 0.0f64;
            for v in row.iter_mut() {
                let e = (*v - max).as_f64().exp();
                sum += e;
                *v = T::from_f64(e);
            }
            let inv = T::from_f64(1.0 / sum);
            for v in row.iter_mut() {
                *v = *v * inv;
            }
        });
        self.push(Op::SoftmaxLast { x }, out)
    }

    /// Apply attention weights `(B*H, L, L)` to values `(B, C, L)`.
    pub fn attn_apply(&mut self, scores: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let (ts, tv) = (self.value(scores), self.value(v));
        let (bh, lq, lk) = ts.shape();
        if bh != tv.batch() * heads || lq != tv.len() || lk != tv.len() {
            return Err(Error::invalid(format!(
                "attention apply shapes {:?} vs {:?} with {heads} heads",
                ts.shape(),
                tv.shape()
            )));
        }
        let value = attn_apply_forward(ts, tv, heads);
        Ok(self.push(Op::AttnApply { scores, v, heads }, value))
    }

    /// Rotary position embedding over channel pairs.
    pub fn rotary(&mut self, x: NodeId, base: f64) -> Result<NodeId> {
        let xs = self.value(x);
        if !xs.channels().is_multiple_of(2) {
            return Err(Error::invalid("rotary needs an even channel count".to_string()));
        }
        let value = rotary_forward(xs, base, false);
        Ok(self.push(Op::Rotary { x, base }, value))
    }

    /// Mean squared error over all elements; output shape `(1, 1, 1)`.
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(Error::invalid(format!(
                "mse shape mismatch {:?} vs {:?}",
                tp.shape(),
                tt.shape()
            )));
        }
        let mut acc = 0.0f64;
        for (&p, &t) in tp.data().iter().zip(tt.data()) {
            let d = p.as_f64() - t.as_f64();
            acc += d * d;
        }
        let value = Tensor::from_vec(1, 1, 1, vec![T::from_f64(acc / tp.numel() as f64)])?;
        Ok(self.push(Op::MseLoss { pred, target }, value))
    }

    /// Reverse pass from a scalar loss node. Returns per-node gradients;
    /// parameter gradients are collected with [`Gradients::node`] on the
    /// nodes created by [`Graph::param`] or via [`Graph::param_grads`].
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::invalid("backward requires a scalar loss".to_string()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(1, 1, 1, vec![T::one()])?);

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            debug_assert!(
                gout.is_all_finite(),
                "non-finite gradient into {:?}",
                op_name(&self.nodes[i].op)
            );
            self.backward_op(i, &gout, &mut grads)?;
            grads[i] = Some(gout);
        }
        Ok(Gradients { by_node: grads })
    }

    /// Dense per-parameter gradients (zeros where a parameter was unused or
    /// off the loss path).
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = self
            .params
            .iter()
            .map(|(_, _, v)| {
                let (b, c, l) = v.shape();
                Tensor::zeros(b, c, l)
            })
            .collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(pid) = node.op {
                if let Some(g) = grads.by_node[i].as_ref() {
                    let dst = &mut out[pid.0];
                    for (d, &s) in dst.data_mut().iter_mut().zip(g.data()) {
                        *d = *d + s;
                    }
                }
            }
        }
        out
    }

    fn backward_op(
        &self,
        node_idx: usize,
        gout: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let node = &self.nodes[node_idx];
        match node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv1d { x, w, b, stride, pad } => {
                let (dx, dw, db) =
                    conv1d_backward(self.value(x), self.value(w), gout, stride, pad);
                accumulate(grads, x, dx);
                accumulate(grads, w, dw);
                if let Some(b) = b {
                    accumulate(grads, b, db);
                }
            }
            Op::ConvT1d { x, w, b, stride, pad } => {
                let (dx, dw, db) =
                    conv_transpose1d_backward(self.value(x), self.value(w), gout, stride, pad);
                accumulate(grads, x, dx);
                accumulate(grads, w, dw);
                if let Some(b) = b {
                    accumulate(grads, b, db);
                }
            }
            Op::GroupNorm { x, gamma, beta, groups } => {
                let (dx, dg, db) =
                    group_norm_backward(self.value(x), self.value(gamma), gout, groups);
                accumulate(grads, x, dx);
                accumulate(grads, gamma, dg);
                accumulate(grads, beta, db);
            }
            Op::LayerNorm { x, gamma, beta } => {
                let (dx, dg, db) = layer_norm_backward(self.value(x), self.value(gamma), gout);
                accumulate(grads, x, dx);
                accumulate(grads, gamma, dg);
                accumulate(grads, beta, db);
            }
            Op::Silu { x } => {
                // d/dx [x * s(x)] = s(x) * (1 + x * (1 - s(x)))
                let dx = map_binary(self.value(x), gout, |v, g| {
                    let s = sigmoid(v);
                    g * s * (1.0 + v * (1.0 - s))
                });
                accumulate(grads, x, dx);
            }
            Op::Gelu { x } => {
                let dx = map_binary(self.value(x), gout, |v, g| g * gelu_tanh_deriv(v));
                accumulate(grads, x, dx);
            }
            Op::Relu { x } => {
                let dx = map_binary(self.value(x), gout, |v, g| if v > 0.0 { g } else { 0.0 });
                accumulate(grads, x, dx);
            }
            Op::PRelu { x, alpha } => {
                let xs = self.value(x);
                let al = self.value(alpha);
                let mut dx = Tensor::zeros(xs.batch(), xs.channels(), xs.len());
                let mut da = Tensor::zeros(1, xs.channels(), 1);
                for b in 0..xs.batch() {
                    for c in 0..xs.channels() {
                        let a = al.at(0, c, 0).as_f64();
                        let mut da_acc = 0.0f64;
                        let src = xs.row(b, c);
                        let gr = gout.row(b, c);
                        let dst = dx.row_mut(b, c);
                        for ((&v, &g), d) in src.iter().zip(gr).zip(dst.iter_mut()) {
                            if v < T::zero() {
                                *d = T::from_f64(g.as_f64() * a);
                                da_acc += g.as_f64() * v.as_f64();
                            } else {
                                *d = g;
                            }
                        }
                        let cur = da.at(0, c, 0);
                        da.set(0, c, 0, cur + T::from_f64(da_acc));
                    }
                }
                accumulate(grads, x, dx);
                accumulate(grads, alpha, da);
            }
            Op::Film { x, scale, shift } => {
                let xs = self.value(x);
                let sc = self.value(scale);
                let mut dx = Tensor::zeros(xs.batch(), xs.channels(), xs.len());
                let mut ds = Tensor::zeros(xs.batch(), xs.channels(), 1);
                let mut dh = Tensor::zeros(xs.batch(), xs.channels(), 1);
                for b in 0..xs.batch() {
                    for c in 0..xs.channels() {
                        let s = sc.at(b, c, 0);
                        let mut ds_acc = 0.0f64;
                        let mut dh_acc = 0.0f64;
                        let src = xs.row(b, c);
                        let gr = gout.row(b, c);
                        let dst = dx.row_mut(b, c);
                        for ((&v, &g), d) in src.iter().zip(gr).zip(dst.iter_mut()) {
                            *d = g * s;
                            ds_acc += g.as_f64() * v.as_f64();
                            dh_acc += g.as_f64();
                        }
                        ds.set(b, c, 0, T::from_f64(ds_acc));
                        dh.set(b, c, 0, T::from_f64(dh_acc));
                    }
                }
                accumulate(grads, x, dx);
                accumulate(grads, scale, ds);
                accumulate(grads, shift, dh);
            }
            Op::Add { a, b } => {
                accumulate(grads, a, gout.clone());
                accumulate(grads, b, gout.clone());
            }
            Op::Scale { x, factor } => {
                let f = T::from_f64(factor);
                accumulate(grads, x, map_unary_t(gout, |g| g * f));
            }
            Op::Concat { a, b } => {
                let ta = self.value(a);
                let tb = self.value(b);
                let (batch, ca, len) = ta.shape();
                let cb = tb.channels();
                let mut da = Tensor::zeros(batch, ca, len);
                let mut db = Tensor::zeros(batch, cb, len);
                for bi in 0..batch {
                    for c in 0..ca {
                        da.row_mut(bi, c).copy_from_slice(gout.row(bi, c));
                    }
                    for c in 0..cb {
                        db.row_mut(bi, c).copy_from_slice(gout.row(bi, ca + c));
                    }
                }
                accumulate(grads, a, da);
                accumulate(grads, b, db);
            }
            Op::AvgPool { x, factor } => {
                let xs = self.value(x);
                if factor == 1 {
                    accumulate(grads, x, gout.clone());
                } else {
                    let (batch, channels, len) = xs.shape();
                    let mut dx = Tensor::zeros(batch, channels, len);
                    let inv = T::from_f64(1.0 / factor as f64);
                    for b in 0..batch {
                        for c in 0..channels {
                            let gr = gout.row(b, c);
                            let dst = dx.row_mut(b, c);
                            for (j, &g) in gr.iter().enumerate() {
                                let gv = g * inv;
                                for d in &mut dst[j * factor..(j + 1) * factor] {
                                    *d = gv;
                                }
                            }
                        }
                    }
                    accumulate(grads, x, dx);
                }
            }
            Op::AttnScores { q, k, heads, scale } => {
                let (dq, dk) =
                    attn_scores_backward(self.value(q), self.value(k), gout, heads, scale);
                accumulate(grads, q, dq);
                accumulate(grads, k, dk);
            }
            Op::SoftmaxLast { x } => {
                // dx = y * (g - sum(g * y)) per row, using the stored output y.
                let y = &node.value;
                let mut dx = y.clone();
                let len = y.len();
                let rows = dx.data_mut().par_chunks_mut(len);
                rows.zip(gout.data().par_chunks(len)).for_each(|(yrow, grow)| {
                    let dot: f64 = yrow
                        .iter()
                        .zip(grow)
                        .map(|(&yv, &gv)| yv.as_f64() * gv.as_f64())
                        .sum();
                    for (yv, &gv) in yrow.iter_mut().zip(grow) {
                        *yv = T::from_f64(yv.as_f64() * (gv.as_f64() - dot));
                    }
                });
                accumulate(grads, x, dx);
            }
            Op::AttnApply { scores, v, heads } => {
                let (dscores, dv) =
                    attn_apply_backward(self.value(scores), self.value(v), gout, heads);
                accumulate(grads, scores, dscores);
                accumulate(grads, v, dv);
            }
            Op::Rotary { x, base } => {
                // The rotation is orthogonal; the adjoint rotates by -theta.
                let dx = rotary_forward(gout, base, true);
                accumulate(grads, x, dx);
            }
            Op::MseLoss { pred, target } => {
                let tp = self.value(pred);
                let tt = self.value(target);
                let g = gout.scalar_value().as_f64() * 2.0 / tp.numel() as f64;
                let mut dp = tp.clone();
                for (d, &t) in dp.data_mut().iter_mut().zip(tt.data()) {
                    *d = T::from_f64((d.as_f64() - t.as_f64()) * g);
                }
                let dt = map_unary_t(&dp, |v| -v);
                accumulate(grads, pred, dp);
                accumulate(grads, target, dt);
            }
        }
        Ok(())
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::Conv1d { .. } => "conv1d",
        Op::ConvT1d { .. } => "conv_transpose1d",
        Op::GroupNorm { .. } => "group_norm",
        Op::LayerNorm { .. } => "layer_norm",
        Op::Silu { .. } => "silu",
        Op::Gelu { .. } => "gelu",
        Op::Relu { .. } => "relu",
        Op::PRelu { .. } => "prelu",
        Op::Film { .. } => "film",
        Op::Add { .. } => "add",
        Op::Scale { .. } => "scale",
        Op::Concat { .. } => "concat",
        Op::AvgPool { .. } => "avg_pool",
        Op::AttnScores { .. } => "attn_scores",
        Op::SoftmaxLast { .. } => "softmax",
        Op::AttnApply { .. } => "attn_apply",
        Op::Rotary { .. } => "rotary",
        Op::MseLoss { .. } => "mse",
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    debug_assert!(g.is_all_finite(), "non-finite gradient");
    match &mut grads[id.0] {
        Some(acc) => {
            for (a, &v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + v;
            }
        }
        slot => *slot = Some(g),
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// tanh-approximated GELU, the form used throughout the networks.
fn gelu_tanh(x: f64) -> f64 {
    const C0: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    const C1: f64 = 0.044_715;
    0.5 * x * (1.0 + (C0 * (x + C1 * x * x * x)).tanh())
}

fn gelu_tanh_deriv(x: f64) -> f64 {
    const C0: f64 = 0.797_884_560_802_865_4;
    const C1: f64 = 0.044_715;
    let u = C0 * (x + C1 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * C0 * (1.0 + 3.0 * C1 * x * x)
}

fn map_unary<T: Scalar>(x: &Tensor<T>, f: impl Fn(f64) -> f64) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = T::from_f64(f(v.as_f64()));
    }
    out
}

fn map_unary_t<T: Scalar>(x: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = f(*v);
    }
    out
}

fn map_binary<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, f: impl Fn(f64, f64) -> f64) -> Tensor<T> {
    debug_assert_eq!(x.shape(), y.shape());
    let mut out = x.clone();
    for (o, &g) in out.data_mut().iter_mut().zip(y.data()) {
        *o = T::from_f64(f(o.as_f64(), g.as_f64()));
    }
    out
}

/// Zero-pad every row of `x` by `pad` on both sides.
fn padded_rows<T: Scalar>(x: &Tensor<T>, pad: usize) -> (Vec<T>, usize) {
    let (batch, channels, len) = x.shape();
    let lp = len + 2 * pad;
    let mut out = vec![T::zero(); batch * channels * lp];
    for b in 0..batch {
        for c in 0..channels {
            let dst = &mut out[(b * channels + c) * lp + pad..(b * channels + c) * lp + pad + len];
            dst.copy_from_slice(x.row(b, c));
        }
    }
    (out, lp)
}

fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (batch, cin, len) = x.shape();
    let (cout, wcin, k) = w.shape();
    if wcin != cin {
        return Err(Error::invalid(format!(
            "conv1d weight expects {wcin} input channels, got {cin}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != (1, cout, 1) {
            return Err(Error::invalid("conv1d bias shape".to_string()));
        }
    }
    if len + 2 * pad < k || stride == 0 {
        return Err(Error::invalid(format!(
            "conv1d geometry: len {len} pad {pad} kernel {k} stride {stride}"
        )));
    }
    let lout = (len + 2 * pad - k) / stride + 1;
    let (xpad, lp) = padded_rows(x, pad);

    let mut out = Tensor::zeros(batch, cout, lout);
    let min_rows = (1 << 14) / lout.max(1) + 1;
    out.data_mut()
        .par_chunks_mut(lout)
        .with_min_len(min_rows)
        .enumerate()
        .for_each(|(row, acc)| {
            let b = row / cout;
            let co = row % cout;
            if let Some(bias) = bias {
                let bv = bias.at(0, co, 0);
                acc.fill(bv);
            }
            for ci in 0..cin {
                let xr = &xpad[(b * cin + ci) * lp..(b * cin + ci + 1) * lp];
                let wr = w.row(co, ci);
                if stride == 1 && k == 3 {
                    // The hot path: every block conv is kernel-3 stride-1.
                    let (w0, w1, w2) = (wr[0], wr[1], wr[2]);
                    for (t, a) in acc.iter_mut().enumerate() {
                        *a = *a + w0 * xr[t] + w1 * xr[t + 1] + w2 * xr[t + 2];
                    }
                    continue;
                }
                for (kk, &wv) in wr.iter().enumerate() {
                    if wv == T::zero() {
                        continue;
                    }
                    if stride == 1 {
                        let src = &xr[kk..kk + lout];
                        for (a, &xv) in acc.iter_mut().zip(src) {
                            *a = *a + wv * xv;
                        }
                    } else {
                        for (t, a) in acc.iter_mut().enumerate() {
                            *a = *a + wv * xr[t * stride + kk];
                        }
                    }
                }
            }
        });
    Ok(out)
}

fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, cin, len) = x.shape();
    let (cout, _, k) = w.shape();
    let lout = gout.len();
    let (xpad, lp) = padded_rows(x, pad);

    // d_bias
    let mut db = Tensor::zeros(1, cout, 1);
    for co in 0..cout {
        let mut acc = 0.0f64;
        for b in 0..batch {
            for &g in gout.row(b, co) {
                acc += g.as_f64();
            }
        }
        db.set(0, co, 0, T::from_f64(acc));
    }

    // d_weight: one row per (co, ci) pair.
    let mut dw = Tensor::zeros(cout, cin, k);
    dw.data_mut()
        .par_chunks_mut(k)
        .with_min_len(8)
        .enumerate()
        .for_each(|(row, dst)| {
            let co = row / cin;
            let ci = row % cin;
            for (kk, d) in dst.iter_mut().enumerate() {
                let mut acc = T::zero();
                for b in 0..batch {
                    let xr = &xpad[(b * cin + ci) * lp..(b * cin + ci + 1) * lp];
                    let gr = gout.row(b, co);
                    if stride == 1 {
                        let src = &xr[kk..kk + lout];
                        for (&g, &xv) in gr.iter().zip(src) {
                            acc = acc + g * xv;
                        }
                    } else {
                        for (t, &g) in gr.iter().enumerate() {
                            acc = acc + g * xr[t * stride + kk];
                        }
                    }
                }
                *d = acc;
            }
        });

    // d_input via scatter into the padded geometry.
    let mut dx = Tensor::zeros(batch, cin, len);
    let min_rows = (1 << 14) / len.max(1) + 1;
    dx.data_mut()
        .par_chunks_mut(len)
        .with_min_len(min_rows)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / cin;
            let ci = row % cin;
            let mut dpad = vec![T::zero(); lp];
            for co in 0..cout {
                let gr = gout.row(b, co);
                let wr = w.row(co, ci);
                if stride == 1 && k == 3 {
                    let (w0, w1, w2) = (wr[0], wr[1], wr[2]);
                    for (t, &g) in gr.iter().enumerate() {
                        dpad[t] = dpad[t] + w0 * g;
                        dpad[t + 1] = dpad[t + 1] + w1 * g;
                        dpad[t + 2] = dpad[t + 2] + w2 * g;
                    }
                    continue;
                }
                for (kk, &wv) in wr.iter().enumerate() {
                    if wv == T::zero() {
                        continue;
                    }
                    if stride == 1 {
                        let seg = &mut dpad[kk..kk + lout];
                        for (d, &g) in seg.iter_mut().zip(gr) {
                            *d = *d + wv * g;
                        }
                    } else {
                        for (t, &g) in gr.iter().enumerate() {
                            let idx = t * stride + kk;
                            dpad[idx] = dpad[idx] + wv * g;
                        }
                    }
                }
            }
            dst.copy_from_slice(&dpad[pad..pad + len]);
        });

    (dx, dw, db)
}

fn conv_transpose1d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (batch, cin, len) = x.shape();
    let (wcin, cout, k) = w.shape();
    if wcin != cin {
        return Err(Error::invalid(format!(
            "conv_transpose1d weight expects {wcin} input channels, got {cin}"
        )));
    }
    let lfull = (len - 1) * stride + k;
    if lfull < 2 * pad + 1 || stride == 0 {
        return Err(Error::invalid("conv_transpose1d geometry".to_string()));
    }
    let lout = lfull - 2 * pad;
    let mut out = Tensor::zeros(batch, cout, lout);
    out.data_mut()
        .par_chunks_mut(lout)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / cout;
            let co = row % cout;
            let mut full = vec![T::zero(); lfull];
            for ci in 0..cin {
                let xr = x.row(b, ci);
                let wr = w.row(ci, co);
                for (kk, &wv) in wr.iter().enumerate() {
                    if wv == T::zero() {
                        continue;
                    }
                    for (t, &xv) in xr.iter().enumerate() {
                        let idx = t * stride + kk;
                        full[idx] = full[idx] + wv * xv;
                    }
                }
            }
            let bv = bias.map(|bb| bb.at(0, co, 0)).unwrap_or_else(T::zero);
            for (d, &f) in dst.iter_mut().zip(&full[pad..pad + lout]) {
                *d = f + bv;
            }
        });
    Ok(out)
}

fn conv_transpose1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, cin, len) = x.shape();
    let (_, cout, k) = w.shape();
    let lfull = (len - 1) * stride + k;
    // Re-pad the output gradient back to the scatter geometry.
    let (gpad, lp) = padded_rows(gout, pad);
    debug_assert_eq!(lp, lfull);

    let mut db = Tensor::zeros(1, cout, 1);
    for co in 0..cout {
        let mut acc = 0.0f64;
        for b in 0..batch {
            for &g in gout.row(b, co) {
                acc += g.as_f64();
            }
        }
        db.set(0, co, 0, T::from_f64(acc));
    }

    let mut dw = Tensor::zeros(cin, cout, k);
    dw.data_mut()
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(row, dst)| {
            let ci = row / cout;
            let co = row % cout;
            for (kk, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0f64;
                for b in 0..batch {
                    let xr = x.row(b, ci);
                    let gr = &gpad[(b * cout + co) * lp..(b * cout + co + 1) * lp];
                    for (t, &xv) in xr.iter().enumerate() {
                        acc += xv.as_f64() * gr[t * stride + kk].as_f64();
                    }
                }
                *d = T::from_f64(acc);
            }
        });

    let mut dx = Tensor::zeros(batch, cin, len);
    dx.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / cin;
            let ci = row % cin;
            for co in 0..cout {
                let gr = &gpad[(b * cout + co) * lp..(b * cout + co + 1) * lp];
                let wr = w.row(ci, co);
                for (kk, &wv) in wr.iter().enumerate() {
                    if wv == T::zero() {
                        continue;
                    }
                    for (t, d) in dst.iter_mut().enumerate() {
                        *d = *d + wv * gr[t * stride + kk];
                    }
                }
            }
        });

    (dx, dw, db)
}

fn norm_affine_check<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    let want = (1, x.channels(), 1);
    if gamma.shape() != want || beta.shape() != want {
        return Err(Error::invalid(format!(
            "norm affine shapes {:?}/{:?} do not match {:?}",
            gamma.shape(),
            beta.shape(),
            want
        )));
    }
    Ok(())
}

fn group_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    groups: usize,
) -> Result<Tensor<T>> {
    let (batch, channels, len) = x.shape();
    if groups == 0 || channels % groups != 0 {
        return Err(Error::invalid(format!(
            "group count {groups} does not divide {channels} channels"
        )));
    }
    norm_affine_check(x, gamma, beta)?;
    let cg = channels / groups;
    let n = (cg * len) as f64;
    let mut out = x.clone();
    for b in 0..batch {
        for g in 0..groups {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for c in g * cg..(g + 1) * cg {
                for &v in x.row(b, c) {
                    let v = v.as_f64();
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + EPS_NORM).sqrt();
            for c in g * cg..(g + 1) * cg {
                let gm = gamma.at(0, c, 0).as_f64();
                let bt = beta.at(0, c, 0).as_f64();
                for v in out.row_mut(b, c) {
                    *v = T::from_f64((v.as_f64() - mean) * inv_std * gm + bt);
                }
            }
        }
    }
    Ok(out)
}

fn group_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    gout: &Tensor<T>,
    groups: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, channels, len) = x.shape();
    let cg = channels / groups;
    let n = (cg * len) as f64;
    let mut dx = Tensor::zeros(batch, channels, len);
    let mut dgamma = Tensor::zeros(1, channels, 1);
    let mut dbeta = Tensor::zeros(1, channels, 1);
    for b in 0..batch {
        for g in 0..groups {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for c in g * cg..(g + 1) * cg {
                for &v in x.row(b, c) {
                    let v = v.as_f64();
                    sum += v;
                    sq += v * v;
                }
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + EPS_NORM).sqrt();

            // Accumulate the two group-wide reductions of dxhat.
            let mut dxhat_sum = 0.0f64;
            let mut dxhat_dot = 0.0f64; // sum(dxhat * xhat)
            for c in g * cg..(g + 1) * cg {
                let gm = gamma.at(0, c, 0).as_f64();
                let xr = x.row(b, c);
                let gr = gout.row(b, c);
                let mut dg_acc = 0.0f64;
                let mut db_acc = 0.0f64;
                for (&xv, &gv) in xr.iter().zip(gr) {
                    let xhat = (xv.as_f64() - mean) * inv_std;
                    let dxhat = gv.as_f64() * gm;
                    dxhat_sum += dxhat;
                    dxhat_dot += dxhat * xhat;
                    dg_acc += gv.as_f64() * xhat;
                    db_acc += gv.as_f64();
                }
                let cur_g = dgamma.at(0, c, 0);
                dgamma.set(0, c, 0, cur_g + T::from_f64(dg_acc));
                let cur_b = dbeta.at(0, c, 0);
                dbeta.set(0, c, 0, cur_b + T::from_f64(db_acc));
            }
            for c in g * cg..(g + 1) * cg {
                let gm = gamma.at(0, c, 0).as_f64();
                let xr = x.row(b, c);
                let gr = gout.row(b, c);
                let dst = dx.row_mut(b, c);
                for ((&xv, &gv), d) in xr.iter().zip(gr).zip(dst.iter_mut()) {
                    let xhat = (xv.as_f64() - mean) * inv_std;
                    let dxhat = gv.as_f64() * gm;
                    *d = T::from_f64(inv_std * (dxhat - dxhat_sum / n - xhat * dxhat_dot / n));
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<Tensor<T>> {
    norm_affine_check(x, gamma, beta)?;
    let (batch, channels, len) = x.shape();
    let n = channels as f64;
    let mut out = x.clone();
    for b in 0..batch {
        for t in 0..len {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for c in 0..channels {
                let v = x.at(b, c, t).as_f64();
                sum += v;
                sq += v * v;
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + EPS_NORM).sqrt();
            for c in 0..channels {
                let gm = gamma.at(0, c, 0).as_f64();
                let bt = beta.at(0, c, 0).as_f64();
                let v = (x.at(b, c, t).as_f64() - mean) * inv_std * gm + bt;
                out.set(b, c, t, T::from_f64(v));
            }
        }
    }
    Ok(out)
}

fn layer_norm_backward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    gout: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (batch, channels, len) = x.shape();
    let n = channels as f64;
    let mut dx = Tensor::zeros(batch, channels, len);
    let mut dgamma = vec![0.0f64; channels];
    let mut dbeta = vec![0.0f64; channels];
    for b in 0..batch {
        for t in 0..len {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for c in 0..channels {
                let v = x.at(b, c, t).as_f64();
                sum += v;
                sq += v * v;
            }
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            let inv_std = 1.0 / (var + EPS_NORM).sqrt();
            let mut dxhat_sum = 0.0f64;
            let mut dxhat_dot = 0.0f64;
            for c in 0..channels {
                let xhat = (x.at(b, c, t).as_f64() - mean) * inv_std;
                let g = gout.at(b, c, t).as_f64();
                let dxhat = g * gamma.at(0, c, 0).as_f64();
                dxhat_sum += dxhat;
                dxhat_dot += dxhat * xhat;
                dgamma[c] += g * xhat;
                dbeta[c] += g;
            }
            for c in 0..channels {
                let xhat = (x.at(b, c, t).as_f64() - mean) * inv_std;
                let dxhat = gout.at(b, c, t).as_f64() * gamma.at(0, c, 0).as_f64();
                let d = inv_std * (dxhat - dxhat_sum / n - xhat * dxhat_dot / n);
                dx.set(b, c, t, T::from_f64(d));
            }
        }
    }
    let dg = Tensor::from_fn(1, channels, 1, |_, c, _| dgamma[c]);
    let db = Tensor::from_fn(1, channels, 1, |_, c, _| dbeta[c]);
    (dx, dg, db)
}

fn attn_scores_forward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    heads: usize,
    scale: f64,
) -> Tensor<T> {
    let (batch, channels, len) = q.shape();
    let head_dim = channels / heads;
    let mut out = Tensor::zeros(batch * heads, len, len);
    let sc = T::from_f64(scale);
    out.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let bh = row / len;
            let i = row % len;
            let b = bh / heads;
            let h = bh % heads;
            for c in h * head_dim..(h + 1) * head_dim {
                let qv = q.at(b, c, i);
                if qv == T::zero() {
                    continue;
                }
                for (d, &kv) in dst.iter_mut().zip(k.row(b, c)) {
                    *d = *d + qv * kv;
                }
            }
            for d in dst.iter_mut() {
                *d = *d * sc;
            }
        });
    out
}

fn attn_scores_backward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    gout: &Tensor<T>,
    heads: usize,
    scale: f64,
) -> (Tensor<T>, Tensor<T>) {
    let (batch, channels, len) = q.shape();
    let head_dim = channels / heads;
    let sc = T::from_f64(scale);
    let mut dq = Tensor::zeros(batch, channels, len);
    let mut dk = Tensor::zeros(batch, channels, len);

    dq.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / channels;
            let c = row % channels;
            let h = c / head_dim;
            let kr = k.row(b, c);
            for (i, d) in dst.iter_mut().enumerate() {
                let gr = gout.row(b * heads + h, i);
                let mut acc = T::zero();
                for (&g, &kv) in gr.iter().zip(kr) {
                    acc = acc + g * kv;
                }
                *d = acc * sc;
            }
        });

    dk.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / channels;
            let c = row % channels;
            let h = c / head_dim;
            let qr = q.row(b, c);
            for (i, &qv) in qr.iter().enumerate() {
                let gr = gout.row(b * heads + h, i);
                let qs = qv * sc;
                for (d, &g) in dst.iter_mut().zip(gr) {
                    *d = *d + qs * g;
                }
            }
        });

    (dq, dk)
}

fn attn_apply_forward<T: Scalar>(scores: &Tensor<T>, v: &Tensor<T>, heads: usize) -> Tensor<T> {
    let (batch, channels, len) = v.shape();
    let head_dim = channels / heads;
    let mut out = Tensor::zeros(batch, channels, len);
    out.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / channels;
            let c = row % channels;
            let h = c / head_dim;
            let vr = v.row(b, c);
            for (i, d) in dst.iter_mut().enumerate() {
                let sr = scores.row(b * heads + h, i);
                let mut acc = T::zero();
                for (&s, &vv) in sr.iter().zip(vr) {
                    acc = acc + s * vv;
                }
                *d = acc;
            }
        });
    out
}

fn attn_apply_backward<T: Scalar>(
    scores: &Tensor<T>,
    v: &Tensor<T>,
    gout: &Tensor<T>,
    heads: usize,
) -> (Tensor<T>, Tensor<T>) {
    let (batch, channels, len) = v.shape();
    let head_dim = channels / heads;
    let mut dscores = Tensor::zeros(batch * heads, len, len);
    let mut dv = Tensor::zeros(batch, channels, len);

    dscores
        .data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let bh = row / len;
            let i = row % len;
            let b = bh / heads;
            let h = bh % heads;
            for c in h * head_dim..(h + 1) * head_dim {
                let g = gout.at(b, c, i);
                if g == T::zero() {
                    continue;
                }
                for (d, &vv) in dst.iter_mut().zip(v.row(b, c)) {
                    *d = *d + g * vv;
                }
            }
        });

    dv.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(row, dst)| {
            let b = row / channels;
            let c = row % channels;
            let h = c / head_dim;
            for (i, &g) in gout.row(b, c).iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let sr = scores.row(b * heads + h, i);
                for (d, &s) in dst.iter_mut().zip(sr) {
                    *d = *d + g * s;
                }
            }
        });

    (dscores, dv)
}


/// Rotate channel pairs by `theta = position * base^(-pair / n_pairs)`;
/// `inverse` applies the transpose rotation (used by the adjoint).
fn rotary_forward<T: Scalar>(x: &Tensor<T>, base: f64, inverse: bool) -> Tensor<T> {
    let (batch, channels, len) = x.shape();
    let pairs = channels / 2;
    let mut out = x.clone();
    for b in 0..batch {
        for p in 0..pairs {
            let inv_freq = base.powf(-(p as f64) / pairs as f64);
            for i in 0..len {
                let theta = i as f64 * inv_freq;
                let (sin, cos) = if inverse {
                    ((-theta).sin(), theta.cos())
                } else {
                    (theta.sin(), theta.cos())
                };
                let a = x.at(b, 2 * p, i).as_f64();
                let bb = x.at(b, 2 * p + 1, i).as_f64();
                out.set(b, 2 * p, i, T::from_f64(a * cos - bb * sin));
                out.set(b, 2 * p + 1, i, T::from_f64(a * sin + bb * cos));
            }
        }
    }
    out
}
