//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards from
//! the loss visits every node after all of its consumers.

use crate::error::{Error, Result};
use crate::numerics::ops::{self, LayerNormCache};
use crate::numerics::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        a_trans: bool,
        b_trans: bool,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Reshape(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        cache: LayerNormCache,
    },
    Gelu(Var),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Dropout {
        x: Var,
        scale: Vec<f64>,
    },
    Nll {
        logits: Var,
        pairs: Vec<(usize, usize)>,
        probs: Vec<Vec<f64>>,
    },
    RelScores {
        q: Var,
        table: Var,
        max_distance: usize,
    },
    RelValues {
        probs: Var,
        table: Var,
        max_distance: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros of `like`'s shape when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

/// Index into a relative-position table for query `i`, key `j`.
pub(crate) fn relative_index(i: usize, j: usize, max_distance: usize) -> usize {
    let k = max_distance as isize;
    let d = (j as isize - i as isize).clamp(-k, k);
    (d + k) as usize
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    pub fn matmul_t(&mut self, a: Var, a_trans: bool, b: Var, b_trans: bool) -> Result<Var> {
        let value = ops::matmul_t(self.value(a), a_trans, self.value(b), b_trans)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                a_trans,
                b_trans,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape("add", va.shape(), vb.shape()));
        }
        let mut value = va.clone();
        value.add_assign(vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let (rows, cols) = vx.dims2();
        if vb.numel() != cols {
            return Err(Error::shape("add_bias", vx.shape(), vb.shape()));
        }
        let mut value = vx.clone();
        for i in 0..rows {
            for (o, b) in value.row_mut(i).iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let rg = self.rg(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let mut value = self.value(x).clone();
        value.scale_assign(k);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, k), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn softmax_rows(&mut self, x: Var, additive_mask: Option<&Tensor>) -> Result<Var> {
        let value = ops::softmax_rows(self.value(x), additive_mask)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Softmax(x), rg))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (value, cache) =
            ops::layer_norm_cached(self.value(x), self.value(gamma), self.value(beta), eps)?;
        let rg = self.rg(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            },
            rg,
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = ops::gelu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(value, Op::Gelu(x), rg)
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = t.dims2();
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "gather table",
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(&[ids.len(), cols], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.dims2();
        if start >= end || end > cols {
            return Err(Error::shape("slice_cols", t.shape(), &[start, end]));
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for i in 0..rows {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let value = Tensor::new(&[rows, end - start], data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    self.value(parts[0]).shape(),
                    t.shape(),
                ));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::new(&[rows, total], data)?;
        let rg = self.rg(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Inverted dropout with a caller-supplied keep pattern (`true` = keep).
    pub fn dropout(&mut self, x: Var, keep: &[bool], rate: f64) -> Result<Var> {
        let t = self.value(x);
        if keep.len() != t.numel() {
            return Err(Error::shape("dropout", t.shape(), &[keep.len()]));
        }
        let k = 1.0 / (1.0 - rate);
        let scale: Vec<f64> = keep.iter().map(|&b| if b { k } else { 0.0 }).collect();
        let data = t.data().iter().zip(&scale).map(|(v, s)| v * s).collect();
        let value = Tensor::new(t.shape(), data)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Dropout { x, scale }, rg))
    }

    /// Mean negative log-likelihood over `(row, target)` pairs, as a `[1]` tensor.
    ///
    /// `column_mask` is added to every row before normalization (0 or -inf).
    pub fn nll(
        &mut self,
        logits: Var,
        pairs: &[(usize, usize)],
        column_mask: Option<&[f64]>,
    ) -> Result<Var> {
        let t = self.value(logits);
        let (rows, cols) = t.dims2();
        for &(r, c) in pairs {
            if r >= rows {
                return Err(Error::Index {
                    what: "logit rows",
                    index: r,
                    size: rows,
                });
            }
            if c >= cols {
                return Err(Error::Index {
                    what: "vocabulary",
                    index: c,
                    size: cols,
                });
            }
        }
        if let Some(m) = column_mask {
            if m.len() != cols {
                return Err(Error::shape("nll mask", t.shape(), &[m.len()]));
            }
        }
        let (loss, probs) = ops::nll_rows(t, pairs, column_mask);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::vector(&[loss]),
            Op::Nll {
                logits,
                pairs: pairs.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `out[i][j] = q[i] · table[clip(j - i)]` for an `L×dk` query block.
    pub fn relative_scores(&mut self, q: Var, table: Var, max_distance: usize) -> Result<Var> {
        let (tq, tt) = (self.value(q), self.value(table));
        let (len, dk) = tq.dims2();
        if tt.dims2() != (2 * max_distance + 1, dk) {
            return Err(Error::shape("relative_scores", tq.shape(), tt.shape()));
        }
        let mut out = vec![0.0; len * len];
        for i in 0..len {
            let qi = tq.row(i);
            for j in 0..len {
                let r = tt.row(relative_index(i, j, max_distance));
                out[i * len + j] = qi.iter().zip(r).map(|(a, b)| a * b).sum();
            }
        }
        let value = Tensor::new(&[len, len], out)?;
        let rg = self.rg(&[q, table]);
        Ok(self.push(
            value,
            Op::RelScores {
                q,
                table,
                max_distance,
            },
            rg,
        ))
    }

    /// `out[i] = Σ_j probs[i][j] · table[clip(j - i)]`.
    pub fn relative_values(&mut self, probs: Var, table: Var, max_distance: usize) -> Result<Var> {
        let (tp, tt) = (self.value(probs), self.value(table));
        let (len, len2) = tp.dims2();
        let (tr, dk) = tt.dims2();
        if len != len2 || tr != 2 * max_distance + 1 {
            return Err(Error::shape("relative_values", tp.shape(), tt.shape()));
        }
        let mut out = vec![0.0; len * dk];
        for i in 0..len {
            for j in 0..len {
                let p = tp.at(i, j);
                if p == 0.0 {
                    continue;
                }
                let r = tt.row(relative_index(i, j, max_distance));
                for c in 0..dk {
                    out[i * dk + c] += p * r[c];
                }
            }
        }
        let value = Tensor::new(&[len, dk], out)?;
        let rg = self.rg(&[probs, table]);
        Ok(self.push(
            value,
            Op::RelValues {
                probs,
                table,
                max_distance,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar (single-element) node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar");
        grads[loss.0] = Some(Tensor::ones(self.value(loss).shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul {
                a,
                b,
                a_trans,
                b_trans,
            } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    // d(op(A)) = G·op(B)^T; transpose back when A was used transposed.
                    let ga = if *a_trans {
                        ops::matmul_t(vb, *b_trans, g, true)
                    } else {
                        ops::matmul_t(g, false, vb, !*b_trans)
                    }
                    .expect("shapes checked in forward");
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = if *b_trans {
                        ops::matmul_t(g, true, va, *a_trans)
                    } else {
                        ops::matmul_t(va, !*a_trans, g, false)
                    }
                    .expect("shapes checked in forward");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.nodes[bias.0].requires_grad {
                    let (rows, cols) = g.dims2();
                    let mut gb = vec![0.0; cols];
                    for i in 0..rows {
                        for (acc, v) in gb.iter_mut().zip(g.row(i)) {
                            *acc += v;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    self.accumulate(grads, *bias, Tensor::new(&shape, gb).unwrap());
                }
            }
            Op::Scale(x, k) => {
                let mut gx = g.clone();
                gx.scale_assign(*k);
                self.accumulate(grads, *x, gx);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.reshape(&shape).unwrap());
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let (rows, cols) = y.dims2();
                let mut gx = vec![0.0; rows * cols];
                for i in 0..rows {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        gx[i * cols + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *x, Tensor::new(y.shape(), gx).unwrap());
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let (rows, d) = g.dims2();
                let gam = self.value(*gamma).data();
                let mut gx = vec![0.0; rows * d];
                let mut ggamma = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                for i in 0..rows {
                    let gr = g.row(i);
                    let xh = &cache.normalized[i * d..(i + 1) * d];
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        let dxh = gr[j] * gam[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                        ggamma[j] += gr[j] * xh[j];
                        gbeta[j] += gr[j];
                    }
                    let inv = cache.inv_std[i];
                    for j in 0..d {
                        let dxh = gr[j] * gam[j];
                        gx[i * d + j] =
                            inv * (dxh - sum_dxh / d as f64 - xh[j] * sum_dxh_xh / d as f64);
                    }
                }
                let gshape = self.value(*gamma).shape().to_vec();
                let bshape = self.value(*beta).shape().to_vec();
                self.accumulate(grads, *x, Tensor::new(g.shape(), gx).unwrap());
                self.accumulate(grads, *gamma, Tensor::new(&gshape, ggamma).unwrap());
                self.accumulate(grads, *beta, Tensor::new(&bshape, gbeta).unwrap());
            }
            Op::Gelu(x) => {
                let vx = self.value(*x);
                let data = vx
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &gv)| gv * ops::gelu_grad_scalar(v))
                    .collect();
                self.accumulate(grads, *x, Tensor::new(vx.shape(), data).unwrap());
            }
            Op::Gather { table, ids } => {
                if self.nodes[table.0].requires_grad {
                    let t = self.value(*table);
                    let cols = t.cols();
                    let mut gt = Tensor::zeros(t.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id * cols..(id + 1) * cols];
                        for (d, s) in dst.iter_mut().zip(g.row(r)) {
                            *d += s;
                        }
                    }
                    self.accumulate(grads, *table, gt);
                }
            }
            Op::SliceCols { x, start } => {
                let vx = self.value(*x);
                let (rows, cols) = vx.dims2();
                let width = g.cols();
                let mut gx = Tensor::zeros(vx.shape());
                for i in 0..rows {
                    gx.data_mut()[i * cols + start..i * cols + start + width]
                        .copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let vp = self.value(p);
                    let (rows, width) = vp.dims2();
                    if self.nodes[p.0].requires_grad {
                        let mut data = Vec::with_capacity(rows * width);
                        for i in 0..rows {
                            data.extend_from_slice(&g.row(i)[offset..offset + width]);
                        }
                        self.accumulate(grads, p, Tensor::new(vp.shape(), data).unwrap());
                    }
                    offset += width;
                }
            }
            Op::Dropout { x, scale } => {
                let data = g.data().iter().zip(scale).map(|(a, b)| a * b).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape(), data).unwrap());
            }
            Op::Nll {
                logits,
                pairs,
                probs,
            } => {
                if pairs.is_empty() {
                    return;
                }
                let vl = self.value(*logits);
                let cols = vl.cols();
                let k = g.data()[0] / pairs.len() as f64;
                let mut gl = Tensor::zeros(vl.shape());
                for (&(r, t), p) in pairs.iter().zip(probs) {
                    let row = &mut gl.data_mut()[r * cols..(r + 1) * cols];
                    for j in 0..cols {
                        row[j] += k * p[j];
                    }
                    row[t] -= k;
                }
                self.accumulate(grads, *logits, gl);
            }
            Op::RelScores {
                q,
                table,
                max_distance,
            } => {
                let (vq, vt) = (self.value(*q), self.value(*table));
                let (len, dk) = vq.dims2();
                let mut gq = Tensor::zeros(vq.shape());
                let mut gt = Tensor::zeros(vt.shape());
                for i in 0..len {
                    for j in 0..len {
                        let gij = g.at(i, j);
                        let r = relative_index(i, j, *max_distance);
                        for c in 0..dk {
                            gq.data_mut()[i * dk + c] += gij * vt.at(r, c);
                            gt.data_mut()[r * dk + c] += gij * vq.at(i, c);
                        }
                    }
                }
                self.accumulate(grads, *q, gq);
                self.accumulate(grads, *table, gt);
            }
            Op::RelValues {
                probs,
                table,
                max_distance,
            } => {
                let (vp, vt) = (self.value(*probs), self.value(*table));
                let len = vp.rows();
                let dk = vt.cols();
                let mut gp = Tensor::zeros(vp.shape());
                let mut gt = Tensor::zeros(vt.shape());
                for i in 0..len {
                    let gi = g.row(i);
                    for j in 0..len {
                        let r = relative_index(i, j, *max_distance);
                        let tr = vt.row(r);
                        gp.data_mut()[i * len + j] = gi.iter().zip(tr).map(|(a, b)| a * b).sum();
                        let p = vp.at(i, j);
                        for c in 0..dk {
                            gt.data_mut()[r * dk + c] += p * gi[c];
                        }
                    }
                }
                self.accumulate(grads, *probs, gp);
                self.accumulate(grads, *table, gt);
            }
        }
    }
}
