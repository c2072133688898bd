use super::kernels::{self, broadcast_map, broadcast_shape, gemm, numel, split_axis, Bcast, View};
use super::{Graph, Node, NodeId, Op, Var};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Per-feature statistics of one ghost sub-batch (unbiased variance).
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStats {
    pub rows: (usize, usize),
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn same_graph(a: &Var<'_>, b: &Var<'_>) {
    assert!(std::ptr::eq(a.graph, b.graph), "operands belong to different graphs");
}

impl<'g> Var<'g> {
    fn unary(&self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var<'g> {
        let rg = self.requires_grad();
        self.graph.push(shape, value, rg, op)
    }

    fn binary(
        &self,
        other: &Var<'g>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(NodeId, NodeId, Bcast, Bcast) -> Op,
    ) -> Result<Var<'g>> {
        same_graph(self, other);
        let (shape, value, ma, mb) = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            let shape = broadcast_shape(name, &a.shape, &b.shape)?;
            let ma = broadcast_map(&a.shape, &shape);
            let mb = broadcast_map(&b.shape, &shape);
            let n = numel(&shape);
            let value = match (&ma, &mb) {
                (Bcast::Same, Bcast::Same) => a.value.iter().zip(&b.value).map(|(&x, &y)| f(x, y)).collect(),
                _ => (0..n).map(|i| f(a.value[ma.index(i)], b.value[mb.index(i)])).collect(),
            };
            (shape, value, ma, mb)
        };
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(shape, value, rg, make(self.id, other.id, ma, mb)))
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul)
    }

    /// `scale · x + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Var<'g> {
        let value = self.with_value(|v| v.iter().map(|x| scale * x + shift).collect());
        self.unary(self.shape(), value, Op::Affine { x: self.id, scale })
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&self, other: &Var<'g>) -> Result<Var<'g>> {
        same_graph(self, other);
        let (m, k, n, value) = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
                return Err(Error::shape("matmul", &a.shape, &b.shape));
            }
            let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
            let mut c = vec![0.0; m * n];
            gemm(m, k, n, &a.value, View::row_major(k), &b.value, View::row_major(n), &mut c, false);
            (m, k, n, c)
        };
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(
            vec![m, n],
            value,
            rg,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
        ))
    }

    /// Batched matmul `[B, m, k] · [B, k, n]`.
    pub fn bmm(&self, other: &Var<'g>) -> Result<Var<'g>> {
        same_graph(self, other);
        let (batch, m, k, n, value) = {
            let nodes = self.graph.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            if a.shape.len() != 3 || b.shape.len() != 3 || a.shape[0] != b.shape[0] || a.shape[2] != b.shape[1] {
                return Err(Error::shape("bmm", &a.shape, &b.shape));
            }
            let (batch, m, k, n) = (a.shape[0], a.shape[1], a.shape[2], b.shape[2]);
            let mut c = vec![0.0; batch * m * n];
            for t in 0..batch {
                gemm(
                    m,
                    k,
                    n,
                    &a.value[t * m * k..],
                    View::row_major(k),
                    &b.value[t * k * n..],
                    View::row_major(n),
                    &mut c[t * m * n..],
                    false,
                );
            }
            (batch, m, k, n, c)
        };
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.graph.push(
            vec![batch, m, n],
            value,
            rg,
            Op::Bmm {
                a: self.id,
                b: other.id,
                batch,
                m,
                k,
                n,
            },
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'g>> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(Error::op("transpose", format!("needs rank >= 2, got {:?}", shape)));
        }
        let r = shape.len();
        let (rows, cols) = (shape[r - 2], shape[r - 1]);
        let batch = numel(&shape[..r - 2]);
        let value = self.with_value(|v| {
            let mut out = vec![0.0; v.len()];
            for t in 0..batch {
                let base = t * rows * cols;
                for i in 0..rows {
                    for j in 0..cols {
                        out[base + j * rows + i] = v[base + i * cols + j];
                    }
                }
            }
            out
        });
        let mut out_shape = shape.clone();
        out_shape.swap(r - 2, r - 1);
        Ok(self.unary(
            out_shape,
            value,
            Op::Transpose {
                x: self.id,
                batch,
                rows,
                cols,
            },
        ))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'g> {
        let value = self.with_value(|v| v.iter().map(|&x| if x > 0.0 { x } else { slope * x }).collect());
        self.unary(self.shape(), value, Op::LeakyRelu { x: self.id, slope })
    }

    pub fn sigmoid(&self) -> Var<'g> {
        let value = self.with_value(|v| v.iter().map(|&x| sigmoid(x)).collect());
        self.unary(self.shape(), value, Op::Sigmoid { x: self.id })
    }

    /// Softmax over the last axis.
    pub fn softmax(&self) -> Result<Var<'g>> {
        let shape = self.shape();
        let cols = *shape.last().ok_or_else(|| Error::op("softmax", "scalar input"))?;
        if cols == 0 {
            return Err(Error::op("softmax", "empty last axis"));
        }
        let value = self.with_value(|v| {
            let mut out = v.to_vec();
            for row in out.chunks_mut(cols) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    total += *x;
                }
                row.iter_mut().for_each(|x| *x /= total);
            }
            out
        });
        Ok(self.unary(shape, value, Op::Softmax { x: self.id, cols }))
    }

    /// Inverted dropout. Identity when `train` is false or `rate` is 0.
    pub fn dropout(&self, rate: f64, train: bool, rng: &mut SeededRng) -> Result<Var<'g>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::op("dropout", format!("rate {rate} outside [0, 1)")));
        }
        if !train || rate == 0.0 {
            return Ok(*self);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.numel();
        let mask: Vec<f64> = (0..n).map(|_| if rng.uniform() < rate { 0.0 } else { keep }).collect();
        let value = self.with_value(|v| v.iter().zip(&mask).map(|(x, m)| x * m).collect());
        Ok(self.unary(self.shape(), value, Op::Dropout { x: self.id, mask }))
    }

    /// Sum of all elements (scalar).
    pub fn sum(&self) -> Var<'g> {
        let s = self.with_value(|v| v.iter().sum());
        self.unary(vec![], vec![s], Op::Sum { x: self.id })
    }

    pub fn mean(&self) -> Var<'g> {
        let s = self.with_value(|v| v.iter().sum::<f64>() / v.len().max(1) as f64);
        self.unary(vec![], vec![s], Op::Mean { x: self.id })
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Var<'g>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::op("sum_axis", format!("axis {axis} out of range for {:?}", shape)));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let value = self.with_value(|v| {
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for l in 0..len {
                    let src = &v[(o * len + l) * inner..(o * len + l + 1) * inner];
                    out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
            }
            if mean && len > 0 {
                out.iter_mut().for_each(|x| *x /= len as f64);
            }
            out
        });
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok(self.unary(
            out_shape,
            value,
            Op::SumAxis {
                x: self.id,
                outer,
                len,
                inner,
                mean,
            },
        ))
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Var<'g>> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'g>> {
        self.reduce_axis(axis, true)
    }

    /// Biased variance along `axis` (the batch-norm normalizing statistic).
    pub fn var_axis(&self, axis: usize) -> Result<Var<'g>> {
        let shape = self.shape();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(Error::op("var_axis", format!("bad axis {axis} for {:?}", shape)));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let value = self.with_value(|v| {
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| v[(o * len + l) * inner + i];
                    let mean = (0..len).map(at).sum::<f64>() / len as f64;
                    out[o * inner + i] = (0..len).map(|l| (at(l) - mean).powi(2)).sum::<f64>() / len as f64;
                }
            }
            out
        });
        let mut out_shape = shape;
        out_shape.remove(axis);
        Ok(self.unary(
            out_shape,
            value,
            Op::VarAxis {
                x: self.id,
                outer,
                len,
                inner,
            },
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'g>> {
        let cur = self.shape();
        if numel(shape) != numel(&cur) {
            return Err(Error::shape("reshape", &cur, shape));
        }
        let value = self.value();
        Ok(self.unary(shape.to_vec(), value, Op::Reshape { x: self.id }))
    }

    /// Selects `indices` along `axis` (repeats allowed).
    pub fn index_select(&self, axis: usize, indices: &[usize]) -> Result<Var<'g>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::op("index_select", format!("axis {axis} out of range for {:?}", shape)));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        if let Some(&bad) = indices.iter().find(|&&i| i >= len) {
            return Err(Error::op("index_select", format!("index {bad} >= {len}")));
        }
        let k = indices.len();
        let value = self.with_value(|v| {
            let mut out = Vec::with_capacity(outer * k * inner);
            for o in 0..outer {
                for &i in indices {
                    out.extend_from_slice(&v[(o * len + i) * inner..(o * len + i + 1) * inner]);
                }
            }
            out
        });
        let mut out_shape = shape;
        out_shape[axis] = k;
        Ok(self.unary(
            out_shape,
            value,
            Op::IndexSelect {
                x: self.id,
                outer,
                len,
                inner,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var<'g>> {
        let shape = self.shape();
        if axis >= shape.len() || start > end || end > shape[axis] {
            return Err(Error::op("slice", format!("range {start}..{end} on axis {axis} of {:?}", shape)));
        }
        let idx: Vec<usize> = (start..end).collect();
        self.index_select(axis, &idx)
    }

    /// Row lookup into a `[rows, dim]` table: output `[codes.len(), dim]`.
    pub fn lookup(&self, codes: &[usize]) -> Result<Var<'g>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::op("lookup", format!("table must be rank 2, got {:?}", shape)));
        }
        let (rows, dim) = (shape[0], shape[1]);
        if let Some(&bad) = codes.iter().find(|&&c| c >= rows) {
            return Err(Error::op("lookup", format!("code {bad} >= {rows}")));
        }
        let value = self.with_value(|v| {
            let mut out = Vec::with_capacity(codes.len() * dim);
            for &c in codes {
                out.extend_from_slice(&v[c * dim..(c + 1) * dim]);
            }
            out
        });
        Ok(self.unary(
            vec![codes.len(), dim],
            value,
            Op::Lookup {
                table: self.id,
                codes: codes.to_vec(),
                dim,
            },
        ))
    }

    /// Normalizes each ghost sub-batch of a `[batch, cols]` input by its own
    /// biased per-feature statistics. Returns the normalized tensor and the
    /// per-group statistics (unbiased variance) for running-stat updates.
    pub fn ghost_normalize(&self, ghost: usize, eps: f64) -> Result<(Var<'g>, Vec<GroupStats>)> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::op("ghost_norm", format!("expects [batch, features], got {:?}", shape)));
        }
        let (batch, cols) = (shape[0], shape[1]);
        if batch < 2 {
            return Err(Error::op("ghost_norm", "training batch of 1 row has undefined variance"));
        }
        if ghost < 2 {
            return Err(Error::op("ghost_norm", format!("ghost size {ghost} < 2")));
        }
        let groups = kernels::ghost_groups(batch, ghost);
        let mut inv_std = Vec::with_capacity(groups.len() * cols);
        let mut stats = Vec::with_capacity(groups.len());
        let value = self.with_value(|v| {
            let mut out = vec![0.0; v.len()];
            for &(s, e) in &groups {
                let n = (e - s) as f64;
                let mut mean = vec![0.0; cols];
                for r in s..e {
                    mean.iter_mut().zip(&v[r * cols..(r + 1) * cols]).for_each(|(m, x)| *m += x);
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; cols];
                for r in s..e {
                    for j in 0..cols {
                        var[j] += (v[r * cols + j] - mean[j]).powi(2);
                    }
                }
                let inv: Vec<f64> = var.iter().map(|&ss| 1.0 / (ss / n + eps).sqrt()).collect();
                for r in s..e {
                    for j in 0..cols {
                        out[r * cols + j] = (v[r * cols + j] - mean[j]) * inv[j];
                    }
                }
                inv_std.extend_from_slice(&inv);
                let unbiased = var.iter().map(|&ss| ss / (n - 1.0)).collect();
                stats.push(GroupStats {
                    rows: (s, e),
                    mean,
                    var: unbiased,
                });
            }
            out
        });
        let out = self.unary(
            shape,
            value,
            Op::GhostNorm {
                x: self.id,
                groups,
                cols,
                inv_std,
            },
        );
        Ok((out, stats))
    }

    /// Mean softmax cross-entropy of `[batch, classes]` logits.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Var<'g>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] == 0 || shape[0] != labels.len() {
            return Err(Error::op(
                "cross_entropy",
                format!("logits {:?} vs {} labels", shape, labels.len()),
            ));
        }
        let (batch, classes) = (shape[0], shape[1]);
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { row, label, classes });
        }
        let (loss, probs) = self.with_value(|v| {
            let mut probs = vec![0.0; v.len()];
            let mut loss = 0.0;
            for r in 0..batch {
                let row = &v[r * classes..(r + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                loss += lse - row[labels[r]];
                for c in 0..classes {
                    probs[r * classes + c] = (row[c] - lse).exp();
                }
            }
            (loss / batch as f64, probs)
        });
        Ok(self.unary(
            vec![],
            vec![loss],
            Op::CrossEntropy {
                logits: self.id,
                labels: labels.to_vec(),
                probs,
                classes,
            },
        ))
    }
}

impl Graph {
    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>], axis: usize) -> Result<Var<'g>> {
        let first = parts.first().ok_or_else(|| Error::op("concat", "no inputs"))?;
        let base = first.shape();
        if axis >= base.len() {
            return Err(Error::op("concat", format!("axis {axis} out of range for {:?}", base)));
        }
        let nodes = self.nodes.borrow();
        let mut total = 0;
        let mut chunks = Vec::with_capacity(parts.len());
        for p in parts {
            assert!(std::ptr::eq(p.graph, self), "operands belong to different graphs");
            let s = &nodes[p.id].shape;
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
            chunks.push((p.id, s[axis] * numel(&s[axis + 1..])));
        }
        let outer = numel(&base[..axis]);
        let mut value = Vec::with_capacity(outer * chunks.iter().map(|c| c.1).sum::<usize>());
        for o in 0..outer {
            for &(id, chunk) in &chunks {
                value.extend_from_slice(&nodes[id].value[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = chunks.iter().any(|&(id, _)| nodes[id].requires_grad);
        drop(nodes);
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(shape, value, rg, Op::Concat { parts: chunks, outer }))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn scatter_bcast(map: &Bcast, len: usize, g: &[f64], f: impl Fn(usize, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; len];
    match map {
        Bcast::Same => out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i, g[i])),
        _ => {
            for (i, &gi) in g.iter().enumerate() {
                out[map.index(i)] += f(i, gi);
            }
        }
    }
    out
}

/// Computes input-gradient contributions of `node` given its output gradient.
pub(crate) fn propagate(nodes: &[Node], node: &Node, g: &[f64], emit: &mut dyn FnMut(NodeId, Vec<f64>)) {
    let val = |id: NodeId| -> &[f64] { &nodes[id].value };
    let rg = |id: NodeId| nodes[id].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b, ma, mb) | Op::Sub(a, b, ma, mb) => {
            let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
            if rg(*a) {
                emit(*a, scatter_bcast(ma, val(*a).len(), g, |_, gi| gi));
            }
            if rg(*b) {
                emit(*b, scatter_bcast(mb, val(*b).len(), g, |_, gi| sign * gi));
            }
        }
        Op::Mul(a, b, ma, mb) => {
            let (av, bv) = (val(*a), val(*b));
            if rg(*a) {
                emit(*a, scatter_bcast(ma, av.len(), g, |i, gi| gi * bv[mb.index(i)]));
            }
            if rg(*b) {
                emit(*b, scatter_bcast(mb, bv.len(), g, |i, gi| gi * av[ma.index(i)]));
            }
        }
        Op::Affine { x, scale } => emit(*x, g.iter().map(|gi| gi * scale).collect()),
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if rg(*a) {
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, View::row_major(n), val(*b), View::transposed(n), &mut ga, false);
                emit(*a, ga);
            }
            if rg(*b) {
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, val(*a), View::transposed(k), g, View::row_major(n), &mut gb, false);
                emit(*b, gb);
            }
        }
        Op::Bmm { a, b, batch, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if rg(*a) {
                let bv = val(*b);
                let mut ga = vec![0.0; batch * m * k];
                for t in 0..*batch {
                    gemm(
                        m,
                        n,
                        k,
                        &g[t * m * n..],
                        View::row_major(n),
                        &bv[t * k * n..],
                        View::transposed(n),
                        &mut ga[t * m * k..],
                        false,
                    );
                }
                emit(*a, ga);
            }
            if rg(*b) {
                let av = val(*a);
                let mut gb = vec![0.0; batch * k * n];
                for t in 0..*batch {
                    gemm(
                        k,
                        m,
                        n,
                        &av[t * m * k..],
                        View::transposed(k),
                        &g[t * m * n..],
                        View::row_major(n),
                        &mut gb[t * k * n..],
                        false,
                    );
                }
                emit(*b, gb);
            }
        }
        Op::Transpose { x, batch, rows, cols } => {
            let (rows, cols) = (*rows, *cols);
            let mut gx = vec![0.0; g.len()];
            for t in 0..*batch {
                let base = t * rows * cols;
                for i in 0..rows {
                    for j in 0..cols {
                        gx[base + i * cols + j] = g[base + j * rows + i];
                    }
                }
            }
            emit(*x, gx);
        }
        Op::LeakyRelu { x, slope } => {
            let xv = val(*x);
            emit(
                *x,
                g.iter().zip(xv).map(|(gi, &xi)| if xi > 0.0 { *gi } else { gi * slope }).collect(),
            );
        }
        Op::Sigmoid { x } => {
            emit(*x, g.iter().zip(&node.value).map(|(gi, y)| gi * y * (1.0 - y)).collect());
        }
        Op::Softmax { x, cols } => {
            let mut gx = vec![0.0; g.len()];
            for ((go, y), gi) in gx.chunks_mut(*cols).zip(node.value.chunks(*cols)).zip(g.chunks(*cols)) {
                let dot: f64 = y.iter().zip(gi).map(|(a, b)| a * b).sum();
                for j in 0..*cols {
                    go[j] = y[j] * (gi[j] - dot);
                }
            }
            emit(*x, gx);
        }
        Op::Dropout { x, mask } => emit(*x, g.iter().zip(mask).map(|(a, b)| a * b).collect()),
        Op::Sum { x } => emit(*x, vec![g[0]; val(*x).len()]),
        Op::Mean { x } => {
            let n = val(*x).len();
            emit(*x, vec![g[0] / n as f64; n]);
        }
        Op::SumAxis {
            x,
            outer,
            len,
            inner,
            mean,
        } => {
            let scale = if *mean { 1.0 / *len as f64 } else { 1.0 };
            let mut gx = Vec::with_capacity(outer * len * inner);
            for o in 0..*outer {
                for _ in 0..*len {
                    gx.extend(g[o * inner..(o + 1) * inner].iter().map(|v| v * scale));
                }
            }
            emit(*x, gx);
        }
        Op::VarAxis { x, outer, len, inner } => {
            let (len, inner) = (*len, *inner);
            let xv = val(*x);
            let mut gx = vec![0.0; xv.len()];
            for o in 0..*outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let mean = (0..len).map(|l| xv[at(l)]).sum::<f64>() / len as f64;
                    let gi = g[o * inner + i];
                    for l in 0..len {
                        gx[at(l)] = gi * 2.0 * (xv[at(l)] - mean) / len as f64;
                    }
                }
            }
            emit(*x, gx);
        }
        Op::Concat { parts, outer } => {
            let total: usize = parts.iter().map(|p| p.1).sum();
            let mut offset = 0;
            for &(id, chunk) in parts {
                if rg(id) {
                    let mut gp = Vec::with_capacity(outer * chunk);
                    for o in 0..*outer {
                        let at = o * total + offset;
                        gp.extend_from_slice(&g[at..at + chunk]);
                    }
                    emit(id, gp);
                }
                offset += chunk;
            }
        }
        Op::Reshape { x } => emit(*x, g.to_vec()),
        Op::IndexSelect {
            x,
            outer,
            len,
            inner,
            indices,
        } => {
            let (len, inner) = (*len, *inner);
            let k = indices.len();
            let mut gx = vec![0.0; outer * len * inner];
            for o in 0..*outer {
                for (slot, &i) in indices.iter().enumerate() {
                    let src = &g[(o * k + slot) * inner..(o * k + slot + 1) * inner];
                    gx[(o * len + i) * inner..(o * len + i + 1) * inner]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(a, b)| *a += b);
                }
            }
            emit(*x, gx);
        }
        Op::Lookup { table, codes, dim } => {
            let mut gt = vec![0.0; val(*table).len()];
            for (r, &c) in codes.iter().enumerate() {
                gt[c * dim..(c + 1) * dim]
                    .iter_mut()
                    .zip(&g[r * dim..(r + 1) * dim])
                    .for_each(|(a, b)| *a += b);
            }
            emit(*table, gt);
        }
        Op::GhostNorm {
            x,
            groups,
            cols,
            inv_std,
        } => {
            let cols = *cols;
            let xhat = &node.value;
            let mut gx = vec![0.0; g.len()];
            for (gi, &(s, e)) in groups.iter().enumerate() {
                let n = (e - s) as f64;
                for j in 0..cols {
                    let inv = inv_std[gi * cols + j];
                    let (mut sum_g, mut sum_gx) = (0.0, 0.0);
                    for r in s..e {
                        sum_g += g[r * cols + j];
                        sum_gx += g[r * cols + j] * xhat[r * cols + j];
                    }
                    for r in s..e {
                        let at = r * cols + j;
                        gx[at] = inv / n * (n * g[at] - sum_g - xhat[at] * sum_gx);
                    }
                }
            }
            emit(*x, gx);
        }
        Op::CrossEntropy {
            logits,
            labels,
            probs,
            classes,
        } => {
            let batch = labels.len() as f64;
            let mut gl = probs.clone();
            for (r, &l) in labels.iter().enumerate() {
                gl[r * classes + l] -= 1.0;
            }
            gl.iter_mut().for_each(|v| *v *= g[0] / batch);
            emit(*logits, gl);
        }
    }
}
