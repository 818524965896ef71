//! The forward tape and reverse pass.

use alloc::format;
use alloc::vec::Vec;

use crate::float;
use crate::matchers::SimilarityKind;

use super::{ParamGrads, ParamId, ParamStore, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    ReadParam(ParamId),
    Embed { table: ParamId, ids: Vec<u32> },
    Dense { x: NodeId, w: ParamId, b: ParamId },
    Conv1d { x: NodeId, k: ParamId, b: Option<ParamId> },
    Conv2d { x: NodeId, k: ParamId, b: Option<ParamId> },
    MaxPool1d { x: NodeId, argmax: Vec<usize> },
    MaxPool2d { x: NodeId, argmax: Vec<usize> },
    DynMaxPool2d { x: NodeId, argmax: Vec<usize> },
    DynMaxPool1d { x: NodeId, argmax: Vec<usize> },
    RowMax { x: NodeId, argmax: Vec<usize> },
    Relu { x: NodeId },
    Tanh { x: NodeId },
    Concat { xs: Vec<NodeId> },
    Reshape { x: NodeId },
    Pad2d { x: NodeId },
    SimMatrix { q: NodeId, d: NodeId, kind: SimilarityKind },
    Cosine { u: NodeId, v: NodeId },
    Hinge { pos: NodeId, neg: NodeId, margin: f64 },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    Sum { x: NodeId },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// One forward computation. Append ops, read values, then run
/// [`Tape::backward`] from a scalar node to collect parameter gradients.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    /// Smallest margin to a non-differentiable point seen anywhere in the
    /// forward pass: pooling top-two gaps, relu inputs near zero, and
    /// hinge pre-activations near zero. Finite-difference checks treat a
    /// small margin as a hazard and resample.
    min_kink_gap: f64,
}

fn mismatch(op: &'static str, detail: alloc::string::String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new(), min_kink_gap: f64::INFINITY }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    /// Argmax record of a pooling node: flat input indices, one per output
    /// element, in output order. `None` for non-pooling nodes.
    pub fn pool_argmax(&self, id: NodeId) -> Option<&[usize]> {
        match &self.nodes[id.0].op {
            Op::MaxPool1d { argmax, .. }
            | Op::MaxPool2d { argmax, .. }
            | Op::DynMaxPool2d { argmax, .. }
            | Op::DynMaxPool1d { argmax, .. }
            | Op::RowMax { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Smallest margin to any non-differentiable decision (pooling argmax
    /// runner-up gap, relu or hinge boundary distance) in this forward
    /// pass.
    pub fn min_kink_gap(&self) -> f64 {
        self.min_kink_gap
    }

    // ---- leaf ops ----

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn read_param(&mut self, id: ParamId) -> NodeId {
        let value = self.store.value(id).clone();
        self.push(Op::ReadParam(id), value)
    }

    /// Gathers embedding rows: table `(V, dim)`, output `(len(ids), dim)`.
    pub fn embed(&mut self, table: ParamId, ids: &[u32]) -> Result<NodeId, TensorError> {
        if ids.is_empty() {
            return Err(TensorError::EmptyInput { op: "embed" });
        }
        let t = self.store.value(table);
        let [vocab, dim] = two_dims(t, "embed")?;
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            let row = id as usize;
            if row >= vocab {
                return Err(mismatch(
                    "embed",
                    format!("token id {row} outside table with {vocab} rows"),
                ));
            }
            data.extend_from_slice(&t.data()[row * dim..(row + 1) * dim]);
        }
        let value = Tensor::new(alloc::vec![ids.len(), dim], data);
        Ok(self.push(Op::Embed { table, ids: ids.to_vec() }, value))
    }

    // ---- dense / conv ----

    /// `y = W x + b` with `x: (n)`, `W: (m, n)`, `b: (m)`.
    pub fn dense(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let wv = self.store.value(w);
        let bv = self.store.value(b);
        let n = one_dim(xv, "dense")?;
        let [m, wn] = two_dims(wv, "dense")?;
        let bm = one_dim(bv, "dense")?;
        if wn != n || bm != m {
            return Err(mismatch(
                "dense",
                format!("x ({n}), W ({m}, {wn}), b ({bm}) do not combine"),
            ));
        }
        let mut out = Vec::with_capacity(m);
        for row in 0..m {
            let wrow = &wv.data()[row * n..(row + 1) * n];
            let mut acc = bv.data()[row];
            for (wi, xi) in wrow.iter().zip(xv.data()) {
                acc += wi * xi;
            }
            out.push(acc);
        }
        Ok(self.push(Op::Dense { x, w, b }, Tensor::vector(out)))
    }

    /// Valid 1-D convolution: `x: (L, Cin)`, kernels `(Cout, W, Cin)`,
    /// optional bias `(Cout)`, output `(L - W + 1, Cout)`.
    pub fn conv1d(
        &mut self,
        x: NodeId,
        k: ParamId,
        b: Option<ParamId>,
    ) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let kv = self.store.value(k);
        let [len, cin] = two_dims(xv, "conv1d")?;
        let [cout, width, kcin] = three_dims(kv, "conv1d")?;
        if kcin != cin {
            return Err(mismatch(
                "conv1d",
                format!("input channels {cin} vs kernel channels {kcin}"),
            ));
        }
        if len < width {
            return Err(mismatch(
                "conv1d",
                format!("input length {len} shorter than kernel width {width}"),
            ));
        }
        let bias = match b {
            Some(pid) => {
                let bv = self.store.value(pid);
                if one_dim(bv, "conv1d")? != cout {
                    return Err(mismatch(
                        "conv1d",
                        format!("bias length {} vs {cout} channels", bv.len()),
                    ));
                }
                Some(pid)
            }
            None => None,
        };
        let out_len = len - width + 1;
        let mut out = alloc::vec![0.0; out_len * cout];
        let xd = xv.data();
        let kd = kv.data();
        for t in 0..out_len {
            for co in 0..cout {
                let mut acc = match bias {
                    Some(pid) => self.store.value(pid).data()[co],
                    None => 0.0,
                };
                let kbase = co * width * cin;
                for dw in 0..width {
                    let xrow = &xd[(t + dw) * cin..(t + dw + 1) * cin];
                    let krow = &kd[kbase + dw * cin..kbase + (dw + 1) * cin];
                    for (kc, xc) in krow.iter().zip(xrow) {
                        acc += kc * xc;
                    }
                }
                out[t * cout + co] = acc;
            }
        }
        let value = Tensor::new(alloc::vec![out_len, cout], out);
        Ok(self.push(Op::Conv1d { x, k, b: bias }, value))
    }

    /// Valid 2-D convolution: `x: (H, W, Cin)`, kernels
    /// `(Cout, KH, KW, Cin)`, optional bias `(Cout)`, output
    /// `(H - KH + 1, W - KW + 1, Cout)`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: ParamId,
        b: Option<ParamId>,
    ) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let kv = self.store.value(k);
        let [h, w, cin] = three_dims(xv, "conv2d")?;
        let kshape = kv.shape();
        if kshape.len() != 4 {
            return Err(mismatch("conv2d", format!("kernel rank {} != 4", kshape.len())));
        }
        let (cout, kh, kw, kcin) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if kcin != cin {
            return Err(mismatch(
                "conv2d",
                format!("input channels {cin} vs kernel channels {kcin}"),
            ));
        }
        if h < kh || w < kw {
            return Err(mismatch(
                "conv2d",
                format!("input ({h}, {w}) smaller than kernel ({kh}, {kw})"),
            ));
        }
        let bias = match b {
            Some(pid) => {
                let bv = self.store.value(pid);
                if one_dim(bv, "conv2d")? != cout {
                    return Err(mismatch(
                        "conv2d",
                        format!("bias length {} vs {cout} channels", bv.len()),
                    ));
                }
                Some(pid)
            }
            None => None,
        };
        let oh = h - kh + 1;
        let ow = w - kw + 1;
        let mut out = alloc::vec![0.0; oh * ow * cout];
        let xd = xv.data();
        let kd = kv.data();
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..cout {
                    let mut acc = match bias {
                        Some(pid) => self.store.value(pid).data()[co],
                        None => 0.0,
                    };
                    let kbase = co * kh * kw * cin;
                    for dy in 0..kh {
                        for dx in 0..kw {
                            let xbase = ((oy + dy) * w + (ox + dx)) * cin;
                            let koff = kbase + (dy * kw + dx) * cin;
                            for c in 0..cin {
                                acc += kd[koff + c] * xd[xbase + c];
                            }
                        }
                    }
                    out[(oy * ow + ox) * cout + co] = acc;
                }
            }
        }
        let value = Tensor::new(alloc::vec![oh, ow, cout], out);
        Ok(self.push(Op::Conv2d { x, k, b: bias }, value))
    }

    // ---- pooling ----

    /// Non-overlapping max pooling over time. `x` is `(L, C)` or `(L)`; a
    /// short final window pools the remainder. Records argmaxes.
    pub fn maxpool1d(&mut self, x: NodeId, window: usize) -> Result<NodeId, TensorError> {
        assert!(window >= 1, "window must be at least 1");
        let xv = self.value(x);
        let (len, channels, rank1) = match xv.shape() {
            [l] => (*l, 1usize, true),
            [l, c] => (*l, *c, false),
            other => {
                return Err(mismatch("maxpool1d", format!("rank {} input", other.len())));
            }
        };
        if len == 0 {
            return Err(TensorError::EmptyInput { op: "maxpool1d" });
        }
        let out_len = len.div_ceil(window);
        let mut out = alloc::vec![f64::NEG_INFINITY; out_len * channels];
        let mut argmax = alloc::vec![0usize; out_len * channels];
        let mut gap = self.min_kink_gap;
        let xd = xv.data();
        for t in 0..out_len {
            let lo = t * window;
            let hi = usize::min(lo + window, len);
            for c in 0..channels {
                let (best_idx, best, second) = window_max(xd, (lo..hi).map(|l| l * channels + c));
                out[t * channels + c] = best;
                argmax[t * channels + c] = best_idx;
                gap = gap.min(best - second);
            }
        }
        self.min_kink_gap = gap;
        let shape = if rank1 { alloc::vec![out_len] } else { alloc::vec![out_len, channels] };
        Ok(self.push(Op::MaxPool1d { x, argmax }, Tensor::new(shape, out)))
    }

    /// Non-overlapping 2-D max pooling on `(H, W, C)` with window
    /// `(wh, ww)`; short edge windows pool the remainder.
    pub fn maxpool2d(
        &mut self,
        x: NodeId,
        window: (usize, usize),
    ) -> Result<NodeId, TensorError> {
        assert!(window.0 >= 1 && window.1 >= 1, "window must be at least 1x1");
        let xv = self.value(x);
        let [h, w, c] = three_dims(xv, "maxpool2d")?;
        if h == 0 || w == 0 {
            return Err(TensorError::EmptyInput { op: "maxpool2d" });
        }
        let oh = h.div_ceil(window.0);
        let ow = w.div_ceil(window.1);
        let mut out = alloc::vec![f64::NEG_INFINITY; oh * ow * c];
        let mut argmax = alloc::vec![0usize; oh * ow * c];
        let mut gap = self.min_kink_gap;
        let xd = xv.data();
        for by in 0..oh {
            for bx in 0..ow {
                let y_hi = usize::min((by + 1) * window.0, h);
                let x_hi = usize::min((bx + 1) * window.1, w);
                for ch in 0..c {
                    let cells = (by * window.0..y_hi)
                        .flat_map(|y| (bx * window.1..x_hi).map(move |xx| (y * w + xx) * c + ch));
                    let (best_idx, best, second) = window_max(xd, cells);
                    out[(by * ow + bx) * c + ch] = best;
                    argmax[(by * ow + bx) * c + ch] = best_idx;
                    gap = gap.min(best - second);
                }
            }
        }
        self.min_kink_gap = gap;
        let value = Tensor::new(alloc::vec![oh, ow, c], out);
        Ok(self.push(Op::MaxPool2d { x, argmax }, value))
    }

    /// Dynamic max pooling of `(H, W, C)` onto a fixed `(P, Q, C)` grid.
    /// Block boundaries are `floor(i * H / P)`; when the input is smaller
    /// than the grid, blocks repeat rows or columns so every cell pools a
    /// nonempty region.
    pub fn dyn_maxpool2d(
        &mut self,
        x: NodeId,
        grid: (usize, usize),
    ) -> Result<NodeId, TensorError> {
        assert!(grid.0 >= 1 && grid.1 >= 1, "grid must be at least 1x1");
        let xv = self.value(x);
        let [h, w, c] = three_dims(xv, "dyn_maxpool2d")?;
        if h == 0 || w == 0 {
            return Err(TensorError::EmptyInput { op: "dyn_maxpool2d" });
        }
        let (p, q) = grid;
        let mut out = alloc::vec![f64::NEG_INFINITY; p * q * c];
        let mut argmax = alloc::vec![0usize; p * q * c];
        let mut gap = self.min_kink_gap;
        let xd = xv.data();
        for by in 0..p {
            let (y_lo, y_hi) = dyn_block(by, p, h);
            for bx in 0..q {
                let (x_lo, x_hi) = dyn_block(bx, q, w);
                for ch in 0..c {
                    let cells = (y_lo..y_hi)
                        .flat_map(|y| (x_lo..x_hi).map(move |xx| (y * w + xx) * c + ch));
                    let (best_idx, best, second) = window_max(xd, cells);
                    out[(by * q + bx) * c + ch] = best;
                    argmax[(by * q + bx) * c + ch] = best_idx;
                    gap = gap.min(best - second);
                }
            }
        }
        self.min_kink_gap = gap;
        let value = Tensor::new(alloc::vec![p, q, c], out);
        Ok(self.push(Op::DynMaxPool2d { x, argmax }, value))
    }

    /// Dynamic max pooling of a vector onto `bins` cells, same block rule
    /// as [`Tape::dyn_maxpool2d`].
    pub fn dyn_maxpool1d(&mut self, x: NodeId, bins: usize) -> Result<NodeId, TensorError> {
        assert!(bins >= 1, "bins must be at least 1");
        let xv = self.value(x);
        let len = one_dim(xv, "dyn_maxpool1d")?;
        if len == 0 {
            return Err(TensorError::EmptyInput { op: "dyn_maxpool1d" });
        }
        let mut out = alloc::vec![f64::NEG_INFINITY; bins];
        let mut argmax = alloc::vec![0usize; bins];
        let mut gap = self.min_kink_gap;
        let xd = xv.data();
        for b in 0..bins {
            let (lo, hi) = dyn_block(b, bins, len);
            let (best_idx, best, second) = window_max(xd, lo..hi);
            out[b] = best;
            argmax[b] = best_idx;
            gap = gap.min(best - second);
        }
        self.min_kink_gap = gap;
        Ok(self.push(Op::DynMaxPool1d { x, argmax }, Tensor::vector(out)))
    }

    /// Per-row maximum of a `(H, W)` matrix, argmaxes recorded.
    pub fn row_max(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let [h, w] = two_dims(xv, "row_max")?;
        if w == 0 {
            return Err(TensorError::EmptyInput { op: "row_max" });
        }
        let mut out = alloc::vec![f64::NEG_INFINITY; h];
        let mut argmax = alloc::vec![0usize; h];
        let mut gap = self.min_kink_gap;
        let xd = xv.data();
        for row in 0..h {
            let (best_idx, best, second) = window_max(xd, row * w..(row + 1) * w);
            out[row] = best;
            argmax[row] = best_idx;
            gap = gap.min(best - second);
        }
        self.min_kink_gap = gap;
        Ok(self.push(Op::RowMax { x, argmax }, Tensor::vector(out)))
    }

    // ---- elementwise and glue ----

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut gap = self.min_kink_gap;
        for &v in self.value(x).data() {
            gap = gap.min(v.abs());
        }
        self.min_kink_gap = gap;
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| v.max(0.0)).collect(),
        );
        self.push(Op::Relu { x }, value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| float::tanh(v)).collect(),
        );
        self.push(Op::Tanh { x }, value)
    }

    /// Concatenates rank-1 vectors.
    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::new();
        for &id in xs {
            let v = self.value(id);
            one_dim(v, "concat")?;
            data.extend_from_slice(v.data());
        }
        Ok(self.push(Op::Concat { xs: xs.to_vec() }, Tensor::vector(data)))
    }

    /// Grows a `(H, W)` matrix to `(rows, cols)`, filling new cells with
    /// `value`. The original block keeps its gradient; padding gets none.
    pub fn pad2d(
        &mut self,
        x: NodeId,
        rows: usize,
        cols: usize,
        value: f64,
    ) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        let [h, w] = two_dims(xv, "pad2d")?;
        if rows < h || cols < w {
            return Err(mismatch(
                "pad2d",
                format!("cannot pad ({h}, {w}) down to ({rows}, {cols})"),
            ));
        }
        let mut data = alloc::vec![value; rows * cols];
        for y in 0..h {
            data[y * cols..y * cols + w].copy_from_slice(&xv.data()[y * w..(y + 1) * w]);
        }
        let out = Tensor::new(alloc::vec![rows, cols], data);
        Ok(self.push(Op::Pad2d { x }, out))
    }

    /// Same data, new shape; the element count must match.
    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(mismatch(
                "reshape",
                format!("cannot view {:?} as {shape:?}", xv.shape()),
            ));
        }
        let value = Tensor::new(shape, xv.data().to_vec());
        Ok(self.push(Op::Reshape { x }, value))
    }

    /// Word-pair similarity matrix: `q: (m, dim)`, `d: (n, dim)`, output
    /// `(m, n)` with entry `(i, j) = kind.similarity(q_i, d_j)`.
    pub fn sim_matrix(
        &mut self,
        q: NodeId,
        d: NodeId,
        kind: SimilarityKind,
    ) -> Result<NodeId, TensorError> {
        let qv = self.value(q);
        let dv = self.value(d);
        let [m, qdim] = two_dims(qv, "sim_matrix")?;
        let [n, ddim] = two_dims(dv, "sim_matrix")?;
        if qdim != ddim {
            return Err(mismatch(
                "sim_matrix",
                format!("embedding dims differ: {qdim} vs {ddim}"),
            ));
        }
        let mut out = alloc::vec![0.0; m * n];
        for i in 0..m {
            let u = &qv.data()[i * qdim..(i + 1) * qdim];
            for j in 0..n {
                let v = &dv.data()[j * ddim..(j + 1) * ddim];
                out[i * n + j] = kind.similarity(u, v);
            }
        }
        let value = Tensor::new(alloc::vec![m, n], out);
        Ok(self.push(Op::SimMatrix { q, d, kind }, value))
    }

    /// Cosine of two vectors; 0 when either is the zero vector.
    pub fn cosine(&mut self, u: NodeId, v: NodeId) -> Result<NodeId, TensorError> {
        let un = one_dim(self.value(u), "cosine")?;
        let vn = one_dim(self.value(v), "cosine")?;
        if un != vn {
            return Err(mismatch("cosine", format!("lengths {un} vs {vn}")));
        }
        let value = SimilarityKind::Cosine.similarity(self.value(u).data(), self.value(v).data());
        Ok(self.push(Op::Cosine { u, v }, Tensor::scalar(value)))
    }

    /// Pairwise hinge `max(0, margin - pos + neg)` on two scalars.
    pub fn hinge(&mut self, pos: NodeId, neg: NodeId, margin: f64) -> Result<NodeId, TensorError> {
        scalar_only(self.value(pos), "hinge")?;
        scalar_only(self.value(neg), "hinge")?;
        let pre = margin - self.value(pos).item() + self.value(neg).item();
        self.min_kink_gap = self.min_kink_gap.min(pre.abs());
        Ok(self.push(Op::Hinge { pos, neg, margin }, Tensor::scalar(pre.max(0.0))))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(mismatch(
                "add",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data);
        Ok(self.push(Op::Add { a, b }, value))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|v| v * c).collect(),
        );
        self.push(Op::Scale { x, c }, value)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self.value(x).data().iter().sum();
        self.push(Op::Sum { x }, Tensor::scalar(total))
    }

    // ---- reverse pass ----

    /// Propagates `scale` from the scalar `loss` node back to every
    /// reachable parameter. The tape is consumed; add the result to the
    /// store with [`ParamStore::accumulate`].
    pub fn backward(self, loss: NodeId, scale: f64) -> Result<ParamGrads, TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        let mut node_grads: Vec<Option<Tensor>> = alloc::vec![None; self.nodes.len()];
        node_grads[loss.0] = Some(Tensor::new(
            self.value(loss).shape().to_vec(),
            alloc::vec![scale],
        ));
        let mut param_grads = ParamGrads::new(self.store.len());

        for idx in (0..self.nodes.len()).rev() {
            let Some(gy) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::ReadParam(pid) => {
                    add_into(param_grads.entry(*pid, node.value.shape()), gy.data());
                }
                Op::Embed { table, ids } => {
                    let dim = node.value.shape()[1];
                    let shape = self.store.value(*table).shape().to_vec();
                    let gt = param_grads.entry(*table, &shape);
                    for (pos, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id as usize * dim..(id as usize + 1) * dim];
                        for (d, s) in dst.iter_mut().zip(&gy.data()[pos * dim..(pos + 1) * dim]) {
                            *d += s;
                        }
                    }
                }
                Op::Dense { x, w, b } => {
                    let xv = self.nodes[x.0].value.data();
                    let wv = self.store.value(*w);
                    let (m, n) = (wv.shape()[0], wv.shape()[1]);
                    {
                        let gw = param_grads.entry(*w, wv.shape());
                        for row in 0..m {
                            let g = gy.data()[row];
                            let dst = &mut gw.data_mut()[row * n..(row + 1) * n];
                            for (d, xi) in dst.iter_mut().zip(xv) {
                                *d += g * xi;
                            }
                        }
                    }
                    add_into(
                        param_grads.entry(*b, self.store.value(*b).shape()),
                        gy.data(),
                    );
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for row in 0..m {
                        let g = gy.data()[row];
                        let wrow = &wv.data()[row * n..(row + 1) * n];
                        for (d, wi) in gx.data_mut().iter_mut().zip(wrow) {
                            *d += g * wi;
                        }
                    }
                }
                Op::Conv1d { x, k, b } => {
                    let xv = &self.nodes[x.0].value;
                    let kv = self.store.value(*k);
                    let (cout, width, cin) = (kv.shape()[0], kv.shape()[1], kv.shape()[2]);
                    let out_len = node.value.shape()[0];
                    {
                        let gk = param_grads.entry(*k, kv.shape());
                        let gkd = gk.data_mut();
                        for t in 0..out_len {
                            for co in 0..cout {
                                let g = gy.data()[t * cout + co];
                                if g == 0.0 {
                                    continue;
                                }
                                let kbase = co * width * cin;
                                for dw in 0..width {
                                    let xrow = &xv.data()[(t + dw) * cin..(t + dw + 1) * cin];
                                    let dst = &mut gkd[kbase + dw * cin..kbase + (dw + 1) * cin];
                                    for (d, xc) in dst.iter_mut().zip(xrow) {
                                        *d += g * xc;
                                    }
                                }
                            }
                        }
                    }
                    if let Some(bid) = b {
                        let gb = param_grads.entry(*bid, self.store.value(*bid).shape());
                        for t in 0..out_len {
                            for co in 0..cout {
                                gb.data_mut()[co] += gy.data()[t * cout + co];
                            }
                        }
                    }
                    let gx = grad_slot(&mut node_grads, x.0, xv.shape());
                    let gxd = gx.data_mut();
                    for t in 0..out_len {
                        for co in 0..cout {
                            let g = gy.data()[t * cout + co];
                            if g == 0.0 {
                                continue;
                            }
                            let kbase = co * width * cin;
                            for dw in 0..width {
                                let krow = &kv.data()[kbase + dw * cin..kbase + (dw + 1) * cin];
                                let dst = &mut gxd[(t + dw) * cin..(t + dw + 1) * cin];
                                for (d, kc) in dst.iter_mut().zip(krow) {
                                    *d += g * kc;
                                }
                            }
                        }
                    }
                }
                Op::Conv2d { x, k, b } => {
                    let xv = &self.nodes[x.0].value;
                    let kv = self.store.value(*k);
                    let (cout, kh, kw, cin) =
                        (kv.shape()[0], kv.shape()[1], kv.shape()[2], kv.shape()[3]);
                    let (oh, ow) = (node.value.shape()[0], node.value.shape()[1]);
                    let w = xv.shape()[1];
                    {
                        let gk = param_grads.entry(*k, kv.shape());
                        let gkd = gk.data_mut();
                        for oy in 0..oh {
                            for ox in 0..ow {
                                for co in 0..cout {
                                    let g = gy.data()[(oy * ow + ox) * cout + co];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    let kbase = co * kh * kw * cin;
                                    for dy in 0..kh {
                                        for dx in 0..kw {
                                            let xbase = ((oy + dy) * w + (ox + dx)) * cin;
                                            let koff = kbase + (dy * kw + dx) * cin;
                                            for c in 0..cin {
                                                gkd[koff + c] += g * xv.data()[xbase + c];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    if let Some(bid) = b {
                        let gb = param_grads.entry(*bid, self.store.value(*bid).shape());
                        for oy in 0..oh {
                            for ox in 0..ow {
                                for co in 0..cout {
                                    gb.data_mut()[co] += gy.data()[(oy * ow + ox) * cout + co];
                                }
                            }
                        }
                    }
                    let gx = grad_slot(&mut node_grads, x.0, xv.shape());
                    let gxd = gx.data_mut();
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for co in 0..cout {
                                let g = gy.data()[(oy * ow + ox) * cout + co];
                                if g == 0.0 {
                                    continue;
                                }
                                let kbase = co * kh * kw * cin;
                                for dy in 0..kh {
                                    for dx in 0..kw {
                                        let xbase = ((oy + dy) * w + (ox + dx)) * cin;
                                        let koff = kbase + (dy * kw + dx) * cin;
                                        for c in 0..cin {
                                            gxd[xbase + c] += g * kv.data()[koff + c];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Op::MaxPool1d { x, argmax, .. }
                | Op::MaxPool2d { x, argmax, .. }
                | Op::DynMaxPool2d { x, argmax, .. }
                | Op::DynMaxPool1d { x, argmax, .. }
                | Op::RowMax { x, argmax } => {
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for (out_idx, &in_idx) in argmax.iter().enumerate() {
                        gx.data_mut()[in_idx] += gy.data()[out_idx];
                    }
                }
                Op::Relu { x } => {
                    let xv = &self.nodes[x.0].value;
                    let gx = grad_slot(&mut node_grads, x.0, xv.shape());
                    for ((d, &xi), g) in gx.data_mut().iter_mut().zip(xv.data()).zip(gy.data()) {
                        if xi > 0.0 {
                            *d += g;
                        }
                    }
                }
                Op::Tanh { x } => {
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for ((d, &y), g) in gx.data_mut().iter_mut().zip(node.value.data()).zip(gy.data())
                    {
                        *d += g * (1.0 - y * y);
                    }
                }
                Op::Concat { xs } => {
                    let mut offset = 0;
                    for &id in xs {
                        let len = self.nodes[id.0].value.len();
                        let gx = grad_slot(&mut node_grads, id.0, self.nodes[id.0].value.shape());
                        add_into(gx, &gy.data()[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::Reshape { x } => {
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    add_into(gx, gy.data());
                }
                Op::Pad2d { x } => {
                    let (h, w) = {
                        let s = self.nodes[x.0].value.shape();
                        (s[0], s[1])
                    };
                    let cols = node.value.shape()[1];
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for y in 0..h {
                        let dst = &mut gx.data_mut()[y * w..(y + 1) * w];
                        let src = &gy.data()[y * cols..y * cols + w];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                Op::SimMatrix { q, d, kind } => {
                    let qv = &self.nodes[q.0].value;
                    let dv = &self.nodes[d.0].value;
                    let (m, dim) = (qv.shape()[0], qv.shape()[1]);
                    let n = dv.shape()[0];
                    let mut gq = Tensor::zeros(qv.shape().to_vec());
                    let mut gd = Tensor::zeros(dv.shape().to_vec());
                    let mut du = alloc::vec![0.0; dim];
                    let mut dvv = alloc::vec![0.0; dim];
                    for i in 0..m {
                        let u = &qv.data()[i * dim..(i + 1) * dim];
                        for j in 0..n {
                            let g = gy.data()[i * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            let v = &dv.data()[j * dim..(j + 1) * dim];
                            kind.similarity_grad(u, v, &mut du, &mut dvv);
                            let dst_u = &mut gq.data_mut()[i * dim..(i + 1) * dim];
                            for (dst, s) in dst_u.iter_mut().zip(&du) {
                                *dst += g * s;
                            }
                            let dst_v = &mut gd.data_mut()[j * dim..(j + 1) * dim];
                            for (dst, s) in dst_v.iter_mut().zip(&dvv) {
                                *dst += g * s;
                            }
                        }
                    }
                    add_into(grad_slot(&mut node_grads, q.0, qv.shape()), gq.data());
                    add_into(grad_slot(&mut node_grads, d.0, dv.shape()), gd.data());
                }
                Op::Cosine { u, v } => {
                    let uv = &self.nodes[u.0].value;
                    let vv = &self.nodes[v.0].value;
                    let dim = uv.len();
                    let mut du = alloc::vec![0.0; dim];
                    let mut dv = alloc::vec![0.0; dim];
                    SimilarityKind::Cosine.similarity_grad(uv.data(), vv.data(), &mut du, &mut dv);
                    let g = gy.data()[0];
                    for d in du.iter_mut() {
                        *d *= g;
                    }
                    for d in dv.iter_mut() {
                        *d *= g;
                    }
                    add_into(grad_slot(&mut node_grads, u.0, uv.shape()), &du);
                    add_into(grad_slot(&mut node_grads, v.0, vv.shape()), &dv);
                }
                Op::Hinge { pos, neg, margin } => {
                    let active = *margin - self.nodes[pos.0].value.item()
                        + self.nodes[neg.0].value.item()
                        > 0.0;
                    if active {
                        let g = gy.data()[0];
                        grad_slot(&mut node_grads, pos.0, &[]).data_mut()[0] -= g;
                        grad_slot(&mut node_grads, neg.0, &[]).data_mut()[0] += g;
                    }
                }
                Op::Add { a, b } => {
                    add_into(
                        grad_slot(&mut node_grads, a.0, self.nodes[a.0].value.shape()),
                        gy.data(),
                    );
                    add_into(
                        grad_slot(&mut node_grads, b.0, self.nodes[b.0].value.shape()),
                        gy.data(),
                    );
                }
                Op::Scale { x, c } => {
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for (d, g) in gx.data_mut().iter_mut().zip(gy.data()) {
                        *d += g * c;
                    }
                }
                Op::Sum { x } => {
                    let g = gy.data()[0];
                    let gx = grad_slot(&mut node_grads, x.0, self.nodes[x.0].value.shape());
                    for d in gx.data_mut() {
                        *d += g;
                    }
                }
            }
        }
        Ok(param_grads)
    }
}

/// Block `[floor(i n / bins), floor((i+1) n / bins))`, forced nonempty by
/// clamping so undersized inputs repeat elements across blocks.
fn dyn_block(i: usize, bins: usize, n: usize) -> (usize, usize) {
    let lo = usize::min(i * n / bins, n - 1);
    let hi = usize::max((i + 1) * n / bins, lo + 1).min(n).max(lo + 1);
    (lo, hi)
}

/// Max, argmax (lowest index on ties), and runner-up over the indexed cells.
fn window_max(data: &[f64], cells: impl Iterator<Item = usize>) -> (usize, f64, f64) {
    let mut best = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    let mut best_idx = usize::MAX;
    for idx in cells {
        let v = data[idx];
        if v > best {
            second = best;
            best = v;
            best_idx = idx;
        } else if v > second {
            second = v;
        }
    }
    (best_idx, best, second)
}

fn grad_slot<'g>(
    grads: &'g mut [Option<Tensor>],
    idx: usize,
    shape: &[usize],
) -> &'g mut Tensor {
    grads[idx].get_or_insert_with(|| Tensor::zeros(shape.to_vec()))
}

fn add_into(dst: &mut Tensor, src: &[f64]) {
    for (d, s) in dst.data_mut().iter_mut().zip(src) {
        *d += s;
    }
}

fn one_dim(t: &Tensor, op: &'static str) -> Result<usize, TensorError> {
    match t.shape() {
        [n] => Ok(*n),
        other => Err(mismatch(op, format!("expected a vector, got rank {}", other.len()))),
    }
}

fn two_dims(t: &Tensor, op: &'static str) -> Result<[usize; 2], TensorError> {
    match t.shape() {
        [a, b] => Ok([*a, *b]),
        other => Err(mismatch(op, format!("expected rank 2, got rank {}", other.len()))),
    }
}

fn three_dims(t: &Tensor, op: &'static str) -> Result<[usize; 3], TensorError> {
    match t.shape() {
        [a, b, c] => Ok([*a, *b, *c]),
        other => Err(mismatch(op, format!("expected rank 3, got rank {}", other.len()))),
    }
}

fn scalar_only(t: &Tensor, op: &'static str) -> Result<(), TensorError> {
    if t.len() == 1 {
        Ok(())
    } else {
        Err(mismatch(op, format!("expected a scalar, got shape {:?}", t.shape())))
    }
}
