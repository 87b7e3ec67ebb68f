use std::collections::HashMap;

use super::tensor::{dot, gemm_acc, gemm_nt_acc, gemm_tn_acc, sigmoid, softmax_into};
use super::{AutodiffError, ParamGrads, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive recorded on the tape.
#[derive(Debug, Clone)]
pub enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Dropout { input: Var, mask: Vec<f64> },
    SliceCols { input: Var, lo: usize, hi: usize },
    SliceRows { input: Var, lo: usize, hi: usize },
    CrossEntropy { logits: Var, target: usize },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::Embedding { .. } => "embedding",
            Op::Dropout { .. } => "dropout",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    pub fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Transpose(a) | Op::Scale(a, _) | Op::Tanh(a) | Op::Sigmoid(a) | Op::Softmax(a) => {
                vec![*a]
            }
            Op::ConcatCols(xs) | Op::ConcatRows(xs) => xs.clone(),
            Op::Embedding { table, .. } => vec![*table],
            Op::Dropout { input, .. }
            | Op::SliceCols { input, .. }
            | Op::SliceRows { input, .. } => vec![*input],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node {
    op: Op,
    // `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Append-only record of a forward computation. Parameters are read from the
/// borrowed [`ParamStore`]; gradients come back as [`ParamGrads`].
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(idx)) => &self.params.entry(*idx).value,
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value: Some(value),
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node for a named parameter; repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var, AutodiffError> {
        let idx = self
            .params
            .index_of(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))?;
        if let Some(v) = self.param_vars.get(&idx) {
            return Ok(*v);
        }
        self.nodes.push(Node {
            op: Op::Param(idx),
            value: None,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(idx, v);
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", &[ta.shape(), tb.shape()]));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm_acc(&mut out, ta.data(), tb.data(), m, k, n);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(vec![m, n], out)?))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        if ta.rank() != 2 {
            return Err(shape_err("transpose", &[ta.shape()]));
        }
        let (r, c) = (ta.shape()[0], ta.shape()[1]);
        let src = ta.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        Ok(self.push(Op::Transpose(a), Tensor::new(vec![c, r], out)?))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op.name(), &[ta.shape(), tb.shape()]));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(op, t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x * c).collect(),
        )
        .expect("shape preserved");
        self.push(Op::Scale(a, c), t)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| f(*x)).collect(),
        )
        .expect("shape preserved");
        self.push(op, t)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let n = ta.last_dim();
        let mut out = vec![0.0; ta.numel()];
        for (src, dst) in ta.data().chunks(n).zip(out.chunks_mut(n)) {
            softmax_into(src, dst);
        }
        let t = Tensor::new(ta.shape().to_vec(), out).expect("shape preserved");
        self.push(Op::Softmax(a), t)
    }

    /// Concatenates along the last axis; leading extents must agree.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        let first = xs.first().ok_or(AutodiffError::Empty("concat_cols"))?;
        let lead = self.value(*first).shape();
        let lead = lead[..lead.len().saturating_sub(1)].to_vec();
        let rows = self.value(*first).outer_len();
        let mut width = 0;
        for v in xs {
            let t = self.value(*v);
            let s = t.shape();
            if t.rank() == 0 || s[..s.len() - 1] != lead[..] {
                let shapes: Vec<&[usize]> = xs.iter().map(|v| self.value(*v).shape()).collect();
                return Err(shape_err("concat_cols", &shapes));
            }
            width += t.last_dim();
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for v in xs {
                out.extend_from_slice(self.value(*v).row_slice(r));
            }
        }
        let mut shape = lead;
        shape.push(width);
        let t = Tensor::new(shape, out)?;
        Ok(self.push(Op::ConcatCols(xs.to_vec()), t))
    }

    /// Stacks rank-2 inputs along the first axis.
    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        let first = xs.first().ok_or(AutodiffError::Empty("concat_rows"))?;
        let cols = self.value(*first).last_dim();
        let mut rows = 0;
        let mut out = Vec::new();
        for v in xs {
            let t = self.value(*v);
            if t.rank() != 2 || t.last_dim() != cols {
                let shapes: Vec<&[usize]> = xs.iter().map(|v| self.value(*v).shape()).collect();
                return Err(shape_err("concat_rows", &shapes));
            }
            rows += t.shape()[0];
            out.extend_from_slice(t.data());
        }
        let t = Tensor::new(vec![rows, cols], out)?;
        Ok(self.push(Op::ConcatRows(xs.to_vec()), t))
    }

    /// Gathers rows of a `V × d` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let tt = self.value(table);
        if tt.rank() != 2 || ids.is_empty() {
            return Err(shape_err("embedding", &[tt.shape()]));
        }
        let (vocab, d) = (tt.shape()[0], tt.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    len: vocab,
                });
            }
            out.extend_from_slice(tt.row_slice(id));
        }
        let t = Tensor::new(vec![ids.len(), d], out)?;
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            t,
        ))
    }

    /// Inverted dropout with a caller-supplied keep mask (`true` = keep).
    pub fn dropout(&mut self, input: Var, keep: &[bool], rate: f64) -> Result<Var, AutodiffError> {
        let t = self.value(input);
        if keep.len() != t.numel() {
            return Err(shape_err("dropout", &[t.shape(), &[keep.len()]]));
        }
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        let scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = keep.iter().map(|&k| if k { scale } else { 0.0 }).collect();
        let data = t.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { input, mask }, out))
    }

    /// Columns `lo..hi` of the last axis.
    pub fn slice_cols(&mut self, input: Var, lo: usize, hi: usize) -> Result<Var, AutodiffError> {
        let t = self.value(input);
        let n = t.last_dim();
        if t.rank() == 0 || lo >= hi || hi > n {
            return Err(shape_err("slice_cols", &[t.shape(), &[lo, hi]]));
        }
        let mut out = Vec::with_capacity(t.outer_len() * (hi - lo));
        for r in 0..t.outer_len() {
            out.extend_from_slice(&t.row_slice(r)[lo..hi]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = hi - lo;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(Op::SliceCols { input, lo, hi }, out))
    }

    /// Rows `lo..hi` of a rank-2 input.
    pub fn slice_rows(&mut self, input: Var, lo: usize, hi: usize) -> Result<Var, AutodiffError> {
        let t = self.value(input);
        if t.rank() != 2 || lo >= hi || hi > t.shape()[0] {
            return Err(shape_err("slice_rows", &[t.shape(), &[lo, hi]]));
        }
        let n = t.last_dim();
        let out = Tensor::new(vec![hi - lo, n], t.data()[lo * n..hi * n].to_vec())?;
        Ok(self.push(Op::SliceRows { input, lo, hi }, out))
    }

    /// `−log softmax(logits)[target]` as a scalar; logits are a single row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, AutodiffError> {
        let t = self.value(logits);
        if t.outer_len() != 1 {
            return Err(shape_err("cross_entropy", &[t.shape()]));
        }
        let n = t.numel();
        if target >= n {
            return Err(AutodiffError::IndexOutOfRange {
                op: "cross_entropy",
                index: target,
                len: n,
            });
        }
        let x = t.data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - x[target];
        Ok(self.push(Op::CrossEntropy { logits, target }, Tensor::scalar(loss)))
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, xs: &[Var]) -> Result<Var, AutodiffError> {
        let mut iter = xs.iter();
        let mut acc = *iter.next().ok_or(AutodiffError::Empty("sum_scalars"))?;
        for v in iter {
            acc = self.add(acc, *v)?;
        }
        Ok(acc)
    }

    /// Reverse pass from a scalar node. Nodes are visited once each, in
    /// reverse construction order.
    pub fn backward(&self, loss: Var) -> Result<ParamGrads, AutodiffError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        let mut seed = Tensor::zeros(lt.shape());
        seed.data_mut()[0] = 1.0;
        grads[loss.0] = Some(seed);

        let mut out = ParamGrads::default();
        for k in (0..=loss.0).rev() {
            let node = &self.nodes[k];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            if let Op::Param(idx) = node.op {
                out.push(idx, g);
                continue;
            }
            self.backprop_node(k, &g, &mut grads);
        }
        Ok(out)
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> Option<&'g mut Tensor> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let shape = self.value(v).shape();
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn backprop_node(&self, k: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[k];
        let y = node.value.as_ref().expect("op nodes own their value");
        let gd = g.data();
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, kk, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(ga) = self.grad_slot(grads, *a) {
                    gemm_nt_acc(ga.data_mut(), gd, tb.data(), m, kk, n);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    gemm_tn_acc(gb.data_mut(), ta.data(), gd, m, kk, n);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (y.shape()[0], y.shape()[1]);
                if let Some(ga) = self.grad_slot(grads, *a) {
                    let gad = ga.data_mut();
                    for i in 0..r {
                        for j in 0..c {
                            gad[j * r + i] += gd[i * c + j];
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.grad_slot(grads, *v) {
                        gv.add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(gd).zip(tb.data()) {
                        *o += gi * bi;
                    }
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(gd).zip(ta.data()) {
                        *o += gi * ai;
                    }
                }
            }
            Op::Scale(a, c) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for (o, gi) in ga.data_mut().iter_mut().zip(gd) {
                        *o += c * gi;
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let width = y.last_dim();
                let mut offset = 0;
                for v in xs {
                    let w = self.value(*v).last_dim();
                    if let Some(gv) = self.grad_slot(grads, *v) {
                        for (r, dst) in gv.data_mut().chunks_mut(w).enumerate() {
                            let src = &gd[r * width + offset..r * width + offset + w];
                            for (o, s) in dst.iter_mut().zip(src) {
                                *o += s;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for v in xs {
                    let len = self.value(*v).numel();
                    if let Some(gv) = self.grad_slot(grads, *v) {
                        for (o, s) in gv.data_mut().iter_mut().zip(&gd[offset..offset + len]) {
                            *o += s;
                        }
                    }
                    offset += len;
                }
            }
            Op::Tanh(a) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += gi * (1.0 - yi * yi);
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((o, gi), yi) in ga.data_mut().iter_mut().zip(gd).zip(y.data()) {
                        *o += gi * yi * (1.0 - yi);
                    }
                }
            }
            Op::Softmax(a) => {
                let n = y.last_dim();
                if let Some(ga) = self.grad_slot(grads, *a) {
                    for ((dst, gr), yr) in ga
                        .data_mut()
                        .chunks_mut(n)
                        .zip(gd.chunks(n))
                        .zip(y.data().chunks(n))
                    {
                        let inner = dot(gr, yr);
                        for ((o, gi), yi) in dst.iter_mut().zip(gr).zip(yr) {
                            *o += yi * (gi - inner);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = y.last_dim();
                if let Some(gt) = self.grad_slot(grads, *table) {
                    let gtd = gt.data_mut();
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, s) in gtd[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&gd[r * d..(r + 1) * d])
                        {
                            *o += s;
                        }
                    }
                }
            }
            Op::Dropout { input, mask } => {
                if let Some(ga) = self.grad_slot(grads, *input) {
                    for ((o, gi), m) in ga.data_mut().iter_mut().zip(gd).zip(mask) {
                        *o += gi * m;
                    }
                }
            }
            Op::SliceCols { input, lo, hi } => {
                let n = self.value(*input).last_dim();
                let w = hi - lo;
                if let Some(ga) = self.grad_slot(grads, *input) {
                    for (r, src) in gd.chunks(w).enumerate() {
                        for (o, s) in ga.data_mut()[r * n + lo..r * n + hi].iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                }
            }
            Op::SliceRows { input, lo, hi } => {
                let n = y.last_dim();
                if let Some(ga) = self.grad_slot(grads, *input) {
                    for (o, s) in ga.data_mut()[lo * n..hi * n].iter_mut().zip(gd) {
                        *o += s;
                    }
                }
            }
            Op::CrossEntropy { logits, target } => {
                let x = self.value(*logits).data().to_vec();
                let mut p = vec![0.0; x.len()];
                softmax_into(&x, &mut p);
                p[*target] -= 1.0;
                let scale = gd[0];
                if let Some(gl) = self.grad_slot(grads, *logits) {
                    for (o, pi) in gl.data_mut().iter_mut().zip(&p) {
                        *o += scale * pi;
                    }
                }
            }
        }
    }
}
