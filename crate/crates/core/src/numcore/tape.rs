use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a parameter registered in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors. Every stored tensor has `requires_grad` set.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor.with_requires_grad(true));
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn total_numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Accumulates gradients produced by [`Tape::backward`] into the
    /// parameters' gradient buffers.
    pub fn absorb(&mut self, grads: &Gradients) {
        for (id, g) in &grads.entries {
            self.tensors[id.0].accumulate_grad(g);
        }
    }
}

/// Gradients of a scalar loss with respect to every parameter that appeared
/// on the tape. Parameters placed on the tape but not reachable from the loss
/// get an all-zero entry.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    entries: Vec<(ParamId, Vec<f64>)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, g)| g.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.entries.iter().map(|(p, g)| (*p, g.as_slice()))
    }
}

/// Node handle on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Affine(Var, f64),
    Log(Var),
    Clamp(Var, f64, f64),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Transpose(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Dynamic computation tape for reverse-mode differentiation.
///
/// Parameters are borrowed from their store for the lifetime of the tape;
/// intermediate values are owned by it.
#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

/// Lazily zero-initialised gradient buffer for an input that needs one.
fn slot<'g>(
    nodes: &[Node<'_>],
    grads: &'g mut [Option<Vec<f64>>],
    v: Var,
) -> Option<&'g mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.get().numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

impl<'a> Tape<'a> {
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
        self.nodes[v.0].value.get()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t.with_requires_grad(false), Op::Leaf, false)
    }

    /// A leaf that receives a gradient iff the tensor has `requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    pub fn param(&mut self, store: &'a ParamStore, id: ParamId) -> Var {
        let t = store.get(id);
        self.nodes.push(Node {
            value: Value::Borrowed(t),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
            param: Some(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::contract("division by zero"));
        }
        let out = self.zip_same("div", a, b, |x, y| x / y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Div(a, b), rg))
    }

    /// `x + bias` with `bias` of length `cols(x)` broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.numel() != tx.cols() {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.clone().with_requires_grad(false);
        let cols = tx.cols();
        for row in out.data_mut().chunks_exact_mut(cols) {
            row.iter_mut().zip(tb.data()).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.map(x, |v| scale * v + shift);
        let rg = self.rg(x);
        self.push(out, Op::Affine(x, scale), rg)
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    fn map(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        Tensor::new(t.shape().to_vec(), data).expect("same shape")
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.value(x).data().iter().any(|&v| v <= 0.0) {
            return Err(Error::contract("log of non-positive value"));
        }
        let out = self.map(x, f64::ln);
        let rg = self.rg(x);
        Ok(self.push(out, Op::Log(x), rg))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.map(x, |v| v.clamp(lo, hi));
        let rg = self.rg(x);
        self.push(out, Op::Clamp(x, lo, hi), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.map(x, kernels::sigmoid);
        let rg = self.rg(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.map(x, kernels::gelu);
        let rg = self.rg(x);
        self.push(out, Op::Gelu(x), rg)
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let out = super::softmax_rows(self.value(x));
        let rg = self.rg(x);
        self.push(out, Op::SoftmaxRows(x), rg)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let cols = tx.cols();
        if tg.numel() != cols || tb.numel() != cols {
            return Err(shape_err("layer_norm", tx, tg));
        }
        if eps <= 0.0 {
            return Err(Error::contract("layer_norm eps must be positive"));
        }
        let mut xhat = vec![0.0; tx.numel()];
        let mut inv_std = vec![0.0; tx.rows()];
        kernels::standardize_rows(tx.data(), cols, eps, &mut xhat, &mut inv_std);
        let mut out = vec![0.0; xhat.len()];
        for (orow, hrow) in out.chunks_exact_mut(cols).zip(xhat.chunks_exact(cols)) {
            for j in 0..cols {
                orow[j] = tg.data()[j] * hrow[j] + tb.data()[j];
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.shape().len() != 2 {
            return Err(Error::contract("transpose expects a matrix"));
        }
        let (r, c) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::Transpose(x), rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let cols = t.cols();
        if len == 0 || start + len > cols {
            return Err(Error::contract(format!(
                "column slice {start}..{} out of range for {cols} columns",
                start + len
            )));
        }
        let rows = t.rows();
        let mut out = Vec::with_capacity(rows * len);
        for row in t.data().chunks_exact(cols) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::new(vec![rows, len], out)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::SliceCols { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::contract("concat of zero tensors")),
        };
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(shape_err("concat_cols", self.value(parts[0]), self.value(bad)));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], out)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::contract("backward on an empty tape"));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        if !lv.item().is_finite() {
            return Err(Error::Numeric(format!("loss is {}", lv.item())));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if node.param.is_some() {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let mut entries: Vec<(ParamId, Vec<f64>)> = Vec::new();
        for (node, g) in self.nodes.iter().zip(grads) {
            let Some(id) = node.param else { continue };
            let g = g.unwrap_or_else(|| vec![0.0; node.value.get().numel()]);
            match entries.iter_mut().find(|(p, _)| *p == id) {
                Some((_, acc)) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => entries.push((id, g)),
            }
        }
        Ok(Gradients { entries })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let y = node.value.get();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(ga) = slot(nodes, grads, *a) {
                    kernels::gemm(m, n, k, g, false, tb.data(), true, 1.0, ga);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    kernels::gemm(k, m, n, ta.data(), true, g, false, 1.0, gb);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = slot(nodes, grads, v) {
                        gv.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    gb.iter_mut().zip(g).for_each(|(x, d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((x, d), bv) in ga.iter_mut().zip(g).zip(db) {
                        *x += d * bv;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for ((x, d), av) in gb.iter_mut().zip(g).zip(da) {
                        *x += d * av;
                    }
                }
            }
            Op::Div(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = slot(nodes, grads, *a) {
                    for ((x, d), bv) in ga.iter_mut().zip(g).zip(db) {
                        *x += d / bv;
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (((x, d), av), bv) in gb.iter_mut().zip(g).zip(da).zip(db) {
                        *x -= d * av / (bv * bv);
                    }
                }
            }
            Op::AddRow(x, bias) => {
                let cols = y.cols();
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, d)| *a += d);
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    for row in g.chunks_exact(cols) {
                        gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                    }
                }
            }
            Op::Affine(x, scale) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, d)| *a += scale * d);
                }
            }
            Op::Log(x) => {
                let dx = self.value(*x).data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((a, d), v) in gx.iter_mut().zip(g).zip(dx) {
                        *a += d / v;
                    }
                }
            }
            Op::Clamp(x, lo, hi) => {
                let dx = self.value(*x).data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((a, d), v) in gx.iter_mut().zip(g).zip(dx) {
                        if v >= lo && v <= hi {
                            *a += d;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((a, d), s) in gx.iter_mut().zip(g).zip(y.data()) {
                        *a += d * s * (1.0 - s);
                    }
                }
            }
            Op::Gelu(x) => {
                let dx = self.value(*x).data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for ((a, d), v) in gx.iter_mut().zip(g).zip(dx) {
                        *a += d * kernels::gelu_grad(*v);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let cols = y.cols();
                if let Some(gx) = slot(nodes, grads, *x) {
                    kernels::softmax_rows_backward(y.data(), g, cols, gx);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let cols = y.cols();
                let gain_v = self.value(*gain).data();
                if let Some(gg) = slot(nodes, grads, *gain) {
                    for (grow, hrow) in g.chunks_exact(cols).zip(xhat.chunks_exact(cols)) {
                        for j in 0..cols {
                            gg[j] += grow[j] * hrow[j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    for grow in g.chunks_exact(cols) {
                        gb.iter_mut().zip(grow).for_each(|(a, d)| *a += d);
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let n = cols as f64;
                    let mut dxhat = vec![0.0; cols];
                    for (((grow, hrow), gxrow), is) in g
                        .chunks_exact(cols)
                        .zip(xhat.chunks_exact(cols))
                        .zip(gx.chunks_exact_mut(cols))
                        .zip(inv_std)
                    {
                        for j in 0..cols {
                            dxhat[j] = grow[j] * gain_v[j];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dh =
                            dxhat.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() / n;
                        for j in 0..cols {
                            gxrow[j] += is * (dxhat[j] - mean_d - hrow[j] * mean_dh);
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (y.shape()[1], y.shape()[0]);
                if let Some(gx) = slot(nodes, grads, *x) {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let len = y.cols();
                let cols = self.value(*x).cols();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (gxrow, grow) in gx.chunks_exact_mut(cols).zip(g.chunks_exact(len)) {
                        gxrow[*start..start + len]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(a, d)| *a += d);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = y.cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if let Some(gp) = slot(nodes, grads, p) {
                        for (gprow, grow) in gp.chunks_exact_mut(pc).zip(g.chunks_exact(total)) {
                            gprow
                                .iter_mut()
                                .zip(&grow[offset..offset + pc])
                                .for_each(|(a, d)| *a += d);
                        }
                    }
                    offset += pc;
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
        }
    }
}
