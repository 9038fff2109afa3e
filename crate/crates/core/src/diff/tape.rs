use super::tensor::{gemm, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    ScaleRows(Var, Vec<f64>),
    MulConst(Var, Tensor),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Log(Var),
    RowSum(Var),
    RowMean(Var),
    SumAll(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatRows(Vec<Var>),
    Pick(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Record of primitive operations, replayed backwards by [`Tape::backward`].
///
/// Nodes are appended in evaluation order, so the vector order is already a
/// topological order and the reverse pass is a single backwards sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every recorded node that
/// depends on a leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::dim(
        op,
        format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
    )
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Const, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn zip(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// `a + 1·row` where `row` is `1 × cols(a)` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tr));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tr.data()[i % c];
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(out, Op::AddRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        let ng = self.ng(a);
        Ok(self.push(out, Op::Scale(a, s), ng))
    }

    /// `a · s` where `s` is a differentiable `1 × 1` scalar.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.shape() != [1, 1] {
            return Err(shape_err("scale_by", self.value(a), ts));
        }
        let k = ts.item();
        let out = self.value(a).map(|x| x * k);
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(out, Op::ScaleBy(a, s), ng))
    }

    /// Row `i` of `a` multiplied by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Vec<f64>) -> Result<Var> {
        let ta = self.value(a);
        if factors.len() != ta.rows() {
            return Err(Error::dim(
                "scale_rows",
                format!("{} factors for {} rows", factors.len(), ta.rows()),
            ));
        }
        let c = ta.cols();
        let mut out = ta.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v *= factors[i / c];
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::ScaleRows(a, factors), ng))
    }

    /// Elementwise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Result<Var> {
        let ta = self.value(a);
        if !ta.same_shape(&c) {
            return Err(shape_err("mul_const", ta, &c));
        }
        let data = ta.data().iter().zip(c.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::MulConst(a, c), ng))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let ng = self.ng(a);
        self.push(out, op, ng)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, |x| x.max(0.0), Op::Relu(a)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, sigmoid, Op::Sigmoid(a)))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, softplus, Op::Softplus(a)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        Ok(self.unary(a, f64::ln, Op::Log(a)))
    }

    /// Sum over columns: `r × c → r × 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let out = Tensor::column((0..ta.rows()).map(|r| ta.row_slice(r).iter().sum()).collect());
        let ng = self.ng(a);
        Ok(self.push(out, Op::RowSum(a), ng))
    }

    /// Mean over columns: `r × c → r × 1`.
    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        if ta.cols() == 0 {
            return Err(Error::dim("row_mean", "zero columns"));
        }
        let c = ta.cols() as f64;
        let out = Tensor::column(
            (0..ta.rows())
                .map(|r| ta.row_slice(r).iter().sum::<f64>() / c)
                .collect(),
        );
        let ng = self.ng(a);
        Ok(self.push(out, Op::RowMean(a), ng))
    }

    /// Sum of every element: `→ 1 × 1`.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let ng = self.ng(a);
        Ok(self.push(out, Op::SumAll(a), ng))
    }

    /// Mean of every element: `→ 1 × 1`.
    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::dim("mean_all", "empty tensor"));
        }
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Output row `i` is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in &index {
            if i >= ta.rows() {
                return Err(Error::Index {
                    op: "gather_rows",
                    index: i,
                    bound: ta.rows(),
                });
            }
            data.extend_from_slice(ta.row_slice(i));
        }
        let out = Tensor::new(index.len(), c, data)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::GatherRows(a, index), ng))
    }

    /// Row `i` of `a` is added into output row `index[i]`; the output has `out_rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, index: Vec<usize>, out_rows: usize) -> Result<Var> {
        let ta = self.value(a);
        if index.len() != ta.rows() {
            return Err(Error::dim(
                "scatter_add_rows",
                format!("{} indices for {} rows", index.len(), ta.rows()),
            ));
        }
        let c = ta.cols();
        let mut out = Tensor::zeros(out_rows, c);
        for (src, &dst) in index.iter().enumerate() {
            if dst >= out_rows {
                return Err(Error::Index {
                    op: "scatter_add_rows",
                    index: dst,
                    bound: out_rows,
                });
            }
            let row = ta.row_slice(src);
            let o = &mut out.data_mut()[dst * c..(dst + 1) * c];
            for (x, y) in o.iter_mut().zip(row) {
                *x += y;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::ScatterAddRows(a, index), ng))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut out = ta.clone();
        let c = ta.cols();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::SoftmaxRows(a), ng))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut out = ta.clone();
        let c = ta.cols();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // the max term contributes exactly 1; ln_1p keeps the rest
            let rest = row.iter().map(|v| (v - m).exp()).sum::<f64>() - 1.0;
            let lse = m + rest.ln_1p();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(out, Op::LogSoftmaxRows(a), ng))
    }

    /// Stack tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat_rows", "no inputs"));
        };
        let c = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(shape_err("concat_rows", self.value(first), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(rows, c, data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// `r × c → r × 1`, taking column `cols[i]` from row `i`.
    pub fn pick(&mut self, a: Var, cols: Vec<usize>) -> Result<Var> {
        let ta = self.value(a);
        if cols.len() != ta.rows() {
            return Err(Error::dim(
                "pick",
                format!("{} indices for {} rows", cols.len(), ta.rows()),
            ));
        }
        let mut out = Vec::with_capacity(cols.len());
        for (r, &c) in cols.iter().enumerate() {
            if c >= ta.cols() {
                return Err(Error::Index {
                    op: "pick",
                    index: c,
                    bound: ta.cols(),
                });
            }
            out.push(ta.get(r, c));
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::column(out), Op::Pick(a, cols), ng))
    }

    /// Reverse pass from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let v = self.value(output);
        if v.shape() != [1, 1] {
            return Err(Error::dim(
                "backward",
                format!("output must be 1x1, got {}x{}", v.rows(), v.cols()),
            ));
        }
        self.backward_with(output, Tensor::scalar(1.0))
    }

    /// Reverse pass seeded with an arbitrary output cotangent.
    pub fn backward_with(&self, output: Var, seed: Tensor) -> Result<Gradients> {
        if !self.value(output).same_shape(&seed) {
            return Err(shape_err("backward", self.value(output), &seed));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed);

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, d: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&d),
                slot @ None => *slot = Some(d),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::Const => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut da = Tensor::zeros(ta.rows(), ta.cols());
                    gemm(false, g, true, tb, &mut da, 0.0);
                    acc(*a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(tb.rows(), tb.cols());
                    gemm(true, ta, false, g, &mut db, 0.0);
                    acc(*b, db);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    acc(*a, elementwise(g, tb, |x, y| x * y));
                }
                if self.ng(*b) {
                    acc(*b, elementwise(g, ta, |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.ng(*row) {
                    let c = g.cols();
                    let mut d = vec![0.0; c];
                    for r in 0..g.rows() {
                        for (x, y) in d.iter_mut().zip(g.row_slice(r)) {
                            *x += y;
                        }
                    }
                    acc(*row, Tensor::row(d));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::ScaleBy(a, s) => {
                let k = self.value(*s).item();
                if self.ng(*a) {
                    acc(*a, g.map(|x| x * k));
                }
                if self.ng(*s) {
                    let ta = self.value(*a);
                    let d: f64 = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).sum();
                    acc(*s, Tensor::scalar(d));
                }
            }
            Op::ScaleRows(a, f) => {
                let c = g.cols();
                let mut d = g.clone();
                for (i, v) in d.data_mut().iter_mut().enumerate() {
                    *v *= f[i / c];
                }
                acc(*a, d);
            }
            Op::MulConst(a, c) => acc(*a, elementwise(g, c, |x, y| x * y)),
            Op::Relu(a) => {
                let ta = self.value(*a);
                acc(*a, elementwise(g, ta, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Sigmoid(a) => acc(*a, elementwise(g, out, |x, s| x * s * (1.0 - s))),
            Op::Softplus(a) => {
                let ta = self.value(*a);
                acc(*a, elementwise(g, ta, |x, y| x * sigmoid(y)));
            }
            Op::Log(a) => {
                let ta = self.value(*a);
                acc(*a, elementwise(g, ta, |x, y| x / y));
            }
            Op::RowSum(a) | Op::RowMean(a) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let k = if matches!(node.op, Op::RowMean(_)) { 1.0 / c as f64 } else { 1.0 };
                let data = (0..ta.len()).map(|i| g.data()[i / c] * k).collect();
                acc(*a, Tensor::new(ta.rows(), c, data).expect("shape"));
            }
            Op::SumAll(a) => {
                let ta = self.value(*a);
                acc(*a, Tensor::filled(ta.rows(), ta.cols(), g.item()));
            }
            Op::GatherRows(a, index) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let mut d = Tensor::zeros(ta.rows(), c);
                for (i, &src) in index.iter().enumerate() {
                    let row = g.row_slice(i);
                    let o = &mut d.data_mut()[src * c..(src + 1) * c];
                    for (x, y) in o.iter_mut().zip(row) {
                        *x += y;
                    }
                }
                acc(*a, d);
            }
            Op::ScatterAddRows(a, index) => {
                let c = g.cols();
                let mut data = Vec::with_capacity(index.len() * c);
                for &dst in index {
                    data.extend_from_slice(g.row_slice(dst));
                }
                acc(*a, Tensor::new(index.len(), c, data).expect("shape"));
            }
            Op::SoftmaxRows(a) => {
                let c = g.cols();
                let mut d = g.clone();
                for r in 0..g.rows() {
                    let s = out.row_slice(r);
                    let gs = g.row_slice(r);
                    let dot: f64 = gs.iter().zip(s).map(|(x, y)| x * y).sum();
                    for j in 0..c {
                        d.set(r, j, s[j] * (gs[j] - dot));
                    }
                }
                acc(*a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let c = g.cols();
                let mut d = g.clone();
                for r in 0..g.rows() {
                    let lp = out.row_slice(r);
                    let gs = g.row_slice(r);
                    let total: f64 = gs.iter().sum();
                    for j in 0..c {
                        d.set(r, j, gs[j] - lp[j].exp() * total);
                    }
                }
                acc(*a, d);
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut offset = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    let slice = g.data()[offset * c..(offset + r) * c].to_vec();
                    acc(p, Tensor::new(r, c, slice).expect("shape"));
                    offset += r;
                }
            }
            Op::Pick(a, cols) => {
                let ta = self.value(*a);
                let mut d = Tensor::zeros(ta.rows(), ta.cols());
                for (r, &c) in cols.iter().enumerate() {
                    d.set(r, c, g.data()[r]);
                }
                acc(*a, d);
            }
        }
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}
