//! Reverse-mode differentiation over a recorded operation graph.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its value; [`Tape::backward`] walks the nodes in reverse and
//! accumulates gradients into every node that (transitively) depends on a
//! leaf created with `requires_grad = true`.

use crate::error::{shape_err, Result, WeeError};
use crate::numerics::functions::{gelu, gelu_derivative, softmax_in_place};
use crate::numerics::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use crate::numerics::Tensor;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    CausalSoftmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    PadRows(Var),
    Reshape(Var),
    Sum(Var),
    EntropyRows(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<f64>,
        count: usize,
    },
    Mix {
        weights: Var,
        experts: Vec<Var>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        self.grads[v.0].as_ref().map(|g| {
            Tensor::new(node.value.rows(), node.value.cols(), g.clone())
                .expect("gradient shape matches value")
        })
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ----- operations -------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`, the layout used by `out × in` weight matrices.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return shape_err(format!(
                "matmul_nt {:?} x {:?}ᵀ",
                av.shape(),
                bv.shape()
            ));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = Tensor::zeros(m, n);
        matmul_nt_acc(av.data(), bv.data(), out.data_mut(), m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMulNT(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.check_same_shape(bv, "add")?;
        let mut out = av.clone();
        for (o, x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += x;
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return shape_err(format!(
                "add_row {:?} + {:?}",
                av.shape(),
                rv.shape()
            ));
        }
        let mut out = av.clone();
        let c = av.cols();
        for r in 0..av.rows() {
            for (o, x) in out.data_mut()[r * c..(r + 1) * c].iter_mut().zip(rv.data()) {
                *o += x;
            }
        }
        let rg = self.any_grad(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.check_same_shape(bv, "mul")?;
        let mut out = av.clone();
        for (o, x) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= x;
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Gelu(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_finite() {
            return Err(WeeError::InvalidInput("softmax input not finite".into()));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SoftmaxRows(a), rg))
    }

    /// Row-wise softmax of a square score matrix restricted to `j ≤ i`;
    /// entries above the diagonal are exactly zero.
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rows() != av.cols() {
            return shape_err(format!("causal_softmax needs square, got {:?}", av.shape()));
        }
        let n = av.rows();
        let mut out = Tensor::zeros(n, n);
        for i in 0..n {
            let row = &av.row(i)[..=i];
            let dst = &mut out.row_mut(i)[..=i];
            dst.copy_from_slice(row);
            softmax_in_place(dst);
        }
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::CausalSoftmax(a), rg))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let c = xv.cols();
        if gv.shape() != [1, c] || bv.shape() != [1, c] {
            return shape_err("layer_norm gain/bias must be 1 x cols");
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; rows * c];
        let mut rstd = vec![0.0; rows];
        let mut out = Tensor::zeros(rows, c);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                xhat[r * c + j] = h;
                out.set(r, j, h * gv.data()[j] + bv.data()[j]);
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Mean over rows (time), `T × d → 1 × d`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let out = crate::numerics::mean_pool_time(self.value(a))?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = crate::numerics::concat_features(&values)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(a).slice_cols(start, len)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(WeeError::InvalidInput("no rows to concatenate".into()));
        };
        let c = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != c {
                return shape_err(format!("concat_rows width {} vs {}", v.cols(), c));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(rows, c, data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Appends zero rows until `a` has `rows` rows.
    pub fn pad_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let av = self.value(a);
        if rows < av.rows() {
            return shape_err(format!("cannot pad {} rows down to {rows}", av.rows()));
        }
        let mut data = av.data().to_vec();
        data.resize(rows * av.cols(), 0.0);
        let out = Tensor::new(rows, av.cols(), data)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::PadRows(a), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).reshaped(rows, cols)?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Per-row entropy `-Σ p ln p` (`0 ln 0 = 0`), `B × M → B × 1`.
    pub fn entropy_rows(&mut self, p: Var) -> Result<Var> {
        let pv = self.value(p);
        let mut out = Vec::with_capacity(pv.rows());
        for r in 0..pv.rows() {
            crate::numerics::functions::check_distribution(pv.row(r))?;
            out.push(crate::numerics::functions::entropy_unchecked(pv.row(r)));
        }
        let out = Tensor::new(pv.rows(), 1, out)?;
        let rg = self.any_grad(&[p]);
        Ok(self.push(out, Op::EntropyRows(p), rg))
    }

    /// Mean cross-entropy of `logits` rows against `targets`; rows with
    /// `None` are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let lv = self.value(logits);
        if targets.len() != lv.rows() {
            return shape_err(format!(
                "{} targets for {} logit rows",
                targets.len(),
                lv.rows()
            ));
        }
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Err(WeeError::InvalidInput("no target positions".into()));
        }
        let v = lv.cols();
        let mut probs = vec![0.0; lv.len()];
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            if t >= v {
                return Err(WeeError::InvalidInput(format!("target {t} >= vocab {v}")));
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            for j in 0..v {
                probs[r * v + j] = (row[j] - lse).exp();
            }
        }
        let out = Tensor::scalar(loss / count as f64);
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Weighted combination of equally shaped expert maps.
    ///
    /// The forward value is `Σ_k coeffs[k]·experts[k]`; when `coeffs` is
    /// one-hot the chosen expert is copied bit-exactly. The backward pass
    /// always differentiates `Σ_k weights[k]·experts[k]`, where `weights` is
    /// a `1 × M` node. Passing the soft distribution as `weights` and its
    /// one-hot projection as `coeffs` gives the straight-through estimator;
    /// passing the soft values as `coeffs` gives the plain soft mixture.
    pub fn mix(&mut self, weights: Var, coeffs: &[f64], experts: &[Var]) -> Result<Var> {
        let wv = self.value(weights);
        let m = experts.len();
        if m == 0 || wv.shape() != [1, m] || coeffs.len() != m {
            return shape_err(format!(
                "mix over {m} experts with weights {:?} and {} coefficients",
                wv.shape(),
                coeffs.len()
            ));
        }
        let shape = self.value(experts[0]).shape();
        for &e in experts {
            if self.value(e).shape() != shape {
                return shape_err(format!(
                    "expert outputs differ: {:?} vs {:?}",
                    self.value(e).shape(),
                    shape
                ));
            }
        }
        let nonzero: Vec<usize> = (0..m).filter(|&k| coeffs[k] != 0.0).collect();
        let out = if nonzero.len() == 1 && coeffs[nonzero[0]] == 1.0 {
            self.value(experts[nonzero[0]]).clone()
        } else {
            let mut acc = Tensor::zeros(shape[0], shape[1]);
            for (k, &e) in experts.iter().enumerate() {
                let c = coeffs[k];
                for (o, x) in acc.data_mut().iter_mut().zip(self.value(e).data()) {
                    *o += c * x;
                }
            }
            acc
        };
        let mut inputs = experts.to_vec();
        inputs.push(weights);
        let rg = self.any_grad(&inputs);
        Ok(self.push(
            out,
            Op::Mix {
                weights,
                experts: experts.to_vec(),
            },
            rg,
        ))
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if ids.is_empty() {
            return Err(WeeError::InvalidInput("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * tv.cols());
        for &i in ids {
            if i >= tv.rows() {
                return Err(WeeError::InvalidInput(format!(
                    "row {i} out of range for table with {} rows",
                    tv.rows()
                )));
            }
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor::new(ids.len(), tv.cols(), data)?;
        let rg = self.any_grad(&[table]);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    // ----- backward ---------------------------------------------------------

    /// Back-propagates from a `1 × 1` root. Gradients from any previous call
    /// are discarded.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).shape() != [1, 1] {
            return shape_err(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            ));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                self.backprop_node(i, &g);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, v: Var) -> Option<&mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backprop_node(&mut self, i: usize, g: &[f64]) {
        // The op is swapped out so input values can be read while gradient
        // buffers are mutated.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(ga) = self.acc(a) {
                    matmul_nt_acc(g, bv.data(), ga, m, n, k);
                }
                if let Some(gb) = self.acc(b) {
                    matmul_tn_acc(av.data(), g, gb, m, k, n);
                }
            }
            Op::MatMulNT(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if let Some(ga) = self.acc(a) {
                    matmul_acc(g, bv.data(), ga, m, n, k);
                }
                if let Some(gb) = self.acc(b) {
                    matmul_tn_acc(g, av.data(), gb, m, n, k);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(v) {
                        for (x, y) in gv.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            Op::AddRow(a, row) => {
                let c = self.nodes[row.0].value.cols();
                if let Some(ga) = self.acc(*a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if let Some(gr) = self.acc(*row) {
                    for chunk in g.chunks(c) {
                        for (x, y) in gr.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.clone();
                let bv = self.nodes[b.0].value.clone();
                if let Some(ga) = self.acc(a) {
                    for ((x, gy), bvv) in ga.iter_mut().zip(g).zip(bv.data()) {
                        *x += gy * bvv;
                    }
                }
                if let Some(gb) = self.acc(b) {
                    for ((x, gy), avv) in gb.iter_mut().zip(g).zip(av.data()) {
                        *x += gy * avv;
                    }
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                if let Some(ga) = self.acc(*a) {
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += c * y;
                    }
                }
            }
            Op::Gelu(a) => {
                let av = self.nodes[a.0].value.clone();
                if let Some(ga) = self.acc(*a) {
                    for ((x, gy), xv) in ga.iter_mut().zip(g).zip(av.data()) {
                        *x += gy * gelu_derivative(*xv);
                    }
                }
            }
            Op::Tanh(a) => {
                let yv = self.nodes[i].value.clone();
                if let Some(ga) = self.acc(*a) {
                    for ((x, gy), y) in ga.iter_mut().zip(g).zip(yv.data()) {
                        *x += gy * (1.0 - y * y);
                    }
                }
            }
            Op::SoftmaxRows(a) | Op::CausalSoftmax(a) => {
                let yv = self.nodes[i].value.clone();
                let c = yv.cols();
                if let Some(ga) = self.acc(*a) {
                    for r in 0..yv.rows() {
                        let y = yv.row(r);
                        let gr = &g[r * c..(r + 1) * c];
                        let dot: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            ga[r * c + j] += y[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let gammav = self.nodes[gamma.0].value.clone();
                let c = gammav.cols();
                let rows = rstd.len();
                if let Some(gg) = self.acc(*gamma) {
                    for r in 0..rows {
                        for j in 0..c {
                            gg[j] += g[r * c + j] * xhat[r * c + j];
                        }
                    }
                }
                if let Some(gb) = self.acc(*beta) {
                    for r in 0..rows {
                        for j in 0..c {
                            gb[j] += g[r * c + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(*x) {
                    for r in 0..rows {
                        let mut mean_gh = 0.0;
                        let mut mean_ghx = 0.0;
                        for j in 0..c {
                            let gh = g[r * c + j] * gammav.data()[j];
                            mean_gh += gh;
                            mean_ghx += gh * xhat[r * c + j];
                        }
                        mean_gh /= c as f64;
                        mean_ghx /= c as f64;
                        for j in 0..c {
                            let gh = g[r * c + j] * gammav.data()[j];
                            gx[r * c + j] +=
                                rstd[r] * (gh - mean_gh - xhat[r * c + j] * mean_ghx);
                        }
                    }
                }
            }
            Op::MeanRows(a) => {
                let rows = self.nodes[a.0].value.rows();
                let inv = 1.0 / rows as f64;
                if let Some(ga) = self.acc(*a) {
                    for chunk in ga.chunks_mut(g.len()) {
                        for (x, y) in chunk.iter_mut().zip(g) {
                            *x += y * inv;
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = self.nodes[i].value.cols();
                let rows = self.nodes[i].value.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if let Some(gp) = self.acc(p) {
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let start = *start;
                let w = self.nodes[i].value.cols();
                let total = self.nodes[a.0].value.cols();
                if let Some(ga) = self.acc(*a) {
                    for (r, chunk) in g.chunks(w).enumerate() {
                        for (j, y) in chunk.iter().enumerate() {
                            ga[r * total + start + j] += y;
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.len();
                    if let Some(gp) = self.acc(p) {
                        for (x, y) in gp.iter_mut().zip(&g[offset..offset + n]) {
                            *x += y;
                        }
                    }
                    offset += n;
                }
            }
            Op::PadRows(a) | Op::Reshape(a) => {
                if let Some(ga) = self.acc(*a) {
                    let n = ga.len();
                    for (x, y) in ga.iter_mut().zip(&g[..n]) {
                        *x += y;
                    }
                }
            }
            Op::Sum(a) => {
                let s = g[0];
                if let Some(ga) = self.acc(*a) {
                    for x in ga.iter_mut() {
                        *x += s;
                    }
                }
            }
            Op::EntropyRows(p) => {
                let pv = self.nodes[p.0].value.clone();
                let c = pv.cols();
                if let Some(gp) = self.acc(*p) {
                    for r in 0..pv.rows() {
                        for j in 0..c {
                            let v = pv.get(r, j);
                            if v > 0.0 {
                                gp[r * c + j] -= g[r] * (v.ln() + 1.0);
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
            } => {
                let c = self.nodes[logits.0].value.cols();
                let s = g[0] / *count as f64;
                if let Some(gl) = self.acc(*logits) {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for j in 0..c {
                            gl[r * c + j] += s * probs[r * c + j];
                        }
                        gl[r * c + t] -= s;
                    }
                }
            }
            Op::Mix { weights, experts } => {
                let wv = self.nodes[weights.0].value.clone();
                let dots: Vec<f64> = experts
                    .iter()
                    .map(|e| {
                        self.nodes[e.0]
                            .value
                            .data()
                            .iter()
                            .zip(g)
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                if let Some(gw) = self.acc(*weights) {
                    for (x, d) in gw.iter_mut().zip(&dots) {
                        *x += d;
                    }
                }
                for (k, &e) in experts.iter().enumerate() {
                    let w = wv.data()[k];
                    if let Some(ge) = self.acc(e) {
                        for (x, y) in ge.iter_mut().zip(g) {
                            *x += w * y;
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let c = self.nodes[table.0].value.cols();
                if let Some(gt) = self.acc(*table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            gt[id * c + j] += g[r * c + j];
                        }
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn scalar_root_has_unit_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0), true);
        let y = tape.mul(x, x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(y).unwrap().data(), &[1.0]);
        assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut tape = Tape::new();
        let w = tape.constant(t(&[vec![1.0, 2.0]]));
        let x = tape.leaf(t(&[vec![0.5, -1.0]]), true);
        let y = tape.mul(w, x).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(tape.grad(w).is_none());
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn gradients_reset_between_backward_calls() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0), true);
        let y = tape.scale(x, 3.0);
        tape.backward(y).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut tape = Tape::new();
        let s = tape.constant(t(&[vec![1.0, 5.0], vec![0.0, 0.0]]));
        let p = tape.causal_softmax(s).unwrap();
        let v = tape.value(p);
        assert_eq!(v.get(0, 0), 1.0);
        assert_eq!(v.get(0, 1), 0.0);
        assert!((v.get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2), true);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn mix_forward_copies_chosen_expert() {
        let mut tape = Tape::new();
        let e0 = tape.constant(t(&[vec![0.1, 0.2]]));
        let e1 = tape.constant(t(&[vec![0.3 + 1e-17, -0.7]]));
        let w = tape.leaf(t(&[vec![0.4, 0.6]]), true);
        let out = tape.mix(w, &[0.0, 1.0], &[e0, e1]).unwrap();
        assert_eq!(tape.value(out), tape.value(e1));
    }
}
