//! Reverse-mode autodiff over a linear operation tape.
//!
//! Append order is a topological order, so the backward sweep is a single
//! reverse pass over the node arena. Every node owns its forward values;
//! adjoints live in a parallel buffer that is filled lazily, which lets
//! the sweep skip nodes the loss never touched.

use super::kernels;
use super::tensor::{Scalar, Tensor};
use super::{NumericsError, Result};

/// Handle to a node on a [`Tape`]. Only valid for the tape that minted it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op<F: Scalar> {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, F),
    /// matrix (r×c) + row vector (c), broadcast over rows
    AddRow(usize, usize),
    /// matrix (r×c) ⊙ row vector (c), broadcast over rows
    MulRow(usize, usize),
    Silu(usize),
    Sigmoid(usize),
    Relu(usize),
    /// per-row x / sqrt(mean(x²) + eps)
    RmsNorm(usize),
    RowSoftmax(usize, F),
    RowLogSoftmax(usize, F),
    /// gather rows of a table (M×d) by token id
    Embed(usize, Vec<u32>),
    /// out[i] = src[rows[i], cols[i]]
    Pick(usize, Vec<usize>, Vec<u32>),
    SliceRows(usize, usize, usize),
    SliceCols(usize, usize, usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Sum(usize),
    Mean(usize),
}

struct Node<F: Scalar> {
    op: Op<F>,
    shape: Vec<usize>,
    values: Vec<F>,
}

const RMS_EPS: f64 = 1e-6;

pub struct Tape<F: Scalar = f64> {
    nodes: Vec<Node<F>>,
    grads: Vec<Vec<F>>,
    backward_done: bool,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<F>, shape: Vec<usize>, values: Vec<F>) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.nodes.push(Node { op, shape, values });
        self.grads.push(Vec::new());
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.nodes[v.0].values
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> F {
        debug_assert_eq!(self.nodes[v.0].values.len(), 1);
        self.nodes[v.0].values[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<F> {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].values.clone())
            .expect("tape node shape is consistent")
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        match s.len() {
            2 => (s[0], s[1]),
            1 => (1, s[0]),
            _ => (1, self.nodes[v.0].values.len()),
        }
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = &self.nodes[v.0].shape;
        if s.len() != 2 {
            return Err(NumericsError::NotAMatrix {
                op,
                shape: s.clone(),
            });
        }
        Ok((s[0], s[1]))
    }

    // ── node constructors ────────────────────────────────────────────

    pub fn leaf(&mut self, t: &Tensor<F>) -> Var {
        self.push(Op::Leaf, t.shape().to_vec(), t.data().to_vec())
    }

    pub fn leaf_scalar(&mut self, v: F) -> Var {
        self.push(Op::Leaf, vec![], vec![v])
    }

    pub fn leaf_raw(&mut self, shape: Vec<usize>, values: Vec<F>) -> Var {
        self.push(Op::Leaf, shape, values)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        let values = kernels::matmul(&self.nodes[a.0].values, &self.nodes[b.0].values, m, k, n);
        Ok(self.push(Op::Matmul(a.0, b.0), vec![m, n], values))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "transpose")?;
        let values = kernels::transpose(&self.nodes[a.0].values, r, c);
        Ok(self.push(Op::Transpose(a.0), vec![c, r], values))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let values = self.zip(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a.0, b.0), self.nodes[a.0].shape.clone(), values))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let values = self.zip(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a.0, b.0), self.nodes[a.0].shape.clone(), values))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let values = self.zip(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a.0, b.0), self.nodes[a.0].shape.clone(), values))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Vec<F> {
        self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(&x, &y)| f(x, y))
            .collect()
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let values = self.nodes[a.0].values.iter().map(|&v| v * c).collect();
        self.push(Op::Scale(a.0, c), self.nodes[a.0].shape.clone(), values)
    }

    fn row_broadcast_check(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let (r, c) = self.matrix_dims(a, op)?;
        let blen = self.nodes[b.0].values.len();
        if blen != c {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        Ok((r, c))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast_check("add_row", a, b)?;
        let bv = &self.nodes[b.0].values;
        let mut values = self.nodes[a.0].values.clone();
        for i in 0..r {
            for j in 0..c {
                values[i * c + j] = values[i * c + j] + bv[j];
            }
        }
        Ok(self.push(Op::AddRow(a.0, b.0), vec![r, c], values))
    }

    pub fn mul_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.row_broadcast_check("mul_row", a, b)?;
        let bv = &self.nodes[b.0].values;
        let mut values = self.nodes[a.0].values.clone();
        for i in 0..r {
            for j in 0..c {
                values[i * c + j] = values[i * c + j] * bv[j];
            }
        }
        Ok(self.push(Op::MulRow(a.0, b.0), vec![r, c], values))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| x * kernels::sigmoid(x))
            .collect();
        self.push(Op::Silu(a.0), self.nodes[a.0].shape.clone(), values)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| kernels::sigmoid(x))
            .collect();
        self.push(Op::Sigmoid(a.0), self.nodes[a.0].shape.clone(), values)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let values = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| x.max(F::zero()))
            .collect();
        self.push(Op::Relu(a.0), self.nodes[a.0].shape.clone(), values)
    }

    pub fn rms_norm(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "rms_norm")?;
        let eps = F::from_f64(RMS_EPS);
        let src = &self.nodes[a.0].values;
        let mut values = vec![F::zero(); src.len()];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean_sq = row.iter().fold(F::zero(), |s, &v| s + v * v)
                / F::from_f64(c as f64);
            let inv = F::one() / (mean_sq + eps).sqrt();
            for j in 0..c {
                values[i * c + j] = row[j] * inv;
            }
        }
        Ok(self.push(Op::RmsNorm(a.0), vec![r, c], values))
    }

    pub fn row_softmax(&mut self, a: Var, gamma: F) -> Result<Var> {
        if gamma <= F::zero() {
            return Err(NumericsError::InvalidTemperature(gamma.as_f64()));
        }
        let (r, c) = self.rows_cols(a);
        let values = kernels::softmax_rows(&self.nodes[a.0].values, r, c, gamma);
        Ok(self.push(
            Op::RowSoftmax(a.0, gamma),
            self.nodes[a.0].shape.clone(),
            values,
        ))
    }

    pub fn row_log_softmax(&mut self, a: Var, gamma: F) -> Result<Var> {
        if gamma <= F::zero() {
            return Err(NumericsError::InvalidTemperature(gamma.as_f64()));
        }
        let (r, c) = self.rows_cols(a);
        let values = kernels::log_softmax_rows(&self.nodes[a.0].values, r, c, gamma);
        Ok(self.push(
            Op::RowLogSoftmax(a.0, gamma),
            self.nodes[a.0].shape.clone(),
            values,
        ))
    }

    /// Gather rows of `table` (M×d) for each id.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let (m, d) = self.matrix_dims(table, "embed")?;
        let src = &self.nodes[table.0].values;
        let mut values = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            let id = id as usize;
            if id >= m {
                return Err(NumericsError::IndexOutOfBounds { index: id, size: m });
            }
            values.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        Ok(self.push(Op::Embed(table.0, ids.to_vec()), vec![ids.len(), d], values))
    }

    /// out[i] = src[rows[i], cols[i]].
    pub fn pick(&mut self, src: Var, rows: &[usize], cols: &[u32]) -> Result<Var> {
        let (r, c) = self.matrix_dims(src, "pick")?;
        if rows.len() != cols.len() {
            return Err(NumericsError::Invalid(format!(
                "pick expects equal index lists, got {} rows and {} cols",
                rows.len(),
                cols.len()
            )));
        }
        let sv = &self.nodes[src.0].values;
        let mut values = Vec::with_capacity(rows.len());
        for (&i, &j) in rows.iter().zip(cols) {
            if i >= r {
                return Err(NumericsError::IndexOutOfBounds { index: i, size: r });
            }
            if j as usize >= c {
                return Err(NumericsError::IndexOutOfBounds {
                    index: j as usize,
                    size: c,
                });
            }
            values.push(sv[i * c + j as usize]);
        }
        Ok(self.push(
            Op::Pick(src.0, rows.to_vec(), cols.to_vec()),
            vec![rows.len()],
            values,
        ))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "slice_rows")?;
        if start + len > r {
            return Err(NumericsError::SliceOutOfBounds { start, len, size: r });
        }
        let values = self.nodes[a.0].values[start * c..(start + len) * c].to_vec();
        Ok(self.push(Op::SliceRows(a.0, start, len), vec![len, c], values))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(a, "slice_cols")?;
        if start + len > c {
            return Err(NumericsError::SliceOutOfBounds { start, len, size: c });
        }
        let src = &self.nodes[a.0].values;
        let mut values = Vec::with_capacity(r * len);
        for i in 0..r {
            values.extend_from_slice(&src[i * c + start..i * c + start + len]);
        }
        Ok(self.push(Op::SliceCols(a.0, start, len), vec![r, len], values))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericsError::Invalid("concat_rows of zero parts".into()));
        }
        let (_, c) = self.matrix_dims(parts[0], "concat_rows")?;
        let mut values = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.matrix_dims(p, "concat_rows")?;
            if pc != c {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: vec![rows, c],
                    rhs: self.nodes[p.0].shape.clone(),
                });
            }
            rows += pr;
            values.extend_from_slice(&self.nodes[p.0].values);
        }
        Ok(self.push(
            Op::ConcatRows(parts.iter().map(|v| v.0).collect()),
            vec![rows, c],
            values,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(NumericsError::Invalid("concat_cols of zero parts".into()));
        }
        let (r, _) = self.matrix_dims(parts[0], "concat_cols")?;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| self.matrix_dims(p, "concat_cols").map(|(_, c)| c))
            .collect::<Result<_>>()?;
        for &p in parts {
            let (pr, _) = self.matrix_dims(p, "concat_cols")?;
            if pr != r {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.nodes[parts[0].0].shape.clone(),
                    rhs: self.nodes[p.0].shape.clone(),
                });
            }
        }
        let total: usize = widths.iter().sum();
        let mut values = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                let src = &self.nodes[p.0].values;
                values.extend_from_slice(&src[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(
            Op::ConcatCols(parts.iter().map(|v| v.0).collect()),
            vec![r, total],
            values,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.nodes[a.0].values.iter().fold(F::zero(), |s, &v| s + v);
        self.push(Op::Sum(a.0), vec![], vec![total])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].values.len();
        let total = self.nodes[a.0].values.iter().fold(F::zero(), |s, &v| s + v);
        self.push(Op::Mean(a.0), vec![], vec![total / F::from_f64(n as f64)])
    }

    // ── backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Each node is visited exactly once,
    /// in reverse append order (a topological order of the DAG).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(NumericsError::BackwardAlreadyRun);
        }
        if self.nodes[loss.0].values.len() != 1 {
            return Err(NumericsError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        self.backward_done = true;
        self.grads[loss.0] = vec![F::one()];

        for idx in (0..=loss.0).rev() {
            if self.grads[idx].is_empty() {
                continue; // not an ancestor of the loss
            }
            let g = std::mem::take(&mut self.grads[idx]);
            self.propagate(idx, &g);
            self.grads[idx] = g;
        }
        Ok(())
    }

    /// Clear adjoints so another backward pass may run on the same graph.
    pub fn reset_grads(&mut self) {
        for g in &mut self.grads {
            g.clear();
        }
        self.backward_done = false;
    }

    /// Adjoint of `v`, if the last backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        if self.grads[v.0].is_empty() {
            None
        } else {
            Some(&self.grads[v.0])
        }
    }

    /// Adjoint of `v`, densified to zeros when backward never touched it.
    pub fn grad_dense(&self, v: Var) -> Vec<F> {
        if self.grads[v.0].is_empty() {
            vec![F::zero(); self.nodes[v.0].values.len()]
        } else {
            self.grads[v.0].clone()
        }
    }

    fn acc(&mut self, idx: usize, contrib: impl Iterator<Item = F>) {
        if self.grads[idx].is_empty() {
            self.grads[idx] = vec![F::zero(); self.nodes[idx].values.len()];
        }
        for (slot, c) in self.grads[idx].iter_mut().zip(contrib) {
            *slot = *slot + c;
        }
    }

    fn acc_at(&mut self, idx: usize, offset: usize, contrib: &[F]) {
        if self.grads[idx].is_empty() {
            self.grads[idx] = vec![F::zero(); self.nodes[idx].values.len()];
        }
        for (slot, &c) in self.grads[idx][offset..offset + contrib.len()]
            .iter_mut()
            .zip(contrib)
        {
            *slot = *slot + c;
        }
    }

    fn propagate(&mut self, idx: usize, g: &[F]) {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (m, k) = {
                    let s = &self.nodes[a].shape;
                    (s[0], s[1])
                };
                let n = self.nodes[b].shape[1];
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                let da = kernels::matmul_nt(g, &self.nodes[b].values, m, n, k);
                let db = kernels::matmul_tn(&self.nodes[a].values, g, k, m, n);
                self.acc(a, da.into_iter());
                self.acc(b, db.into_iter());
            }
            Op::Transpose(a) => {
                let (r, c) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                let gt = kernels::transpose(g, r, c);
                self.acc(a, gt.into_iter());
            }
            Op::Add(a, b) => {
                self.acc(a, g.iter().cloned());
                self.acc(b, g.iter().cloned());
            }
            Op::Sub(a, b) => {
                self.acc(a, g.iter().cloned());
                self.acc(b, g.iter().map(|&v| -v));
            }
            Op::Mul(a, b) => {
                let da: Vec<F> = g
                    .iter()
                    .zip(&self.nodes[b].values)
                    .map(|(&gi, &bv)| gi * bv)
                    .collect();
                let db: Vec<F> = g
                    .iter()
                    .zip(&self.nodes[a].values)
                    .map(|(&gi, &av)| gi * av)
                    .collect();
                self.acc(a, da.into_iter());
                self.acc(b, db.into_iter());
            }
            Op::Scale(a, c) => {
                self.acc(a, g.iter().map(|&v| v * c));
            }
            Op::AddRow(a, b) => {
                let (r, c) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                self.acc(a, g.iter().cloned());
                let mut db = vec![F::zero(); c];
                for i in 0..r {
                    for j in 0..c {
                        db[j] = db[j] + g[i * c + j];
                    }
                }
                self.acc(b, db.into_iter());
            }
            Op::MulRow(a, b) => {
                let (r, c) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                let bv = self.nodes[b].values.clone();
                let av = &self.nodes[a].values;
                let mut da = vec![F::zero(); r * c];
                let mut db = vec![F::zero(); c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[i * c + j] * bv[j];
                        db[j] = db[j] + g[i * c + j] * av[i * c + j];
                    }
                }
                self.acc(a, da.into_iter());
                self.acc(b, db.into_iter());
            }
            Op::Silu(a) => {
                let da: Vec<F> = self.nodes[a]
                    .values
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| {
                        let s = kernels::sigmoid(x);
                        gi * s * (F::one() + x * (F::one() - s))
                    })
                    .collect();
                self.acc(a, da.into_iter());
            }
            Op::Sigmoid(a) => {
                let da: Vec<F> = self.nodes[idx]
                    .values
                    .iter()
                    .zip(g)
                    .map(|(&s, &gi)| gi * s * (F::one() - s))
                    .collect();
                self.acc(a, da.into_iter());
            }
            Op::Relu(a) => {
                let da: Vec<F> = self.nodes[a]
                    .values
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > F::zero() { gi } else { F::zero() })
                    .collect();
                self.acc(a, da.into_iter());
            }
            Op::RmsNorm(a) => {
                let (r, c) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                let eps = F::from_f64(RMS_EPS);
                let cf = F::from_f64(c as f64);
                let x = self.nodes[a].values.clone();
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    let row = &x[i * c..(i + 1) * c];
                    let grow = &g[i * c..(i + 1) * c];
                    let mean_sq = row.iter().fold(F::zero(), |s, &v| s + v * v) / cf;
                    let inv = F::one() / (mean_sq + eps).sqrt();
                    let gx = kernels::dot(grow, row);
                    // d x_j = g_j·inv − inv³·x_j·(g·x)/c
                    let k = inv * inv * inv * gx / cf;
                    for j in 0..c {
                        da[i * c + j] = grow[j] * inv - k * row[j];
                    }
                }
                self.acc(a, da.into_iter());
            }
            Op::RowSoftmax(a, gamma) => {
                let (r, c) = self.rows_cols(Var(idx));
                let p = self.nodes[idx].values.clone();
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    let prow = &p[i * c..(i + 1) * c];
                    let grow = &g[i * c..(i + 1) * c];
                    let gp = kernels::dot(grow, prow);
                    for j in 0..c {
                        da[i * c + j] = prow[j] * (grow[j] - gp) / gamma;
                    }
                }
                self.acc(a, da.into_iter());
            }
            Op::RowLogSoftmax(a, gamma) => {
                let (r, c) = self.rows_cols(Var(idx));
                let logp = self.nodes[idx].values.clone();
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    let lrow = &logp[i * c..(i + 1) * c];
                    let grow = &g[i * c..(i + 1) * c];
                    let gsum = grow.iter().fold(F::zero(), |s, &v| s + v);
                    for j in 0..c {
                        da[i * c + j] = (grow[j] - lrow[j].exp() * gsum) / gamma;
                    }
                }
                self.acc(a, da.into_iter());
            }
            Op::Embed(table, ids) => {
                let d = self.nodes[idx].shape[1];
                for (pos, &id) in ids.iter().enumerate() {
                    let chunk: Vec<F> = g[pos * d..(pos + 1) * d].to_vec();
                    self.acc_at(table, id as usize * d, &chunk);
                }
            }
            Op::Pick(src, rows, cols) => {
                let c = self.nodes[src].shape[1];
                for (k, (&i, &j)) in rows.iter().zip(&cols).enumerate() {
                    self.acc_at(src, i * c + j as usize, &[g[k]]);
                }
            }
            Op::SliceRows(a, start, _len) => {
                let c = self.nodes[idx].shape[1];
                self.acc_at(a, start * c, g);
            }
            Op::SliceCols(a, start, len) => {
                let r = self.nodes[idx].shape[0];
                let c = self.nodes[a].shape[1];
                for i in 0..r {
                    let chunk: Vec<F> = g[i * len..(i + 1) * len].to_vec();
                    self.acc_at(a, i * c + start, &chunk);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p].values.len();
                    let chunk: Vec<F> = g[offset..offset + n].to_vec();
                    self.acc(p, chunk.into_iter());
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let r = self.nodes[idx].shape[0];
                let total = self.nodes[idx].shape[1];
                let mut col_off = 0;
                for p in parts {
                    let w = self.nodes[p].shape[1];
                    let mut chunk = Vec::with_capacity(r * w);
                    for i in 0..r {
                        chunk.extend_from_slice(&g[i * total + col_off..i * total + col_off + w]);
                    }
                    self.acc(p, chunk.into_iter());
                    col_off += w;
                }
            }
            Op::Sum(a) => {
                let gi = g[0];
                let n = self.nodes[a].values.len();
                self.acc(a, std::iter::repeat(gi).take(n));
            }
            Op::Mean(a) => {
                let n = self.nodes[a].values.len();
                let gi = g[0] / F::from_f64(n as f64);
                self.acc(a, std::iter::repeat(gi).take(n));
            }
        }
    }
}
