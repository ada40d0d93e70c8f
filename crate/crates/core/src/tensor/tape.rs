use std::collections::HashMap;

use rand::Rng;

use super::{ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<T>),
    Scale(Var, T),
    AddScalar(Var),
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Transpose(Var),
    Reshape(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    MaxPoolRows(Var, Vec<usize>),
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
    },
    Bilinear {
        h: Var,
        w: Var,
        proj: Vec<T>,
    },
    Distance(Var, Var),
    BceWithLogits(Var, Vec<T>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a forward computation for reverse-mode differentiation.
///
/// A tape is single-threaded and append-only; build a fresh one per step.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(String, Var)>,
    param_index: HashMap<String, Var>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn last_dim(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1)
}

fn rows_of(shape: &[usize]) -> usize {
    shape.iter().product::<usize>().checked_div(last_dim(shape)).unwrap_or(0)
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_row<T: Real>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            param_index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// First element of a value; meant for scalars.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].data[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor {
            shape: n.shape.clone(),
            data: n.data.clone(),
            grad: None,
        }
    }

    /// Input value; `requires_grad` leaves receive gradients on backward.
    pub fn leaf(&mut self, t: &Tensor<T>, requires_grad: bool) -> Var {
        self.push(t.shape.clone(), t.data.clone(), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape("constant", shape, &[data.len()]));
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, false))
    }

    /// Loads a parameter from `store`. Each path is materialized once per tape.
    pub fn param(&mut self, store: &ParamStore<T>, path: &str) -> Result<Var> {
        if let Some(&v) = self.param_index.get(path) {
            return Ok(v);
        }
        let t = store.get(path)?;
        let v = self.push(t.shape.clone(), t.data.clone(), Op::Param, true);
        self.params.push((path.to_string(), v));
        self.param_index.insert(path.to_string(), v);
        Ok(v)
    }

    pub fn param_vars(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(p, v)| (p.as_str(), *v))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.node(a).shape != self.node(b).shape {
            return Err(Error::shape(op, &self.node(a).shape, &self.node(b).shape));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(&[a, b]);
        self.push(self.node(a).shape.clone(), data, op, ng)
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let data = self.value(x).iter().map(|&v| f(v)).collect();
        let ng = self.ng(&[x]);
        self.push(self.node(x).shape.clone(), data, op, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        self.map(x, |v| v + c, Op::AddScalar(x))
    }

    /// Adds `b` (shape `[d]`) to every row of `x` (shape `[.., d]`).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let d = last_dim(self.shape(x));
        if self.shape(b) != [d] {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(b)));
        }
        let bias = self.value(b);
        let data = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bias[i % d])
            .collect();
        let ng = self.ng(&[x, b]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::AddBias(x, b), ng))
    }

    /// Multiplies by a fixed mask (inverted dropout).
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| {
                if rng.gen::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let ng = self.ng(&[x]);
        self.push(self.shape(x).to_vec(), data, Op::MulConst(x, mask), ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum();
        let ng = self.ng(&[x]);
        self.push(vec![], vec![s], Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return Err(Error::Domain("mean of empty tensor".into()));
        }
        let s: T = self.value(x).iter().copied().sum();
        let ng = self.ng(&[x]);
        Ok(self.push(vec![], vec![s / T::of(n as f64)], Op::Mean(x), ng))
    }

    /// Mean over all leading axes, leaving the last axis.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let d = last_dim(self.shape(x));
        let rows = rows_of(self.shape(x));
        if rows == 0 {
            return Err(Error::Domain("mean over zero rows".into()));
        }
        let mut out = vec![T::zero(); d];
        for row in self.value(x).chunks(d) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = T::one() / T::of(rows as f64);
        out.iter_mut().for_each(|v| *v = *v * inv);
        let ng = self.ng(&[x]);
        Ok(self.push(vec![d], out, Op::MeanRows(x), ng))
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for (o, &w) in orow.iter_mut().zip(brow) {
                    *o += x * w;
                }
            }
        }
        let ng = self.ng(&[a, b]);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    /// `x · weight + bias` over the last axis of `x`.
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(weight), self.shape(bias));
        if sw.len() != 2 || last_dim(sx) != sw[0] || sx.is_empty() {
            return Err(Error::shape("affine", sx, sw));
        }
        if sb != [sw[1]] {
            return Err(Error::shape("affine(bias)", sw, sb));
        }
        let (inp, out_dim) = (sw[0], sw[1]);
        let rows = rows_of(sx);
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let mut out = Vec::with_capacity(rows * out_dim);
        for r in 0..rows {
            let start = out.len();
            out.extend_from_slice(bv);
            let orow = &mut out[start..];
            for (i, &xi) in xv[r * inp..(r + 1) * inp].iter().enumerate() {
                if xi == T::zero() {
                    continue;
                }
                for (o, &w) in orow.iter_mut().zip(&wv[i * out_dim..(i + 1) * out_dim]) {
                    *o += xi * w;
                }
            }
        }
        let mut shape = sx.to_vec();
        *shape.last_mut().unwrap() = out_dim;
        let ng = self.ng(&[x, weight, bias]);
        Ok(self.push(shape, out, Op::Affine(x, weight, bias), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[2]));
        }
        let (m, n) = (s[0], s[1]);
        let xv = self.value(x);
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xv[i * n + j];
            }
        }
        let ng = self.ng(&[x]);
        Ok(self.push(vec![n, m], out, Op::Transpose(x), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return Err(Error::shape("reshape", self.shape(x), shape));
        }
        let data = self.value(x).to_vec();
        let ng = self.ng(&[x]);
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x), ng))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Var {
        let d = last_dim(self.shape(x));
        let xv = self.value(x);
        let mut out = vec![T::zero(); xv.len()];
        for (row, orow) in xv.chunks(d).zip(out.chunks_mut(d)) {
            softmax_row(row, orow);
        }
        let ng = self.ng(&[x]);
        self.push(self.shape(x).to_vec(), out, Op::Softmax(x), ng)
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let d = last_dim(self.shape(x));
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let eps = T::of(1e-5);
        let xv = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let rows = rows_of(self.shape(x));
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.len()];
        let inv_d = T::one() / T::of(d as f64);
        for r in 0..rows {
            let row = &xv[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..d {
                let h = (row[c] - mean) * rs;
                xhat[r * d + c] = h;
                out[r * d + c] = h * gv[c] + bv[c];
            }
        }
        let ng = self.ng(&[x, gamma, beta]);
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Selects rows (last axis kept) of `x` by index. Rows may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let d = last_dim(self.shape(x));
        let rows = rows_of(self.shape(x));
        let xv = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= rows {
                return Err(Error::Domain(format!("row {i} out of range for {rows} rows")));
            }
            out.extend_from_slice(&xv[i * d..(i + 1) * d]);
        }
        let ng = self.ng(&[x]);
        Ok(self.push(vec![idx.len(), d], out, Op::GatherRows(x, idx.to_vec()), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || start + len > s[1] {
            return Err(Error::shape("slice_cols", s, &[start, len]));
        }
        let (m, n) = (s[0], s[1]);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for r in 0..m {
            out.extend_from_slice(&xv[r * n + start..r * n + start + len]);
        }
        let ng = self.ng(&[x]);
        Ok(self.push(vec![m, len], out, Op::SliceCols(x, start), ng))
    }

    /// Concatenates `[m, d_i]` blocks along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Domain("concat of zero tensors".into()));
        };
        let m = self.shape(first)[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != m {
                return Err(Error::shape("concat_cols", self.shape(first), s));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let ng = self.ng(parts);
        Ok(self.push(vec![m, total], out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Elementwise maximum over each set of rows of `x`.
    ///
    /// Output row `s` holds, per column, the maximum over rows `sets[s]`.
    /// Backward routes gradient to the argmax row; ties go to the lowest row.
    pub fn max_pool_rows(&mut self, x: Var, sets: &[Vec<usize>]) -> Result<Var> {
        let d = last_dim(self.shape(x));
        let rows = rows_of(self.shape(x));
        let xv = self.value(x);
        let mut out = Vec::with_capacity(sets.len() * d);
        let mut arg = Vec::with_capacity(sets.len() * d);
        for set in sets {
            if set.is_empty() {
                return Err(Error::Domain("max-pool over an empty set".into()));
            }
            if let Some(&bad) = set.iter().find(|&&r| r >= rows) {
                return Err(Error::Domain(format!("row {bad} out of range for {rows} rows")));
            }
            for c in 0..d {
                let mut best_row = set[0];
                let mut best = xv[best_row * d + c];
                for &r in &set[1..] {
                    let v = xv[r * d + c];
                    if v > best || (v == best && r < best_row) {
                        best = v;
                        best_row = r;
                    }
                }
                out.push(best);
                arg.push(best_row * d + c);
            }
        }
        let ng = self.ng(&[x]);
        Ok(self.push(vec![sets.len(), d], out, Op::MaxPoolRows(x, arg), ng))
    }

    /// Same-padded dilated 2D cross-correlation.
    ///
    /// `x: [h, w, c_in]`, `kernel: [k, k, c_in, c_out]`, optional `bias: [c_out]`.
    /// Taps sit at offsets `dilation * (-(k-1)/2 ..= (k-1)/2)`; out-of-range
    /// taps read zero.
    pub fn conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
    ) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(kernel));
        if sk.len() != 4 || sk[0] != sk[1] {
            return Err(Error::Config(format!("conv kernel must be [k, k, c_in, c_out], got {sk:?}")));
        }
        let k = sk[0];
        if k % 2 == 0 {
            return Err(Error::Config(format!("conv kernel size must be odd, got {k}")));
        }
        if dilation == 0 {
            return Err(Error::Config("conv dilation must be positive".into()));
        }
        if sx.len() != 3 || sx[2] != sk[2] {
            return Err(Error::shape("conv2d", sx, sk));
        }
        let (h, w, cin, cout) = (sx[0], sx[1], sk[2], sk[3]);
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv2d(bias)", sk, self.shape(b)));
            }
        }
        let pad = (dilation * (k - 1) / 2) as isize;
        let (xv, kv) = (self.value(x), self.value(kernel));
        let mut out = vec![T::zero(); h * w * cout];
        for i in 0..h {
            for j in 0..w {
                let orow = &mut out[(i * w + j) * cout..(i * w + j + 1) * cout];
                if let Some(b) = bias {
                    orow.copy_from_slice(self.nodes[b.0].data.as_slice());
                }
                for u in 0..k {
                    let ii = i as isize + (dilation * u) as isize - pad;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for v in 0..k {
                        let jj = j as isize + (dilation * v) as isize - pad;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        let xbase = (ii as usize * w + jj as usize) * cin;
                        let kbase = (u * k + v) * cin * cout;
                        for c in 0..cin {
                            let xc = xv[xbase + c];
                            if xc == T::zero() {
                                continue;
                            }
                            let krow = &kv[kbase + c * cout..kbase + (c + 1) * cout];
                            for (o, &kw) in orow.iter_mut().zip(krow) {
                                *o += xc * kw;
                            }
                        }
                    }
                }
            }
        }
        let mut deps = vec![x, kernel];
        deps.extend(bias);
        let ng = self.ng(&deps);
        Ok(self.push(
            vec![h, w, cout],
            out,
            Op::Conv2d {
                x,
                kernel,
                bias,
                dilation,
            },
            ng,
        ))
    }

    /// Per-slice bilinear forms over all ordered row pairs:
    /// `out[i, j, k] = h_i^T W[k] h_j` for `h: [n, d]`, `w: [K, d, d]`.
    pub fn bilinear_pairs(&mut self, h: Var, w: Var) -> Result<Var> {
        let (sh, sw) = (self.shape(h), self.shape(w));
        if sh.len() != 2 || sw.len() != 3 || sw[1] != sh[1] || sw[2] != sh[1] {
            return Err(Error::shape("bilinear_pairs", sh, sw));
        }
        let (n, d, kk) = (sh[0], sh[1], sw[0]);
        let (hv, wv) = (self.value(h), self.value(w));
        // proj[k][j][a] = sum_b W[k, a, b] h[j, b]
        let mut proj = vec![T::zero(); kk * n * d];
        for k in 0..kk {
            for j in 0..n {
                let hj = &hv[j * d..(j + 1) * d];
                for a in 0..d {
                    let wrow = &wv[(k * d + a) * d..(k * d + a + 1) * d];
                    proj[(k * n + j) * d + a] = wrow.iter().zip(hj).map(|(&x, &y)| x * y).sum();
                }
            }
        }
        let mut out = vec![T::zero(); n * n * kk];
        for i in 0..n {
            let hi = &hv[i * d..(i + 1) * d];
            for j in 0..n {
                for k in 0..kk {
                    let pj = &proj[(k * n + j) * d..(k * n + j + 1) * d];
                    out[(i * n + j) * kk + k] = hi.iter().zip(pj).map(|(&x, &y)| x * y).sum();
                }
            }
        }
        let ng = self.ng(&[h, w]);
        Ok(self.push(vec![n, n, kk], out, Op::Bilinear { h, w, proj }, ng))
    }

    /// Euclidean distance between two equally shaped tensors (a scalar).
    pub fn distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("distance", a, b)?;
        let d = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<T>()
            .sqrt();
        let ng = self.ng(&[a, b]);
        Ok(self.push(vec![], vec![d], Op::Distance(a, b), ng))
    }

    /// Mean binary cross-entropy on logits against `labels` in {0, 1}.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[T]) -> Result<Var> {
        let xv = self.value(logits);
        if xv.len() != labels.len() {
            return Err(Error::shape("bce_with_logits", self.shape(logits), &[labels.len()]));
        }
        if xv.is_empty() {
            return Err(Error::Domain("bce over zero cells".into()));
        }
        if let Some(y) = labels.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(Error::Domain(format!("boundary label {y} is not 0 or 1")));
        }
        let total: T = xv
            .iter()
            .zip(labels)
            .map(|(&x, &y)| x.max(T::zero()) - x * y + (T::one() + (-x.abs()).exp()).ln())
            .sum();
        let loss = total / T::of(xv.len() as f64);
        let ng = self.ng(&[logits]);
        Ok(self.push(vec![], vec![loss], Op::BceWithLogits(logits, labels.to_vec()), ng))
    }

    /// Mean negative log-likelihood of `targets` under the softmax of
    /// `logits: [m, c]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape("cross_entropy", s, &[targets.len()]));
        }
        let (m, c) = (s[0], s[1]);
        if m == 0 {
            return Err(Error::Domain("cross-entropy over zero rows".into()));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Domain(format!("target class {t} out of range for {c} classes")));
        }
        let xv = self.value(logits);
        let mut probs = vec![T::zero(); m * c];
        let mut total = T::zero();
        for r in 0..m {
            let row = &xv[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
            total += lse - row[targets[r]];
            softmax_row(row, &mut probs[r * c..(r + 1) * c]);
        }
        let loss = total / T::of(m as f64);
        let ng = self.ng(&[logits]);
        Ok(self.push(
            vec![],
            vec![loss],
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ln = self.node(loss);
        if ln.data.len() != 1 {
            return Err(Error::shape("backward", &ln.shape, &[]));
        }
        if !ln.data[0].is_finite() {
            return Err(Error::NonFinite(format!("loss = {}", ln.data[0])));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (path, v) in &self.params {
            if let Some(g) = &grads[v.0] {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of `{path}`")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.data.len()]))
    }

    fn backprop_node(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[idx];
        let out = &node.data;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(s) = self.slot(grads, v) {
                        s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(s) = self.slot(grads, *a) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += -g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(grads, *a) {
                    for ((s, &g), &y) in s.iter_mut().zip(g).zip(bv) {
                        *s += g * y;
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for ((s, &g), &x) in s.iter_mut().zip(g).zip(av) {
                        *s += g * x;
                    }
                }
            }
            Op::MulConst(x, mask) => {
                if let Some(s) = self.slot(grads, *x) {
                    for ((s, &g), &m) in s.iter_mut().zip(g).zip(mask) {
                        *s += g * m;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g * *c);
                }
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, &g)| *s += g);
                }
                if let Some(s) = self.slot(grads, *b) {
                    let d = s.len();
                    for (i, &gv) in g.iter().enumerate() {
                        s[i % d] += gv;
                    }
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                if let Some(s) = self.slot(grads, *x) {
                    for ((s, &g), &v) in s.iter_mut().zip(g).zip(xv) {
                        if v > T::zero() {
                            *s += g;
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    for ((s, &g), &y) in s.iter_mut().zip(g).zip(out) {
                        *s += g * y * (T::one() - y);
                    }
                }
            }
            Op::Sqrt(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    for ((s, &g), &y) in s.iter_mut().zip(g).zip(out) {
                        if y > T::zero() {
                            *s += g / (T::of(2.0) * y);
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    let gv = g[0] / T::of(s.len() as f64);
                    s.iter_mut().for_each(|s| *s += gv);
                }
            }
            Op::MeanRows(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    let d = g.len();
                    let inv = T::one() / T::of((s.len() / d) as f64);
                    for row in s.chunks_mut(d) {
                        for (s, &gv) in row.iter_mut().zip(g) {
                            *s += gv * inv;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(s) = self.slot(grads, *a) {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &bv[p * n..(p + 1) * n];
                            s[i * k + p] += grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = av[i * k + p];
                            for (s, &gv) in s[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *s += x * gv;
                            }
                        }
                    }
                }
            }
            Op::Affine(x, w, b) => {
                let sw = self.shape(*w);
                let (inp, od) = (sw[0], sw[1]);
                let rows = g.len() / od;
                let (xv, wv) = (self.value(*x), self.value(*w));
                if let Some(s) = self.slot(grads, *x) {
                    for r in 0..rows {
                        let grow = &g[r * od..(r + 1) * od];
                        for i in 0..inp {
                            let wrow = &wv[i * od..(i + 1) * od];
                            s[r * inp + i] += grow.iter().zip(wrow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *w) {
                    for r in 0..rows {
                        let grow = &g[r * od..(r + 1) * od];
                        for i in 0..inp {
                            let xi = xv[r * inp + i];
                            if xi == T::zero() {
                                continue;
                            }
                            for (s, &gv) in s[i * od..(i + 1) * od].iter_mut().zip(grow) {
                                *s += xi * gv;
                            }
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *b) {
                    for grow in g.chunks(od) {
                        s.iter_mut().zip(grow).for_each(|(s, &gv)| *s += gv);
                    }
                }
            }
            Op::Transpose(x) => {
                let (m, n) = (node.shape[1], node.shape[0]);
                if let Some(s) = self.slot(grads, *x) {
                    for i in 0..m {
                        for j in 0..n {
                            s[i * n + j] += g[j * m + i];
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                let d = last_dim(&node.shape);
                if let Some(s) = self.slot(grads, *x) {
                    for ((srow, grow), yrow) in s.chunks_mut(d).zip(g.chunks(d)).zip(out.chunks(d)) {
                        let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for ((s, &gv), &y) in srow.iter_mut().zip(grow).zip(yrow) {
                            *s += y * (gv - dot);
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
                let d = last_dim(&node.shape);
                let gv = self.value(*gamma);
                if let Some(s) = self.slot(grads, *x) {
                    let dd = T::of(d as f64);
                    for (r, &rs) in rstd.iter().enumerate() {
                        let grow = &g[r * d..(r + 1) * d];
                        let hrow = &xhat[r * d..(r + 1) * d];
                        let dxhat: Vec<T> = grow.iter().zip(gv).map(|(&a, &b)| a * b).collect();
                        let sum_d: T = dxhat.iter().copied().sum();
                        let sum_dh: T = dxhat.iter().zip(hrow).map(|(&a, &b)| a * b).sum();
                        for c in 0..d {
                            s[r * d + c] += rs / dd * (dd * dxhat[c] - sum_d - hrow[c] * sum_dh);
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *gamma) {
                    for (grow, hrow) in g.chunks(d).zip(xhat.chunks(d)) {
                        for ((s, &gv), &h) in s.iter_mut().zip(grow).zip(hrow) {
                            *s += gv * h;
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *beta) {
                    for grow in g.chunks(d) {
                        s.iter_mut().zip(grow).for_each(|(s, &gv)| *s += gv);
                    }
                }
            }
            Op::GatherRows(x, idx) => {
                let d = last_dim(&node.shape);
                if let Some(s) = self.slot(grads, *x) {
                    for (o, &i) in idx.iter().enumerate() {
                        for c in 0..d {
                            s[i * d + c] += g[o * d + c];
                        }
                    }
                }
            }
            Op::SliceCols(x, start) => {
                let (m, len) = (node.shape[0], node.shape[1]);
                let n = self.shape(*x)[1];
                if let Some(s) = self.slot(grads, *x) {
                    for r in 0..m {
                        for c in 0..len {
                            s[r * n + start + c] += g[r * len + c];
                        }
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (m, total) = (node.shape[0], node.shape[1]);
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if let Some(s) = self.slot(grads, p) {
                        for r in 0..m {
                            for c in 0..w {
                                s[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::MaxPoolRows(x, arg) => {
                if let Some(s) = self.slot(grads, *x) {
                    for (&src, &gv) in arg.iter().zip(g) {
                        s[src] += gv;
                    }
                }
            }
            Op::Conv2d {
                x,
                kernel,
                bias,
                dilation,
            } => self.conv2d_backward(*x, *kernel, *bias, *dilation, g, grads),
            Op::Bilinear { h, w, proj } => {
                let sh = self.shape(*h);
                let (n, d) = (sh[0], sh[1]);
                let kk = self.shape(*w)[0];
                let (hv, wv) = (self.value(*h), self.value(*w));
                // d proj[k][j][a] = sum_i g[i,j,k] h[i,a]
                let mut dproj = vec![T::zero(); kk * n * d];
                let mut dh_direct = vec![T::zero(); n * d];
                for i in 0..n {
                    let hi = &hv[i * d..(i + 1) * d];
                    for j in 0..n {
                        for k in 0..kk {
                            let gv = g[(i * n + j) * kk + k];
                            if gv == T::zero() {
                                continue;
                            }
                            let base = (k * n + j) * d;
                            for a in 0..d {
                                dproj[base + a] += gv * hi[a];
                                dh_direct[i * d + a] += gv * proj[base + a];
                            }
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *w) {
                    for k in 0..kk {
                        for j in 0..n {
                            let hj = &hv[j * d..(j + 1) * d];
                            for a in 0..d {
                                let dp = dproj[(k * n + j) * d + a];
                                let srow = &mut s[(k * d + a) * d..(k * d + a + 1) * d];
                                for (s, &hb) in srow.iter_mut().zip(hj) {
                                    *s += dp * hb;
                                }
                            }
                        }
                    }
                }
                if let Some(s) = self.slot(grads, *h) {
                    for (s, &v) in s.iter_mut().zip(&dh_direct) {
                        *s += v;
                    }
                    for k in 0..kk {
                        for j in 0..n {
                            for a in 0..d {
                                let dp = dproj[(k * n + j) * d + a];
                                let wrow = &wv[(k * d + a) * d..(k * d + a + 1) * d];
                                for (b, &wab) in wrow.iter().enumerate() {
                                    s[j * d + b] += dp * wab;
                                }
                            }
                        }
                    }
                }
            }
            Op::Distance(a, b) => {
                let dist = out[0];
                if dist > T::zero() {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let coef = g[0] / dist;
                    if let Some(s) = self.slot(grads, *a) {
                        for ((s, &x), &y) in s.iter_mut().zip(av).zip(bv) {
                            *s += coef * (x - y);
                        }
                    }
                    if let Some(s) = self.slot(grads, *b) {
                        for ((s, &x), &y) in s.iter_mut().zip(av).zip(bv) {
                            *s += coef * (y - x);
                        }
                    }
                }
            }
            Op::BceWithLogits(x, labels) => {
                let xv = self.value(*x);
                if let Some(s) = self.slot(grads, *x) {
                    let coef = g[0] / T::of(labels.len() as f64);
                    for ((s, &v), &y) in s.iter_mut().zip(xv).zip(labels) {
                        *s += coef * (sigmoid(v) - y);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = self.shape(*logits)[1];
                if let Some(s) = self.slot(grads, *logits) {
                    let coef = g[0] / T::of(targets.len() as f64);
                    for (r, &t) in targets.iter().enumerate() {
                        for k in 0..c {
                            let onehot = if k == t { T::one() } else { T::zero() };
                            s[r * c + k] += coef * (probs[r * c + k] - onehot);
                        }
                    }
                }
            }
        }
    }

    fn conv2d_backward(
        &self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        dilation: usize,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let sx = self.shape(x);
        let sk = self.shape(kernel);
        let (h, w, cin, k, cout) = (sx[0], sx[1], sx[2], sk[0], sk[3]);
        let pad = (dilation * (k - 1) / 2) as isize;
        let (xv, kv) = (self.value(x), self.value(kernel));
        let taps = |i: usize, j: usize| {
            (0..k).flat_map(move |u| (0..k).map(move |v| (u, v))).filter_map(move |(u, v)| {
                let ii = i as isize + (dilation * u) as isize - pad;
                let jj = j as isize + (dilation * v) as isize - pad;
                (ii >= 0 && ii < h as isize && jj >= 0 && jj < w as isize)
                    .then_some((u, v, ii as usize, jj as usize))
            })
        };
        if let Some(s) = self.slot(grads, x) {
            for i in 0..h {
                for j in 0..w {
                    let grow = &g[(i * w + j) * cout..(i * w + j + 1) * cout];
                    for (u, v, ii, jj) in taps(i, j) {
                        let xbase = (ii * w + jj) * cin;
                        let kbase = (u * k + v) * cin * cout;
                        for c in 0..cin {
                            let krow = &kv[kbase + c * cout..kbase + (c + 1) * cout];
                            s[xbase + c] += krow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        }
                    }
                }
            }
        }
        if let Some(s) = self.slot(grads, kernel) {
            for i in 0..h {
                for j in 0..w {
                    let grow = &g[(i * w + j) * cout..(i * w + j + 1) * cout];
                    for (u, v, ii, jj) in taps(i, j) {
                        let xbase = (ii * w + jj) * cin;
                        let kbase = (u * k + v) * cin * cout;
                        for c in 0..cin {
                            let xc = xv[xbase + c];
                            if xc == T::zero() {
                                continue;
                            }
                            let srow = &mut s[kbase + c * cout..kbase + (c + 1) * cout];
                            for (s, &gv) in srow.iter_mut().zip(grow) {
                                *s += xc * gv;
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = bias {
            if let Some(s) = self.slot(grads, b) {
                for grow in g.chunks(cout) {
                    s.iter_mut().zip(grow).for_each(|(s, &gv)| *s += gv);
                }
            }
        }
    }
}
