use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Op, Var};
use crate::tensor::matmul_into;
use crate::{Error, Real, Result, Tensor};

/// Additive penalty applied to masked attention scores before the softmax.
pub const MASK_PENALTY: f64 = -1e9;

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Graph<T> {
    fn mat(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::shape(op, s, &[]));
        }
        Ok((s[0], s[1]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).map(f);
        let rg = self.any_grad(&[x]);
        self.push(value, op, rg)
    }

    fn elementwise(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(va.shape(), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.mat(a, "matmul")?;
        let (k2, n) = self.mat(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.mat(x, "transpose")?;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::Transpose(x), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Adds a bias vector of length `n` to every row of `x[m×n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.mat(x, "add_row")?;
        if self.value(bias).len() != n {
            return Err(Error::shape("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let src = self.value(x).data();
        let data = (0..m * n).map(|i| src[i] + b[i % n]).collect();
        let value = Tensor::new(&[m, n], data)?;
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(value, Op::AddRow(x, bias), rg))
    }

    /// `out[t·U + u] = a[t] + b[u]` for `a[T×J]`, `b[U×J]`.
    pub fn outer_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, ja) = self.mat(a, "outer_add")?;
        let (ub, jb) = self.mat(b, "outer_add")?;
        if ja != jb {
            return Err(Error::shape("outer_add", self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(ta * ub * ja);
        for t in 0..ta {
            for u in 0..ub {
                out.extend((0..ja).map(|j| va[t * ja + j] + vb[u * ja + j]));
            }
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::new(&[ta * ub, ja], out)?, Op::OuterAdd(a, b), rg))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(T::zero()), Op::Relu(x))
    }

    /// `x · sigmoid(x)`.
    pub fn swish(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * sigmoid(v), Op::Swish(x))
    }

    /// Gated linear unit over the column halves: `a · sigmoid(b)`.
    pub fn glu(&mut self, x: Var) -> Result<Var> {
        let (m, n2) = self.mat(x, "glu")?;
        if n2 % 2 != 0 {
            return Err(Error::shape("glu", self.shape(x), &[]));
        }
        let n = n2 / 2;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &src[i * n2..(i + 1) * n2];
            out.extend((0..n).map(|j| row[j] * sigmoid(row[n + j])));
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Glu(x), rg))
    }

    /// Per-row normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (m, n) = self.mat(x, "layer_norm")?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gamma)));
        }
        let src = self.value(x).data();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let nf = T::of(n as f64);
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * gv[j] + bv[j]);
            }
        }
        let rg = self.any_grad(&[x, gamma, beta]);
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        Ok(self.push(Tensor::new(&[m, n], out)?, op, rg))
    }

    /// Length-preserving causal depthwise convolution.
    ///
    /// `x[T×C]`, `w[K×C]`, `b[C]`: `y[t,c] = b[c] + Σ_k w[k,c]·x[t−K+1+k, c]`,
    /// with rows before the start treated as zero.
    pub fn causal_depthwise_conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (t_len, c) = self.mat(x, "causal_depthwise_conv")?;
        let (k, cw) = self.mat(w, "causal_depthwise_conv")?;
        if cw != c || self.value(b).len() != c {
            return Err(Error::shape(
                "causal_depthwise_conv",
                self.shape(x),
                self.shape(w),
            ));
        }
        let (xv, wv, bv) = (
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        let mut out = Vec::with_capacity(t_len * c);
        for t in 0..t_len {
            for ch in 0..c {
                let mut acc = bv[ch];
                for kk in 0..k {
                    if let Some(s) = (t + kk + 1).checked_sub(k) {
                        acc += wv[kk * c + ch] * xv[s * c + ch];
                    }
                }
                out.push(acc);
            }
        }
        let rg = self.any_grad(&[x, w, b]);
        Ok(self.push(
            Tensor::new(&[t_len, c], out)?,
            Op::CausalConv { x, w, b },
            rg,
        ))
    }

    /// Gathers rows of `table[V×E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, e) = self.mat(table, "embedding")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Vocabulary(alloc::format!(
                "token id {bad} out of range for {v} entries"
            )));
        }
        if ids.is_empty() {
            return Err(Error::Parameter(
                "embedding lookup needs at least one id".into(),
            ));
        }
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            out.extend_from_slice(&src[i * e..(i + 1) * e]);
        }
        let rg = self.any_grad(&[table]);
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push(Tensor::new(&[ids.len(), e], out)?, op, rg))
    }

    /// Row-wise log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.mat(x, "log_softmax")?;
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &src[i * n..(i + 1) * n];
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::LogSoftmax(x), rg))
    }

    /// Row-wise softmax restricted to positions where `mask` is true.
    ///
    /// `mask` is either a single row of length `n` shared by all rows, or a
    /// full `m×n` matrix. Masked positions get exactly zero probability.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (m, n) = self.mat(x, "masked_softmax")?;
        if mask.len() != n && mask.len() != m * n {
            return Err(Error::shape("masked_softmax", self.shape(x), &[mask.len()]));
        }
        let src = self.value(x).data();
        let penalty = T::of(MASK_PENALTY);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let mrow = if mask.len() == n {
                mask
            } else {
                &mask[i * n..(i + 1) * n]
            };
            if !mrow.iter().any(|&b| b) {
                return Err(Error::EmptyMaskRow { row: i });
            }
            let shifted: Vec<T> = src[i * n..(i + 1) * n]
                .iter()
                .zip(mrow)
                .map(|(&v, &keep)| if keep { v } else { v + penalty })
                .collect();
            let mx = shifted.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = shifted.iter().map(|&v| (v - mx).exp()).collect();
            let z = exps.iter().copied().sum::<T>();
            out.extend(
                exps.iter()
                    .zip(mrow)
                    .map(|(&e, &keep)| if keep { e / z } else { T::zero() }),
            );
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MaskedSoftmax(x), rg))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).dims2().1;
        self.masked_softmax(x, &vec![true; n])
    }

    /// Concatenates matrices along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Parameter("concat of nothing".into()))?;
        let (m, _) = self.mat(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.mat(p, "concat_cols")?;
            if pm != m {
                return Err(Error::shape(
                    "concat_cols",
                    self.shape(first),
                    self.shape(p),
                ));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(&[m, total], out)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Stacks matrices vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Parameter("concat of nothing".into()))?;
        let (_, n) = self.mat(first, "concat_rows")?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (pm, pn) = self.mat(p, "concat_rows")?;
            if pn != n {
                return Err(Error::shape(
                    "concat_rows",
                    self.shape(first),
                    self.shape(p),
                ));
            }
            rows += pm;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = self.any_grad(parts);
        Ok(self.push(
            Tensor::new(&[rows, n], out)?,
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::shape("slice_cols", self.shape(x), &[start, len]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[m, len], out)?, Op::SliceCols { x, start }, rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.mat(x, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::shape("slice_rows", self.shape(x), &[start, len]));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[len, n], out)?, Op::SliceRows { x, start }, rg))
    }

    /// Repeats a single row `rows` times.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let (m, n) = self.value(x).dims2();
        if m != 1 || rows == 0 {
            return Err(Error::shape("broadcast_rows", self.shape(x), &[rows]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(src);
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[rows, n], out)?, Op::BroadcastRows(x), rg))
    }

    /// Appends zero rows.
    pub fn pad_rows(&mut self, x: Var, extra: usize) -> Result<Var> {
        let (m, n) = self.mat(x, "pad_rows")?;
        if extra == 0 {
            return Ok(x);
        }
        let mut out = self.value(x).data().to_vec();
        out.resize((m + extra) * n, T::zero());
        let rg = self.any_grad(&[x]);
        Ok(self.push(Tensor::new(&[m + extra, n], out)?, Op::PadRows(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().copied().sum::<T>() / T::of(v.len() as f64);
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean of squared differences over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Records a scalar computed outside the graph together with its gradient
    /// with respect to `input`.
    pub fn precomputed_scalar(&mut self, input: Var, value: T, grad: Vec<T>) -> Result<Var> {
        if grad.len() != self.value(input).len() {
            return Err(Error::shape(
                "precomputed_scalar",
                self.shape(input),
                &[grad.len()],
            ));
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::scalar(value), Op::Precomputed { input, grad }, rg))
    }

    /// Linear map `x·W + b` with `W[in×out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }
}
