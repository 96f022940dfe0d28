use alloc::vec;
use alloc::vec::Vec;

use super::ops::sigmoid;
use super::{Graph, Op, Var};
use crate::{Error, Real, Result, Tensor};

/// Gradients produced by [`Graph::backward`], keyed by node.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of `shape` when `v` did not contribute.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn acc<T: Real>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
    slot.get_or_insert_with(|| vec![T::zero(); len])
}

impl<T: Real> Graph<T> {
    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape("backward", lv.shape(), &[1]));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.map(|g| Tensor::new(n.value.shape(), g).expect("gradient matches value shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2();
                let n = self.value(*b).dims2().1;
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], m * k);
                    for r in 0..m {
                        for p in 0..k {
                            let mut s = T::zero();
                            for c in 0..n {
                                s += dy[r * n + c] * bv[p * n + c];
                            }
                            ga[r * k + p] += s;
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], k * n);
                    for r in 0..m {
                        for p in 0..k {
                            let a_rp = av[r * k + p];
                            for c in 0..n {
                                gb[p * n + c] += a_rp * dy[r * n + c];
                            }
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                let (m, n) = self.value(*x).dims2();
                let gx = acc(&mut grads[x.0], m * n);
                for r in 0..m {
                    for c in 0..n {
                        gx[r * n + c] += dy[c * m + r];
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        for (g, &d) in acc(&mut grads[v.0], dy.len()).iter_mut().zip(dy) {
                            *g += d;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    for (g, &d) in acc(&mut grads[a.0], dy.len()).iter_mut().zip(dy) {
                        *g += d;
                    }
                }
                if self.wants(*b) {
                    for (g, &d) in acc(&mut grads[b.0], dy.len()).iter_mut().zip(dy) {
                        *g -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], dy.len());
                    for j in 0..dy.len() {
                        ga[j] += dy[j] * bv[j];
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], dy.len());
                    for j in 0..dy.len() {
                        gb[j] += dy[j] * av[j];
                    }
                }
            }
            Op::Scale(x, c) => {
                for (g, &d) in acc(&mut grads[x.0], dy.len()).iter_mut().zip(dy) {
                    *g += d * *c;
                }
            }
            Op::AddRow(x, b) => {
                let n = self.value(*b).len();
                if self.wants(*x) {
                    for (g, &d) in acc(&mut grads[x.0], dy.len()).iter_mut().zip(dy) {
                        *g += d;
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], n);
                    for (j, &d) in dy.iter().enumerate() {
                        gb[j % n] += d;
                    }
                }
            }
            Op::OuterAdd(a, b) => {
                let (ta, j) = self.value(*a).dims2();
                let ub = self.value(*b).dims2().0;
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.0], ta * j);
                    for t in 0..ta {
                        for u in 0..ub {
                            for c in 0..j {
                                ga[t * j + c] += dy[(t * ub + u) * j + c];
                            }
                        }
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], ub * j);
                    for t in 0..ta {
                        for u in 0..ub {
                            for c in 0..j {
                                gb[u * j + c] += dy[(t * ub + u) * j + c];
                            }
                        }
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = acc(&mut grads[x.0], dy.len());
                for j in 0..dy.len() {
                    gx[j] += dy[j] * y[j] * (T::one() - y[j]);
                }
            }
            Op::Tanh(x) => {
                let gx = acc(&mut grads[x.0], dy.len());
                for j in 0..dy.len() {
                    gx[j] += dy[j] * (T::one() - y[j] * y[j]);
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let gx = acc(&mut grads[x.0], dy.len());
                for j in 0..dy.len() {
                    if xv[j] > T::zero() {
                        gx[j] += dy[j];
                    }
                }
            }
            Op::Swish(x) => {
                let xv = self.value(*x).data();
                let gx = acc(&mut grads[x.0], dy.len());
                for j in 0..dy.len() {
                    let s = sigmoid(xv[j]);
                    gx[j] += dy[j] * (s + xv[j] * s * (T::one() - s));
                }
            }
            Op::Glu(x) => {
                let (m, n2) = self.value(*x).dims2();
                let n = n2 / 2;
                let xv = self.value(*x).data();
                let gx = acc(&mut grads[x.0], m * n2);
                for r in 0..m {
                    for c in 0..n {
                        let a = xv[r * n2 + c];
                        let s = sigmoid(xv[r * n2 + n + c]);
                        let d = dy[r * n + c];
                        gx[r * n2 + c] += d * s;
                        gx[r * n2 + n + c] += d * a * s * (T::one() - s);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = self.value(*x).dims2();
                let gv = self.value(*gamma).data();
                if self.wants(*gamma) {
                    let gg = acc(&mut grads[gamma.0], n);
                    for j in 0..m * n {
                        gg[j % n] += dy[j] * xhat[j];
                    }
                }
                if self.wants(*beta) {
                    let gb = acc(&mut grads[beta.0], n);
                    for j in 0..m * n {
                        gb[j % n] += dy[j];
                    }
                }
                if self.wants(*x) {
                    let nf = T::of(n as f64);
                    let gx = acc(&mut grads[x.0], m * n);
                    for r in 0..m {
                        let row = r * n..(r + 1) * n;
                        let dxhat: Vec<T> = row.clone().map(|j| dy[j] * gv[j - r * n]).collect();
                        let s1 = dxhat.iter().copied().sum::<T>();
                        let s2 = dxhat
                            .iter()
                            .zip(&xhat[row.clone()])
                            .map(|(&a, &b)| a * b)
                            .sum::<T>();
                        for (c, j) in row.enumerate() {
                            gx[j] += inv_std[r] / nf * (nf * dxhat[c] - s1 - xhat[j] * s2);
                        }
                    }
                }
            }
            Op::CausalConv { x, w, b } => {
                let (t_len, c) = self.value(*x).dims2();
                let k = self.value(*w).dims2().0;
                let (xv, wv) = (self.value(*x).data(), self.value(*w).data());
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.0], c);
                    for (j, &d) in dy.iter().enumerate() {
                        gb[j % c] += d;
                    }
                }
                if self.wants(*w) {
                    let gw = acc(&mut grads[w.0], k * c);
                    for t in 0..t_len {
                        for kk in 0..k {
                            if let Some(s) = (t + kk + 1).checked_sub(k) {
                                for ch in 0..c {
                                    gw[kk * c + ch] += dy[t * c + ch] * xv[s * c + ch];
                                }
                            }
                        }
                    }
                }
                if self.wants(*x) {
                    let gx = acc(&mut grads[x.0], t_len * c);
                    for t in 0..t_len {
                        for kk in 0..k {
                            if let Some(s) = (t + kk + 1).checked_sub(k) {
                                for ch in 0..c {
                                    gx[s * c + ch] += dy[t * c + ch] * wv[kk * c + ch];
                                }
                            }
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let (v, e) = self.value(*table).dims2();
                let gt = acc(&mut grads[table.0], v * e);
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..e {
                        gt[id * e + c] += dy[r * e + c];
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let (m, n) = self.value(*x).dims2();
                let gx = acc(&mut grads[x.0], m * n);
                for r in 0..m {
                    let s = dy[r * n..(r + 1) * n].iter().copied().sum::<T>();
                    for c in 0..n {
                        let j = r * n + c;
                        gx[j] += dy[j] - y[j].exp() * s;
                    }
                }
            }
            Op::MaskedSoftmax(x) => {
                let (m, n) = self.value(*x).dims2();
                let gx = acc(&mut grads[x.0], m * n);
                for r in 0..m {
                    let row = r * n..(r + 1) * n;
                    let dot = row.clone().map(|j| y[j] * dy[j]).sum::<T>();
                    for j in row {
                        gx[j] += y[j] * (dy[j] - dot);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let m = self.nodes[i].value.dims2().0;
                let total = self.nodes[i].value.dims2().1;
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).dims2().1;
                    if self.wants(*p) {
                        let gp = acc(&mut grads[p.0], m * w);
                        for r in 0..m {
                            for c in 0..w {
                                gp[r * w + c] += dy[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.wants(*p) {
                        for (g, &d) in acc(&mut grads[p.0], len)
                            .iter_mut()
                            .zip(&dy[offset..offset + len])
                        {
                            *g += d;
                        }
                    }
                    offset += len;
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = self.value(*x).dims2();
                let w = self.nodes[i].value.dims2().1;
                let gx = acc(&mut grads[x.0], m * n);
                for r in 0..m {
                    for c in 0..w {
                        gx[r * n + start + c] += dy[r * w + c];
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let (m, n) = self.value(*x).dims2();
                let gx = acc(&mut grads[x.0], m * n);
                for (g, &d) in gx[start * n..].iter_mut().zip(dy) {
                    *g += d;
                }
            }
            Op::BroadcastRows(x) => {
                let n = self.value(*x).len();
                let gx = acc(&mut grads[x.0], n);
                for (j, &d) in dy.iter().enumerate() {
                    gx[j % n] += d;
                }
            }
            Op::PadRows(x) => {
                let len = self.value(*x).len();
                for (g, &d) in acc(&mut grads[x.0], len).iter_mut().zip(dy) {
                    *g += d;
                }
            }
            Op::Reshape(x) => {
                for (g, &d) in acc(&mut grads[x.0], dy.len()).iter_mut().zip(dy) {
                    *g += d;
                }
            }
            Op::Sum(x) => {
                let len = self.value(*x).len();
                for g in acc(&mut grads[x.0], len).iter_mut() {
                    *g += dy[0];
                }
            }
            Op::Mean(x) => {
                let len = self.value(*x).len();
                let d = dy[0] / T::of(len as f64);
                for g in acc(&mut grads[x.0], len).iter_mut() {
                    *g += d;
                }
            }
            Op::Precomputed { input, grad } => {
                for (g, &d) in acc(&mut grads[input.0], grad.len()).iter_mut().zip(grad) {
                    *g += d * dy[0];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f32>::new();
        let w = g.param(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(w), Err(Error::Shape { .. })));
    }

    #[test]
    fn sum_gives_all_ones() {
        let mut g = Graph::<f32>::new();
        let w = g.param(Tensor::full(&[2, 3], 0.5));
        let l = g.sum(w);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn mse_against_zero_has_derivative_two_w() {
        let mut g = Graph::<f32>::new();
        let w = g.param(Tensor::scalar(2.0));
        let z = g.constant(Tensor::scalar(0.0));
        let l = g.mse(w, z).unwrap();
        assert_eq!(g.value(l).item(), 4.0);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[4.0]);
        assert!(grads.get(z).is_none());
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::<f64>::new();
        let w = g.param(Tensor::scalar(3.0));
        let sq = g.mul(w, w).unwrap();
        let grads = g.backward(sq).unwrap();
        assert_eq!(grads.get(w).unwrap().item(), 6.0);
    }
}
