//! Small fully connected networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its weight matrix (`out x in`, row-major) followed by its bias.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::math::{sqrt, tanh};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    /// Apply tanh after the last layer as well as the hidden ones.
    tanh_output: bool,
    params: Vec<f64>,
}

/// Per-layer activations from a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has an input layer")
    }
}

/// Dot product with a fixed summation order that the compiler can vectorize.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum()
}

impl Mlp {
    /// Gaussian weights with std `1/sqrt(fan_in)`, zero biases.
    pub fn new(dims: &[usize], tanh_output: bool, rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output dims");
        let mut params = Vec::with_capacity(param_count(dims));
        for d in dims.windows(2) {
            let normal = Normal::new(0.0, 1.0 / sqrt(d[0] as f64)).expect("finite std");
            params.extend((0..d[0] * d[1]).map(|_| normal.sample(rng)));
            params.extend(core::iter::repeat_n(0.0, d[1]));
        }
        Self { dims: dims.to_vec(), tanh_output, params }
    }

    pub fn from_params(dims: &[usize], tanh_output: bool, params: Vec<f64>) -> Option<Self> {
        (dims.len() >= 2 && params.len() == param_count(dims)).then(|| Self {
            dims: dims.to_vec(),
            tanh_output,
            params,
        })
    }

    /// A network whose every parameter is zero.
    pub fn zeros(dims: &[usize], tanh_output: bool) -> Self {
        Self { dims: dims.to_vec(), tanh_output, params: vec![0.0; param_count(dims)] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn tanh_output(&self) -> bool {
        self.tanh_output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 2 < self.dims.len() || self.tanh_output
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.trace(input).acts.pop().unwrap()
    }

    pub fn trace(&self, input: &[f64]) -> Trace {
        assert_eq!(input.len(), self.dims[0], "input dim");
        let mut acts = Vec::with_capacity(self.dims.len());
        acts.push(input.to_vec());
        let mut off = 0;
        for (l, d) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (d[0], d[1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let x = acts.last().unwrap();
            let mut y: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| dot(row, x) + bias)
                .collect();
            if self.activated(l) {
                y.iter_mut().for_each(|v| *v = tanh(*v));
            }
            acts.push(y);
            off += n_in * n_out + n_out;
        }
        Trace { acts }
    }

    /// Forward passes for several inputs at once; each weight row is read
    /// once per batch. Results equal [`Mlp::trace`] per input.
    pub fn trace_batch(&self, inputs: &[&[f64]]) -> Vec<Trace> {
        let mut acts: Vec<Vec<Vec<f64>>> = inputs
            .iter()
            .map(|x| {
                assert_eq!(x.len(), self.dims[0], "input dim");
                let mut a = Vec::with_capacity(self.dims.len());
                a.push(x.to_vec());
                a
            })
            .collect();
        let mut off = 0;
        for (l, d) in self.dims.windows(2).enumerate() {
            let (n_in, n_out) = (d[0], d[1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut ys = vec![vec![0.0; n_out]; inputs.len()];
            for (j, (row, bias)) in w.chunks_exact(n_in).zip(b).enumerate() {
                for (y, a) in ys.iter_mut().zip(&acts) {
                    y[j] = dot(row, &a[l]) + bias;
                }
            }
            for (y, a) in ys.into_iter().zip(acts.iter_mut()) {
                let mut y = y;
                if self.activated(l) {
                    y.iter_mut().for_each(|v| *v = tanh(*v));
                }
                a.push(y);
            }
            off += n_in * n_out + n_out;
        }
        acts.into_iter().map(|acts| Trace { acts }).collect()
    }

    /// Batched [`Mlp::backward`]: gradients are accumulated into `grad` in
    /// input order for every parameter, so the sum equals calling
    /// `backward` once per trace.
    pub fn backward_batch(
        &self,
        traces: &[Trace],
        grad_outputs: &[Vec<f64>],
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<Vec<f64>>> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut deltas: Vec<Vec<f64>> = grad_outputs.to_vec();
        let mut off = self.params.len();
        let n_layers = self.dims.len() - 1;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            off -= n_in * n_out + n_out;
            if self.activated(l) {
                for (delta, t) in deltas.iter_mut().zip(traces) {
                    for (d, yv) in delta.iter_mut().zip(&t.acts[l + 1]) {
                        *d *= 1.0 - yv * yv;
                    }
                }
            }
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (j, (row, gbias)) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).enumerate() {
                for (delta, t) in deltas.iter().zip(traces) {
                    let d = delta[j];
                    *gbias += d;
                    if d != 0.0 {
                        row.iter_mut().zip(&t.acts[l]).for_each(|(g, xv)| *g += d * xv);
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut next = vec![vec![0.0; n_in]; deltas.len()];
            for (j, row) in w.chunks_exact(n_in).enumerate() {
                for (n, delta) in next.iter_mut().zip(&deltas) {
                    let d = delta[j];
                    if d != 0.0 {
                        n.iter_mut().zip(row).for_each(|(n, wv)| *n += d * wv);
                    }
                }
            }
            deltas = next;
        }
        Some(deltas)
    }

    /// Accumulates `∂L/∂params` into `grad` given `∂L/∂output`. Returns
    /// `∂L/∂input` when `want_input` is set.
    pub fn backward(
        &self,
        trace: &Trace,
        grad_output: &[f64],
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        debug_assert_eq!(grad.len(), self.params.len());
        let mut delta = grad_output.to_vec();
        let mut off = self.params.len();
        let n_layers = self.dims.len() - 1;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            off -= n_in * n_out + n_out;
            if self.activated(l) {
                let y = &trace.acts[l + 1];
                for (d, yv) in delta.iter_mut().zip(y) {
                    *d *= 1.0 - yv * yv;
                }
            }
            let x = &trace.acts[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((row, gbias), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                *gbias += d;
                if d != 0.0 {
                    row.iter_mut().zip(x).for_each(|(g, xv)| *g += d * xv);
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut next = vec![0.0; n_in];
            for (row, &d) in w.chunks_exact(n_in).zip(&delta) {
                if d != 0.0 {
                    next.iter_mut().zip(row).for_each(|(n, wv)| *n += d * wv);
                }
            }
            delta = next;
        }
        Some(delta)
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (sqrt(vh) + self.eps);
        }
    }
}

/// Fisher-Yates permutation of `0..n` from `rng`.
pub fn permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    use rand::Rng as _;
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn sq_loss(net: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        net.forward(x).iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = Rng::seed_from_u64(3);
        for tanh_output in [false, true] {
            let net = Mlp::new(&[5, 7, 4, 3], tanh_output, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
            let target = [0.3, -0.2, 0.1];
            let trace = net.trace(&x);
            let go: Vec<f64> = trace.output().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            let mut grad = vec![0.0; net.params().len()];
            let gin = net.backward(&trace, &go, &mut grad, true).unwrap();
            let h = 1e-6;
            for i in (0..net.params().len()).step_by(7) {
                let mut p = net.clone();
                p.params_mut()[i] += h;
                let up = sq_loss(&p, &x, &target);
                p.params_mut()[i] -= 2.0 * h;
                let down = sq_loss(&p, &x, &target);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 + 1e-5 * fd.abs(), "param {i}: {fd} vs {}", grad[i]);
            }
            for i in 0..5 {
                let mut xp = x.clone();
                xp[i] += h;
                let up = sq_loss(&net, &xp, &target);
                xp[i] -= 2.0 * h;
                let down = sq_loss(&net, &xp, &target);
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gin[i]).abs() <= 1e-6 + 1e-5 * fd.abs());
            }
        }
    }

    #[test]
    fn init_std_follows_fan_in() {
        let mut rng = Rng::seed_from_u64(1);
        let net = Mlp::new(&[400, 300], false, &mut rng);
        let w = &net.params()[..400 * 300];
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var * 400.0 - 1.0).abs() < 0.02, "scaled var {}", var * 400.0);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut rng = Rng::seed_from_u64(2);
        let mut p = permutation(50, &mut rng);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn batched_passes_equal_per_sample_passes() {
        let mut rng = Rng::seed_from_u64(4);
        let net = Mlp::new(&[19, 6, 3], false, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..19).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
        let gos: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let traces = net.trace_batch(&refs);
        let mut g_seq = vec![0.0; net.params().len()];
        let mut gin_seq = Vec::new();
        for ((x, t), go) in xs.iter().zip(&traces).zip(&gos) {
            let single = net.trace(x);
            assert_eq!(single.output(), t.output());
            gin_seq.push(net.backward(&single, go, &mut g_seq, true).unwrap());
        }
        let mut g_batch = vec![0.0; net.params().len()];
        let gin_batch = net.backward_batch(&traces, &gos, &mut g_batch, true).unwrap();
        assert_eq!(g_seq, g_batch);
        assert_eq!(gin_seq, gin_batch);
    }
}
