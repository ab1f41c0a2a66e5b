// SPDX-License-Identifier: MIT OR Apache-2.0

//! Softmax-output feedforward network `β(x) = softmax(f(x))` with hand-written backprop.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Point, Result};

/// Hidden widths used for the LFD weight network.
pub const DEFAULT_HIDDEN: [usize; 2] = [128, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out × in`.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DenseParams {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// Network mapping `ℝ^d → Δ^{m−1}`: ReLU hidden layers, softmax output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkParams", into = "NetworkParams")]
pub struct BetaNetwork {
    layers: Vec<Dense>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct NetworkParams {
    hidden_activation: String,
    output_activation: String,
    layers: Vec<DenseParams>,
}

impl TryFrom<NetworkParams> for BetaNetwork {
    type Error = Error;
    fn try_from(p: NetworkParams) -> Result<Self> {
        if p.hidden_activation != "relu" || p.output_activation != "softmax" {
            return Err(Error::input("network: only relu hidden / softmax output is supported"));
        }
        let mut layers = Vec::with_capacity(p.layers.len());
        for (k, l) in p.layers.into_iter().enumerate() {
            let out = l.w.len();
            let inp = l.w.first().map_or(0, Vec::len);
            if out == 0 || inp == 0 || l.w.iter().any(|r| r.len() != inp) || l.b.len() != out {
                return Err(Error::input(format!("network: layer {k} has inconsistent shape")));
            }
            layers.push(Dense {
                w: DMatrix::from_fn(out, inp, |i, j| l.w[i][j]),
                b: DVector::from_vec(l.b),
            });
        }
        BetaNetwork::from_layers(layers)
    }
}

impl From<BetaNetwork> for NetworkParams {
    fn from(n: BetaNetwork) -> Self {
        NetworkParams {
            hidden_activation: "relu".into(),
            output_activation: "softmax".into(),
            layers: n
                .layers
                .into_iter()
                .map(|l| DenseParams {
                    w: (0..l.w.nrows())
                        .map(|i| l.w.row(i).iter().copied().collect())
                        .collect(),
                    b: l.b.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

fn softmax_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut col in out.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let s = col.sum();
        col /= s;
    }
    out
}

fn add_bias(z: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut col in z.column_iter_mut() {
        col += b;
    }
}

/// Per-layer activations kept for the backward pass.
pub struct ForwardCache {
    /// `inputs[k]` is the input to layer `k`; `inputs[0]` is the batch itself.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<DMatrix<f64>>,
    /// Softmax output, `m × N`.
    pub beta: DMatrix<f64>,
}

/// Training batch for the Fisher-divergence loss.
///
/// Columns are samples: `x` is `d × N`, each `basis_grads[j]` holds `∇ log pⱼ` at the
/// samples and `pre_grad` holds `∇ log p∞`.
pub struct LossBatch {
    pub x: DMatrix<f64>,
    pub basis_grads: Vec<DMatrix<f64>>,
    pub pre_grad: DMatrix<f64>,
}

impl LossBatch {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Residuals `Σⱼ βⱼ ∇ log pⱼ − ∇ log p∞`, `d × N`.
    fn residuals(&self, beta: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = -&self.pre_grad;
        for (j, g) in self.basis_grads.iter().enumerate() {
            for n in 0..r.ncols() {
                let bj = beta[(j, n)];
                let mut col = r.column_mut(n);
                col.axpy(bj, &g.column(n), 1.0);
            }
        }
        r
    }
}

impl BetaNetwork {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("network: at least one layer is required"));
        }
        for k in 1..layers.len() {
            if layers[k].w.ncols() != layers[k - 1].w.nrows() {
                return Err(Error::input(format!("network: layer {k} input width mismatch")));
            }
        }
        Ok(Self { layers })
    }

    /// He-uniform initialised network `input_dim → hidden… → m`.
    pub fn new(input_dim: usize, hidden: &[usize], m: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || m == 0 || hidden.contains(&0) {
            return Err(Error::input("network: widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(m);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let bound = (6.0 / inp as f64).sqrt();
                Dense {
                    w: DMatrix::from_fn(out, inp, |_, _| rng.random_range(-bound..bound)),
                    b: DVector::zeros(out),
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    /// `d → 128 → 64 → m`.
    pub fn with_default_widths(input_dim: usize, m: usize, seed: u64) -> Result<Self> {
        Self::new(input_dim, &DEFAULT_HIDDEN, m, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.w.nrows())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters, layer by layer: weights (column-major) then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::input("network: parameter vector has the wrong length"));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.as_mut_slice().copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.as_mut_slice().copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn forward_batch(&self, x: &DMatrix<f64>) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.w * &a;
            add_bias(&mut z, &l.b);
            inputs.push(a);
            a = if k == last {
                softmax_columns(&z)
            } else {
                z.map(|v| v.max(0.0))
            };
            pre.push(z);
        }
        ForwardCache {
            inputs,
            pre,
            beta: a,
        }
    }

    /// `β(x)` for a single point.
    pub fn forward(&self, x: &Point) -> Point {
        let m = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        self.forward_batch(&m).beta.column(0).into_owned()
    }

    /// `β(x)` and its Jacobian `∂βᵢ/∂xₖ` (`m × d`).
    pub fn forward_with_jacobian(&self, x: &Point) -> (Point, DMatrix<f64>) {
        let mut a = x.clone();
        let mut jac = DMatrix::<f64>::identity(x.len(), x.len());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let z = &l.w * &a + &l.b;
            jac = &l.w * jac;
            if k == last {
                let beta = {
                    let max = z.max();
                    let e = z.map(|v| (v - max).exp());
                    let s = e.sum();
                    e / s
                };
                // ∂β/∂z = diag(β) − β βᵀ
                let sj = DMatrix::from_diagonal(&beta) - &beta * beta.transpose();
                return (beta.clone(), sj * jac);
            }
            for (i, zi) in z.iter().enumerate() {
                if *zi <= 0.0 {
                    jac.row_mut(i).fill(0.0);
                }
            }
            a = z.map(|v| v.max(0.0));
        }
        unreachable!("network has at least one layer")
    }

    /// Mean squared residual `(1/N) Σₙ ‖Σⱼ βⱼ(xₙ) ∇ log pⱼ(xₙ) − ∇ log p∞(xₙ)‖²`.
    pub fn loss(&self, batch: &LossBatch) -> f64 {
        let cache = self.forward_batch(&batch.x);
        batch.residuals(&cache.beta).norm_squared() / batch.len() as f64
    }

    /// Loss and its gradient with respect to every parameter, in [`Self::params`] order.
    pub fn loss_and_grad(&self, batch: &LossBatch) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let cache = self.forward_batch(&batch.x);
        let beta = &cache.beta;
        let r = batch.residuals(beta);
        let loss = r.norm_squared() / n;

        let m = self.output_dim();
        let cols = batch.len();
        // dL/dβ_{j,n} = (2/N) rₙ · gⱼ(xₙ)
        let mut d_beta = DMatrix::zeros(m, cols);
        for (j, g) in batch.basis_grads.iter().enumerate() {
            for c in 0..cols {
                d_beta[(j, c)] = 2.0 / n * r.column(c).dot(&g.column(c));
            }
        }
        // softmax backward
        let mut dz = DMatrix::zeros(m, cols);
        for c in 0..cols {
            let dot: f64 = (0..m).map(|j| beta[(j, c)] * d_beta[(j, c)]).sum();
            for k in 0..m {
                dz[(k, c)] = beta[(k, c)] * (d_beta[(k, c)] - dot);
            }
        }

        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let dw = &dz * cache.inputs[k].transpose();
            let db = dz.column_sum();
            if k > 0 {
                let mut da = self.layers[k].w.tr_mul(&dz);
                da.zip_apply(&cache.pre[k - 1], |g, z| {
                    if z <= 0.0 {
                        *g = 0.0
                    }
                });
                dz = da;
            }
            grads.push((dw, db));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.n_params());
        for (dw, db) in grads {
            flat.extend_from_slice(dw.as_slice());
            flat.extend_from_slice(db.as_slice());
        }
        (loss, flat)
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn toy_batch(d: usize, m: usize, n: usize, seed: u64) -> LossBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r: usize| DMatrix::from_fn(r, n, |_, _| rng.random_range(-2.0..2.0));
        let x = mat(d);
        let basis_grads = (0..m).map(|_| mat(d)).collect();
        let pre_grad = mat(d);
        LossBatch {
            x,
            basis_grads,
            pre_grad,
        }
    }

    #[test]
    fn output_is_on_the_simplex() {
        let net = BetaNetwork::new(3, &[16, 8], 4, 1).unwrap();
        for x in [dvector![0.0, 0.0, 0.0], dvector![50.0, -20.0, 3.0]] {
            let b = net.forward(&x);
            assert!((b.sum() - 1.0).abs() < 1e-12);
            assert!(b.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn single_output_is_constant_one() {
        let net = BetaNetwork::new(2, &[8], 1, 3).unwrap();
        assert_eq!(net.forward(&dvector![1.0, -4.0])[0], 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences_small_net() {
        let net = BetaNetwork::new(2, &[6, 5], 3, 11).unwrap();
        let batch = toy_batch(2, 3, 7, 12);
        let (_, g) = net.loss_and_grad(&batch);
        let p0 = net.params();
        let h = 1e-6;
        for i in 0..p0.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = p0.clone();
            p[i] += h;
            plus.set_params(&p).unwrap();
            p[i] -= 2.0 * h;
            minus.set_params(&p).unwrap();
            let fd = (plus.loss(&batch) - minus.loss(&batch)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()).max(1e-3), "param {i}");
        }
    }

    #[test]
    fn input_jacobian_matches_finite_differences() {
        let net = BetaNetwork::new(2, &[10, 7], 3, 5).unwrap();
        let x = dvector![0.3, -0.7];
        let (_, jac) = net.forward_with_jacobian(&x);
        let h = 1e-6;
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = (net.forward(&xp) - net.forward(&xm)) / (2.0 * h);
            assert!((col - jac.column(k)).amax() < 1e-7);
        }
    }

    #[test]
    fn json_round_trip() {
        let net = BetaNetwork::new(2, &[4], 2, 9).unwrap();
        let s = serde_json::to_string(&net).unwrap();
        let back: BetaNetwork = serde_json::from_str(&s).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|v| v.abs() < 1e-2));
    }
}
