//! Minimal dense-network machinery: tanh MLPs with hand-written backprop,
//! global-norm gradient clipping, and Adam.
//!
//! Everything is generic over the float type so the same code paths can be
//! exercised in f64 by the finite-difference tests while training runs in
//! f32 (which is also what checkpoints store).

use ndarray::{Array2, Axis, NdFloat};
use rand::Rng;

/// Fully-connected layer; bias kept as a `[1, out]` row so all parameter
/// tensors share one shape class.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub w: Array2<F>,
    pub b: Array2<F>,
}

impl<F: NdFloat> Linear<F> {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear {
            w: Array2::zeros((n_in, n_out)),
            b: Array2::zeros((1, n_out)),
        }
    }
}

/// MLP with tanh on every layer except the last (linear output).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

pub struct MlpCache<F> {
    /// `acts[0]` is the input; `acts[i]` the post-tanh output of layer i-1
    /// for hidden layers, and the linear output for the last.
    acts: Vec<Array2<F>>,
}

impl<F: NdFloat> Mlp<F> {
    /// Xavier-uniform init with the output layer scaled by `out_scale`
    /// (small values keep the initial policy near the neutral action).
    pub fn init<R: Rng>(dims: &[usize], out_scale: f64, rng: &mut R) -> Self {
        assert!(dims.len() >= 2);
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[i], dims[i + 1]);
            let last = i == dims.len() - 2;
            let bound = (6.0 / (n_in + n_out) as f64).sqrt() * if last { out_scale } else { 1.0 };
            let w = Array2::from_shape_fn((n_in, n_out), |_| {
                F::from(rng.random_range(-bound..bound)).unwrap()
            });
            layers.push(Linear {
                w,
                b: Array2::zeros((1, n_out)),
            });
        }
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Batched forward pass; keeps the per-layer activations for backprop.
    pub fn forward(&self, x: &Array2<F>) -> (Array2<F>, MlpCache<F>) {
        assert_eq!(x.ncols(), self.in_dim(), "observation width mismatch");
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts.last().unwrap().dot(&layer.w);
            z += &layer.b;
            if i + 1 < n {
                z.mapv_inplace(|v| v.tanh());
            }
            acts.push(z);
        }
        (acts.last().unwrap().clone(), MlpCache { acts })
    }

    pub fn forward_only(&self, x: &Array2<F>) -> Array2<F> {
        self.forward(x).0
    }

    /// Backprop `d_out` (dL/d output) through the cached forward pass,
    /// accumulating parameter gradients into `grads`. Returns dL/d input.
    pub fn backward(&self, cache: &MlpCache<F>, d_out: &Array2<F>, grads: &mut Mlp<F>) -> Array2<F> {
        let n = self.layers.len();
        let mut delta = d_out.clone();
        for i in (0..n).rev() {
            if i + 1 < n {
                // act = tanh(z); d tanh = 1 - act^2
                let act = &cache.acts[i + 1];
                delta = &delta * &act.mapv(|a| F::one() - a * a);
            }
            let input = &cache.acts[i];
            grads.layers[i].w += &input.t().dot(&delta);
            grads.layers[i]
                .b
                .row_mut(0)
                .zip_mut_with(&delta.sum_axis(Axis(0)), |g, d| *g += *d);
            delta = delta.dot(&self.layers[i].w.t());
        }
        delta
    }

    pub fn tensors(&self) -> Vec<&Array2<F>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<F>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }
}

/// Scales all gradients in place so their global L2 norm is at most
/// `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<F: NdFloat>(grads: &mut [&mut Array2<F>], max_norm: f64) -> f64 {
    let mut sq = F::zero();
    for g in grads.iter() {
        sq = sq + g.iter().map(|v| *v * *v).fold(F::zero(), |a, b| a + b);
    }
    let norm = sq.sqrt().to_f64().unwrap();
    if norm > max_norm && norm > 0.0 {
        let scale = F::from(max_norm / norm).unwrap();
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

/// Adam first/second moment accumulators for a fixed list of tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Array2<F>>,
    pub v: Vec<Array2<F>>,
    pub step: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl<F: NdFloat> AdamState<F> {
    pub fn new(tensors: &[&Array2<F>]) -> Self {
        AdamState {
            m: tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            v: tensors.iter().map(|t| Array2::zeros(t.raw_dim())).collect(),
            step: 0,
        }
    }

    /// One Adam step with bias correction at learning rate `lr`.
    pub fn update(&mut self, params: &mut [&mut Array2<F>], grads: &[&Array2<F>], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = F::from(ADAM_BETA1).unwrap();
        let b2 = F::from(ADAM_BETA2).unwrap();
        let eps = F::from(ADAM_EPS).unwrap();
        let bc1 = F::from(1.0 - ADAM_BETA1.powi(self.step as i32)).unwrap();
        let bc2 = F::from(1.0 - ADAM_BETA2.powi(self.step as i32)).unwrap();
        let lr = F::from(lr).unwrap();
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(g, |m, g| *m = b1 * *m + (F::one() - b1) * *g);
            v.zip_mut_with(g, |v, g| *v = b2 * *v + (F::one() - b2) * *g * *g);
            ndarray::Zip::from(&mut **p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    let mhat = m / bc1;
                    let vhat = v / bc2;
                    *p = *p - lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}
