//! Dense neural network substrate for the actor and critic nets: forward
//! pass, exact reverse-mode gradients, a numerically stable log-softmax
//! head and an Adam optimizer. Generic over the scalar type; the pipeline
//! runs it at `f64`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Hidden layer widths shared by actor and critic.
pub const HIDDEN_DIMS: [usize; 3] = [64, 128, 64];

/// One dense layer; weights are row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Layer<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn out_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            weights: vec![vec![T::zero(); in_dim]; out_dim],
            bias: vec![T::zero(); out_dim],
        }
    }
}

/// Multilayer perceptron with rectifier activations on all layers except
/// the last (raw logits / value output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
}

/// Parameter-shaped gradient container.
pub type Grads<T> = Mlp<T>;

/// Cached activations of one forward pass, for backpropagation.
pub struct ForwardCache<T> {
    /// `post[0]` is the input; `post[i]` the output of layer `i-1` after
    /// activation.
    post: Vec<Vec<T>>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.post.last().unwrap()
    }
}

/// Orthogonal matrix via modified Gram-Schmidt on a Gaussian draw.
fn orthogonal<T: Scalar, R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<Vec<T>> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    // Columns of `q` are orthonormalized in place.
    let mut q: Vec<Vec<f64>> = (0..small)
        .map(|_| (0..big).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for j in 0..small {
        for k in 0..j {
            let dot: f64 = q[j].iter().zip(&q[k]).map(|(a, b)| a * b).sum();
            for i in 0..big {
                q[j][i] -= dot * q[k][i];
            }
        }
        let norm: f64 = q[j].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in q[j].iter_mut() {
            *v /= norm;
        }
    }
    (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    let v = if rows >= cols { q[c][r] } else { q[r][c] };
                    T::c(gain * v)
                })
                .collect()
        })
        .collect()
}

impl<T: Scalar> Mlp<T> {
    /// Orthogonally initialized network: gain sqrt(2) on hidden layers,
    /// small gain on the output layer, zero biases. Deterministic per seed.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Invalid("network needs at least input and output dims".into()));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Invalid("network dims must be non-zero".into()));
        }
        let mut rng = seeded(seed, "mlp-init");
        let n_layers = dims.len() - 1;
        let layers = (0..n_layers)
            .map(|i| {
                let gain = if i + 1 == n_layers { 0.01 } else { std::f64::consts::SQRT_2 };
                Layer {
                    weights: orthogonal(dims[i + 1], dims[i], gain, &mut rng),
                    bias: vec![T::zero(); dims[i + 1]],
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.post.pop().unwrap())
    }

    /// Forward pass retaining the activations needed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[T]) -> Result<ForwardCache<T>> {
        if x.len() != self.in_dim() {
            return Err(Error::Invalid(format!(
                "input length {} does not match network input dim {}",
                x.len(),
                self.in_dim()
            )));
        }
        let n = self.layers.len();
        let mut post = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        post.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = post.last().unwrap();
            let z: Vec<T> = layer
                .weights
                .iter()
                .zip(&layer.bias)
                .map(|(row, &b)| row.iter().zip(input).map(|(&w, &xi)| w * xi).sum::<T>() + b)
                .collect();
            let out = if i + 1 == n {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(T::zero())).collect()
            };
            pre.push(z);
            post.push(out);
        }
        Ok(ForwardCache { post, pre })
    }

    /// Exact reverse-mode gradients of `dot(output, upstream)` with respect
    /// to every parameter, accumulated into `grads`.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &[T], grads: &mut Grads<T>) {
        let n = self.layers.len();
        let mut delta: Vec<T> = upstream.to_vec();
        for i in (0..n).rev() {
            let input = &cache.post[i];
            let g = &mut grads.layers[i];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o];
                for (w, &xi) in row.iter_mut().zip(input) {
                    *w += d * xi;
                }
            }
            if i > 0 {
                let layer = &self.layers[i];
                let mut prev = vec![T::zero(); layer.in_dim()];
                for (o, &d) in delta.iter().enumerate() {
                    for (p, &w) in prev.iter_mut().zip(&layer.weights[o]) {
                        *p += d * w;
                    }
                }
                // Rectifier mask of the producing layer.
                for (p, &z) in prev.iter_mut().zip(&cache.pre[i - 1]) {
                    if z <= T::zero() {
                        *p = T::zero();
                    }
                }
                delta = prev;
            }
        }
    }

    pub fn zeros_like(&self) -> Grads<T> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.out_dim(), l.in_dim()))
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim() * (l.in_dim() + 1))
            .sum()
    }

    #[cfg(test)]
    fn for_each_param(&mut self, mut f: impl FnMut(&mut T)) {
        for layer in &mut self.layers {
            for row in &mut layer.weights {
                row.iter_mut().for_each(&mut f);
            }
            layer.bias.iter_mut().for_each(&mut f);
        }
    }
}

/// Numerically stable log-softmax (max subtraction).
pub fn log_probs<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let log_sum = logits
        .iter()
        .map(|&l| (l - max).exp())
        .sum::<T>()
        .ln();
    logits.iter().map(|&l| l - max - log_sum).collect()
}

/// Bias-corrected adaptive-moment optimizer state for one network.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned"))]
pub struct AdamState<T> {
    m: Mlp<T>,
    v: Mlp<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &Mlp<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            beta1: T::c(0.9),
            beta2: T::c(0.999),
            eps: T::c(1e-8),
        }
    }
}

/// One Adam update of `params` with gradient `grads`.
pub fn adam_step<T: Scalar>(params: &mut Mlp<T>, grads: &Grads<T>, opt: &mut AdamState<T>, lr: T) {
    opt.step += 1;
    let b1 = opt.beta1;
    let b2 = opt.beta2;
    let bc1 = T::one() - b1.powi(opt.step as i32);
    let bc2 = T::one() - b2.powi(opt.step as i32);
    for li in 0..params.layers.len() {
        let (pw, pb) = {
            let l = &mut params.layers[li];
            (&mut l.weights, &mut l.bias)
        };
        let gl = &grads.layers[li];
        let ml = &mut opt.m.layers[li];
        let vl = &mut opt.v.layers[li];
        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + opt.eps);
        };
        for o in 0..pw.len() {
            for i in 0..pw[o].len() {
                update(&mut pw[o][i], gl.weights[o][i], &mut ml.weights[o][i], &mut vl.weights[o][i]);
            }
            update(&mut pb[o], gl.bias[o], &mut ml.bias[o], &mut vl.bias[o]);
        }
    }
}
