//! Fixed-architecture multilayer perceptron with exact reverse-mode
//! gradients.
//!
//! The computation structure is static (dense layers, tanh on hidden
//! layers, linear output), so no general tape is needed: `forward_cached`
//! keeps the per-layer activations and `backward` replays the chain rule
//! over them, returning both parameter gradients and the gradient with
//! respect to the input (the latter carries critic gradients into the
//! policy's action).

use rand::Rng;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    /// Layer widths, input first: `sizes[0] -> ... -> sizes.last()`.
    pub sizes: Vec<usize>,
    /// `w[l]` is row-major `sizes[l+1] x sizes[l]`.
    pub w: Vec<Vec<F>>,
    /// `b[l]` has length `sizes[l+1]`.
    pub b: Vec<Vec<F>>,
}

/// Per-layer activations of one forward pass: `acts[0]` is the input,
/// `acts[l + 1]` the (post-tanh for hidden, linear for output) result of
/// layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    acts: Vec<Vec<F>>,
}

impl<F: Real> ForwardCache<F> {
    pub fn output(&self) -> &[F] {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Gradient (or any tensor shaped like the parameters) of an `Mlp`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<F> {
    pub w: Vec<Vec<F>>,
    pub b: Vec<Vec<F>>,
}

impl<F: Real> MlpGrads<F> {
    pub fn zeros_like(net: &Mlp<F>) -> Self {
        Self {
            w: net.w.iter().map(|l| vec![F::zero(); l.len()]).collect(),
            b: net.b.iter().map(|l| vec![F::zero(); l.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for l in self.w.iter_mut().chain(self.b.iter_mut()) {
            for x in l {
                *x *= s;
            }
        }
    }
}

impl<F: Real> Mlp<F> {
    /// Uniform `+-1/sqrt(fan_in)` weight init, zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        assert!(sizes.iter().all(|&s| s > 0), "zero-width layer");
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            w.push(
                (0..fan_in * fan_out)
                    .map(|_| F::c(rng.random_range(-bound..bound)))
                    .collect(),
            );
            b.push(vec![F::zero(); fan_out]);
        }
        Self { sizes: sizes.to_vec(), w, b }
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Total number of parameters: sum of `(fan_in + 1) * fan_out`.
    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|p| (p[0] + 1) * p[1]).sum()
    }

    pub fn forward(&self, x: &[F]) -> Vec<F> {
        self.forward_cached(x).output().to_vec()
    }

    pub fn forward_cached(&self, x: &[F]) -> ForwardCache<F> {
        assert_eq!(x.len(), self.sizes[0], "input width mismatch");
        let layers = self.layer_count();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let mut out = vec![F::zero(); n_out];
            for i in 0..n_out {
                let row = &self.w[l][i * n_in..(i + 1) * n_in];
                let mut acc = self.b[l][i];
                for (wij, xj) in row.iter().zip(prev) {
                    acc += *wij * *xj;
                }
                out[i] = if l < layers - 1 { acc.tanh() } else { acc };
            }
            acts.push(out);
        }
        ForwardCache { acts }
    }

    /// Reverse pass: upstream `d loss / d output` in, parameter gradients
    /// and `d loss / d input` out.
    pub fn backward(&self, cache: &ForwardCache<F>, d_out: &[F]) -> (MlpGrads<F>, Vec<F>) {
        let layers = self.layer_count();
        assert_eq!(d_out.len(), *self.sizes.last().unwrap(), "output grad width mismatch");
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = d_out.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            // d loss / d preactivation of this layer.
            let dpre: Vec<F> = if l == layers - 1 {
                g.clone()
            } else {
                cache.acts[l + 1]
                    .iter()
                    .zip(&g)
                    .map(|(h, gi)| (F::one() - *h * *h) * *gi)
                    .collect()
            };
            let x = &cache.acts[l];
            for i in 0..n_out {
                let gi = dpre[i];
                if gi != F::zero() {
                    let row = &mut grads.w[l][i * n_in..(i + 1) * n_in];
                    for (slot, xj) in row.iter_mut().zip(x) {
                        *slot += gi * *xj;
                    }
                }
                grads.b[l][i] += gi;
            }
            // Propagate to the layer input: w^T dpre.
            let mut dx = vec![F::zero(); n_in];
            for i in 0..n_out {
                let gi = dpre[i];
                if gi == F::zero() {
                    continue;
                }
                let row = &self.w[l][i * n_in..(i + 1) * n_in];
                for (slot, wij) in dx.iter_mut().zip(row) {
                    *slot += *wij * gi;
                }
            }
            g = dx;
        }
        (grads, g)
    }
}

/// Adam optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub t: u64,
    pub m: MlpGrads<F>,
    pub v: MlpGrads<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: F) -> Self {
        Self {
            lr,
            beta1: F::c(0.9),
            beta2: F::c(0.999),
            eps: F::c(1e-8),
            t: 0,
            m: MlpGrads::zeros_like(net),
            v: MlpGrads::zeros_like(net),
        }
    }

    pub fn step(&mut self, net: &mut Mlp<F>, grads: &MlpGrads<F>) {
        self.t += 1;
        let t = F::from_u64(self.t).expect("step count fits scalar");
        let bc1 = F::one() - self.beta1.powf(t);
        let bc2 = F::one() - self.beta2.powf(t);
        let update =
            |p: &mut [F], g: &[F], m: &mut [F], v: &mut [F], lr: F, b1: F, b2: F, eps: F| {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            };
        for l in 0..net.w.len() {
            update(
                &mut net.w[l], &grads.w[l], &mut self.m.w[l], &mut self.v.w[l],
                self.lr, self.beta1, self.beta2, self.eps,
            );
            update(
                &mut net.b[l], &grads.b[l], &mut self.m.b[l], &mut self.v.b[l],
                self.lr, self.beta1, self.beta2, self.eps,
            );
        }
    }
}

/// Scalar Adam for the entropy temperature.
#[derive(Debug, Clone)]
pub struct ScalarAdam<F> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub t: u64,
    pub m: F,
    pub v: F,
}

impl<F: Real> ScalarAdam<F> {
    pub fn new(lr: F) -> Self {
        Self {
            lr,
            beta1: F::c(0.9),
            beta2: F::c(0.999),
            eps: F::c(1e-8),
            t: 0,
            m: F::zero(),
            v: F::zero(),
        }
    }

    pub fn step(&mut self, param: &mut F, grad: F) {
        self.t += 1;
        let t = F::from_u64(self.t).expect("step count fits scalar");
        self.m = self.beta1 * self.m + (F::one() - self.beta1) * grad;
        self.v = self.beta2 * self.v + (F::one() - self.beta2) * grad * grad;
        let m_hat = self.m / (F::one() - self.beta1.powf(t));
        let v_hat = self.v / (F::one() - self.beta2.powf(t));
        *param -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn param_count_matches_formula() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let net = Mlp::<f64>::new(&[9, 64, 64, 6], &mut rng);
        assert_eq!(net.param_count(), (9 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 6);
    }

    #[test]
    fn zero_weights_yield_zero_output() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut net = Mlp::<f64>::new(&[3, 4, 2], &mut rng);
        for l in net.w.iter_mut() {
            l.iter_mut().for_each(|x| *x = 0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer_is_a_matrix_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut net = Mlp::<f64>::new(&[2, 2], &mut rng);
        net.w[0] = vec![1.0, 2.0, 3.0, 4.0];
        net.b[0] = vec![0.5, -0.5];
        // Output layer is linear, so y = W x + b exactly.
        let y = net.forward(&[1.0, 1.0]);
        assert_eq!(y, vec![3.5, 6.5]);
    }

    #[test]
    fn forward_matches_independent_arithmetic() {
        // Duplicate the arithmetic by hand for a 2-2-1 net.
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut net = Mlp::<f64>::new(&[2, 2, 1], &mut rng);
        net.w[0] = vec![0.1, -0.2, 0.3, 0.4];
        net.b[0] = vec![0.05, -0.05];
        net.w[1] = vec![0.7, -0.6];
        net.b[1] = vec![0.2];
        let x = [0.9, -1.1];
        let h0 = (0.1 * 0.9 + (-0.2) * (-1.1) + 0.05f64).tanh();
        let h1 = (0.3 * 0.9 + 0.4 * (-1.1) - 0.05f64).tanh();
        let y = 0.7 * h0 - 0.6 * h1 + 0.2;
        let got = net.forward(&x);
        assert!((got[0] - y).abs() < 1e-15, "{} vs {y}", got[0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let net = Mlp::<f64>::new(&[3, 5, 4, 2], &mut rng);
        let x = [0.3, -0.8, 1.2];
        // Scalar loss: weighted sum of outputs.
        let wts = [1.3, -0.7];
        let loss = |n: &Mlp<f64>| -> f64 {
            let y = n.forward(&x);
            y[0] * wts[0] + y[1] * wts[1]
        };
        let cache = net.forward_cached(&x);
        let (grads, dx) = net.backward(&cache, &wts);
        let h = 1e-6;
        for l in 0..net.layer_count() {
            for i in 0..net.w[l].len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.w[l][i] += h;
                minus.w[l][i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let g = grads.w[l][i];
                assert!(
                    (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-5,
                    "w[{l}][{i}]: analytic {g} fd {fd}"
                );
            }
            for i in 0..net.b[l].len() {
                let mut plus = net.clone();
                let mut minus = net.clone();
                plus.b[l][i] += h;
                minus.b[l][i] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let g = grads.b[l][i];
                assert!(
                    (fd - g).abs() / fd.abs().max(g.abs()).max(1e-6) < 1e-5,
                    "b[{l}][{i}]: analytic {g} fd {fd}"
                );
            }
        }
        // Input gradient against finite differences too.
        for j in 0..x.len() {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let f = |xx: &[f64; 3]| {
                let y = net.forward(xx);
                y[0] * wts[0] + y[1] * wts[1]
            };
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - dx[j]).abs() < 1e-6, "dx[{j}]: analytic {} fd {fd}", dx[j]);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // Minimize ||y(x0)||^2 over parameters; loss must shrink.
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut net = Mlp::<f64>::new(&[2, 8, 2], &mut rng);
        let mut opt = Adam::new(&net, 1e-2);
        let x = [0.5, -0.25];
        let loss_of = |n: &Mlp<f64>| n.forward(&x).iter().map(|y| y * y).sum::<f64>();
        let before = loss_of(&net);
        for _ in 0..200 {
            let cache = net.forward_cached(&x);
            let dy: Vec<f64> = cache.output().iter().map(|y| 2.0 * y).collect();
            let (grads, _) = net.backward(&cache, &dy);
            opt.step(&mut net, &grads);
        }
        let after = loss_of(&net);
        assert!(after < before * 1e-3, "loss {before} -> {after}");
    }
}
