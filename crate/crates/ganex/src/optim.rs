//! Parameter initialization and the Adam optimizer used by every trainable
//! model in this crate.

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Glorot/Xavier uniform initialization: U(−a, a) with
/// a = sqrt(6 / (fan_in + fan_out)). Vectors (biases) start at zero.
pub fn glorot_uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    if shape.len() < 2 {
        return ArrayD::zeros(IxDyn(shape));
    }
    let fan_in: usize = shape[..shape.len() - 1].iter().product();
    let fan_out = shape[shape.len() - 1];
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-a..a)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches element count")
}

/// Adam with bias correction (Kingma & Ba defaults unless overridden).
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[Vec<usize>]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|s| ArrayD::zeros(IxDyn(s))).collect(),
            v: shapes.iter().map(|s| ArrayD::zeros(IxDyn(s))).collect(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    /// One update over parallel slices of parameters and gradients.
    pub fn step(&mut self, params: &mut [ArrayD<f64>], grads: &[ArrayD<f64>]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(params.len(), grads.len(), "gradient count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = &grads[i];
            self.m[i] = &self.m[i] * self.beta1 + g * (1.0 - self.beta1);
            self.v[i] = &self.v[i] * self.beta2 + &g.mapv(|x| x * x) * (1.0 - self.beta2);
            let m_hat = &self.m[i] / bc1;
            let v_hat = &self.v[i] / bc2;
            let update = m_hat / (v_hat.mapv(f64::sqrt) + self.eps);
            params[i] = &params[i] - &(update * self.lr);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn adam_minimizes_a_quadratic() {
        // f(x) = (x - 3)^2, gradient 2(x - 3).
        let mut params = vec![ArrayD::from_elem(IxDyn(&[1]), 10.0)];
        let mut opt = Adam::new(0.1, &[vec![1]]);
        for _ in 0..500 {
            let g = params[0].mapv(|x| 2.0 * (x - 3.0));
            opt.step(&mut params, &[g]);
        }
        assert!((params[0][IxDyn(&[0])] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn glorot_respects_bounds_and_seeding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = glorot_uniform(&mut rng, &[10, 20]);
        let a = (6.0f64 / 30.0).sqrt();
        assert!(w.iter().all(|&x| x.abs() < a));
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(w, glorot_uniform(&mut rng2, &[10, 20]));
        let b = glorot_uniform(&mut rng, &[7]);
        assert!(b.iter().all(|&x| x == 0.0));
    }
}
