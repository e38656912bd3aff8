use super::Tensor;
use crate::error::{Error, Result};

/// First and second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Bias-corrected ADAM over an ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub moments: Vec<AdamMoments>,
}

impl Adam {
    /// State for parameters with the given element counts.
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: sizes
                .into_iter()
                .map(|n| AdamMoments {
                    m: vec![0.0; n],
                    v: vec![0.0; n],
                })
                .collect(),
        }
    }

    pub fn for_params<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Adam::new(params.into_iter().map(Tensor::numel))
    }

    /// One update. A `None` gradient is treated as zero.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>], lr: f64) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.moments.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let n = self.moments[i].m.len();
            if p.numel() != n || g.map_or(false, |g| g.numel() != n) {
                return Err(Error::shape(
                    "adam_step",
                    format!("parameter {i} has {} entries, state has {n}", p.numel()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            let data = p.data_mut();
            for j in 0..data.len() {
                let gj = g.map_or(0.0, |g| g.data()[j]);
                mom.m[j] = b1 * mom.m[j] + (1.0 - b1) * gj;
                mom.v[j] = b2 * mom.v[j] + (1.0 - b2) * gj * gj;
                let mhat = mom.m[j] / bc1;
                let vhat = mom.v[j] / bc2;
                data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1.0, -1.0]).unwrap();
        let g = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.3, -2.0, 5.0]).unwrap();
        let mut adam = Adam::for_params([&p]);
        adam.step(&mut [&mut p], &[Some(&g)], 0.01).unwrap();
        let expect = [-0.01, 1.01, -1.01];
        for (a, b) in p.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_grad_leaves_fresh_params_and_decays_moments() {
        let mut p = Tensor::full(Shape::new(1, 1, 1, 2), 4.0);
        let mut adam = Adam::for_params([&p]);
        adam.step(&mut [&mut p], &[None], 0.1).unwrap();
        assert_eq!(p.data(), &[4.0, 4.0]);

        adam.moments[0].m = vec![1.0, -1.0];
        adam.moments[0].v = vec![2.0, 2.0];
        let zero = Tensor::zeros(p.shape());
        adam.step(&mut [&mut p], &[Some(&zero)], 0.0).unwrap();
        assert_eq!(adam.moments[0].m, vec![0.9, -0.9]);
        assert!((adam.moments[0].v[0] - 2.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = (w-3)^2, lr 0.1, 100 steps from 0. Reference recursion run
        // independently below.
        let mut w = Tensor::scalar(0.0);
        let mut adam = Adam::for_params([&w]);
        for _ in 0..100 {
            let g = Tensor::scalar(2.0 * (w.data()[0] - 3.0));
            adam.step(&mut [&mut w], &[Some(&g)], 0.1).unwrap();
        }
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (x - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((w.data()[0] - x).abs() < 1e-12);
        assert!((w.data()[0] - 3.0).abs() < 0.5, "w = {}", w.data()[0]);
    }

    #[test]
    fn mismatched_state_is_an_error() {
        let mut p = Tensor::zeros(Shape::new(1, 1, 1, 2));
        let mut adam = Adam::new([3]);
        assert!(adam.step(&mut [&mut p], &[None], 0.1).is_err());
    }
}
