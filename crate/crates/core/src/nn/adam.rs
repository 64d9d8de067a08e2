use serde::{Deserialize, Serialize};

use super::Mlp;
use crate::error::{Error, Result};

/// Adaptive-moment optimiser state for one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.params().len(), lr)
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Rejects non-finite gradients before touching
    /// any state.
    pub fn step(&mut self, net: &mut Mlp, grads: &[f64]) -> Result<()> {
        if grads.len() != self.m.len() || net.params().len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: grads.len(),
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient in {}", net.block_name(i))));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let params = net.params_mut();
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Head;

    fn net() -> Mlp {
        Mlp::new(&[3, 4, 2], Head::Linear, 1).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut n = net();
        let before = n.params().to_vec();
        let mut opt = Adam::for_net(&n, 1e-3);
        opt.step(&mut n, &vec![0.0; before.len()]).unwrap();
        assert_eq!(n.params(), &before[..]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m1 = (1-b1) g, v1 = (1-b2) g^2; bias correction leaves g / |g|.
        let mut n = net();
        let before = n.params().to_vec();
        let mut opt = Adam::for_net(&n, 1e-3);
        let grads: Vec<f64> = (0..before.len()).map(|i| if i % 2 == 0 { 0.7 } else { -3.0 }).collect();
        opt.step(&mut n, &grads).unwrap();
        for ((a, b), g) in n.params().iter().zip(&before).zip(&grads) {
            let expected = -1e-3 * g.signum() * (g.abs() / (g.abs() + 1e-8));
            assert!((a - b - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut n = net();
        let mut opt = Adam::for_net(&n, 1e-3);
        let mut grads = vec![0.0; n.params().len()];
        let last = grads.len() - 1;
        grads[last] = f64::NAN;
        match opt.step(&mut n, &grads) {
            Err(Error::Training(msg)) => assert!(msg.contains("layer 1 bias"), "{msg}"),
            other => panic!("expected training error, got {other:?}"),
        }
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut n = net();
            let mut opt = Adam::for_net(&n, 1e-2);
            for k in 0..20 {
                let g: Vec<f64> = (0..n.params().len()).map(|i| ((i + k) as f64).sin()).collect();
                opt.step(&mut n, &g).unwrap();
            }
            n
        };
        assert_eq!(run(), run());
    }
}
