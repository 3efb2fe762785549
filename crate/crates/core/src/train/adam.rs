use super::config::AdamConfig;
use crate::net::NetworkParams;

/// Bias-corrected Adam over the flattened parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, parameters: usize) -> Self {
        Adam {
            config,
            m: vec![0.0; parameters],
            v: vec![0.0; parameters],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let correct1 = 1.0 - c.beta1.powi(t);
        let correct2 = 1.0 - c.beta2.powi(t);
        let mut k = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            for (p, &g) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                k += 1;
            }
        }
    }
}
