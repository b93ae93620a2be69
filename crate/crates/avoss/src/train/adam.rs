//! Adaptive-moment optimizer over the model's named tensors.

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    #[serde(skip)]
    m: Vec<Vec<f64>>,
    #[serde(skip)]
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8, steps: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Adam {
    /// One update. Tensors whose name starts with a prefix in `frozen` are
    /// left untouched (their moments are not advanced either).
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64, frozen: &[String]) {
        let grad_tensors = grads.tensors();
        let mut slots = params.tensors_mut();
        if self.m.is_empty() {
            self.m = slots.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
            self.v = slots.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        }
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for (i, ((name, slot), (gname, grad))) in
            slots.iter_mut().zip(grad_tensors.iter()).enumerate()
        {
            assert_eq!(name, gname, "parameter/gradient layout mismatch");
            if frozen.iter().any(|p| name.starts_with(p.as_str())) {
                continue;
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for (((p, &g), m), v) in slot.iter_mut().zip(grad.iter()).zip(m).zip(v) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
