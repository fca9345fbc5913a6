use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 7.3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam with one moment pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    names: Vec<String>,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl Adam {
    /// `params` gives the name and shape of every parameter, in update order.
    pub fn new(config: AdamConfig, names: Vec<String>, shapes: &[&[usize]]) -> Self {
        assert_eq!(names.len(), shapes.len());
        Self {
            config,
            names,
            first_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            step_count: 0,
        }
    }

    pub fn for_params(config: AdamConfig, names: Vec<String>, params: &[&Tensor]) -> Self {
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(config, names, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Restores optimizer state from a checkpoint.
    pub fn restore(
        &mut self,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
        step_count: u64,
    ) -> Result<(), NnError> {
        for (i, (m, v)) in first.iter().zip(&second).enumerate() {
            let want = self.first_moment[i].shape();
            if m.shape() != want || v.shape() != want {
                return Err(NnError::Shape {
                    op: "adam restore",
                    left: want.to_vec(),
                    right: m.shape().to_vec(),
                });
            }
        }
        if first.len() != self.first_moment.len() || second.len() != self.second_moment.len() {
            return Err(NnError::Config("adam restore: parameter count mismatch".into()));
        }
        self.first_moment = first;
        self.second_moment = second;
        self.step_count = step_count;
        Ok(())
    }

    /// Applies one update. Gradients are checked for non-finite values before
    /// any parameter is touched, so a rejected update leaves everything as it was.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), NnError> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(NnError::Config(format!(
                "adam: expected {} parameters, got {} params / {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.first_moment[i].shape() || g.shape() != p.shape() {
                return Err(NnError::Shape {
                    op: "adam step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(NnError::NonFinite {
                    what: format!("gradient of {}", self.names[i]),
                    step: self.step_count + 1,
                });
            }
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `target ← τ·online + (1−τ)·target`, elementwise.
pub fn polyak_update(target: &mut [&mut Tensor], online: &[&Tensor], tau: f64) -> Result<(), NnError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(NnError::Config(format!("polyak tau must lie in (0, 1], got {tau}")));
    }
    if target.len() != online.len() {
        return Err(NnError::Config("polyak: parameter count mismatch".into()));
    }
    for (t, o) in target.iter().zip(online) {
        if t.shape() != o.shape() {
            return Err(NnError::Shape {
                op: "polyak",
                left: t.shape().to_vec(),
                right: o.shape().to_vec(),
            });
        }
    }
    for (t, o) in target.iter_mut().zip(online) {
        if tau == 1.0 {
            t.data_mut().copy_from_slice(o.data());
            continue;
        }
        for (ti, &oi) in t.data_mut().iter_mut().zip(o.data()) {
            *ti = tau * oi + (1.0 - tau) * *ti;
        }
    }
    Ok(())
}
