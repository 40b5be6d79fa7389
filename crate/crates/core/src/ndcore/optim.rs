use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    /// Plain gradient descent.
    Sgd,
}

/// Optimizer hyperparameters, serializable into run configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(learning_rate)
        }
    }

    pub fn validate(&self, what: &str, problems: &mut Vec<String>) {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("{what}: learning_rate must be a nonnegative number"));
        }
        if self.kind == OptimizerKind::Adam {
            if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
                problems.push(format!("{what}: adam betas must lie in (0, 1)"));
            }
            if !(self.epsilon > 0.0) {
                problems.push(format!("{what}: adam epsilon must be positive"));
            }
        }
    }
}

/// Optimizer state: hyperparameters plus per-parameter moments.
#[derive(Clone, Debug)]
pub struct OptState {
    pub config: OptimizerConfig,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    step: u64,
}

impl OptState {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. With `maximize` the step ascends the gradient.
    ///
    /// Parameters without an entry in `grads` are left untouched. All
    /// gradients are validated before any parameter changes.
    pub fn step(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        maximize: bool,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Missing(format!("parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    node: format!("param `{name}`"),
                    detail: format!("gradient {:?} vs parameter {:?}", g.shape(), p.shape()),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: name.clone() });
            }
        }

        self.step += 1;
        let sign = if maximize { 1.0 } else { -1.0 };
        let cfg = self.config;
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (pi, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *pi += sign * cfg.learning_rate * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self
                        .first
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(g.shape()));
                    let v = self
                        .second
                        .entry(name.clone())
                        .or_insert_with(|| Tensor::zeros(g.shape()));
                    let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
                    let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
                    for i in 0..g.len() {
                        let gi = g.data()[i];
                        let mi = &mut m.data_mut()[i];
                        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                        let vi = &mut v.data_mut()[i];
                        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                        let m_hat = m.data()[i] / bc1;
                        let v_hat = v.data()[i] / bc2;
                        p.data_mut()[i] += sign * cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::scalar(p));
        s
    }

    fn grad(g: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("p".to_string(), Tensor::scalar(g))])
    }

    #[test]
    fn sgd_minimize_step() {
        let mut params = single(1.0);
        let mut opt = OptState::new(OptimizerConfig::sgd(0.1));
        opt.step(&mut params, &grad(2.0), false).unwrap();
        assert!((params.get("p").unwrap().data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn sgd_maximize_moves_uphill() {
        let mut params = single(1.0);
        let mut opt = OptState::new(OptimizerConfig::sgd(0.1));
        opt.step(&mut params, &grad(2.0), true).unwrap();
        assert!((params.get("p").unwrap().data()[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        for g in [1.0, -3.5, 1e-2, 250.0] {
            let mut params = single(0.0);
            let mut opt = OptState::new(OptimizerConfig::adam(1e-3));
            opt.step(&mut params, &grad(g), false).unwrap();
            let dp = params.get("p").unwrap().data()[0];
            // m_hat = g, v_hat = g^2 on the first step
            assert!((dp.abs() - 1e-3).abs() < 1e-9, "g={g}: {dp}");
            assert_eq!(dp.signum(), -g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::sgd(0.5), OptimizerConfig::adam(0.5)] {
            let mut params = single(1.25);
            let mut opt = OptState::new(cfg);
            opt.step(&mut params, &grad(0.0), false).unwrap();
            assert_eq!(params.get("p").unwrap().data()[0], 1.25);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = single(1.0);
        let mut opt = OptState::new(OptimizerConfig::adam(0.1));
        let err = opt.step(&mut params, &grad(f64::NAN), false).unwrap_err();
        assert!(err.to_string().contains("`p`"));
        assert_eq!(params.get("p").unwrap().data()[0], 1.0);
        assert_eq!(opt.steps(), 0);
    }
}
