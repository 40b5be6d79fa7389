use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuConfig {
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for OuConfig {
    fn default() -> Self {
        Self {
            theta: 0.15,
            sigma: 0.2,
            dt: 1.0,
        }
    }
}

impl OuConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            problems.push(format!("ou.theta must be positive, got {}", self.theta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            problems.push(format!("ou.sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("ou.dt must be positive, got {}", self.dt));
        }
    }
}

/// Mean-zero Ornstein–Uhlenbeck process, one coordinate per component.
#[derive(Clone, Debug, PartialEq)]
pub struct OUProcess {
    pub x: Vec<f64>,
    pub cfg: OuConfig,
}

impl OUProcess {
    pub fn new(dim: usize, cfg: OuConfig) -> Self {
        Self { x: vec![0.0; dim], cfg }
    }

    pub fn reset(&mut self) {
        self.x.fill(0.0);
    }

    /// `x ← x − θ x Δt + σ √Δt ξ`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        let OuConfig { theta, sigma, dt } = self.cfg;
        let diffusion = sigma * dt.sqrt();
        for x in &mut self.x {
            let xi: f64 = StandardNormal.sample(rng);
            *x += -theta * *x * dt + diffusion * xi;
        }
        &self.x
    }
}
