use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{mean, EpochRecord, TrainingSpan};
use crate::env::{inject_noise, step, EnvConfig, EnvState, WeightVector};
use crate::error::{Error, Result};
use crate::market_data::{Panel, StateTensor};
use crate::ndcore::{Feed, Graph, OptState, OptimizerConfig, Tensor};
use crate::policies::{gaussian_log_prob, stream_tensor, GaussianPolicy, ACTOR_PREFIX, CRITIC_PREFIX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub iterations: usize,
    pub inner_epochs: usize,
    pub clip: f64,
    pub actor_optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    /// Rollout length; `None` uses the whole training span.
    pub horizon: Option<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inner_epochs: 4,
            clip: 0.2,
            actor_optimizer: OptimizerConfig::sgd(1e-3),
            critic_optimizer: OptimizerConfig::sgd(1e-3),
            horizon: None,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        self.actor_optimizer.validate("ppo.actor_optimizer", problems);
        self.critic_optimizer.validate("ppo.critic_optimizer", problems);
        if !(self.clip > 0.0 && self.clip < 1.0) {
            problems.push(format!("ppo.clip must lie in (0, 1), got {}", self.clip));
        }
        if self.horizon == Some(0) {
            problems.push("ppo.horizon must be positive".into());
        }
    }
}

/// One on-policy rollout prepared for the surrogate update.
#[derive(Clone, Debug, PartialEq)]
pub struct PPOBatch {
    pub states: Vec<StateTensor>,
    /// Raw Gaussian samples (before softmax).
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Discounted returns-to-go, the value regression targets.
    pub returns: Vec<f64>,
}

/// Monte-Carlo advantages `Â_t = Σ_{t'≥t} γ^{t'−t} r_{t'} − V(s_t)` and the
/// returns-to-go they are built from. The rollout is not bootstrapped.
pub fn advantages(rewards: &[f64], values: &[f64], gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let mut returns = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    let adv = returns.iter().zip(values).map(|(g, v)| g - v).collect();
    Ok((adv, returns))
}

/// `KL(p ‖ q)` between diagonal Gaussians.
pub fn gaussian_kl(mean_p: &[f64], std_p: &[f64], mean_q: &[f64], std_q: &[f64]) -> f64 {
    (0..mean_p.len())
        .map(|i| {
            let (sp, sq) = (std_p[i], std_q[i]);
            (sq / sp).ln() + (sp * sp + (mean_p[i] - mean_q[i]).powi(2)) / (2.0 * sq * sq) - 0.5
        })
        .sum()
}

/// Per-sample inputs of the surrogate graph.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateInputs<'a> {
    pub states: Vec<&'a StateTensor>,
    pub actions: &'a [Vec<f64>],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl SurrogateInputs<'_> {
    pub fn feed(&self, policy: &GaussianPolicy) -> Result<(Feed, usize)> {
        let (x, m) = stream_tensor(&self.states, policy.input)?;
        let n = self.states.len();
        if [self.actions.len(), self.old_log_probs.len(), self.advantages.len(), self.returns.len()]
            .iter()
            .any(|&l| l != n)
            || self.actions.iter().any(|a| a.len() != m + 1)
        {
            return Err(Error::InvalidArgument("surrogate inputs differ in length".into()));
        }
        let f = [
            ("streams", x),
            ("actions", Tensor::new(vec![n, m + 1], self.actions.concat())?),
            ("old_log_prob", Tensor::vector(self.old_log_probs.to_vec())),
            ("advantages", Tensor::vector(self.advantages.to_vec())),
            ("returns", Tensor::vector(self.returns.to_vec())),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Ok((f, m))
    }
}

/// Outputs `log_prob` and `ratio` (`[batch]`), `surrogate`, and `value_loss`.
///
/// With `clip = Some(ε)` the surrogate is
/// `mean(min(r A, clip(r, 1−ε, 1+ε) A))`; with `None` it is `mean(r A)`.
/// At `r = 1` both branches are equal and the minimum passes the gradient of
/// the unclipped branch.
pub fn surrogate_graph(policy: &GaussianPolicy, batch: usize, m: usize, clip: Option<f64>) -> Graph {
    let mut g = Graph::new();
    let heads = policy.build(&mut g, batch, m);
    let a = g.input("actions");
    let old = g.input("old_log_prob");
    let adv = g.input("advantages");
    let ret = g.input("returns");

    let d = g.sub(a, heads.mean);
    let z = g.div(d, heads.std);
    let z2 = g.mul(z, z);
    let quad = g.scale(z2, -0.5);
    let log_std = g.log(heads.std);
    let per = g.sub(quad, log_std);
    let lp = g.sum_last(per);
    let lp = g.shift(lp, -((m + 1) as f64) * 0.5 * (2.0 * std::f64::consts::PI).ln());
    g.output("log_prob", lp);

    let delta = g.sub(lp, old);
    let ratio = g.exp(delta);
    g.label(ratio, "probability ratio");
    g.output("ratio", ratio);
    let unclipped = g.mul(ratio, adv);
    let per_sample = match clip {
        Some(eps) => {
            let clipped = g.clamp(ratio, 1.0 - eps, 1.0 + eps);
            let clipped = g.mul(clipped, adv);
            g.minimum(unclipped, clipped)
        }
        None => unclipped,
    };
    let surrogate = g.mean(per_sample);
    g.output("surrogate", surrogate);

    let dv = g.sub(heads.value, ret);
    let sq = g.mul(dv, dv);
    let value_loss = g.mean(sq);
    g.output("value_loss", value_loss);
    g
}

fn with_prefix(grads: BTreeMap<String, Tensor>, prefix: &str) -> BTreeMap<String, Tensor> {
    grads.into_iter().filter(|(k, _)| k.starts_with(prefix)).collect()
}

/// Samples one rollout of the stochastic policy.
fn rollout<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    panel: &Panel,
    env: &EnvConfig,
    horizon: Option<usize>,
    rng: &mut R,
) -> Result<std::result::Result<PPOBatch, String>> {
    let mut span = TrainingSpan::new(panel, env)?;
    if let Some(h) = horizon {
        span.states.truncate(h);
    }
    let out = policy.evaluate(&span.state_refs())?;
    let mut state = EnvState::initial(span.t0, panel.num_assets());
    let (mut actions, mut old_log_probs, mut rewards) = (Vec::new(), Vec::new(), Vec::new());
    for (mu, sd) in out.mean.iter().zip(&out.std) {
        let raw: Vec<f64> = mu
            .iter()
            .zip(sd)
            .map(|(m, s)| {
                let xi: f64 = StandardNormal.sample(rng);
                m + s * xi
            })
            .collect();
        let executed = WeightVector::softmax(&raw)?;
        let o = match step(panel, &state, &executed, env) {
            Ok(o) => o.expect("span stays inside the panel"),
            Err(e @ Error::InfeasibleTurnover { .. }) => return Ok(Err(format!("day {}: {e}", state.t))),
            Err(e) => return Err(e),
        };
        old_log_probs.push(gaussian_log_prob(&raw, mu, sd));
        actions.push(raw);
        rewards.push(o.reward);
        state = o.state;
    }
    let (advantages, returns) = advantages(&rewards, &out.value, env.gamma)?;
    Ok(Ok(PPOBatch {
        states: span.states,
        actions,
        rewards,
        old_log_probs,
        advantages,
        returns,
    }))
}

/// Proximal policy optimization with the clipped surrogate and a
/// Monte-Carlo value regression.
pub fn ppo_train<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    panel: &Panel,
    env: &EnvConfig,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<Vec<EpochRecord>> {
    let mut problems = Vec::new();
    cfg.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut actor_opt = OptState::new(cfg.actor_optimizer);
    let mut critic_opt = OptState::new(cfg.critic_optimizer);
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let noisy = inject_noise(panel, env.noise_sigma, rng)?;
        let mut record = EpochRecord { epoch: it, ..Default::default() };
        let batch = match rollout(policy, &noisy, env, cfg.horizon, rng)? {
            Ok(b) => b,
            Err(diagnostic) => {
                record.aborted = Some(diagnostic);
                log.push(record);
                continue;
            }
        };
        let old = policy.evaluate(&batch.states.iter().collect::<Vec<_>>())?;
        let inputs = SurrogateInputs {
            states: batch.states.iter().collect(),
            actions: &batch.actions,
            old_log_probs: &batch.old_log_probs,
            advantages: &batch.advantages,
            returns: &batch.returns,
        };
        let (f, m) = inputs.feed(policy)?;
        let mut g = surrogate_graph(policy, batch.states.len(), m, Some(cfg.clip));
        let context = |e: Error| match e {
            Error::NonFinite(what) => Error::NonFinite(format!("PPO iteration {it}: {what}")),
            e => e,
        };
        for _ in 0..cfg.inner_epochs {
            let out = g.forward(&policy.params, &f).map_err(context)?;
            record.objective = Some(out["surrogate"].data()[0]);
            record.critic_loss = Some(out["value_loss"].data()[0]);
            let actor_grads = with_prefix(g.backward("surrogate", &Tensor::scalar(1.0))?.params, ACTOR_PREFIX);
            let critic_grads = with_prefix(g.backward("value_loss", &Tensor::scalar(1.0))?.params, CRITIC_PREFIX);
            actor_opt.step(&mut policy.params, &actor_grads, true)?;
            critic_opt.step(&mut policy.params, &critic_grads, false)?;
        }
        let out = g.forward(&policy.params, &f).map_err(context)?;
        record.mean_ratio = Some(mean(out["ratio"].data()));
        let new = policy.evaluate(&batch.states.iter().collect::<Vec<_>>())?;
        let kls: Vec<f64> = (0..batch.states.len())
            .map(|t| gaussian_kl(&old.mean[t], &old.std[t], &new.mean[t], &new.std[t]))
            .collect();
        record.kl = Some(mean(&kls));
        record.training_apv = Some(batch.rewards.iter().sum::<f64>().exp());
        log.push(record);
    }
    Ok(log)
}
