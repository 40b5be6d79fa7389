use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{mean, EpochRecord, OUProcess, OuConfig, ReplayBuffer};
use crate::env::{inject_noise, step, EnvConfig, EnvState, WeightVector};
use crate::error::{Error, Result};
use crate::market_data::{normalize_window, Panel, StateTensor};
use crate::ndcore::{feed, Graph, OptState, OptimizerConfig, Tensor};
use crate::policies::{stream_tensor, IIEActor, QCritic};

use super::target::soft_update;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub episodes: usize,
    pub actor_optimizer: OptimizerConfig,
    pub critic_optimizer: OptimizerConfig,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub ou: OuConfig,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            actor_optimizer: OptimizerConfig::adam(1e-3),
            critic_optimizer: OptimizerConfig::adam(1e-1),
            tau: 1e-2,
            buffer_capacity: 10_000,
            batch_size: 64,
            ou: OuConfig::default(),
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        self.actor_optimizer.validate("ddpg.actor_optimizer", problems);
        self.critic_optimizer.validate("ddpg.critic_optimizer", problems);
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            problems.push(format!("ddpg.tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 {
            problems.push("ddpg.batch_size must be positive".into());
        }
        if self.buffer_capacity < self.batch_size {
            problems.push(format!(
                "ddpg.buffer_capacity {} is smaller than the batch size {}",
                self.buffer_capacity, self.batch_size
            ));
        }
        self.ou.validate(problems);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: StateTensor,
    pub action: WeightVector,
    pub reward: f64,
    pub next_state: StateTensor,
}

/// One descent step on `(1/N) Σ (y_i − Q(s_i, a_i))²`; returns the loss
/// before the step.
pub fn critic_update(
    critic: &mut QCritic,
    opt: &mut OptState,
    states: &[&StateTensor],
    actions: &[&WeightVector],
    targets: &[f64],
) -> Result<f64> {
    let (mut f, m) = critic.feed(states, actions)?;
    f.insert("targets".into(), Tensor::vector(targets.to_vec()));
    let mut g = Graph::new();
    let q = critic.build(&mut g, states.len(), m);
    let y = g.input("targets");
    let d = g.sub(q, y);
    let sq = g.mul(d, d);
    let loss = g.mean(sq);
    g.output("loss", loss);
    let out = g.forward(&critic.params, &f)?;
    let grads = g.backward("loss", &Tensor::scalar(1.0))?;
    opt.step(&mut critic.params, &grads.params, false)?;
    Ok(out["loss"].data()[0])
}

/// One ascent step on `(1/N) Σ Q(s_i, μ(s_i))` through `∂Q/∂a`.
fn actor_update(actor: &mut IIEActor, critic: &QCritic, opt: &mut OptState, states: &[&StateTensor]) -> Result<()> {
    let n = states.len();
    let (x, m) = stream_tensor(states, actor.input)?;
    let mut ga = actor.graph(n, m);
    let out = ga.forward(&actor.params, &feed([("streams", x.clone())]))?;
    let actions = out["weights"].clone();
    let mut gq = critic.graph(n, m);
    gq.forward(&critic.params, &critic.feed_tensors(x, actions))?;
    let dq_da = gq.backward("q", &Tensor::full(&[n], 1.0 / n as f64))?.inputs.remove("actions").expect("actions input");
    let grads = ga.backward("weights", &dq_da)?;
    opt.step(&mut actor.params, &grads.params, true)
}

/// Deep deterministic policy gradient with OU exploration on the actor's
/// pre-softmax scores.
pub fn ddpg_train<R: Rng + ?Sized>(
    actor: &mut IIEActor,
    critic: &mut QCritic,
    panel: &Panel,
    env: &EnvConfig,
    cfg: &DdpgConfig,
    rng: &mut R,
) -> Result<Vec<EpochRecord>> {
    let mut problems = Vec::new();
    cfg.validate(&mut problems);
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let t0 = env.window.saturating_sub(1);
    if panel.len() < t0 + 2 {
        return Err(Error::Data(format!("panel of {} days is too short for training", panel.len())));
    }
    let m = panel.num_assets();
    let mut target_actor = actor.clone();
    let mut target_critic = critic.clone();
    let mut actor_opt = OptState::new(cfg.actor_optimizer);
    let mut critic_opt = OptState::new(cfg.critic_optimizer);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity)?;
    let mut ou = OUProcess::new(m + 1, cfg.ou);
    let mut log = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let noisy = inject_noise(panel, env.noise_sigma, rng)?;
        ou.reset();
        let mut state = EnvState::initial(t0, m);
        let mut s = normalize_window(&noisy, t0, env.window, &env.features)?;
        let mut rewards = Vec::new();
        let mut losses = Vec::new();
        let mut record = EpochRecord { epoch: episode, ..Default::default() };
        while state.t + 1 < noisy.len() {
            let (scores, _) = actor.forward_batch(&[&s])?;
            let noise = ou.step(rng);
            let logits: Vec<f64> = scores[0].iter().zip(noise).map(|(a, b)| a + b).collect();
            let a = WeightVector::softmax(&logits)?;
            let outcome = match step(&noisy, &state, &a, env) {
                Ok(o) => o.expect("not at the end of the panel"),
                Err(e @ Error::InfeasibleTurnover { .. }) => {
                    record.aborted = Some(format!("day {}: {e}", state.t));
                    break;
                }
                Err(e) => return Err(e),
            };
            let next = normalize_window(&noisy, outcome.state.t, env.window, &env.features)?;
            rewards.push(outcome.reward);
            buffer.push(Transition {
                state: s,
                action: a,
                reward: outcome.reward,
                next_state: next.clone(),
            });
            s = next;
            state = outcome.state;

            let batch = match buffer.sample(cfg.batch_size, rng) {
                Ok(b) => b,
                Err(Error::Underfilled { .. }) => continue,
                Err(e) => return Err(e),
            };
            let states: Vec<&StateTensor> = batch.iter().map(|t| &t.state).collect();
            let actions: Vec<&WeightVector> = batch.iter().map(|t| &t.action).collect();
            let next_states: Vec<&StateTensor> = batch.iter().map(|t| &t.next_state).collect();
            let (_, next_actions) = target_actor.forward_batch(&next_states)?;
            let next_q = target_critic.q_batch(&next_states, &next_actions.iter().collect::<Vec<_>>())?;
            let targets: Vec<f64> = batch
                .iter()
                .zip(&next_q)
                .map(|(t, q)| t.reward + env.gamma * q)
                .collect();
            losses.push(critic_update(critic, &mut critic_opt, &states, &actions, &targets)?);
            actor_update(actor, critic, &mut actor_opt, &states)?;
            soft_update(&mut target_actor.params, &actor.params, cfg.tau)?;
            soft_update(&mut target_critic.params, &critic.params, cfg.tau)?;
        }
        if !rewards.is_empty() {
            record.objective = Some(mean(&rewards));
            record.training_apv = Some(rewards.iter().sum::<f64>().exp());
        }
        if !losses.is_empty() {
            record.critic_loss = Some(mean(&losses));
        }
        log.push(record);
    }
    Ok(log)
}

