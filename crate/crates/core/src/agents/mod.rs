//! Training algorithms: adversarial policy gradient, DDPG, and PPO.
//!
//! All three train over a [`TrainingSpan`]: every decision day of a panel
//! that has a full feature window behind it and a next day to move into.
//! Each trainer mutates its networks in place and returns one
//! [`EpochRecord`] per epoch (iteration, episode), which the runner writes
//! as JSON lines.

mod ddpg;
mod ou;
mod pg;
mod ppo;
mod replay;
mod target;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ddpg::{critic_update, ddpg_train, DdpgConfig, Transition};
pub use ou::{OUProcess, OuConfig};
pub use pg::{pg_objective, pg_train, training_apv, PgConfig, PgObjective};
pub use ppo::{
    advantages, gaussian_kl, ppo_train, surrogate_graph, PPOBatch, PpoConfig, SurrogateInputs,
};
pub use replay::ReplayBuffer;
pub use target::{soft_update, TargetPair};

use crate::env::{relative_variances, step, EnvConfig, EnvState, StepOutcome, WeightVector};
use crate::error::{Error, Result};
use crate::market_data::{normalize_window, price_relatives, Panel, StateTensor};

/// One row of the training log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// APV of the rollout this epoch trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_apv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critic_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    /// Why the epoch's update was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

pub fn write_log(records: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::json(path, e))?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

/// Observations and outcomes of every decision day in a panel.
#[derive(Clone, Debug)]
pub struct TrainingSpan {
    /// First decision day.
    pub t0: usize,
    pub states: Vec<StateTensor>,
    /// `y_{t+1}` for each decision day `t`.
    pub relatives: Vec<Vec<f64>>,
    /// Per-component relative variances over the risk window ending at `t`,
    /// zero where the window does not fit.
    pub variances: Vec<Vec<f64>>,
}

impl TrainingSpan {
    pub fn new(panel: &Panel, env: &EnvConfig) -> Result<Self> {
        let t0 = env.window.saturating_sub(1);
        if panel.len() < t0 + 2 {
            return Err(Error::Data(format!(
                "training span of {} days is too short for a window of {}",
                panel.len(),
                env.window
            )));
        }
        let days = t0..panel.len() - 1;
        let m = panel.num_assets();
        let states = days
            .clone()
            .map(|t| normalize_window(panel, t, env.window, &env.features))
            .collect::<Result<_>>()?;
        let relatives = days.clone().map(|t| price_relatives(panel, t + 1)).collect::<Result<_>>()?;
        let variances = days
            .map(|t| {
                if t >= env.risk_window {
                    relative_variances(panel, t, env.risk_window)
                } else {
                    Ok(vec![0.0; m + 1])
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            t0,
            states,
            relatives,
            variances,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_assets(&self) -> usize {
        self.states[0].num_assets()
    }

    pub fn state_refs(&self) -> Vec<&StateTensor> {
        self.states.iter().collect()
    }
}

/// Replays a fixed action sequence through the environment from all cash.
pub fn replay_actions(panel: &Panel, env: &EnvConfig, t0: usize, actions: &[WeightVector]) -> Result<Vec<StepOutcome>> {
    let mut state = EnvState::initial(t0, panel.num_assets());
    let mut out = Vec::with_capacity(actions.len());
    for a in actions {
        let o = step(panel, &state, a, env)?
            .ok_or_else(|| Error::InvalidArgument("more actions than decision days".into()))?;
        state = o.state.clone();
        out.push(o);
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
