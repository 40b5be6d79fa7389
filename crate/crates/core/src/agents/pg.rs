use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{replay_actions, EpochRecord, TrainingSpan};
use crate::env::{evolve_weights, inject_noise, reward_parts, EnvConfig, WeightVector};
use crate::error::{Error, Result};
use crate::market_data::Panel;
use crate::ndcore::{Feed, Graph, OptState, OptimizerConfig, Tensor};
use crate::policies::{stream_tensor, IIEActor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            optimizer: OptimizerConfig::adam(1e-2),
        }
    }
}

impl PgConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        self.optimizer.validate("pg.optimizer", problems);
    }
}

/// Value and parameter gradient of the batch-mean log-return objective.
#[derive(Clone, Debug)]
pub struct PgObjective {
    pub value: f64,
    /// Per-step log returns `ln(ω_t·y_t − μ Σ_{i≥1} |ω_{i,t} − ω′_{i,t−1}|)`.
    pub log_returns: Vec<f64>,
    pub weights: Vec<WeightVector>,
    pub grads: BTreeMap<String, Tensor>,
}

/// Whole-span objective graph.
///
/// The drifted previous weights `ω′_{t−1} = (y_t ⊙ ω_{t−1}) / (y_t · ω_{t−1})`
/// are computed inside the graph from the shifted action rows, so the
/// gradient includes the dependence of the cost term on earlier actions.
fn objective_graph(actor: &IIEActor, steps: usize, m: usize, cost_rate: f64, beta: f64) -> Graph {
    let mut g = Graph::new();
    let (_, w) = actor.build(&mut g, steps, m);
    let y = g.input("relatives");
    let y_prev = g.input("previous_relatives");
    let w0 = g.input("initial_weights");
    let ones = g.input("ones");
    let zeros = g.input("zeros");
    let mask = g.input("cost_mask");

    let shifted = g.shift_rows(w);
    let drifted = g.mul(shifted, y_prev);
    let drifted = g.add(drifted, w0);
    let growth = g.sum_last(drifted);
    let growth = g.reshape(growth, vec![steps, 1]);
    let spread = g.dense(growth, ones, zeros);
    let w_prime = g.div(drifted, spread);

    let diff = g.sub(w, w_prime);
    let diff = g.abs(diff);
    let diff = g.mul(diff, mask);
    let turnover = g.sum_last(diff);
    let cost = g.scale(turnover, cost_rate);
    let gross = g.mul(w, y);
    let gross = g.sum_last(gross);
    let argument = g.sub(gross, cost);
    g.label(argument, "reward log-argument");
    let log_returns = g.log(argument);
    g.output("log_returns", log_returns);
    g.output("weights", w);
    let mut objective = g.mean(log_returns);
    if beta > 0.0 {
        let v = g.input("variances");
        let risk = g.mul(w, v);
        let risk = g.sum_last(risk);
        let risk = g.mean(risk);
        let risk = g.scale(risk, beta);
        objective = g.sub(objective, risk);
    }
    g.output("objective", objective);
    g
}

fn rows(data: &[Vec<f64>]) -> Tensor {
    let cols = data[0].len();
    Tensor::new(vec![data.len(), cols], data.concat()).expect("rectangular rows")
}

fn objective_feed(actor: &IIEActor, span: &TrainingSpan) -> Result<Feed> {
    let (n, m) = (span.len(), span.num_assets());
    let (streams, _) = stream_tensor(&span.state_refs(), actor.input)?;
    let mut previous = vec![vec![1.0; m + 1]];
    previous.extend(span.relatives[..n - 1].iter().cloned());
    let mut initial = Tensor::zeros(&[n, m + 1]);
    initial.data_mut()[0] = 1.0;
    let mask = Tensor::from_fn(&[n, m + 1], |i| if i % (m + 1) == 0 { 0.0 } else { 1.0 });
    Ok([
        ("streams", streams),
        ("relatives", rows(&span.relatives)),
        ("previous_relatives", rows(&previous)),
        ("initial_weights", initial),
        ("ones", Tensor::full(&[m + 1, 1], 1.0)),
        ("zeros", Tensor::zeros(&[m + 1])),
        ("cost_mask", mask),
        ("variances", rows(&span.variances)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect())
}

/// `(1/T) Σ_t ln(ω_t·y_t − μ Σ_{i≥1} |ω_{i,t} − ω′_{i,t−1}|) − β (1/T) Σ_t σ²_t·ω_t`
/// over the span, starting from all cash, with its gradient.
pub fn pg_objective(actor: &IIEActor, span: &TrainingSpan, env: &EnvConfig) -> Result<PgObjective> {
    let m = span.num_assets();
    let mut g = objective_graph(actor, span.len(), m, env.cost_rate, env.risk_beta);
    let out = g.forward(&actor.params, &objective_feed(actor, span)?)?;
    let grads = g.backward("objective", &Tensor::scalar(1.0))?;
    let weights = out["weights"]
        .data()
        .chunks(m + 1)
        .map(|w| WeightVector::new(w.to_vec()))
        .collect::<Result<_>>()?;
    Ok(PgObjective {
        value: out["objective"].data()[0],
        log_returns: out["log_returns"].data().to_vec(),
        weights,
        grads: grads.params,
    })
}

/// APV of the deterministic actor over the whole panel.
pub fn training_apv(actor: &IIEActor, panel: &Panel, env: &EnvConfig) -> Result<f64> {
    let span = TrainingSpan::new(panel, env)?;
    let (_, weights) = actor.forward_batch(&span.state_refs())?;
    let steps = replay_actions(panel, env, span.t0, &weights)?;
    Ok(steps.iter().map(|s| s.reward).sum::<f64>().exp())
}

/// Adversarial policy gradient.
///
/// Each epoch perturbs the training prices with `env.noise_sigma`, rolls the
/// deterministic actor over the whole span, and takes one ascent step on
/// [`pg_objective`]. An epoch whose rollout hits a nonpositive reward
/// argument is skipped and logged.
pub fn pg_train<R: Rng + ?Sized>(
    actor: &mut IIEActor,
    panel: &Panel,
    env: &EnvConfig,
    cfg: &PgConfig,
    rng: &mut R,
) -> Result<Vec<EpochRecord>> {
    let clean = TrainingSpan::new(panel, env)?;
    let mut opt = OptState::new(cfg.optimizer);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let span = if env.noise_sigma > 0.0 {
            Cow::Owned(TrainingSpan::new(&inject_noise(panel, env.noise_sigma, rng)?, env)?)
        } else {
            Cow::Borrowed(&clean)
        };
        let mut record = EpochRecord { epoch, ..Default::default() };
        match pg_objective(actor, &span, env) {
            Ok(obj) => {
                opt.step(&mut actor.params, &obj.grads, true)?;
                record.objective = Some(obj.value);
                record.training_apv = Some(obj.log_returns.iter().sum::<f64>().exp());
            }
            Err(e @ (Error::NonFinite(_) | Error::InfeasibleTurnover { .. })) => {
                record.aborted = Some(diagnose(actor, &span, env).unwrap_or(e).to_string());
            }
            Err(e) => return Err(e),
        }
        log.push(record);
    }
    Ok(log)
}

/// Finds the first infeasible step of an aborted rollout.
fn diagnose(actor: &IIEActor, span: &TrainingSpan, env: &EnvConfig) -> Option<Error> {
    let (_, weights) = actor.forward_batch(&span.state_refs()).ok()?;
    let mut w_prev = WeightVector::cash(span.num_assets());
    for (t, (a, y)) in weights.iter().zip(&span.relatives).enumerate() {
        if let Err(e) = reward_parts(a, &w_prev, y, env.cost_rate) {
            return Some(Error::Data(format!("step {t} of the training span: {e}")));
        }
        w_prev = evolve_weights(a, y).ok()?;
    }
    None
}
