//! The portfolio MDP.
//!
//! At decision day `t` the agent sees the feature window ending at `t` and
//! picks target weights `a` over cash plus `m` risky assets. Prices then move
//! by the relatives `y = price_relatives(t + 1)`, and the step reward is
//!
//! ```text
//! r = ln(a·y − μ Σ_{i≥1} |a_i − w_prev_i|)
//! ```
//!
//! where `w_prev` is the previous allocation after it drifted with the
//! previous day's prices. Cash never pays transaction cost. The weights then
//! drift to `w = (y ⊙ a) / (y · a)`, which becomes the next step's `w_prev`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{normalize_window, price_relatives, FeatureSet, Panel, StateTensor, DEFAULT_WINDOW};

/// Simplex tolerance for weight vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;
/// Multiplicative price noise is clipped so `1 + ε` never drops below this.
pub const NOISE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Proportional transaction cost on risky-asset turnover.
    pub cost_rate: f64,
    pub gamma: f64,
    pub risk_beta: f64,
    pub risk_window: usize,
    pub window: usize,
    pub features: FeatureSet,
    /// Standard deviation of the multiplicative training-price noise.
    pub noise_sigma: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cost_rate: 0.0025,
            gamma: 0.99,
            risk_beta: 0.0,
            risk_window: 10,
            window: DEFAULT_WINDOW,
            features: FeatureSet::close_only(),
            noise_sigma: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(0.0..1.0).contains(&self.cost_rate) {
            problems.push(format!("env.cost_rate must lie in [0, 1), got {}", self.cost_rate));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            problems.push(format!("env.gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.risk_beta >= 0.0) {
            problems.push(format!("env.risk_beta must be nonnegative, got {}", self.risk_beta));
        }
        if self.risk_window == 0 {
            problems.push("env.risk_window must be positive".into());
        }
        if self.window == 0 {
            problems.push("env.window must be positive".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            problems.push(format!("env.noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
    }
}

/// A point on the simplex over `[cash, asset_1, …, asset_m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "weight vector needs cash plus at least one asset, got {} entries",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!("weights must be nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidArgument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Softmax of arbitrary finite scores.
    pub fn softmax(scores: &[f64]) -> Result<Self> {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / total).collect())
    }

    /// Everything in cash.
    pub fn cash(num_assets: usize) -> Self {
        Self::vertex(num_assets, 0)
    }

    /// Everything in component `k` (0 = cash).
    pub fn vertex(num_assets: usize, k: usize) -> Self {
        let mut w = vec![0.0; num_assets + 1];
        w[k] = 1.0;
        Self(w)
    }

    /// `1/(m+1)` in every component.
    pub fn uniform(num_assets: usize) -> Self {
        Self(vec![1.0 / (num_assets + 1) as f64; num_assets + 1])
    }

    /// Number of risky assets.
    pub fn num_assets(&self) -> usize {
        self.0.len() - 1
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Vec<f64> {
        w.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_relatives(a: &WeightVector, y: &[f64]) -> Result<()> {
    if y.len() != a.0.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights vs {} price relatives",
            a.0.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("price relatives must be positive: {y:?}")));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(y ⊙ a) / (y · a)`.
pub fn evolve_weights(a: &WeightVector, y: &[f64]) -> Result<WeightVector> {
    check_relatives(a, y)?;
    let growth = dot(&a.0, y);
    assert!(growth > 0.0, "positive relatives on the simplex give positive growth");
    Ok(WeightVector(a.0.iter().zip(y).map(|(w, r)| w * r / growth).collect()))
}

/// `Σ_{i≥1} |a_i − w_i|`; cash is excluded.
pub fn turnover(a: &WeightVector, w_prev: &WeightVector) -> f64 {
    a.0.iter().zip(&w_prev.0).skip(1).map(|(x, y)| (x - y).abs()).sum()
}

/// Gross growth, cost, and log reward of one rebalancing step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardParts {
    pub gross: f64,
    pub cost: f64,
    pub turnover: f64,
    pub reward: f64,
}

pub fn reward_parts(a: &WeightVector, w_prev: &WeightVector, y: &[f64], cost_rate: f64) -> Result<RewardParts> {
    check_relatives(a, y)?;
    if w_prev.0.len() != a.0.len() {
        return Err(Error::InvalidArgument("action and previous weights differ in length".into()));
    }
    let gross = dot(&a.0, y);
    let turnover = turnover(a, w_prev);
    let cost = cost_rate * turnover;
    let argument = gross - cost;
    if !(argument > 0.0) {
        return Err(Error::InfeasibleTurnover { argument, gross, cost });
    }
    Ok(RewardParts {
        gross,
        cost,
        turnover,
        reward: argument.ln(),
    })
}

/// `ln(a·y − μ Σ_{i≥1} |a_i − w_prev_i|)`.
pub fn reward(a: &WeightVector, w_prev: &WeightVector, y: &[f64], cost_rate: f64) -> Result<f64> {
    reward_parts(a, w_prev, y, cost_rate).map(|p| p.reward)
}

/// Mean-relative variance over the `L` days ending at `t`, weighted by `w`:
/// `(1/L) Σ_{t'} Σ_i (y_{i,t'} − ȳ_i)² w_i`.
pub fn risk_penalty(panel: &Panel, t: usize, w: &WeightVector, window: usize) -> Result<f64> {
    Ok(dot(&relative_variances(panel, t, window)?, &w.0))
}

/// Per-component variance of the price relatives over the `L` days ending
/// at `t` (index 0 is cash, always 0).
pub fn relative_variances(panel: &Panel, t: usize, window: usize) -> Result<Vec<f64>> {
    if window == 0 || t < window || t >= panel.len() {
        return Err(Error::InvalidArgument(format!(
            "risk window {window} ending at {t} needs {window} <= t < {}",
            panel.len()
        )));
    }
    let rel: Vec<Vec<f64>> = (t + 1 - window..=t)
        .map(|s| price_relatives(panel, s))
        .collect::<Result<_>>()?;
    let l = window as f64;
    let mut out = vec![0.0; panel.num_assets() + 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let mean = rel.iter().map(|y| y[i]).sum::<f64>() / l;
        *slot = rel.iter().map(|y| (y[i] - mean).powi(2)).sum::<f64>() / l;
    }
    Ok(out)
}

/// `Σ_t γ^t (r_t − β σ²_t)` with `t` counted from 0.
pub fn risk_adjusted_return(rewards: &[f64], penalties: &[f64], gamma: f64, beta: f64) -> Result<f64> {
    if rewards.len() != penalties.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rewards vs {} penalties",
            rewards.len(),
            penalties.len()
        )));
    }
    let mut discount = 1.0;
    let mut total = 0.0;
    for (r, p) in rewards.iter().zip(penalties) {
        total += discount * (r - beta * p);
        discount *= gamma;
    }
    Ok(total)
}

/// Multiplies every price cell by `1 + ε`, `ε ~ N(0, sigma²)` i.i.d.
///
/// Volume is untouched. `sigma == 0` returns an exact copy without drawing
/// from `rng`.
pub fn inject_noise<R: Rng + ?Sized>(panel: &Panel, sigma: f64, rng: &mut R) -> Result<Panel> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(panel.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    Ok(panel.map_prices(|p| {
        let eps: f64 = normal.sample(rng);
        p * (1.0 + eps).max(NOISE_FLOOR)
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub t: usize,
    /// Previous allocation after drifting with the last day's prices.
    pub w_prev: WeightVector,
    pub portfolio_value: f64,
}

impl EnvState {
    /// All-cash start at decision day `t` with unit wealth.
    pub fn initial(t: usize, num_assets: usize) -> Self {
        Self {
            t,
            w_prev: WeightVector::cash(num_assets),
            portfolio_value: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub relatives: Vec<f64>,
    pub gross: f64,
    pub cost: f64,
    pub turnover: f64,
    /// `σ²` of the chosen weights when the risk window fits before `t`.
    pub risk_penalty: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub info: StepInfo,
}

/// Executes action `a` at `state.t`. Returns `Ok(None)` once the panel has no
/// next day to move into.
pub fn step(panel: &Panel, state: &EnvState, a: &WeightVector, cfg: &EnvConfig) -> Result<Option<StepOutcome>> {
    if state.t + 1 >= panel.len() {
        return Ok(None);
    }
    let y = price_relatives(panel, state.t + 1)?;
    let parts = reward_parts(a, &state.w_prev, &y, cfg.cost_rate)?;
    let w_next = evolve_weights(a, &y)?;
    let risk = (state.t >= cfg.risk_window)
        .then(|| risk_penalty(panel, state.t, a, cfg.risk_window))
        .transpose()?;
    Ok(Some(StepOutcome {
        state: EnvState {
            t: state.t + 1,
            w_prev: w_next,
            portfolio_value: state.portfolio_value * parts.reward.exp(),
        },
        reward: parts.reward,
        info: StepInfo {
            relatives: y,
            gross: parts.gross,
            cost: parts.cost,
            turnover: parts.turnover,
            risk_penalty: risk,
        },
    }))
}

/// A single episode over a panel.
#[derive(Clone, Debug)]
pub struct PortfolioEnv<'a> {
    panel: &'a Panel,
    cfg: &'a EnvConfig,
    state: EnvState,
}

impl<'a> PortfolioEnv<'a> {
    /// Starts at the first day with a full feature window, or `start` if later.
    pub fn new(panel: &'a Panel, cfg: &'a EnvConfig, start: usize) -> Result<Self> {
        let t0 = start.max(cfg.window.saturating_sub(1));
        if t0 + 1 >= panel.len() {
            return Err(Error::Data(format!(
                "panel of {} days is too short for a window of {} starting at {start}",
                panel.len(),
                cfg.window
            )));
        }
        Ok(Self {
            panel,
            cfg,
            state: EnvState::initial(t0, panel.num_assets()),
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn panel(&self) -> &'a Panel {
        self.panel
    }

    pub fn observe(&self) -> Result<StateTensor> {
        normalize_window(self.panel, self.state.t, self.cfg.window, &self.cfg.features)
    }

    pub fn is_done(&self) -> bool {
        self.state.t + 1 >= self.panel.len()
    }

    pub fn step(&mut self, a: &WeightVector) -> Result<Option<StepOutcome>> {
        let outcome = step(self.panel, &self.state, a, self.cfg)?;
        if let Some(o) = &outcome {
            self.state = o.state.clone();
        }
        Ok(outcome)
    }
}
