use super::Agent;
use crate::env::WeightVector;
use crate::error::{Error, Result};
use crate::market_data::{Panel, StateTensor};

/// Uniform constant rebalanced portfolio, with or without cash in the mix.
pub fn ucrp_weights(num_assets: usize, include_cash: bool) -> Result<WeightVector> {
    if num_assets == 0 {
        return Err(Error::InvalidArgument("UCRP needs at least one asset".into()));
    }
    if include_cash {
        return Ok(WeightVector::uniform(num_assets));
    }
    let share = 1.0 / num_assets as f64;
    let mut w = vec![share; num_assets + 1];
    w[0] = 0.0;
    WeightVector::new(w)
}

fn cumulative_relatives(panel: &Panel, t: usize, lookback: usize) -> Result<Vec<f64>> {
    if lookback == 0 || t < lookback || t >= panel.len() {
        return Err(Error::InvalidArgument(format!(
            "lookback {lookback} ending at day {t} needs {lookback} <= t < {}",
            panel.len()
        )));
    }
    Ok((0..panel.num_assets())
        .map(|i| panel.close(i, t) / panel.close(i, t - lookback))
        .collect())
}

/// Lowest index wins ties.
fn pick(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// All weight on the risky asset with the largest cumulative relative over
/// the last `lookback` days.
pub fn follow_winner(panel: &Panel, t: usize, lookback: usize) -> Result<WeightVector> {
    let rel = cumulative_relatives(panel, t, lookback)?;
    Ok(WeightVector::vertex(panel.num_assets(), 1 + pick(&rel, |a, b| a > b)))
}

/// All weight on the risky asset with the smallest cumulative relative.
pub fn follow_loser(panel: &Panel, t: usize, lookback: usize) -> Result<WeightVector> {
    let rel = cumulative_relatives(panel, t, lookback)?;
    Ok(WeightVector::vertex(panel.num_assets(), 1 + pick(&rel, |a, b| a < b)))
}

#[derive(Clone, Copy, Debug)]
pub struct Ucrp {
    pub include_cash: bool,
}

impl Default for Ucrp {
    fn default() -> Self {
        Self { include_cash: true }
    }
}

impl Agent for Ucrp {
    fn act(&mut self, panel: &Panel, _: usize, _: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        ucrp_weights(panel.num_assets(), self.include_cash)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FollowWinner {
    pub lookback: usize,
}

impl Agent for FollowWinner {
    fn act(&mut self, panel: &Panel, t: usize, _: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        follow_winner(panel, t, self.lookback)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FollowLoser {
    pub lookback: usize,
}

impl Agent for FollowLoser {
    fn act(&mut self, panel: &Panel, t: usize, _: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        follow_loser(panel, t, self.lookback)
    }
}

/// Holds cash forever.
#[derive(Clone, Copy, Debug, Default)]
pub struct AllCash;

impl Agent for AllCash {
    fn act(&mut self, panel: &Panel, _: usize, _: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        Ok(WeightVector::cash(panel.num_assets()))
    }
}
