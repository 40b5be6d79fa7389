//! Backtesting, baseline strategies, performance metrics, and the one-sided
//! Welch tests used to compare groups of runs.

mod baselines;
mod compare;
mod metrics;
mod stats;

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;

pub use baselines::{follow_loser, follow_winner, ucrp_weights, AllCash, FollowLoser, FollowWinner, Ucrp};
pub use compare::{compare_runs, Comparison, ComparisonRow};
pub use metrics::{compute_metrics, cvar, max_drawdown, MetricsConfig, MetricsReport, TRADING_DAYS};
pub use stats::{welch_t_test, TTestResult};

use crate::env::{step, EnvConfig, EnvState, WeightVector};
use crate::error::{Error, Result};
use crate::market_data::{normalize_window, Panel, StateTensor};
use crate::policies::{GaussianPolicy, IIEActor};

/// A trading rule evaluated once per decision day.
pub trait Agent {
    /// Target weights for day `t`, given the normalized window ending at `t`
    /// and the drifted weights currently held.
    fn act(&mut self, panel: &Panel, t: usize, state: &StateTensor, w_prev: &WeightVector) -> Result<WeightVector>;
}

impl<F> Agent for F
where
    F: FnMut(&Panel, usize, &StateTensor, &WeightVector) -> Result<WeightVector>,
{
    fn act(&mut self, panel: &Panel, t: usize, state: &StateTensor, w_prev: &WeightVector) -> Result<WeightVector> {
        self(panel, t, state, w_prev)
    }
}

impl Agent for IIEActor {
    fn act(&mut self, _: &Panel, _: usize, state: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        self.actor_weights(state)
    }
}

/// The trained Gaussian policy trades its mean action.
impl Agent for GaussianPolicy {
    fn act(&mut self, _: &Panel, _: usize, state: &StateTensor, _: &WeightVector) -> Result<WeightVector> {
        self.mean_weights(state)
    }
}

/// Portfolio value path of one backtest.
///
/// `dates` and `values` have one entry per day from the first decision day
/// to the last day reached; the per-step vectors have one entry fewer.
#[derive(Clone, Debug, PartialEq)]
pub struct EquityCurve {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub log_returns: Vec<f64>,
    /// Weights chosen on each decision day.
    pub weights: Vec<WeightVector>,
    pub turnover: Vec<f64>,
    /// Set when the replay stopped early on an infeasible step.
    pub terminated: Option<String>,
}

impl EquityCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("curves hold at least the start value")
    }

    /// Simple returns `P_t / P_{t−1} − 1`.
    pub fn simple_returns(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
    }

    /// `date,value,turnover`, where turnover is that of the trade placed on
    /// the row's date (zero on the last row).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value,turnover\n");
        for (i, (d, v)) in self.dates.iter().zip(&self.values).enumerate() {
            let turnover = self.turnover.get(i).copied().unwrap_or(0.0);
            out.push_str(&format!("{d},{v},{turnover}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv().as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// `date,agent,ucrp` columns for plotting two curves over the same days.
pub fn plot_csv(agent: &EquityCurve, reference: &EquityCurve) -> String {
    let mut out = String::from("date,agent,ucrp\n");
    for (i, d) in agent.dates.iter().enumerate() {
        let r = reference.values.get(i).map(f64::to_string).unwrap_or_default();
        out.push_str(&format!("{d},{},{r}\n", agent.values[i]));
    }
    out
}

/// Replays `agent` from all cash on day `start` through day `end`
/// (inclusive), trading on every day in between.
///
/// A step with a nonpositive reward argument ends the curve early and is
/// recorded in [`EquityCurve::terminated`].
pub fn backtest<A: Agent + ?Sized>(agent: &mut A, panel: &Panel, start: usize, end: usize, cfg: &EnvConfig) -> Result<EquityCurve> {
    if start + 1 < cfg.window {
        return Err(Error::InvalidArgument(format!(
            "backtest starts on day {start}, before a full window of {}",
            cfg.window
        )));
    }
    if start >= end || end >= panel.len() {
        return Err(Error::InvalidArgument(format!(
            "backtest span {start}..={end} is empty or outside a panel of {} days",
            panel.len()
        )));
    }
    let mut state = EnvState::initial(start, panel.num_assets());
    let mut curve = EquityCurve {
        dates: vec![panel.calendar()[start]],
        values: vec![state.portfolio_value],
        log_returns: Vec::new(),
        weights: Vec::new(),
        turnover: Vec::new(),
        terminated: None,
    };
    while state.t < end {
        let s = normalize_window(panel, state.t, cfg.window, &cfg.features)?;
        let a = agent.act(panel, state.t, &s, &state.w_prev)?;
        let outcome = match step(panel, &state, &a, cfg) {
            Ok(o) => o.expect("end lies inside the panel"),
            Err(e @ Error::InfeasibleTurnover { .. }) => {
                curve.terminated = Some(format!("{}: {e}", panel.calendar()[state.t]));
                break;
            }
            Err(e) => return Err(e),
        };
        curve.dates.push(panel.calendar()[outcome.state.t]);
        curve.values.push(outcome.state.portfolio_value);
        curve.log_returns.push(outcome.reward);
        curve.weights.push(a);
        curve.turnover.push(outcome.info.turnover);
        state = outcome.state;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::market_data::{gen_synthetic, Ohlcv, SyntheticAsset, SyntheticSpec};

    fn flat_panel(m: usize, days: usize) -> Panel {
        let cal = crate::market_data::weekday_calendar(NaiveDate::from_ymd_opt(2020, 1, 6).unwrap(), days);
        let row = Ohlcv {
            open: 10.0,
            high: 10.0,
            low: 10.0,
            close: 10.0,
            volume: 1.0,
        };
        Panel::new((0..m).map(|i| format!("a{i}")).collect(), cal, vec![vec![row; days]; m]).unwrap()
    }

    fn gbm_panel(seed: u64) -> Panel {
        use rand::SeedableRng;
        let spec = SyntheticSpec {
            assets: (0..3)
                .map(|i| SyntheticAsset {
                    id: format!("s{i}"),
                    drift: 0.0005 * i as f64,
                    volatility: 0.02,
                    start_price: 50.0,
                })
                .collect(),
            days: 80,
            start_date: NaiveDate::from_ymd_opt(2019, 1, 7).unwrap(),
        };
        gen_synthetic(&spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn cfg() -> EnvConfig {
        EnvConfig {
            window: 5,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn all_cash_is_flat() {
        let p = gbm_panel(1);
        let curve = backtest(&mut AllCash, &p, 4, 79, &cfg()).unwrap();
        assert!(curve.values.iter().all(|&v| v == 1.0));
        let m = compute_metrics(&curve, &MetricsConfig::default()).unwrap();
        assert_eq!(m.adr, 0.0);
        assert_eq!(m.mdd, 0.0);
        assert_eq!(m.sharpe, None);
    }

    #[test]
    fn ucrp_on_flat_prices_pays_only_the_first_rebalance() {
        let p = flat_panel(4, 30);
        let c = cfg();
        let curve = backtest(&mut Ucrp::default(), &p, 4, 29, &c).unwrap();
        // from all cash into 1/5 of each: risky turnover 4/5
        let first = 1.0 - c.cost_rate * 0.8;
        assert!((curve.values[1] - first).abs() < 1e-15);
        for v in &curve.values[1..] {
            assert!((v - first).abs() < 1e-12);
        }
        assert!(curve.turnover[1..].iter().all(|&t| t < 1e-15));
    }

    #[test]
    fn backtest_is_the_composition_of_env_steps() {
        let p = gbm_panel(2);
        let c = cfg();
        let curve = backtest(&mut FollowWinner { lookback: 3 }, &p, 4, 60, &c).unwrap();
        let mut state = EnvState::initial(4, 3);
        for (k, a) in curve.weights.iter().enumerate() {
            let o = step(&p, &state, a, &c).unwrap().unwrap();
            assert_eq!(o.state.portfolio_value.to_bits(), curve.values[k + 1].to_bits());
            assert_eq!(o.reward.to_bits(), curve.log_returns[k].to_bits());
            state = o.state;
        }
        for k in 1..curve.len() {
            let expected = curve.values[k - 1] * curve.log_returns[k - 1].exp();
            assert!((curve.values[k] - expected).abs() < 1e-12);
        }
        assert_eq!(curve.dates.len(), curve.values.len());
    }

    #[test]
    fn repeated_backtests_are_identical() {
        use rand::SeedableRng;
        let p = gbm_panel(3);
        let c = cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let shape = crate::policies::InputShape { features: 1, window: 5 };
        let mut actor = IIEActor::new(Default::default(), shape, &mut rng).unwrap();
        let flat: Vec<f64> = actor.params.flatten().iter().map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5)).collect();
        actor.params.assign_flat(&flat).unwrap();
        let a = backtest(&mut actor.clone(), &p, 4, 79, &c).unwrap();
        let b = backtest(&mut actor, &p, 4, 79, &c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn infeasible_step_terminates_the_curve() {
        let p = gbm_panel(5);
        let c = EnvConfig {
            cost_rate: 0.9,
            ..cfg()
        };
        // alternate between two vertices: turnover 2 each day
        let mut flip = |_: &Panel, t: usize, _: &StateTensor, _: &WeightVector| Ok(WeightVector::vertex(3, 1 + t % 2));
        let curve = backtest(&mut flip, &p, 4, 79, &c).unwrap();
        assert!(curve.terminated.is_some());
        assert!(curve.len() < 76);
        assert!(curve.values.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn curve_csv_layout() {
        let p = flat_panel(1, 8);
        let curve = backtest(&mut AllCash, &p, 4, 7, &cfg()).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "date,value,turnover");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], format!("{},1,0", p.calendar()[4]));
    }

    #[test]
    fn rejects_bad_spans() {
        let p = flat_panel(2, 10);
        assert!(backtest(&mut AllCash, &p, 2, 9, &cfg()).is_err());
        assert!(backtest(&mut AllCash, &p, 5, 5, &cfg()).is_err());
        assert!(backtest(&mut AllCash, &p, 5, 10, &cfg()).is_err());
    }
}
