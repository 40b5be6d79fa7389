use serde::{Deserialize, Serialize};

use super::EquityCurve;
use crate::error::{Error, Result};

/// Trading days per year, used only when annualizing the Sharpe ratio.
pub const TRADING_DAYS: f64 = 252.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub cvar_confidence: f64,
    pub annualize_sharpe: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            cvar_confidence: 0.95,
            annualize_sharpe: false,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self, problems: &mut Vec<String>) {
        if !(self.cvar_confidence > 0.0 && self.cvar_confidence < 1.0) {
            problems.push(format!(
                "metrics.cvar_confidence must lie in (0, 1), got {}",
                self.cvar_confidence
            ));
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean simple daily return, in percent.
    pub adr: f64,
    /// Mean over sample standard deviation of simple daily returns; `None`
    /// when the returns do not vary.
    pub sharpe: Option<f64>,
    /// Largest peak-relative decline of the curve.
    pub mdd: f64,
    /// Mean of the worst `1 − c` fraction of daily returns.
    pub cvar: f64,
    pub final_apv: f64,
    pub days: usize,
}

impl MetricsReport {
    /// One CSV row per report, with a header.
    pub fn to_csv(reports: &[MetricsReport]) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in reports {
            w.serialize(r)?;
        }
        if reports.is_empty() {
            w.write_record(["adr", "sharpe", "mdd", "cvar", "final_apv", "days"])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn compute_metrics(curve: &EquityCurve, cfg: &MetricsConfig) -> Result<MetricsReport> {
    if curve.len() < 2 {
        return Err(Error::InvalidArgument("metrics need a curve of at least two values".into()));
    }
    let returns = curve.simple_returns();
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let sharpe = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        (sd > 0.0).then(|| {
            let daily = mean / sd;
            if cfg.annualize_sharpe {
                daily * TRADING_DAYS.sqrt()
            } else {
                daily
            }
        })
    } else {
        None
    };
    Ok(MetricsReport {
        adr: 100.0 * mean,
        sharpe,
        mdd: max_drawdown(&curve.values),
        cvar: cvar(&returns, cfg.cvar_confidence),
        final_apv: curve.final_value() / curve.values[0],
        days: returns.len(),
    })
}

/// `max_t (max_{s≤t} P_s − P_t) / max_{s≤t} P_s`, evaluated as `1 − P_t / peak`.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &v in values {
        peak = peak.max(v);
        worst = worst.max(1.0 - v / peak);
    }
    worst
}

/// Mean of the `ceil((1 − c) n)` smallest returns (at least one).
pub fn cvar(returns: &[f64], confidence: f64) -> f64 {
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) * sorted.len() as f64;
    // 0.05 · 40 evaluates to 2.0000000000000018; snap before taking the ceiling
    let tail = if (tail - tail.round()).abs() < 1e-9 { tail.round() } else { tail.ceil() };
    let k = (tail as usize).clamp(1, sorted.len());
    sorted[..k].iter().sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn curve(values: &[f64]) -> EquityCurve {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        EquityCurve {
            dates: (0..values.len()).map(|i| d0 + chrono::Days::new(i as u64)).collect(),
            values: values.to_vec(),
            log_returns: values.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
            weights: Vec::new(),
            turnover: vec![0.0; values.len().saturating_sub(1)],
            terminated: None,
        }
    }

    fn from_returns(r: &[f64]) -> Vec<f64> {
        let mut v = vec![1.0];
        for x in r {
            v.push(v.last().unwrap() * (1.0 + x));
        }
        v
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[1.0, 1.2, 0.9, 1.1]), 0.25);
        assert_eq!(max_drawdown(&[1.0, 1.01, 1.5, 2.0]), 0.0);
    }

    #[test]
    fn constant_returns() {
        let r = 0.003;
        let c = curve(&from_returns(&[r; 20]));
        let m = compute_metrics(&c, &MetricsConfig::default()).unwrap();
        assert!((m.adr - 100.0 * r).abs() < 1e-12);
        assert!((m.cvar - r).abs() < 1e-12);
        assert_eq!(m.mdd, 0.0);
    }

    #[test]
    fn sharpe_scale_and_annualization() {
        let c = curve(&from_returns(&[0.01, -0.02, 0.03, 0.0, 0.015]));
        let daily = compute_metrics(&c, &MetricsConfig::default()).unwrap().sharpe.unwrap();
        let r = [0.01, -0.02, 0.03, 0.0, 0.015];
        let mean = r.iter().sum::<f64>() / 5.0;
        let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((daily - mean / sd).abs() < 1e-12);
        let cfg = MetricsConfig {
            annualize_sharpe: true,
            ..Default::default()
        };
        let annual = compute_metrics(&c, &cfg).unwrap().sharpe.unwrap();
        assert!((annual - daily * 252f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cvar_tail() {
        let r: Vec<f64> = (0..40).map(|i| i as f64 / 100.0 - 0.2).collect();
        // 5% of 40 is 2 returns
        assert!((cvar(&r, 0.95) - (-0.2 - 0.19) / 2.0).abs() < 1e-12);
        assert_eq!(cvar(&r, 0.999_999), -0.2);
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let c = curve(&[1.0, 1.1, 1.0]);
        let m = compute_metrics(&c, &MetricsConfig::default()).unwrap();
        let text = MetricsReport::to_csv(&[m.clone(), m]).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("adr,sharpe,mdd,cvar,final_apv,days\n"));
    }

    proptest! {
        #[test]
        fn mdd_is_scale_invariant(r in prop::collection::vec(-0.1f64..0.1, 2..60), c in 0.01f64..100.0) {
            let v = from_returns(&r);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let (a, b) = (max_drawdown(&v), max_drawdown(&scaled));
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn sharpe_ignores_order(r in prop::collection::vec(-0.1f64..0.1, 3..40), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = r.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let cfg = MetricsConfig::default();
            let a = compute_metrics(&curve(&from_returns(&r)), &cfg).unwrap();
            let b = compute_metrics(&curve(&from_returns(&shuffled)), &cfg).unwrap();
            match (a.sharpe, b.sharpe) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
            }
        }

        #[test]
        fn cvar_bounds(r in prop::collection::vec(-0.1f64..0.1, 1..80), c in 0.5f64..0.99) {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let v = cvar(&r, c);
            let min = r.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(v <= mean + 1e-15);
            prop_assert!(v >= min);
        }
    }
}
