use serde::{Deserialize, Serialize};

use super::{welch_t_test, MetricsReport};
use crate::error::{Error, Result};

/// One metric's one-sided test of `H0: A <= B` against `A > B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: Option<f64>,
    pub df: Option<f64>,
    pub p_value: Option<f64>,
    /// Why no test could be run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub runs: usize,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "mean_a", "mean_b", "t", "df", "p_value"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.metric.clone(),
                r.mean_a.to_string(),
                r.mean_b.to_string(),
                opt(r.t),
                opt(r.df),
                opt(r.p_value),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Welch tests on ADR, Sharpe, and max drawdown, each with the alternative
/// "A is larger than B".
pub fn compare_runs(a: &[MetricsReport], b: &[MetricsReport]) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired comparison needs equal run counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "comparison needs at least two runs per side, got {}",
            a.len()
        )));
    }
    let sharpe = |side: &[MetricsReport], name: &str| -> Result<Vec<f64>> {
        side.iter()
            .enumerate()
            .map(|(i, r)| {
                r.sharpe
                    .ok_or_else(|| Error::Data(format!("run {i} of side {name} has an undefined Sharpe ratio")))
            })
            .collect()
    };
    let columns = [
        ("adr", a.iter().map(|r| r.adr).collect(), b.iter().map(|r| r.adr).collect()),
        ("sharpe", sharpe(a, "A")?, sharpe(b, "B")?),
        ("mdd", a.iter().map(|r| r.mdd).collect(), b.iter().map(|r| r.mdd).collect()),
    ];
    let rows = columns
        .into_iter()
        .map(|(metric, xa, xb): (&str, Vec<f64>, Vec<f64>)| {
            let mut row = ComparisonRow {
                metric: metric.into(),
                mean_a: mean(&xa),
                mean_b: mean(&xb),
                t: None,
                df: None,
                p_value: None,
                note: None,
            };
            match welch_t_test(&xa, &xb) {
                Ok(r) => {
                    row.t = Some(r.t);
                    row.df = Some(r.df);
                    row.p_value = Some(r.p);
                }
                Err(e) => row.note = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(Comparison { runs: a.len(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn report(adr: f64, sharpe: f64, mdd: f64) -> MetricsReport {
        MetricsReport {
            adr,
            sharpe: Some(sharpe),
            mdd,
            cvar: -1.0,
            final_apv: 1.0,
            days: 100,
        }
    }

    fn sample(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> Vec<MetricsReport> {
        let noise = Normal::new(0.0, 0.5).unwrap();
        (0..n)
            .map(|_| {
                report(
                    0.3 + shift + noise.sample(rng),
                    0.8 + noise.sample(rng),
                    (0.2 + 0.1 * noise.sample(rng)).clamp(0.0, 1.0),
                )
            })
            .collect()
    }

    #[test]
    fn self_comparison_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = sample(10, 0.0, &mut rng);
        let c = compare_runs(&a, &a).unwrap();
        assert_eq!(c.rows.len(), 3);
        for r in &c.rows {
            assert_eq!(r.p_value, Some(0.5));
        }
    }

    #[test]
    fn shifted_adr_is_detected() {
        // a +1 percentage point ADR shift with 0.5 noise over 30 pairs
        let mut detected = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = sample(30, 1.0, &mut rng);
            let b = sample(30, 0.0, &mut rng);
            let c = compare_runs(&a, &b).unwrap();
            if c.row("adr").unwrap().p_value.unwrap() < 0.05 {
                detected += 1;
            }
        }
        assert_eq!(detected, 20);
    }

    #[test]
    fn csv_rows_match_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = compare_runs(&sample(4, 0.0, &mut rng), &sample(4, 0.0, &mut rng)).unwrap();
        let text = c.to_csv().unwrap();
        assert_eq!(text.lines().count(), 1 + 3);
        let back: Comparison = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn contract_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(compare_runs(&sample(3, 0.0, &mut rng), &sample(4, 0.0, &mut rng)).is_err());
        assert!(compare_runs(&sample(1, 0.0, &mut rng), &sample(1, 0.0, &mut rng)).is_err());
    }
}
