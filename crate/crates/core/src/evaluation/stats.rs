use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub df: f64,
    /// One-sided p value for the alternative `mean(x) > mean(y)`.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t test of `H0: mean(x) <= mean(y)`.
pub fn welch_t_test(x: &[f64], y: &[f64]) -> Result<TTestResult> {
    if x.len() < 2 || y.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "t test needs at least two values per sample, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("t test samples must be finite".into()));
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (sx, sy) = (vx / x.len() as f64, vy / y.len() as f64);
    let se2 = sx + sy;
    if !(se2 > 0.0) {
        return Err(Error::InvalidArgument("both samples have zero variance".into()));
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (x.len() as f64 - 1.0) + sy * sy / (y.len() as f64 - 1.0));
    // P(T > |t|) = I_{df/(df+t²)}(df/2, 1/2) / 2
    let upper = 0.5 * beta_reg(0.5 * df, 0.5, df / (df + t * t));
    let p = if t >= 0.0 { upper } else { 1.0 - upper };
    Ok(TTestResult { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let x = [1.0, 2.5, 0.3, 4.0];
        let r = welch_t_test(&x, &x).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 0.5);
    }

    #[test]
    fn swap_complements() {
        let x = [2.1, 2.0, 1.9];
        let y = [1.1, 1.0, 0.9];
        let a = welch_t_test(&x, &y).unwrap();
        let b = welch_t_test(&y, &x).unwrap();
        assert_eq!(b.p, 1.0 - a.p);
        assert!(a.p < 0.001);
        assert!((a.df - 4.0).abs() < 1e-12);
        assert!((a.t - 1.0 / (0.02f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 3.0]).is_ok());
    }
}
