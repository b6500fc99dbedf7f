use serde::{Deserialize, Serialize};

use super::monte_carlo::{monte_carlo, monte_carlo_with_target, AggregateResult};
use super::scenario::Scenario;
use crate::error::{Error, Result};

/// Ordinary least-squares line through `(xs, ys)`: `(slope, intercept)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope and intercept of `log(mean)` against `log(n)`.
pub fn rate_fit(ns: &[usize], means: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != means.len() {
        return Err(Error::DimensionMismatch {
            expected: ns.len(),
            found: means.len(),
        });
    }
    if ns.len() < 3 {
        return Err(Error::InvalidParameter("rate fit needs at least three points".into()));
    }
    if let Some(bad) = means.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs positive means, got {bad}"
        )));
    }
    if ns.contains(&0) {
        return Err(Error::InvalidParameter("sample sizes must be positive".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    Ok(least_squares_slope(&xs, &ys))
}

/// How `λ` depends on the sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaRule {
    Fixed {
        lambda: f64,
    },
    /// `λ_n = c · n^{−alpha}`
    PowerLaw {
        c: f64,
        alpha: f64,
    },
}

impl LambdaRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaRule::Fixed { lambda } if !(lambda > 0.0 && lambda.is_finite()) => Err(Error::InvalidParameter(
                format!("fixed lambda must be positive, got {lambda}"),
            )),
            LambdaRule::PowerLaw { c, alpha } if !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::InvalidParameter(format!(
                    "power law needs c > 0 and alpha in (0, 1], got c={c}, alpha={alpha}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        match *self {
            LambdaRule::Fixed { lambda } => lambda,
            LambdaRule::PowerLaw { c, alpha } => c * (n as f64).powf(-alpha),
        }
    }
}

/// Fraction of `values` at or above `eps`.
pub fn exceedance_fraction(values: &[f64], eps: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v >= eps).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSweep {
    pub rule: LambdaRule,
    pub rows: Vec<AggregateResult>,
    /// Fitted log-log slope of mean `‖f₀ − f̂_n‖²_k` against `n`; absent with
    /// fewer than three sample sizes.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Half the mean `‖f₀ − f̂_n‖_k` at the smallest `n`.
    pub epsilon: f64,
    /// Fraction of replications with `‖f₀ − f̂_n‖_k ≥ epsilon`, per row.
    pub exceedance: Vec<f64>,
}

impl RateSweep {
    /// Whether the exceedance fractions are nonincreasing in `n`.
    pub fn exceedance_nonincreasing(&self) -> bool {
        self.exceedance.windows(2).all(|w| w[1] <= w[0])
    }
}

fn check_increasing(ns: &[usize]) -> Result<()> {
    if ns.is_empty() {
        return Err(Error::EmptyInput("sample sizes"));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "sample sizes must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Monte Carlo over each `n` with `λ = rule(n)`, and the rate of
/// `‖f₀ − f̂_n‖²_k`.
pub fn rate_sweep(scenario: &Scenario, rule: LambdaRule, ns: &[usize], r: usize) -> Result<RateSweep> {
    rule.validate()?;
    check_increasing(ns)?;
    let rows = ns
        .iter()
        .map(|&n| monte_carlo(scenario, n, rule.lambda_for(n), r))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = rows
        .iter()
        .map(|row| row.metric("dist_hat_f0_sq").map_or(f64::NAN, |m| m.mean))
        .collect();
    let (slope, intercept) = match rate_fit(ns, &means) {
        Ok((s, i)) => (Some(s), Some(i)),
        Err(_) => (None, None),
    };
    let norms = |row: &AggregateResult| -> Vec<f64> { row.values("dist_hat_f0_sq").iter().map(|v| v.sqrt()).collect() };
    let first = norms(&rows[0]);
    let epsilon = 0.5 * first.iter().sum::<f64>() / first.len() as f64;
    let exceedance = rows
        .iter()
        .map(|row| exceedance_fraction(&norms(row), epsilon))
        .collect();
    Ok(RateSweep {
        rule,
        rows,
        slope,
        intercept,
        epsilon,
        exceedance,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityRow {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub lambda: f64,
    pub theta_star: f64,
    pub rows: Vec<MonotonicityRow>,
    pub aggregates: Vec<AggregateResult>,
    /// Human-readable descriptions of every flagged violation.
    pub violations: Vec<String>,
}

impl MonotonicityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Mean `ϑ̂_n` over `ns` at fixed `λ`, flagged where it decreases by more
/// than three standard errors of the difference or exceeds `ϑ*` by more
/// than three standard errors.
pub fn monotonicity_check(scenario: &Scenario, lambda: f64, ns: &[usize], r: usize) -> Result<MonotonicityReport> {
    check_increasing(ns)?;
    let target = scenario.target(lambda)?;
    let mut rows = Vec::with_capacity(ns.len());
    let mut aggregates = Vec::with_capacity(ns.len());
    for &n in ns {
        let agg = monte_carlo_with_target(scenario, &target, n, r)?;
        let m = agg.metric("theta_hat").expect("theta_hat is always reported");
        rows.push(MonotonicityRow {
            n,
            mean: m.mean,
            stderr: m.stderr,
        });
        aggregates.push(agg);
    }
    let mut violations = Vec::new();
    for w in rows.windows(2) {
        let slack = 3.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        if w[1].mean < w[0].mean - slack {
            violations.push(format!(
                "mean theta_hat drops from {} (n={}) to {} (n={}) beyond slack {}",
                w[0].mean, w[0].n, w[1].mean, w[1].n, slack
            ));
        }
    }
    for row in &rows {
        if row.mean > target.theta_star + 3.0 * row.stderr {
            violations.push(format!(
                "mean theta_hat {} at n={} exceeds theta* {} + 3 se",
                row.mean, row.n, target.theta_star
            ));
        }
    }
    Ok(MonotonicityReport {
        lambda,
        theta_star: target.theta_star,
        rows,
        aggregates,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_power_laws() {
        let ns = [10, 20, 40, 80];
        let inv: Vec<f64> = ns.iter().map(|&n| 3.0 / n as f64).collect();
        let (s, i) = rate_fit(&ns, &inv).unwrap();
        assert_abs_diff_eq!(s, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i, 3f64.ln(), epsilon = 1e-12);
        let two_fifths: Vec<f64> = ns.iter().map(|&n| 0.7 * (n as f64).powf(-0.4)).collect();
        assert_abs_diff_eq!(rate_fit(&ns, &two_fifths).unwrap().0, -0.4, epsilon = 1e-12);
    }

    #[test]
    fn rate_fit_rejects_bad_input() {
        assert!(rate_fit(&[1, 2], &[1.0, 2.0]).is_err());
        assert!(rate_fit(&[1, 2, 3], &[1.0, 0.0, 2.0]).is_err());
        assert!(rate_fit(&[1, 2, 3], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lambda_rules() {
        let p = LambdaRule::PowerLaw { c: 1.0, alpha: 0.2 };
        p.validate().unwrap();
        assert_abs_diff_eq!(p.lambda_for(32), 0.5, epsilon = 1e-15);
        assert_eq!(LambdaRule::Fixed { lambda: 0.1 }.lambda_for(7), 0.1);
        assert!(LambdaRule::PowerLaw { c: 1.0, alpha: 1.5 }.validate().is_err());
        assert!(LambdaRule::PowerLaw { c: 1.0, alpha: 0.0 }.validate().is_err());
        assert!(LambdaRule::Fixed { lambda: 0.0 }.validate().is_err());
        let parsed: LambdaRule = serde_json::from_str(r#"{"type":"power_law","c":1,"alpha":0.2}"#).unwrap();
        assert_eq!(parsed, p);
    }

    #[test]
    fn exceedance() {
        assert_eq!(exceedance_fraction(&[0.1, 0.5, 0.9, 1.0], 0.5), 0.75);
        assert_eq!(exceedance_fraction(&[], 0.5), 0.0);
    }
}
