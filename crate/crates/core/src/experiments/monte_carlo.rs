use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{Scenario, Target};
use crate::auxiliary::{bridge_distance_sq_with, fit_auxiliary_with};
use crate::error::{Error, Result};
use crate::estimator::{clamp_quadratic, ridge_weights};
use crate::kernels::{cross_gram, gram_unchecked};
use crate::Point;

/// Relative slack on the two deterministic per-sample bounds; covers
/// floating-point roundoff only.
pub const BOUND_SLACK: f64 = 1e-9;

/// Everything measured on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub n: usize,
    pub lambda: f64,
    pub replication_index: usize,
    /// `‖f̂_n − f_λ‖²_k`
    pub dist_hat_flambda_sq: f64,
    /// `‖f̃_n − f_λ‖²_k`
    pub dist_tilde_flambda_sq: f64,
    /// `‖f̂_n − f̃_n‖²_k` from the coefficients.
    pub dist_hat_tilde_sq: f64,
    /// `‖f̂_n − f̃_n‖²_k` from the residual quadratic form.
    pub bridge_sq: f64,
    /// `r̃ᵀ r̃ / (4 λ n)`.
    pub residual_bound: f64,
    /// `‖f₀ − f̂_n‖²_k`
    pub dist_hat_f0_sq: f64,
    /// `ϑ̂_n`, the empirical objective at its minimizer.
    pub theta_hat: f64,
    /// `max |f̂_n − f_λ|` over the sup-norm grid.
    pub sup_gap_hat_flambda: f64,
    /// `C_k ‖f̂_n − f_λ‖_k`.
    pub sup_certificate: f64,
    /// `λ ‖f̂_n‖²_k ≤ (1/n) Σ f_i²`.
    pub ball_bound_ok: bool,
    /// `‖f̂_n − f̃_n‖²_k ≤ r̃ᵀ r̃ / (4 λ n)`.
    pub residual_bound_ok: bool,
    pub hat_probes: Vec<f64>,
    pub tilde_probes: Vec<f64>,
}

fn quad(value: f64, l1: f64) -> Result<f64> {
    clamp_quadratic(value, l1 * l1)
}

fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Fits `f̂_n` and `f̃_n` on replication `replication_index` of size `n` and
/// measures them against the target.
pub fn run_replication(
    scenario: &Scenario,
    target: &Target,
    n: usize,
    replication_index: usize,
) -> Result<ReplicationMetrics> {
    let lambda = target.lambda();
    let kernel = scenario.kernel();
    let (data, cross) = scenario.draw(n, replication_index)?;
    let nf = n as f64;
    let k = gram_unchecked(kernel, data.xs());

    let a = ridge_weights(&k, data.fs(), lambda)? / nf;
    let ka = &k * &a;
    let hat_norm_sq = quad(a.dot(&ka), l1(a.as_slice()))?;

    let c_lambda = DVector::from_column_slice(target.flambda.coeffs());
    let c_zero = DVector::from_column_slice(scenario.f0().coeffs());
    let flambda_at_x = &cross * &c_lambda;
    let f0_at_x = &cross * &c_zero;

    let aux = fit_auxiliary_with(kernel, &data, &k, flambda_at_x.as_slice(), lambda)?;
    let at = DVector::from_iterator(n, aux.tilde_w.iter().map(|w| w / nf));
    let kat = &k * &at;

    let scale_lambda = l1(target.flambda.coeffs());
    let dist_hat_flambda_sq = quad(
        hat_norm_sq - 2.0 * a.dot(&flambda_at_x) + target.flambda_norm_sq,
        l1(a.as_slice()) + scale_lambda,
    )?;
    let dist_tilde_flambda_sq = quad(
        at.dot(&kat) - 2.0 * at.dot(&flambda_at_x) + target.flambda_norm_sq,
        l1(at.as_slice()) + scale_lambda,
    )?;
    let dist_hat_f0_sq = quad(
        hat_norm_sq - 2.0 * a.dot(&f0_at_x) + scenario.f0_norm_sq(),
        l1(a.as_slice()) + l1(scenario.f0().coeffs()),
    )?;
    let diff = &a - &at;
    let dist_hat_tilde_sq = quad(diff.dot(&(&k * &diff)), l1(diff.as_slice()))?;
    let bridge_sq = bridge_distance_sq_with(&k, &aux.residuals, lambda)?;
    let residual_bound = aux.residual_bound();

    let mse = data
        .fs()
        .iter()
        .zip(ka.iter())
        .map(|(f, v)| (f - v).powi(2))
        .sum::<f64>()
        / nf;
    let theta_hat = mse + lambda * hat_norm_sq;
    let mean_sq = data.mean_square();
    let ball_bound_ok = lambda * hat_norm_sq <= mean_sq * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE;
    let residual_bound_ok = dist_hat_tilde_sq <= residual_bound * (1.0 + BOUND_SLACK) + f64::MIN_POSITIVE;

    let hat_sup = cross_gram(kernel, scenario.sup_grid(), data.xs())? * &a;
    let sup_gap_hat_flambda = hat_sup
        .iter()
        .zip(&target.flambda_sup)
        .map(|(h, f)| (h - f).abs())
        .fold(0.0, f64::max);
    let sup_certificate = kernel.sup_diag_sqrt() * dist_hat_flambda_sq.sqrt();

    let probe_cross = cross_gram(kernel, scenario.probes(), data.xs())?;
    let hat_probes = (&probe_cross * &a).iter().copied().collect();
    let tilde_probes = (&probe_cross * &at).iter().copied().collect();

    Ok(ReplicationMetrics {
        n,
        lambda,
        replication_index,
        dist_hat_flambda_sq,
        dist_tilde_flambda_sq,
        dist_hat_tilde_sq,
        bridge_sq,
        residual_bound,
        dist_hat_f0_sq,
        theta_hat,
        sup_gap_hat_flambda,
        sup_certificate,
        ball_bound_ok,
        residual_bound_ok,
        hat_probes,
        tilde_probes,
    })
}

/// Replications `0..r`, in index order. Runs on the current rayon pool; the
/// output does not depend on how many workers it has.
pub fn run_replications(scenario: &Scenario, target: &Target, n: usize, r: usize) -> Vec<Result<ReplicationMetrics>> {
    (0..r)
        .into_par_iter()
        .map(|i| run_replication(scenario, target, n, i))
        .collect()
}

/// Names of the scalar metrics, in reporting order.
pub const METRICS: [&str; 6] = [
    "dist_hat_flambda_sq",
    "dist_tilde_flambda_sq",
    "dist_hat_tilde_sq",
    "dist_hat_f0_sq",
    "theta_hat",
    "sup_gap_hat_flambda",
];

impl ReplicationMetrics {
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "dist_hat_flambda_sq" => self.dist_hat_flambda_sq,
            "dist_tilde_flambda_sq" => self.dist_tilde_flambda_sq,
            "dist_hat_tilde_sq" => self.dist_hat_tilde_sq,
            "dist_hat_f0_sq" => self.dist_hat_f0_sq,
            "theta_hat" => self.theta_hat,
            "sup_gap_hat_flambda" => self.sup_gap_hat_flambda,
            _ => return None,
        })
    }

    /// `|bridge − direct| / (1 + direct)`.
    pub fn bridge_gap(&self) -> f64 {
        (self.bridge_sq - self.dist_hat_tilde_sq).abs() / (1.0 + self.dist_hat_tilde_sq)
    }
}

/// Sample mean and `sd / √count` in index order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    pub stderr: f64,
    /// Closed-form value the mean is compared against, where one exists.
    pub theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub x: Point,
    pub flambda: f64,
    pub tilde_mean: f64,
    pub tilde_stderr: f64,
    /// Sample variance of `f̃_n(x)` across replications.
    pub tilde_var: f64,
    pub hat_mean: f64,
    pub hat_stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Failure {
    pub replication_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateResult {
    pub n: usize,
    pub lambda: f64,
    /// Replications requested.
    pub replications: usize,
    pub succeeded: usize,
    pub failures: Vec<Failure>,
    pub metrics: Vec<MetricSummary>,
    pub probes: Vec<ProbeSummary>,
    pub theoretical_tilde_risk: f64,
    pub c1: f64,
    pub theta_star: f64,
    /// `‖f₀ − f_λ‖²_k`.
    pub bias_sq: f64,
    /// `max |f₀ − f_λ − λ w_λ|` at the quadrature nodes.
    pub fredholm_residual: f64,
    pub ball_violations: usize,
    pub residual_bound_violations: usize,
    /// Replications whose grid sup gap exceeds the kernel-norm certificate.
    pub sup_certificate_violations: usize,
    pub max_bridge_gap: f64,
    #[serde(skip)]
    pub samples: Vec<ReplicationMetrics>,
}

impl AggregateResult {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn failed(&self) -> usize {
        self.failures.len()
    }

    /// Per-replication values of one metric, in index order.
    pub fn values(&self, name: &str) -> Vec<f64> {
        self.samples.iter().filter_map(|s| s.metric(name)).collect()
    }
}

/// `r` replications at sample size `n` for the given target.
pub fn monte_carlo_with_target(scenario: &Scenario, target: &Target, n: usize, r: usize) -> Result<AggregateResult> {
    if r < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two replications, got {r}"
        )));
    }
    let mut samples = Vec::with_capacity(r);
    let mut failures = Vec::new();
    for (i, res) in run_replications(scenario, target, n, r).into_iter().enumerate() {
        match res {
            Ok(m) => samples.push(m),
            Err(e) => failures.push(Failure {
                replication_index: i,
                message: e.to_string(),
            }),
        }
    }
    if samples.is_empty() {
        return Err(Error::AllReplicationsFailed(r));
    }
    let risk = scenario.tilde_risk(target, n)?;
    let metrics = METRICS
        .iter()
        .map(|&name| {
            let values: Vec<f64> = samples.iter().filter_map(|s| s.metric(name)).collect();
            let (mean, stderr) = mean_stderr(&values);
            let theory = match name {
                "dist_tilde_flambda_sq" => Some(risk.value),
                "theta_hat" => Some(target.theta_star),
                _ => None,
            };
            MetricSummary {
                name: name.to_string(),
                mean,
                stderr,
                theory,
            }
        })
        .collect();
    let probes = scenario
        .probes()
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let tilde: Vec<f64> = samples.iter().map(|s| s.tilde_probes[j]).collect();
            let hat: Vec<f64> = samples.iter().map(|s| s.hat_probes[j]).collect();
            let (tilde_mean, tilde_stderr) = mean_stderr(&tilde);
            let (hat_mean, hat_stderr) = mean_stderr(&hat);
            ProbeSummary {
                x: x.clone(),
                flambda: target.flambda_probes[j],
                tilde_mean,
                tilde_stderr,
                tilde_var: tilde_stderr * tilde_stderr * tilde.len() as f64,
                hat_mean,
                hat_stderr,
            }
        })
        .collect();
    Ok(AggregateResult {
        n,
        lambda: target.lambda(),
        replications: r,
        succeeded: samples.len(),
        failures,
        metrics,
        probes,
        theoretical_tilde_risk: risk.value,
        c1: risk.c1,
        theta_star: target.theta_star,
        bias_sq: target.bias_sq,
        fredholm_residual: target.solution.residual,
        ball_violations: samples.iter().filter(|s| !s.ball_bound_ok).count(),
        residual_bound_violations: samples.iter().filter(|s| !s.residual_bound_ok).count(),
        sup_certificate_violations: samples
            .iter()
            .filter(|s| s.sup_gap_hat_flambda > s.sup_certificate * (1.0 + BOUND_SLACK) + 1e-12)
            .count(),
        max_bridge_gap: samples.iter().map(|s| s.bridge_gap()).fold(0.0, f64::max),
        samples,
    })
}

/// `r` replications at sample size `n` and regularization `λ`, with the
/// theoretical tilde risk and `ϑ*` attached.
pub fn monte_carlo(scenario: &Scenario, n: usize, lambda: f64, r: usize) -> Result<AggregateResult> {
    let target = scenario.target(lambda)?;
    monte_carlo_with_target(scenario, &target, n, r)
}
