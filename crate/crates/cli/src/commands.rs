use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rkhs_core::estimator::{fit_ridge, GpPosterior};
use rkhs_core::experiments::{
    rate_sweep, results_csv, sample_dataset, sandwich_suite, RateSweep, Scenario, ScenarioSpec, SANDWICH_LAMBDAS,
};
use rkhs_core::Dataset;
use serde::Serialize;

use crate::config::{RunConfig, MAX_FAILURE_FRACTION};
use crate::svg::{Chart, Scale};

/// Sample size of the demo replication.
pub const DEMO_N: usize = 100;
/// Regularization used by the demo.
pub const DEMO_LAMBDA: f64 = 0.1;
const CURVE_POINTS: usize = 201;
const DEFAULT_OUT: &str = "rkhs-out";

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, name, &(serde_json::to_string_pretty(value)? + "\n"))
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a RunConfig,
    c0: f64,
    f0_norm_sq: f64,
    #[serde(flatten)]
    sweep: &'a RateSweep,
}

pub fn run(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let cfg = RunConfig::load(config_path)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.outputs.clone())
        .unwrap_or_else(|| DEFAULT_OUT.into());
    prepare_dir(&dir)?;
    let scenario = Scenario::new(cfg.scenario.clone()).context("cannot prepare scenario")?;
    let sweep = rate_sweep(&scenario, cfg.lambda_rule, &cfg.ns, cfg.r)?;
    for row in &sweep.rows {
        if row.failed() as f64 > MAX_FAILURE_FRACTION * row.replications as f64 {
            let first = row.failures.first().map_or("", |f| f.message.as_str());
            bail!(
                "{} of {} replications failed at n={} (first error: {first})",
                row.failed(),
                row.replications,
                row.n
            );
        }
    }

    write(&dir, "results.csv", &results_csv(&sweep.rows)?)?;
    let report = RunReport {
        config: &cfg,
        c0: scenario.c0(),
        f0_norm_sq: scenario.f0_norm_sq(),
        sweep: &sweep,
    };
    write_json(&dir, "results.json", &report)?;

    println!("{:>8} {:>12} {:>16} {:>12}", "n", "lambda", "mean |f0-f^|^2", "stderr");
    for row in &sweep.rows {
        if let Some(m) = row.metric("dist_hat_f0_sq") {
            println!(
                "{:>8} {:>12.5e} {:>16.6e} {:>12.3e}",
                row.n, row.lambda, m.mean, m.stderr
            );
        }
    }
    match sweep.slope {
        Some(s) => println!("log-log slope: {s:.4}"),
        None => println!("log-log slope: not fitted (needs three sample sizes)"),
    }

    if cfg.emit_plots {
        write(&dir, "loglog.svg", &loglog_chart(&sweep).render())?;
        if scenario.kernel().dim() == 1 {
            let n = *cfg.ns.last().expect("validated nonempty");
            let lambda = cfg.lambda_rule.lambda_for(n);
            let data = sample_dataset(&scenario, n, 0)?;
            write(&dir, "band.svg", &band_chart(&scenario, &data, lambda)?.0.render())?;
        } else {
            eprintln!("band.svg skipped: only drawn for one-dimensional designs");
        }
    }
    println!("wrote results to {}", dir.display());
    Ok(true)
}

fn loglog_chart(sweep: &RateSweep) -> Chart {
    let mut chart = Chart::new("Mean squared RKHS error against sample size", "n", "mean ‖f₀ − f̂ₙ‖²ₖ")
        .scales(Scale::Log10, Scale::Log10);
    let pts: Vec<(f64, f64, f64)> = sweep
        .rows
        .iter()
        .filter_map(|row| row.metric("dist_hat_f0_sq").map(|m| (row.n as f64, m.mean, m.stderr)))
        .collect();
    chart.error_bars(pts.clone(), "#1f77b4");
    chart.markers(
        pts.iter().map(|p| (p.0, p.1)).collect(),
        "#1f77b4",
        4.0,
        Some("Monte Carlo mean ± se"),
    );
    if let (Some(slope), Some(intercept)) = (sweep.slope, sweep.intercept) {
        let fit = pts
            .iter()
            .map(|p| (p.0, (intercept + slope * p.0.ln()).exp()))
            .collect();
        chart.line(fit, "#d62728", true, Some("least-squares fit"));
        chart.note(&format!("fitted slope {slope:.3}"));
    }
    chart
}

/// Band plot for a one-dimensional design; also returns the fraction of
/// curve points where `|f₀ − f̂| ≤ 2√K̂`.
fn band_chart(scenario: &Scenario, data: &Dataset, lambda: f64) -> Result<(Chart, f64)> {
    let kernel = scenario.kernel();
    let gp = GpPosterior::fit(kernel, data, data.len() as f64 * lambda)?;
    let grid = scenario.spec().design.support_grid(CURVE_POINTS);
    let mut xs = Vec::with_capacity(grid.len());
    let (mut mean, mut lo, mut hi, mut truth) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut covered = 0usize;
    for x in &grid {
        let m = gp.mean(x)?;
        let sd = gp.variance(x)?.sqrt();
        let f0 = scenario.f0().evaluate(x)?;
        if (f0 - m).abs() <= 2.0 * sd {
            covered += 1;
        }
        xs.push(x[0]);
        mean.push((x[0], m));
        lo.push(m - sd);
        hi.push(m + sd);
        truth.push((x[0], f0));
    }
    let coverage = covered as f64 / grid.len() as f64;
    let mut chart = Chart::new(&format!("Ridge estimate, n = {}, λ = {lambda}", data.len()), "x", "f");
    chart.band(xs, lo, hi, "#1f77b4", Some("f̂ₙ ± √K̂"));
    chart.line(truth, "#2ca02c", true, Some("f₀"));
    chart.line(mean, "#1f77b4", false, Some("f̂ₙ"));
    let points = data.xs().iter().zip(data.fs()).map(|(x, &f)| (x[0], f)).collect();
    chart.markers(points, "#444444", 2.5, Some("data"));
    chart.note(&format!("|f₀ − f̂ₙ| ≤ 2√K̂ on {:.1}% of the grid", 100.0 * coverage));
    Ok((chart, coverage))
}

#[derive(Serialize)]
struct SandwichReport {
    seed: u64,
    count: usize,
    max_dim: usize,
    lambdas: [f64; 4],
    checks: usize,
    min_margin: f64,
    equality_margin: f64,
    max_relative_eigenvalue: f64,
    violations: usize,
}

pub fn lemma2(count: usize, max_dim: usize, seed: u64, dir: &Path) -> Result<bool> {
    if count == 0 {
        bail!("--count must be at least 1");
    }
    if max_dim == 0 {
        bail!("--max-dim must be at least 1");
    }
    prepare_dir(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = sandwich_suite(&mut rng, count, max_dim)?;
    let report = SandwichReport {
        seed,
        count,
        max_dim,
        lambdas: SANDWICH_LAMBDAS,
        checks: outcome.checks,
        min_margin: outcome.min_margin,
        equality_margin: outcome.equality_margin,
        max_relative_eigenvalue: 1.0 - outcome.min_margin,
        violations: outcome.violations.len(),
    };
    println!("matrices checked: {} ({} checks)", outcome.matrices, outcome.checks);
    println!(
        "largest 4λ·λmax((λ+K)⁻¹K(λ+K)⁻¹): {:.15}",
        report.max_relative_eigenvalue
    );
    println!("smallest margin: {:.3e}", outcome.min_margin);
    println!("equality case margin: {:.3e}", outcome.equality_margin);
    write_json(dir, "lemma2.json", &report)?;
    if outcome.ok() {
        println!("no violations");
        return Ok(true);
    }
    write_json(dir, "lemma2_violation.json", &outcome.violations)?;
    eprintln!(
        "{} violation(s); offending matrices written to {}",
        outcome.violations.len(),
        dir.join("lemma2_violation.json").display()
    );
    Ok(false)
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Serialize)]
struct DemoReport {
    seed: u64,
    n: usize,
    lambda: f64,
    pearson: f64,
    band_coverage: f64,
    scaled_weights: Vec<f64>,
    target_residuals: Vec<f64>,
}

pub fn demo(seed: u64, dir: &Path) -> Result<bool> {
    prepare_dir(dir)?;
    let scenario = Scenario::new(ScenarioSpec {
        base_seed: seed,
        ..ScenarioSpec::canonical()
    })?;
    let data = sample_dataset(&scenario, DEMO_N, 0)?;
    let fhat = fit_ridge(scenario.kernel(), &data, DEMO_LAMBDA)?;
    let target = scenario.target(DEMO_LAMBDA)?;
    // λŵᵢ = fᵢ − f̂(Xᵢ) against fᵢ − f_λ(Xᵢ).
    let fitted = fhat.evaluate_many(data.xs())?;
    let at_target = target.flambda.evaluate_many(data.xs())?;
    let scaled_weights: Vec<f64> = data.fs().iter().zip(&fitted).map(|(f, g)| f - g).collect();
    let target_residuals: Vec<f64> = data.fs().iter().zip(&at_target).map(|(f, g)| f - g).collect();
    let r = pearson(&scaled_weights, &target_residuals);

    let (band, coverage) = band_chart(&scenario, &data, DEMO_LAMBDA)?;
    write(dir, "band.svg", &band.render())?;

    let mut corr = Chart::new("Scaled ridge weights against target residuals", "fᵢ − f_λ(Xᵢ)", "λŵᵢ");
    let lim = target_residuals
        .iter()
        .chain(&scaled_weights)
        .fold(0f64, |m, v| m.max(v.abs()));
    corr.line(vec![(-lim, -lim), (lim, lim)], "#999999", true, Some("identity"));
    corr.markers(
        target_residuals
            .iter()
            .copied()
            .zip(scaled_weights.iter().copied())
            .collect(),
        "#d62728",
        3.0,
        Some("observations"),
    );
    corr.note(&format!("Pearson r = {r:.4}"));
    write(dir, "correlation.svg", &corr.render())?;

    let report = DemoReport {
        seed,
        n: DEMO_N,
        lambda: DEMO_LAMBDA,
        pearson: r,
        band_coverage: coverage,
        scaled_weights,
        target_residuals,
    };
    write_json(dir, "demo.json", &report)?;
    println!("pearson correlation: {r:.6}");
    println!("band coverage (|f0 - f^| <= 2 sqrt K^): {coverage:.4}");
    println!("wrote band.svg, correlation.svg and demo.json to {}", dir.display());
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_oracle() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&a, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-15);
        // Deviations (-1, 0, 1) and (-1, 1, 0): covariance 1 over variance 2.
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 0.5).abs() < 1e-15);
    }
}
