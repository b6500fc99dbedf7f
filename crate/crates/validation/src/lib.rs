//! Acceptance criteria for `rkhs-core`, each evaluated at its stated
//! tolerance and runtime budget.
//!
//! Criteria that aggregate over the whole run (per-sample bounds on every
//! replication, the Nyström residual on every solve) read from an [`Audit`]
//! that the other criteria feed.

use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rkhs_core::estimator::{fit_ridge, GpPosterior};
use rkhs_core::experiments::{
    least_squares_slope, monotonicity_check, monte_carlo_with_target, rate_sweep, run_replication, sandwich_suite,
    AggregateResult, LambdaRule, ReplicationMetrics, Scenario, Target,
};
use rkhs_core::fredholm::{build_grid, solve_coefficient, DesignMeasure, FredholmSolution};
use rkhs_core::{Dataset, KernelSpec};

/// Fixed regularization used where a criterion does not name one.
pub const FIXED_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(id: u32, name: &'static str, budget: Option<Duration>, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (mut pass, mut detail) = f();
    let elapsed = start.elapsed();
    if let Some(b) = budget {
        if elapsed > b {
            pass = false;
            detail.push_str(&format!("; over the {}s budget", b.as_secs()));
        }
    }
    Outcome {
        id,
        name,
        pass,
        detail,
        elapsed,
    }
}

/// Run-wide counters for the criteria that cover every replication and
/// every Nyström solve.
#[derive(Debug, Default, Clone)]
pub struct Audit {
    pub replications: usize,
    pub failed_replications: usize,
    pub ball_violations: usize,
    pub residual_bound_violations: usize,
    pub fredholm_solves: usize,
    pub max_fredholm_residual: f64,
}

impl Audit {
    pub fn replication(&mut self, m: &ReplicationMetrics) {
        self.replications += 1;
        self.ball_violations += usize::from(!m.ball_bound_ok);
        self.residual_bound_violations += usize::from(!m.residual_bound_ok);
    }

    pub fn aggregate(&mut self, agg: &AggregateResult) {
        agg.samples.iter().for_each(|m| self.replication(m));
        self.failed_replications += agg.failed();
    }

    pub fn solve(&mut self, sol: &FredholmSolution) {
        self.residual(sol.residual);
    }

    pub fn residual(&mut self, residual: f64) {
        self.fredholm_solves += 1;
        self.max_fredholm_residual = self.max_fredholm_residual.max(residual);
    }
}

fn targets(scenario: &Scenario, lambdas: &[f64], audit: &mut Audit) -> Vec<Target> {
    lambdas
        .iter()
        .map(|&l| {
            let t = scenario.target(l).expect("canonical target solves");
            audit.solve(&t.solution);
            t
        })
        .collect()
}

/// Random PSD matrices: `(λ+K)^{-1} K (λ+K)^{-1} ⪯ I/(4λ)`.
pub fn sandwich_bound() -> Outcome {
    timed(1, "sandwich Loewner bound", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        match sandwich_suite(&mut rng, 1000, 20) {
            Ok(out) => (
                out.ok() && out.equality_margin.abs() <= 1e-12,
                format!(
                    "{} checks, {} violations beyond 1e-8, min relative margin {:.3e}, scalar equality margin {:.1e}",
                    out.checks,
                    out.violations.len(),
                    out.min_margin,
                    out.equality_margin
                ),
            ),
            Err(e) => (false, format!("suite errored: {e}")),
        }
    })
}

/// Residual quadratic form equals `‖f̂_n − f̃_n‖²_k` on 200 replications.
pub fn bridge_identity(scenario: &Scenario, audit: &mut Audit) -> Outcome {
    timed(2, "bridge identity", Some(Duration::from_secs(30)), || {
        let lambdas = [1e-3, 1e-2, 1e-1, 1.0];
        let ns = [5, 10, 25, 50, 100];
        let ts = targets(scenario, &lambdas, audit);
        let mut worst: f64 = 0.0;
        let mut errors = 0;
        for i in 0..200 {
            match run_replication(scenario, &ts[(i / ns.len()) % lambdas.len()], ns[i % ns.len()], i) {
                Ok(m) => {
                    worst = worst.max(m.bridge_gap());
                    audit.replication(&m);
                }
                Err(_) => errors += 1,
            }
        }
        (
            worst <= 1e-8 && errors == 0,
            format!("200 replications, max |bridge − direct| / (1 + direct) = {worst:.2e}, {errors} errors"),
        )
    })
}

/// Monte Carlo mean of `‖f̃_n − f_λ‖²_k` against its closed form, and the
/// `n = 50` aggregate for reuse.
pub fn tilde_risk(scenario: &Scenario, audit: &mut Audit) -> (Outcome, Option<AggregateResult>) {
    let mut keep = None;
    let outcome = timed(3, "tilde risk closed form", Some(Duration::from_secs(300)), || {
        let t = &targets(scenario, &[FIXED_LAMBDA], audit)[0];
        let mut pass = true;
        let mut parts = Vec::new();
        for n in [50, 200] {
            match monte_carlo_with_target(scenario, t, n, 2000) {
                Ok(agg) => {
                    audit.aggregate(&agg);
                    let m = agg.metric("dist_tilde_flambda_sq").expect("reported");
                    let z = (m.mean - agg.theoretical_tilde_risk) / m.stderr;
                    pass &= z.abs() <= 3.0 && agg.failed() == 0;
                    parts.push(format!(
                        "n={n}: MC {:.5} ± {:.5} vs {:.5} (z = {z:+.2})",
                        m.mean, m.stderr, agg.theoretical_tilde_risk
                    ));
                    if n == 50 {
                        keep = Some(agg);
                    }
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("n={n}: {e}"));
                }
            }
        }
        (pass, format!("λ={FIXED_LAMBDA}, R=2000; {}", parts.join("; ")))
    });
    (outcome, keep)
}

/// `E f̃_n(x) = f_λ(x)` at five probe points.
pub fn tilde_unbiased(agg: Option<&AggregateResult>) -> Outcome {
    timed(4, "tilde unbiasedness at probes", None, || {
        let Some(agg) = agg else {
            return (false, "no n=50 aggregate available".into());
        };
        let zs: Vec<f64> = agg
            .probes
            .iter()
            .map(|p| (p.tilde_mean - p.flambda) / p.tilde_stderr)
            .collect();
        let pass = agg.probes.len() == 5 && zs.iter().all(|z| z.abs() <= 3.0);
        let list: Vec<String> = zs.iter().map(|z| format!("{z:+.2}")).collect();
        (
            pass,
            format!("n=50, R={}, z-scores [{}]", agg.succeeded, list.join(", ")),
        )
    })
}

/// Mean `ϑ̂_n` nondecreasing in `n` and below `ϑ*`.
pub fn objective_monotone(scenario: &Scenario, audit: &mut Audit) -> Outcome {
    timed(5, "empirical objective monotone and below population", None, || {
        match monotonicity_check(scenario, FIXED_LAMBDA, &[10, 20, 40, 80, 160], 2000) {
            Ok(rep) => {
                rep.aggregates.iter().for_each(|a| audit.aggregate(a));
                // Every row shares one target solve.
                if let Some(a) = rep.aggregates.first() {
                    audit.residual(a.fredholm_residual);
                }
                let means: Vec<String> = rep.rows.iter().map(|r| format!("{:.5}", r.mean)).collect();
                (
                    rep.ok(),
                    format!(
                        "λ={FIXED_LAMBDA}, R=2000, means [{}] vs ϑ* {:.5}; {} flags{}",
                        means.join(", "),
                        rep.theta_star,
                        rep.violations.len(),
                        rep.violations.first().map(|v| format!(": {v}")).unwrap_or_default()
                    ),
                )
            }
            Err(e) => (false, format!("errored: {e}")),
        }
    })
}

/// Log-log slope of `‖f₀ − f_λ‖_k` over `λ ∈ {1e-3, 1e-2, 1e-1, 1}`.
pub fn bias_rate(scenario: &Scenario, audit: &mut Audit) -> Outcome {
    timed(6, "bias rate in lambda", Some(Duration::from_secs(5)), || {
        let lambdas = [1e-3, 1e-2, 1e-1, 1.0];
        let ts = targets(scenario, &lambdas, audit);
        let xs: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 0.5 * t.bias_sq.ln()).collect();
        let (slope, _) = least_squares_slope(&xs, &ys);
        let bounded = ts
            .iter()
            .zip(&lambdas)
            .all(|(t, l)| t.bias_sq.sqrt() <= scenario.c0() * l * (1.0 + 1e-9));
        (
            (slope - 1.0).abs() <= 0.1,
            format!(
                "slope {slope:.3} (need 1.0 ± 0.1); ‖f₀ − f_λ‖_k ≤ C₀λ with C₀ = {:.3}: {}",
                scenario.c0(),
                if bounded { "holds" } else { "violated" }
            ),
        )
    })
}

/// Rate of `E‖f₀ − f̂_n‖²_k` under `λ_n = n^{-1/5}`.
pub fn error_rate(scenario: &Scenario, audit: &mut Audit) -> Outcome {
    timed(
        7,
        "error rate under power-law lambda",
        Some(Duration::from_secs(600)),
        || {
            let rule = LambdaRule::PowerLaw { c: 1.0, alpha: 0.2 };
            match rate_sweep(scenario, rule, &[20, 40, 80, 160, 320], 1000) {
                Ok(sweep) => {
                    sweep.rows.iter().for_each(|a| {
                        audit.aggregate(a);
                        audit.residual(a.fredholm_residual);
                    });
                    let slope = sweep.slope.unwrap_or(f64::NAN);
                    let split: Vec<String> = sweep
                        .rows
                        .iter()
                        .map(|a| {
                            let m = a.metric("dist_hat_f0_sq").expect("reported");
                            format!("n={} {:.4} (bias² {:.4})", a.n, m.mean, a.bias_sq)
                        })
                        .collect();
                    (
                        slope <= -0.3,
                        format!("R=1000, slope {slope:.3} (need ≤ −0.3); {}", split.join(", ")),
                    )
                }
                Err(e) => (false, format!("errored: {e}")),
            }
        },
    )
}

/// Ball bound and residual bound on every replication run so far.
pub fn per_sample_bounds(audit: &Audit) -> Outcome {
    timed(8, "per-sample bounds on every replication", None, || {
        (
            audit.replications > 0 && audit.ball_violations == 0 && audit.residual_bound_violations == 0,
            format!(
                "{} replications ({} failed): {} ball violations, {} residual-bound violations",
                audit.replications, audit.failed_replications, audit.ball_violations, audit.residual_bound_violations
            ),
        )
    })
}

/// GP posterior mean with `λ_gp = nλ` against the ridge fit, and `λ = 0`
/// interpolation.
pub fn gp_equivalence() -> Outcome {
    timed(9, "GP posterior mean equals ridge fit", None, || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst_gp: f64 = 0.0;
        let mut errors = 0;
        for _ in 0..100 {
            let n = rng.random_range(1..=40);
            let h = rng.random_range(0.05..1.0);
            let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
            let kernel = KernelSpec::gaussian(h, 1).expect("positive bandwidth");
            let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let fs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let data = Dataset::from_1d(&xs, &fs).expect("finite data");
            let (Ok(ridge), Ok(gp)) = (
                fit_ridge(&kernel, &data, lambda),
                GpPosterior::fit(&kernel, &data, n as f64 * lambda),
            ) else {
                errors += 1;
                continue;
            };
            for _ in 0..20 {
                let x = [rng.random_range(-0.2..1.2)];
                let a = ridge.evaluate(&x).expect("1-d point");
                let b = gp.mean(&x).expect("1-d point");
                worst_gp = worst_gp.max((a - b).abs());
            }
        }
        let mut worst_interp: f64 = 0.0;
        for _ in 0..100 {
            let n = rng.random_range(1..=9);
            let xs: Vec<f64> = (0..n)
                .map(|i| (i as f64 + rng.random_range(0.2..0.8)) / n as f64)
                .collect();
            let fs: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let data = Dataset::from_1d(&xs, &fs).expect("finite data");
            let kernel = KernelSpec::gaussian(0.25, 1).expect("positive bandwidth");
            match fit_ridge(&kernel, &data, 0.0) {
                Ok(f) => {
                    let fitted = f.evaluate_many(data.xs()).expect("1-d points");
                    let gap = fitted.iter().zip(&fs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    worst_interp = worst_interp.max(gap);
                }
                Err(_) => errors += 1,
            }
        }
        (
            worst_gp <= 1e-9 && worst_interp <= 1e-7 && errors == 0,
            format!(
                "100 datasets: max |GP mean − ridge| {worst_gp:.2e}; 100 datasets: max λ=0 interpolation gap {worst_interp:.2e}; {errors} errors"
            ),
        )
    })
}

/// Constant-kernel rank-one oracle, and the Nyström residual on every solve.
pub fn nystrom_oracle(audit: &mut Audit) -> Outcome {
    timed(10, "Nystrom oracle and residuals", None, || {
        let kernel = KernelSpec::constant(1).expect("valid");
        let mut worst: f64 = 0.0;
        for m in [8, 64, 256] {
            let grid = build_grid(&DesignMeasure::Uniform { a: 0.0, b: 1.0 }, m).expect("valid grid");
            for c in [-1.5, 0.3, 2.0] {
                for lambda in [1e-3, 0.1, 1.0, 10.0] {
                    match solve_coefficient(&kernel, &grid, &vec![c; m], lambda) {
                        Ok(sol) => {
                            audit.solve(&sol);
                            let want = c / (lambda + 1.0);
                            let w = DVector::from_column_slice(&sol.w_values);
                            let f = DVector::from_column_slice(&sol.flambda_values);
                            worst = worst.max(w.add_scalar(-want).amax()).max(f.add_scalar(-want).amax());
                        }
                        Err(_) => worst = f64::INFINITY,
                    }
                }
            }
        }
        (
            worst <= 1e-10 && audit.max_fredholm_residual <= 1e-9,
            format!(
                "max |w_λ − f₀/(λ+1)| {worst:.2e}; max residual over {} solves {:.2e}",
                audit.fredholm_solves, audit.max_fredholm_residual
            ),
        )
    })
}

/// Runs every criterion, printing each line as it completes. Returns the
/// outcomes in criterion order.
pub fn run_all(mut emit: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let scenario = Scenario::canonical().expect("canonical scenario builds");
    let mut audit = Audit::default();
    let mut out = Vec::with_capacity(10);
    let mut push = |o: Outcome, out: &mut Vec<Outcome>| {
        emit(&o);
        out.push(o);
    };
    push(sandwich_bound(), &mut out);
    push(bridge_identity(&scenario, &mut audit), &mut out);
    let (c3, agg50) = tilde_risk(&scenario, &mut audit);
    push(c3, &mut out);
    push(tilde_unbiased(agg50.as_ref()), &mut out);
    push(objective_monotone(&scenario, &mut audit), &mut out);
    push(bias_rate(&scenario, &mut audit), &mut out);
    push(error_rate(&scenario, &mut audit), &mut out);
    push(gp_equivalence(), &mut out);
    push(nystrom_oracle(&mut audit), &mut out);
    push(per_sample_bounds(&audit), &mut out);
    out.sort_by_key(|o| o.id);
    out
}
