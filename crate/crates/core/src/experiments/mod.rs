//! Seeded Monte Carlo experiments over a scenario.
//!
//! A [`ScenarioSpec`] fixes the kernel, the design measure, the target
//! `f₀ = K w₀` and the noise law. [`Scenario`] prepares the quadrature and
//! evaluation grids once; [`Scenario::target`] solves for `f_λ`. Each
//! replication draws its data from a stream keyed by
//! `(base_seed, n, replication_index)`, so aggregates are bit-identical
//! whatever the number of worker threads.

mod monte_carlo;
mod output;
mod rates;
mod sandwich;
mod scenario;

pub use monte_carlo::{
    mean_stderr, monte_carlo, monte_carlo_with_target, run_replication, run_replications, AggregateResult, Failure,
    MetricSummary, ProbeSummary, ReplicationMetrics, BOUND_SLACK, METRICS,
};
pub use output::{results_csv, CSV_HEADER};
pub use rates::{
    exceedance_fraction, least_squares_slope, monotonicity_check, rate_fit, rate_sweep, LambdaRule, MonotonicityReport,
    MonotonicityRow, RateSweep,
};
pub use sandwich::{
    random_test_matrix, sandwich_margin, sandwich_suite, SandwichOutcome, SandwichViolation, SANDWICH_LAMBDAS,
    SANDWICH_TOL,
};
pub use scenario::{
    replication_rng, sample_dataset, stream_seed, NoiseModel, NoiseShape, Scenario, ScenarioSpec, Target,
    TargetFunction, SUP_GRID_POINTS,
};
