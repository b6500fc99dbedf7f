use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{theoretical_tilde_risk, TildeRisk};
use crate::error::{Error, Result};
use crate::estimator::{rkhs_dist_sq, rkhs_norm_sq, Dataset, KernelExpansion};
use crate::fredholm::{
    build_grid, continuous_objective, f0_in_range, flambda_expansion, operator_expansion, solve_coefficient,
    DesignMeasure, FredholmSolution, QuadratureGrid,
};
use crate::kernels::{cross_gram, KernelSpec};
use crate::Point;

/// Points in the sup-norm grid over the design support.
pub const SUP_GRID_POINTS: usize = 512;

const MIN_GRID_M: usize = 8;

/// Coefficient function `w₀`; the regression target is `f₀ = K w₀`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFunction {
    /// `Π_k sin(2π x_k)`
    Sin2pi,
    /// `10 Σ_k x_k (x_k − 1/2)(x_k − 1)`
    Poly3,
    Zero,
}

impl TargetFunction {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TargetFunction::Sin2pi => x.iter().map(|t| (2.0 * PI * t).sin()).product(),
            TargetFunction::Poly3 => 10.0 * x.iter().map(|t| t * (t - 0.5) * (t - 1.0)).sum::<f64>(),
            TargetFunction::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// `σ (1/2 + |x₁|)`
    Linear,
    /// `σ (1 + sin(2π x₁) / 2)`
    Periodic,
}

/// Conditional law of `f − f₀(x)` given `x`: centered normal with standard
/// deviation `σ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Homoscedastic { sigma: f64 },
    Heteroscedastic { sigma: f64, shape: NoiseShape },
}

impl NoiseModel {
    pub fn sigma(&self, x: &[f64]) -> f64 {
        match *self {
            NoiseModel::Homoscedastic { sigma } => sigma,
            NoiseModel::Heteroscedastic { sigma, shape } => {
                let t = x.first().copied().unwrap_or(0.0);
                match shape {
                    NoiseShape::Linear => sigma * (0.5 + t.abs()),
                    NoiseShape::Periodic => sigma * (1.0 + 0.5 * (2.0 * PI * t).sin()),
                }
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Homoscedastic { sigma } | NoiseModel::Heteroscedastic { sigma, .. } => sigma,
        }
    }
}

/// A data-generating law together with the kernel and grid resolution used
/// to study it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub kernel: KernelSpec,
    pub design: DesignMeasure,
    pub w0: TargetFunction,
    pub noise: NoiseModel,
    #[serde(default = "default_grid_m")]
    pub grid_m: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_grid_m() -> usize {
    256
}

impl ScenarioSpec {
    /// Gaussian kernel `h = 0.25` on `Uniform[0, 1]`, `w₀ = sin 2πx`,
    /// homoscedastic `σ = 0.2`, 256 quadrature nodes.
    pub fn canonical() -> Self {
        Self {
            kernel: KernelSpec::gaussian(0.25, 1).expect("valid bandwidth"),
            design: DesignMeasure::Uniform { a: 0.0, b: 1.0 },
            w0: TargetFunction::Sin2pi,
            noise: NoiseModel::Homoscedastic { sigma: 0.2 },
            grid_m: 256,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.kernel.dim() != self.design.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.kernel.dim(),
                found: self.design.dim(),
            });
        }
        let s = self.noise.scale();
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise scale must be nonnegative, got {s}"
            )));
        }
        if self.grid_m < MIN_GRID_M {
            return Err(Error::InvalidParameter(format!(
                "grid_m must be at least {MIN_GRID_M}, got {}",
                self.grid_m
            )));
        }
        Ok(())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the random stream for one replication. The regularization
/// parameter is deliberately not part of it, so sweeps over `λ` at fixed
/// `n` reuse the same samples.
pub fn stream_seed(base_seed: u64, n: usize, replication_index: usize) -> u64 {
    let s = splitmix64(base_seed);
    let s = splitmix64(s ^ n as u64);
    splitmix64(s ^ replication_index as u64)
}

pub fn replication_rng(base_seed: u64, n: usize, replication_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base_seed, n, replication_index))
}

/// A scenario with its quadrature, target and evaluation points prepared.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: ScenarioSpec,
    grid: QuadratureGrid,
    f0: KernelExpansion,
    f0_values: Vec<f64>,
    f0_norm_sq: f64,
    c0: f64,
    condvar_values: Vec<f64>,
    irreducible: f64,
    probes: Vec<Point>,
    sup_grid: Vec<Point>,
    sup_cross: DMatrix<f64>,
    probe_cross: DMatrix<f64>,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let grid = build_grid(&spec.design, spec.grid_m)?;
        let w0: Vec<f64> = grid.nodes().iter().map(|x| spec.w0.eval(x)).collect();
        let (f0_values, c0) = f0_in_range(&spec.kernel, &grid, &w0)?;
        let f0 = operator_expansion(&spec.kernel, &grid, &w0)?;
        let f0_norm_sq = rkhs_norm_sq(&f0)?;
        let condvar_values: Vec<f64> = grid.nodes().iter().map(|x| spec.noise.sigma(x).powi(2)).collect();
        let irreducible = match spec.noise {
            NoiseModel::Homoscedastic { sigma } => sigma * sigma,
            NoiseModel::Heteroscedastic { .. } => grid.integrate(&condvar_values),
        };
        let probes = spec.design.probes();
        let sup_grid = spec.design.support_grid(SUP_GRID_POINTS);
        let sup_cross = cross_gram(&spec.kernel, &sup_grid, grid.nodes())?;
        let probe_cross = cross_gram(&spec.kernel, &probes, grid.nodes())?;
        Ok(Self {
            spec,
            grid,
            f0,
            f0_values,
            f0_norm_sq,
            c0,
            condvar_values,
            irreducible,
            probes,
            sup_grid,
            sup_cross,
            probe_cross,
        })
    }

    pub fn canonical() -> Result<Self> {
        Self::new(ScenarioSpec::canonical())
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.spec.kernel
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// `f₀ = K w₀` as a kernel expansion over the quadrature nodes.
    pub fn f0(&self) -> &KernelExpansion {
        &self.f0
    }

    pub fn f0_norm_sq(&self) -> f64 {
        self.f0_norm_sq
    }

    /// `‖w₀‖_k`, the constant in `‖f₀ − f_λ‖_k ≤ C₀ λ`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `E var(f | X)`.
    pub fn irreducible(&self) -> f64 {
        self.irreducible
    }

    pub fn probes(&self) -> &[Point] {
        &self.probes
    }

    pub fn sup_grid(&self) -> &[Point] {
        &self.sup_grid
    }

    /// Solves for `f_λ` and everything derived from it.
    pub fn target(&self, lambda: f64) -> Result<Target> {
        let solution = solve_coefficient(&self.spec.kernel, &self.grid, &self.f0_values, lambda)?;
        let flambda = flambda_expansion(&solution);
        let flambda_norm_sq = rkhs_norm_sq(&flambda)?;
        let bias_sq = rkhs_dist_sq(&self.f0, &flambda)?;
        let coeffs = nalgebra::DVector::from_column_slice(flambda.coeffs());
        let flambda_sup = (&self.sup_cross * &coeffs).iter().copied().collect();
        let flambda_probes = (&self.probe_cross * &coeffs).iter().copied().collect();
        let theta_star = continuous_objective(&solution, self.irreducible);
        Ok(Target {
            solution,
            flambda,
            flambda_norm_sq,
            bias_sq,
            flambda_sup,
            flambda_probes,
            theta_star,
        })
    }

    /// Theoretical `E‖f̃_n − f_λ‖²_k` at sample size `n`.
    pub fn tilde_risk(&self, target: &Target, n: usize) -> Result<TildeRisk> {
        theoretical_tilde_risk(&self.spec.kernel, &target.solution, &self.condvar_values, n)
    }

    /// One dataset and the `n × m` kernel matrix between the sample and the
    /// quadrature nodes, from which `f₀(X)` was computed.
    pub(crate) fn draw(&self, n: usize, replication_index: usize) -> Result<(Dataset, DMatrix<f64>)> {
        if n == 0 {
            return Err(Error::EmptyInput("dataset needs at least one observation"));
        }
        let mut rng = replication_rng(self.spec.base_seed, n, replication_index);
        let mut xs = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.spec.design.sample(&mut rng)?;
            let z: f64 = rng.sample(StandardNormal);
            noise.push(self.spec.noise.sigma(&x) * z);
            xs.push(x);
        }
        let cross = cross_gram(&self.spec.kernel, &xs, self.grid.nodes())?;
        let f0_at_x = &cross * nalgebra::DVector::from_column_slice(self.f0.coeffs());
        let fs = (0..n).map(|i| f0_at_x[i] + noise[i]).collect();
        Ok((Dataset::new(xs, fs)?, cross))
    }
}

/// The deterministic target `f_λ` of a scenario at one `λ`.
#[derive(Debug, Clone)]
pub struct Target {
    pub solution: FredholmSolution,
    pub flambda: KernelExpansion,
    pub flambda_norm_sq: f64,
    /// `‖f₀ − f_λ‖²_k`.
    pub bias_sq: f64,
    /// `f_λ` on the scenario's sup-norm grid.
    pub flambda_sup: Vec<f64>,
    /// `f_λ` at the scenario's probe points.
    pub flambda_probes: Vec<f64>,
    /// `ϑ*`, the population objective at `f_λ`.
    pub theta_star: f64,
}

impl Target {
    pub fn lambda(&self) -> f64 {
        self.solution.lambda
    }
}

/// Draws `(X_i, f_i)`, `i = 1..n`, i.i.d. from the scenario. The stream is
/// fixed by `(base_seed, n, replication_index)`.
pub fn sample_dataset(scenario: &Scenario, n: usize, replication_index: usize) -> Result<Dataset> {
    scenario.draw(n, replication_index).map(|(d, _)| d)
}
