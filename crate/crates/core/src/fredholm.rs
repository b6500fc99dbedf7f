//! The continuous regularized problem and its Nyström discretization.
//!
//! With the integral operator `(Kw)(x) = ∫ k(x,y) w(y) P(dy)` the target
//! `f_λ = K w_λ` is obtained from the second-kind equation `(λ + K) w_λ = f₀`.
//! Replacing `P` by a probability quadrature `Σ_j ω_j δ_{y_j}` turns the
//! equation into the linear system `(λ I + G W) w = f₀` at the nodes, where
//! `G` is the Gram matrix of the nodes and `W = diag(ω)`. The off-grid
//! extension of `f_λ` is the kernel expansion with coefficients `ω_j w_j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{rkhs_norm_sq, KernelExpansion};
use crate::kernels::{gram_unchecked, KernelSpec};
use crate::linalg::{solve_spd_vec, sym_eig, SpdSolveOptions};
use crate::Point;

/// Largest accepted `max_i |f₀ − f_λ − λ w|`, relative to `max(1, ‖f₀‖_∞)`.
pub const FREDHOLM_RESIDUAL_TOL: f64 = 1e-6;

/// Eigenvalues below this fraction of the largest are dropped when
/// estimating `‖w₀‖_k` through the discrete pseudo-inverse.
const RANGE_NORM_CUTOFF: f64 = 1e-13;

const MAX_REJECTIONS: usize = 100_000;

/// The marginal law `P` of the sample locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignMeasure {
    Uniform {
        a: f64,
        b: f64,
    },
    /// Product of uniforms on a box; one or two dimensions.
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    TruncatedGaussian {
        mean: f64,
        std: f64,
        a: f64,
        b: f64,
    },
    Dirac {
        x0: Vec<f64>,
    },
}

impl DesignMeasure {
    pub fn dim(&self) -> usize {
        match self {
            DesignMeasure::Uniform { .. } | DesignMeasure::TruncatedGaussian { .. } => 1,
            DesignMeasure::UniformBox { lower, .. } => lower.len(),
            DesignMeasure::Dirac { x0 } => x0.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::UnsupportedMeasure(msg));
        match self {
            DesignMeasure::Uniform { a, b } if !(a < b && a.is_finite() && b.is_finite()) => {
                bad(format!("uniform needs finite a < b, got [{a}, {b}]"))
            }
            DesignMeasure::TruncatedGaussian { mean, std, a, b } => {
                if !(a < b && a.is_finite() && b.is_finite()) {
                    bad(format!("truncated gaussian needs finite a < b, got [{a}, {b}]"))
                } else if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    bad(format!("truncated gaussian needs std > 0, got {std}"))
                } else {
                    Ok(())
                }
            }
            DesignMeasure::UniformBox { lower, upper } => {
                if lower.len() != upper.len() || lower.is_empty() || lower.len() > 2 {
                    bad(format!(
                        "uniform box supports 1 or 2 dimensions, got {} / {}",
                        lower.len(),
                        upper.len()
                    ))
                } else if lower
                    .iter()
                    .zip(upper)
                    .any(|(l, u)| !(l < u && l.is_finite() && u.is_finite()))
                {
                    bad("uniform box needs finite lower < upper on every axis".into())
                } else {
                    Ok(())
                }
            }
            DesignMeasure::Dirac { x0 } if x0.is_empty() => bad("dirac needs a point".into()),
            _ => Ok(()),
        }
    }

    /// One draw from the measure.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        match self {
            DesignMeasure::Uniform { a, b } => Ok(vec![a + (b - a) * rng.random::<f64>()]),
            DesignMeasure::UniformBox { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>())
                .collect()),
            DesignMeasure::TruncatedGaussian { mean, std, a, b } => {
                for _ in 0..MAX_REJECTIONS {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = mean + std * z;
                    if x >= *a && x <= *b {
                        return Ok(vec![x]);
                    }
                }
                Err(Error::UnsupportedMeasure(
                    "truncated gaussian has negligible mass on [a, b]".into(),
                ))
            }
            DesignMeasure::Dirac { x0 } => Ok(x0.clone()),
        }
    }

    /// Bounding interval of each axis of the support.
    fn axes(&self) -> Vec<(f64, f64)> {
        match self {
            DesignMeasure::Uniform { a, b } | DesignMeasure::TruncatedGaussian { a, b, .. } => vec![(*a, *b)],
            DesignMeasure::UniformBox { lower, upper } => lower.iter().copied().zip(upper.iter().copied()).collect(),
            DesignMeasure::Dirac { x0 } => x0.iter().map(|&x| (x, x)).collect(),
        }
    }

    /// About `count` equispaced points covering the support (endpoints
    /// included); a single point for a Dirac measure.
    pub fn support_grid(&self, count: usize) -> Vec<Point> {
        if let DesignMeasure::Dirac { x0 } = self {
            return vec![x0.clone()];
        }
        let axes = self.axes();
        let lin = |(lo, hi): (f64, f64), k: usize| -> Vec<f64> {
            if k <= 1 {
                return vec![0.5 * (lo + hi)];
            }
            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
        };
        match axes.len() {
            1 => lin(axes[0], count).into_iter().map(|x| vec![x]).collect(),
            _ => {
                let kx = (count as f64).sqrt().floor().max(1.0) as usize;
                let ky = count.div_ceil(kx);
                let (xs, ys) = (lin(axes[0], kx), lin(axes[1], ky));
                xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect()
            }
        }
    }

    /// Five interior probe points along the diagonal of the support.
    pub fn probes(&self) -> Vec<Point> {
        if let DesignMeasure::Dirac { x0 } = self {
            return vec![x0.clone()];
        }
        let axes = self.axes();
        [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|t| axes.iter().map(|(lo, hi)| lo + (hi - lo) * t).collect())
            .collect()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            if m == 1 {
                dp = 1.0;
            }
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Probability quadrature approximating `∫ · dP`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<Point>,
    weights: Vec<f64>,
    density_values: Option<Vec<f64>>,
}

impl QuadratureGrid {
    pub fn new(nodes: Vec<Point>, weights: Vec<f64>, density_values: Option<Vec<f64>>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("quadrature grid needs nodes"));
        }
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: weights.len(),
            });
        }
        if let Some(p) = &density_values {
            if p.len() != nodes.len() {
                return Err(Error::DimensionMismatch {
                    expected: nodes.len(),
                    found: p.len(),
                });
            }
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "quadrature weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            nodes,
            weights,
            density_values,
        })
    }

    /// Density form: Lebesgue quadrature weights times `p(node)`, renormalized
    /// to a probability.
    pub fn from_density(nodes: Vec<Point>, lebesgue_weights: &[f64], density: Vec<f64>) -> Result<Self> {
        let raw: Vec<f64> = lebesgue_weights.iter().zip(&density).map(|(w, p)| w * p).collect();
        let total: f64 = raw.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::InvalidParameter("density has no mass on the grid".into()));
        }
        let weights = raw.iter().map(|w| w / total).collect();
        // Renormalize the density by the same factor it was integrated to.
        let density = density.iter().map(|p| p / total).collect();
        Self::new(nodes, weights, Some(density))
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density_values(&self) -> Option<&[f64]> {
        self.density_values.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ ω_j g(y_j)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Quadrature for the design measure with `m` nodes (per axis count chosen
/// so a box grid has at least `m` nodes; a Dirac measure has exactly one).
pub fn build_grid(measure: &DesignMeasure, m: usize) -> Result<QuadratureGrid> {
    if m < 1 {
        return Err(Error::InvalidParameter("grid needs at least one node".into()));
    }
    measure.validate()?;
    match measure {
        DesignMeasure::Dirac { x0 } => QuadratureGrid::new(vec![x0.clone()], vec![1.0], None),
        DesignMeasure::Uniform { a, b } => {
            let (t, w) = gauss_legendre(m);
            let nodes = t.iter().map(|t| vec![a + (b - a) * (t + 1.0) / 2.0]).collect();
            QuadratureGrid::new(nodes, normalized(w), Some(vec![1.0 / (b - a); m]))
        }
        DesignMeasure::UniformBox { lower, upper } => {
            let per_axis = match lower.len() {
                1 => m,
                _ => (m as f64).sqrt().ceil() as usize,
            };
            let (t, w) = gauss_legendre(per_axis);
            let axis_nodes = |k: usize| -> Vec<f64> {
                t.iter()
                    .map(|t| lower[k] + (upper[k] - lower[k]) * (t + 1.0) / 2.0)
                    .collect()
            };
            let volume: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).product();
            let (nodes, weights): (Vec<Point>, Vec<f64>) = if lower.len() == 1 {
                (axis_nodes(0).into_iter().map(|x| vec![x]).collect(), w.clone())
            } else {
                let (x0, x1) = (axis_nodes(0), axis_nodes(1));
                let mut nodes = Vec::with_capacity(per_axis * per_axis);
                let mut weights = Vec::with_capacity(per_axis * per_axis);
                for i in 0..per_axis {
                    for j in 0..per_axis {
                        nodes.push(vec![x0[i], x1[j]]);
                        weights.push(w[i] * w[j]);
                    }
                }
                (nodes, weights)
            };
            let count = nodes.len();
            QuadratureGrid::new(nodes, normalized(weights), Some(vec![1.0 / volume; count]))
        }
        DesignMeasure::TruncatedGaussian { mean, std, a, b } => {
            let (t, w) = gauss_legendre(m);
            let xs: Vec<f64> = t.iter().map(|t| a + (b - a) * (t + 1.0) / 2.0).collect();
            let lebesgue: Vec<f64> = w.iter().map(|w| w * (b - a) / 2.0).collect();
            let phi: Vec<f64> = xs
                .iter()
                .map(|x| (-0.5 * ((x - mean) / std).powi(2)).exp() / (std * (2.0 * PI).sqrt()))
                .collect();
            QuadratureGrid::from_density(xs.into_iter().map(|x| vec![x]).collect(), &lebesgue, phi)
        }
    }
}

/// Nyström solution of `(λ + K) w_λ = f₀` at the grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmSolution {
    pub kernel: KernelSpec,
    pub grid: QuadratureGrid,
    pub lambda: f64,
    pub w_values: Vec<f64>,
    pub f0_values: Vec<f64>,
    pub flambda_values: Vec<f64>,
    /// `max_i |f₀ − f_λ − λ w_λ|` at the nodes.
    pub residual: f64,
}

impl FredholmSolution {
    /// `⟨w_λ, K w_λ⟩` in `L²(P)`, equal to `‖f_λ‖²_k`.
    pub fn w_k_w(&self) -> f64 {
        let prod: Vec<f64> = self
            .w_values
            .iter()
            .zip(&self.flambda_values)
            .map(|(w, f)| w * f)
            .collect();
        self.grid.integrate(&prod)
    }

    /// `‖w_λ‖²` in `L²(P)`.
    pub fn w_l2_sq(&self) -> f64 {
        let sq: Vec<f64> = self.w_values.iter().map(|w| w * w).collect();
        self.grid.integrate(&sq)
    }
}

/// Solves the discretized second-kind equation through the symmetric form
/// `(λ + D G D) D w = D f₀` with `D = W^{1/2}`.
pub fn solve_coefficient(
    kernel: &KernelSpec,
    grid: &QuadratureGrid,
    f0_values: &[f64],
    lambda: f64,
) -> Result<FredholmSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let m = grid.len();
    if f0_values.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: f0_values.len(),
        });
    }
    kernel.check_points(grid.nodes())?;
    let g = gram_unchecked(kernel, grid.nodes());
    let d: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let mut a = DMatrix::from_fn(m, m, |i, j| d[i] * g[(i, j)] * d[j]);
    for i in 0..m {
        a[(i, i)] += lambda;
    }
    let rhs = DVector::from_iterator(m, (0..m).map(|i| d[i] * f0_values[i]));
    let y = solve_spd_vec(&a, &rhs, &SpdSolveOptions::default())?;
    let w_values: Vec<f64> = (0..m).map(|i| y[i] / d[i]).collect();
    let ww = DVector::from_iterator(m, (0..m).map(|i| grid.weights()[i] * w_values[i]));
    let flambda: Vec<f64> = (&g * ww).iter().copied().collect();
    let residual = (0..m)
        .map(|i| (f0_values[i] - flambda[i] - lambda * w_values[i]).abs())
        .fold(0.0, f64::max);
    let scale = f0_values.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if residual.is_nan() || residual > FREDHOLM_RESIDUAL_TOL * scale {
        return Err(Error::Discretization(residual));
    }
    Ok(FredholmSolution {
        kernel: *kernel,
        grid: grid.clone(),
        lambda,
        w_values,
        f0_values: f0_values.to_vec(),
        flambda_values: flambda,
        residual,
    })
}

/// `f_λ(x) = Σ_j ω_j w_j k(x, y_j)`.
pub fn flambda_expansion(sol: &FredholmSolution) -> KernelExpansion {
    let coeffs = sol
        .grid
        .weights()
        .iter()
        .zip(&sol.w_values)
        .map(|(o, w)| o * w)
        .collect();
    KernelExpansion::new(sol.kernel, sol.grid.nodes().to_vec(), coeffs)
        .expect("grid nodes were validated against the kernel")
}

/// The expansion `K g = Σ_j ω_j g(y_j) k(·, y_j)` of node values `g`.
pub fn operator_expansion(kernel: &KernelSpec, grid: &QuadratureGrid, values: &[f64]) -> Result<KernelExpansion> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let coeffs = grid.weights().iter().zip(values).map(|(o, v)| o * v).collect();
    KernelExpansion::new(*kernel, grid.nodes().to_vec(), coeffs)
}

/// `f₀ = K w₀` at the nodes, and `C₀ = ‖w₀‖_k` so that `‖f₀ − f_λ‖_k ≤ C₀ λ`.
///
/// `‖w₀‖_k` is the `L²(P)` norm of `K^{-1/2} w₀`, evaluated on the
/// discretized operator with eigenvalues below a relative cutoff dropped.
pub fn f0_in_range(kernel: &KernelSpec, grid: &QuadratureGrid, w0_values: &[f64]) -> Result<(Vec<f64>, f64)> {
    let f0 = operator_expansion(kernel, grid, w0_values)?;
    let f0_values = f0.evaluate_many(grid.nodes())?;
    if w0_values.iter().all(|&w| w == 0.0) {
        return Ok((f0_values, 0.0));
    }
    let m = grid.len();
    let g = gram_unchecked(kernel, grid.nodes());
    let d: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
    let a = DMatrix::from_fn(m, m, |i, j| d[i] * g[(i, j)] * d[j]);
    let eig = sym_eig(&a)?;
    let u0 = DVector::from_iterator(m, (0..m).map(|i| d[i] * w0_values[i]));
    let cutoff = RANGE_NORM_CUTOFF * eig.max();
    let c0_sq: f64 = (0..m)
        .filter(|&i| eig.values[i] > cutoff)
        .map(|i| eig.vectors.column(i).dot(&u0).powi(2) / eig.values[i])
        .sum();
    Ok((f0_values, c0_sq.sqrt()))
}

/// `ϑ* = E(f − f₀)² + λ ⟨w_λ, K w_λ⟩ + λ² ‖w_λ‖²`.
pub fn continuous_objective(sol: &FredholmSolution, irreducible: f64) -> f64 {
    irreducible + sol.lambda * sol.w_k_w() + sol.lambda * sol.lambda * sol.w_l2_sq()
}

/// `ϑ* = E(f − f₀)² + ‖f₀ − f_λ‖²₂ + λ ‖f_λ‖²_k`, evaluated from function values
/// and the RKHS norm of the expansion instead of the coefficient function.
pub fn continuous_objective_direct(sol: &FredholmSolution, irreducible: f64) -> Result<f64> {
    let gap: Vec<f64> = sol
        .f0_values
        .iter()
        .zip(&sol.flambda_values)
        .map(|(a, b)| (a - b).powi(2))
        .collect();
    Ok(irreducible + sol.grid.integrate(&gap) + sol.lambda * rkhs_norm_sq(&flambda_expansion(sol))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::rkhs_dist_sq;
    use approx::assert_abs_diff_eq;

    fn unit() -> DesignMeasure {
        DesignMeasure::Uniform { a: 0.0, b: 1.0 }
    }

    fn grid_values(grid: &QuadratureGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
        grid.nodes().iter().map(|x| f(x[0])).collect()
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for m in 1..12 {
            let (x, w) = gauss_legendre(m);
            for deg in 0..(2 * m) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-13);
            }
        }
        let (x, w) = gauss_legendre(400);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn grid_examples() {
        let g = build_grid(&DesignMeasure::Dirac { x0: vec![0.3] }, 50).unwrap();
        assert_eq!(g.nodes(), &[vec![0.3]]);
        assert_eq!(g.weights(), &[1.0]);

        let g = build_grid(&unit(), 2).unwrap();
        let off = 1.0 / (2.0 * 3f64.sqrt());
        assert_abs_diff_eq!(g.nodes()[0][0], 0.5 - off, epsilon = 1e-15);
        assert_abs_diff_eq!(g.nodes()[1][0], 0.5 + off, epsilon = 1e-15);
        assert_abs_diff_eq!(g.weights()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.weights()[1], 0.5, epsilon = 1e-15);

        let g = build_grid(&unit(), 200).unwrap();
        assert_abs_diff_eq!(g.integrate(&grid_values(&g, |x| x)), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        assert!(build_grid(&unit(), 0).is_err());
        assert!(build_grid(&DesignMeasure::Uniform { a: 1.0, b: 0.0 }, 4).is_err());
        let box3 = DesignMeasure::UniformBox {
            lower: vec![0.0; 3],
            upper: vec![1.0; 3],
        };
        assert!(build_grid(&box3, 8).is_err());
    }

    #[test]
    fn box_and_truncated_gaussian_grids() {
        let bx = DesignMeasure::UniformBox {
            lower: vec![0.0, -1.0],
            upper: vec![1.0, 1.0],
        };
        let g = build_grid(&bx, 64).unwrap();
        assert_eq!(g.len(), 64);
        let mean_y: f64 = g.integrate(&g.nodes().iter().map(|p| p[0] * p[1] + p[0]).collect::<Vec<_>>());
        assert_abs_diff_eq!(mean_y, 0.5, epsilon = 1e-12);

        let tg = DesignMeasure::TruncatedGaussian {
            mean: 0.5,
            std: 0.2,
            a: 0.0,
            b: 1.0,
        };
        let g = build_grid(&tg, 64).unwrap();
        // Symmetric truncation: mean stays at 0.5.
        assert_abs_diff_eq!(g.integrate(&grid_values(&g, |x| x)), 0.5, epsilon = 1e-12);
        let p = g.density_values().unwrap();
        let lebesgue_mass: f64 = {
            let (_, w) = gauss_legendre(64);
            w.iter().zip(p).map(|(w, p)| w * 0.5 * p).sum()
        };
        assert_abs_diff_eq!(lebesgue_mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_kernel_rank_one_oracle() {
        // K is the averaging operator with the single eigenvalue 1.
        let k = KernelSpec::constant(1).unwrap();
        let grid = build_grid(&unit(), 32).unwrap();
        for lambda in [0.1, 1.0, 3.0] {
            let sol = solve_coefficient(&k, &grid, &vec![1.0; 32], lambda).unwrap();
            for (w, f) in sol.w_values.iter().zip(&sol.flambda_values) {
                assert_abs_diff_eq!(*w, 1.0 / (lambda + 1.0), epsilon = 1e-12);
                assert_abs_diff_eq!(*f, 1.0 / (lambda + 1.0), epsilon = 1e-12);
            }
            assert!(sol.residual <= 1e-12);
        }
        let sol = solve_coefficient(&k, &grid, &vec![1.0; 32], 1.0).unwrap();
        let fl = flambda_expansion(&sol);
        assert_abs_diff_eq!(fl.evaluate(&[0.123]).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fl.evaluate(&[7.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(continuous_objective(&sol, 0.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_and_dirac_solutions() {
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let grid = build_grid(&unit(), 40).unwrap();
        let sol = solve_coefficient(&k, &grid, &vec![0.0; 40], 0.3).unwrap();
        assert!(sol.w_values.iter().chain(&sol.flambda_values).all(|v| *v == 0.0));
        assert_eq!(rkhs_norm_sq(&flambda_expansion(&sol)).unwrap(), 0.0);
        assert!(solve_coefficient(&k, &grid, &vec![0.0; 40], 0.0).is_err());
        assert!(solve_coefficient(&k, &grid, &[0.0; 3], 0.1).is_err());

        let dirac = build_grid(&DesignMeasure::Dirac { x0: vec![0.4] }, 10).unwrap();
        let sol = solve_coefficient(&k, &dirac, &[2.0], 0.5).unwrap();
        assert_abs_diff_eq!(sol.w_values[0], 2.0 / 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sol.flambda_values[0], 2.0 / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn flambda_norm_matches_quadrature_double_sum() {
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let grid = build_grid(&unit(), 128).unwrap();
        let w0 = grid_values(&grid, |x| (2.0 * PI * x).sin());
        let (f0, _) = f0_in_range(&k, &grid, &w0).unwrap();
        let sol = solve_coefficient(&k, &grid, &f0, 0.05).unwrap();
        let g = gram_unchecked(&k, grid.nodes());
        let om = grid.weights();
        let mut double_sum = 0.0;
        for i in 0..128 {
            for j in 0..128 {
                double_sum += om[i] * sol.w_values[i] * g[(i, j)] * om[j] * sol.w_values[j];
            }
        }
        let norm = rkhs_norm_sq(&flambda_expansion(&sol)).unwrap();
        assert_abs_diff_eq!(norm, double_sum, epsilon = 1e-10);
        assert_abs_diff_eq!(norm, sol.w_k_w(), epsilon = 1e-10);
    }

    #[test]
    fn range_target_examples() {
        let c = KernelSpec::constant(1).unwrap();
        let grid = build_grid(&unit(), 64).unwrap();
        let (f0, c0) = f0_in_range(&c, &grid, &vec![0.0; 64]).unwrap();
        assert!(f0.iter().all(|v| *v == 0.0));
        assert_eq!(c0, 0.0);
        let (f0, _) = f0_in_range(&c, &grid, &grid_values(&grid, |x| x)).unwrap();
        assert!(f0.iter().all(|v| (v - 0.5).abs() < 1e-13));

        // Grid refinement: f₀ at fixed off-grid points agrees across m = 200, 400.
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let probe: Vec<Point> = (0..11).map(|i| vec![i as f64 / 10.0]).collect();
        let eval = |m: usize| {
            let grid = build_grid(&unit(), m).unwrap();
            let w0 = grid_values(&grid, |x| (2.0 * PI * x).sin());
            operator_expansion(&k, &grid, &w0)
                .unwrap()
                .evaluate_many(&probe)
                .unwrap()
        };
        for (a, b) in eval(200).iter().zip(eval(400)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn defining_equation_residual_and_objective_routes() {
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let grid = build_grid(&unit(), 256).unwrap();
        for (w0f, sigma2) in [(0usize, 0.04), (1, 0.0), (2, 0.3)] {
            let w0 = grid_values(&grid, |x| match w0f {
                0 => (2.0 * PI * x).sin(),
                1 => x * (x - 0.5) * (x - 1.0),
                _ => (3.0 * x).cos() + x,
            });
            let (f0, _) = f0_in_range(&k, &grid, &w0).unwrap();
            for lambda in [1e-3, 0.05, 1.0] {
                let sol = solve_coefficient(&k, &grid, &f0, lambda).unwrap();
                for i in 0..grid.len() {
                    let gap = sol.f0_values[i] - sol.flambda_values[i] - lambda * sol.w_values[i];
                    assert!(gap.abs() <= 1e-9);
                }
                let a = continuous_objective(&sol, sigma2);
                let b = continuous_objective_direct(&sol, sigma2).unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    /// `‖f₀ − f_λ‖_k` from the two expansions.
    fn bias_norm(k: &KernelSpec, grid: &QuadratureGrid, w0: &[f64], lambda: f64) -> f64 {
        let f0 = operator_expansion(k, grid, w0).unwrap();
        let f0_values = f0.evaluate_many(grid.nodes()).unwrap();
        let sol = solve_coefficient(k, grid, &f0_values, lambda).unwrap();
        rkhs_dist_sq(&f0, &flambda_expansion(&sol)).unwrap().sqrt()
    }

    #[test]
    fn bias_is_bounded_by_c0_lambda() {
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let grid = build_grid(&unit(), 256).unwrap();
        let w0 = grid_values(&grid, |x| (2.0 * PI * x).sin());
        let (_, c0) = f0_in_range(&k, &grid, &w0).unwrap();
        for lambda in [1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0] {
            let b = bias_norm(&k, &grid, &w0, lambda);
            assert!(b <= c0 * lambda * (1.0 + 1e-9), "λ={lambda}: {b} > {}", c0 * lambda);
            // And through the coefficient function: λ ‖w_λ‖_k.
        }
    }

    #[test]
    fn bias_rate_is_linear_as_lambda_vanishes() {
        // ‖f₀ − f_λ‖_k / λ increases to ‖w₀‖_k, so the log-log slope tends to one.
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let grid = build_grid(&unit(), 256).unwrap();
        let w0 = grid_values(&grid, |x| (2.0 * PI * x).sin());
        let lambdas = [1e-6, 1e-5, 1e-4];
        let xs: Vec<f64> = lambdas.iter().map(|l: &f64| l.ln()).collect();
        let ys: Vec<f64> = lambdas.iter().map(|&l| bias_norm(&k, &grid, &w0, l).ln()).collect();
        let slope = crate::experiments::least_squares_slope(&xs, &ys).0;
        assert!((slope - 1.0).abs() <= 0.05, "slope {slope}");
    }

    #[test]
    fn grid_refinement_is_stable() {
        let k = KernelSpec::gaussian(0.25, 1).unwrap();
        let probe: Vec<Point> = (0..21).map(|i| vec![i as f64 / 20.0]).collect();
        let flambda_at = |m: usize| {
            let grid = build_grid(&unit(), m).unwrap();
            let w0 = grid_values(&grid, |x| (2.0 * PI * x).sin());
            let (f0, _) = f0_in_range(&k, &grid, &w0).unwrap();
            let sol = solve_coefficient(&k, &grid, &f0, 0.1).unwrap();
            flambda_expansion(&sol).evaluate_many(&probe).unwrap()
        };
        for (a, b) in flambda_at(256).iter().zip(flambda_at(512)) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn grid_validation() {
        assert!(QuadratureGrid::new(vec![vec![0.0]], vec![0.5], None).is_err());
        assert!(QuadratureGrid::new(vec![vec![0.0], vec![1.0]], vec![1.5, -0.5], None).is_err());
        assert!(QuadratureGrid::new(vec![], vec![], None).is_err());
        let s = serde_json::to_string(&build_grid(&unit(), 4).unwrap()).unwrap();
        assert!(s.contains("density_values"));
        let m: DesignMeasure = serde_json::from_str(r#"{"type":"uniform","a":0,"b":1}"#).unwrap();
        assert_eq!(m, unit());
    }
}
