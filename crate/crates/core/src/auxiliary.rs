//! The auxiliary estimator `f̃_n = (1/n) Σ w̃_j k(·, X_j)` with
//! `w̃_j = (f_j − f_λ(X_j)) / λ`, and its exact relation to `f̂_n`.
//!
//! `f̃_n` is unbiased for `f_λ`, but it needs `f_λ` to be computed; its use
//! is as an analytical bridge. The residuals
//! `r̃_i = f_i − λ w̃_i − (1/n) Σ_j k(X_i, X_j) w̃_j` determine `f̂_n − f̃_n`
//! completely.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{clamp_quadratic, rkhs_norm_sq, Dataset, KernelExpansion};
use crate::fredholm::{flambda_expansion, FredholmSolution};
use crate::kernels::{gram_unchecked, KernelSpec};
use crate::linalg::{solve_spd, SpdSolveOptions};

/// Agreement required between the two residual formulas, relative to
/// `max(1, max_i |f_i|)`.
const RESIDUAL_AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryFit {
    /// `f̃_n`, with coefficients `w̃_i / n` on the sample.
    pub tilde: KernelExpansion,
    pub tilde_w: Vec<f64>,
    /// `r̃_i`.
    pub residuals: Vec<f64>,
    pub data: Dataset,
    pub lambda: f64,
}

impl AuxiliaryFit {
    /// `r̃ᵀ r̃ / (4 λ n)`, the deterministic upper bound on `‖f̂_n − f̃_n‖²_k`.
    pub fn residual_bound(&self) -> f64 {
        let rr: f64 = self.residuals.iter().map(|r| r * r).sum();
        rr / (4.0 * self.lambda * self.data.len() as f64)
    }
}

/// Builds `f̃_n` from the data and the target `f_λ`.
pub fn fit_auxiliary(
    kernel: &KernelSpec,
    data: &Dataset,
    flambda: &KernelExpansion,
    lambda: f64,
) -> Result<AuxiliaryFit> {
    if flambda.kernel() != kernel {
        return Err(Error::KernelMismatch);
    }
    kernel.check_points(data.xs())?;
    let k = gram_unchecked(kernel, data.xs());
    let flambda_at_x = flambda.evaluate_many(data.xs())?;
    fit_auxiliary_with(kernel, data, &k, &flambda_at_x, lambda)
}

/// [`fit_auxiliary`] with the sample Gram matrix and `f_λ(X_i)` supplied.
pub(crate) fn fit_auxiliary_with(
    kernel: &KernelSpec,
    data: &Dataset,
    k: &DMatrix<f64>,
    flambda_at_x: &[f64],
    lambda: f64,
) -> Result<AuxiliaryFit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "auxiliary estimator needs lambda > 0, got {lambda}"
        )));
    }
    let n = data.len();
    if flambda_at_x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: flambda_at_x.len(),
        });
    }
    let nf = n as f64;
    let tilde_w: Vec<f64> = data
        .fs()
        .iter()
        .zip(flambda_at_x)
        .map(|(f, fl)| (f - fl) / lambda)
        .collect();
    let kw = k * DVector::from_column_slice(&tilde_w) / nf;
    let residuals: Vec<f64> = (0..n).map(|i| data.fs()[i] - lambda * tilde_w[i] - kw[i]).collect();

    let scale = data.fs().iter().map(|f| f.abs()).fold(1.0, f64::max);
    let gap = (0..n)
        .map(|i| (residuals[i] - (flambda_at_x[i] - kw[i])).abs())
        .fold(0.0, f64::max);
    if gap > RESIDUAL_AGREEMENT_TOL * scale {
        return Err(Error::Inconsistent(format!("residual formulas disagree by {gap:e}")));
    }

    let tilde = KernelExpansion::new(*kernel, data.xs().to_vec(), tilde_w.iter().map(|w| w / nf).collect())?;
    Ok(AuxiliaryFit {
        tilde,
        tilde_w,
        residuals,
        data: data.clone(),
        lambda,
    })
}

/// `‖f̂_n − f̃_n‖²_k` through the residuals:
/// `(1/n) r̃ᵀ (λ + K/n)^{-1} (K/n) (λ + K/n)^{-1} r̃`.
pub fn bridge_distance_sq(aux: &AuxiliaryFit, kernel: &KernelSpec) -> Result<f64> {
    if aux.tilde.kernel() != kernel {
        return Err(Error::KernelMismatch);
    }
    let k = gram_unchecked(kernel, aux.data.xs());
    bridge_distance_sq_with(&k, &aux.residuals, aux.lambda)
}

pub(crate) fn bridge_distance_sq_with(k: &DMatrix<f64>, residuals: &[f64], lambda: f64) -> Result<f64> {
    let n = residuals.len();
    let nf = n as f64;
    if residuals.iter().all(|r| *r == 0.0) {
        return Ok(0.0);
    }
    let kn = k / nf;
    let mut m = kn.clone();
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    let r = DMatrix::from_column_slice(n, 1, residuals);
    let y = solve_spd(&m, &r, &SpdSolveOptions::default())?;
    let value = (y.transpose() * &kn * &y)[(0, 0)] / nf;
    let scale = y.iter().map(|v| v * v).sum::<f64>() * kn.amax() / nf;
    clamp_quadratic(value, scale)
}

/// Closed-form `E‖f̃_n − f_λ‖²_k` and the constant `C₁ = λ² n · value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TildeRisk {
    pub value: f64,
    pub c1: f64,
}

/// `(1/(λ² n)) ∫ (var(f|x) + (f₀ − f_λ)²(x)) k(x,x) P(dx) − (1/n) ‖f_λ‖²_k`
/// by the solution's quadrature; `condvar_values` is `var(f|x)` at its nodes.
pub fn theoretical_tilde_risk(
    kernel: &KernelSpec,
    sol: &FredholmSolution,
    condvar_values: &[f64],
    n: usize,
) -> Result<TildeRisk> {
    if *kernel != sol.kernel {
        return Err(Error::KernelMismatch);
    }
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be positive".into()));
    }
    let nodes = sol.grid.nodes();
    if condvar_values.len() != nodes.len() {
        return Err(Error::DimensionMismatch {
            expected: nodes.len(),
            found: condvar_values.len(),
        });
    }
    let integrand: Vec<f64> = (0..nodes.len())
        .map(|i| {
            let bias = sol.f0_values[i] - sol.flambda_values[i];
            (condvar_values[i] + bias * bias) * kernel.eval_unchecked(&nodes[i], &nodes[i])
        })
        .collect();
    let nf = n as f64;
    let lam2 = sol.lambda * sol.lambda;
    let value = sol.grid.integrate(&integrand) / (lam2 * nf) - rkhs_norm_sq(&flambda_expansion(sol))? / nf;
    Ok(TildeRisk {
        value,
        c1: lam2 * nf * value,
    })
}
