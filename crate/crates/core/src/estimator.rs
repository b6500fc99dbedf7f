//! The ridge estimator `f̂_n`, its Gaussian-process form, and norms of
//! kernel expansions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_unchecked, KernelSpec};
use crate::linalg::{solve_spd_vec, SpdFactor, SpdSolveOptions};
use crate::Point;

/// Quadratic forms below `-NEGATIVE_NORM_TOL · scale` are reported as errors;
/// anything between that and zero is clamped.
pub const NEGATIVE_NORM_TOL: f64 = 1e-10;

/// `f(x) = Σ_i coeffs[i] · k(x, centers[i])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    kernel: KernelSpec,
    centers: Vec<Point>,
    coeffs: Vec<f64>,
}

impl KernelExpansion {
    pub fn new(kernel: KernelSpec, centers: Vec<Point>, coeffs: Vec<f64>) -> Result<Self> {
        if centers.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                found: coeffs.len(),
            });
        }
        kernel.check_points(&centers)?;
        Ok(Self {
            kernel,
            centers,
            coeffs,
        })
    }

    /// The zero function.
    pub fn zero(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            centers: Vec::new(),
            coeffs: Vec::new(),
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Same centers, coefficients scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kernel: self.kernel,
            centers: self.centers.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.coeffs)
            .map(|(c, a)| a * self.kernel.eval_unchecked(x, c))
            .sum()
    }

    pub fn evaluate_many(&self, xs: &[Point]) -> Result<Vec<f64>> {
        self.kernel.check_points(xs)?;
        Ok(xs.iter().map(|x| self.evaluate_unchecked(x)).collect())
    }
}

/// Paired observations `(X_i, f_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    xs: Vec<Point>,
    fs: Vec<f64>,
}

impl Dataset {
    pub fn new(xs: Vec<Point>, fs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("dataset needs at least one observation"));
        }
        if xs.len() != fs.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                found: fs.len(),
            });
        }
        let d = xs[0].len();
        if let Some(bad) = xs.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Ok(Self { xs, fs })
    }

    /// Convenience for one-dimensional designs.
    pub fn from_1d(xs: &[f64], fs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), fs.to_vec())
    }

    pub fn xs(&self) -> &[Point] {
        &self.xs
    }

    pub fn fs(&self) -> &[f64] {
        &self.fs
    }

    pub fn len(&self) -> usize {
        self.fs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs[0].len()
    }

    /// `(1/n) Σ f_i²`, the objective value of the zero function.
    pub fn mean_square(&self) -> f64 {
        self.fs.iter().map(|f| f * f).sum::<f64>() / self.len() as f64
    }
}

fn check_lambda(lambda: f64, allow_zero: bool) -> Result<()> {
    let ok = lambda.is_finite() && if allow_zero { lambda >= 0.0 } else { lambda > 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "regularization parameter out of range: {lambda}"
        )))
    }
}

/// Weights `ŵ = (λ + K/n)^{-1} f` for a precomputed Gram matrix.
pub(crate) fn ridge_weights(k: &DMatrix<f64>, fs: &[f64], lambda: f64) -> Result<DVector<f64>> {
    let n = fs.len();
    let mut a = k / n as f64;
    for i in 0..n {
        a[(i, i)] += lambda;
    }
    solve_spd_vec(&a, &DVector::from_column_slice(fs), &SpdSolveOptions::default())
}

/// Minimizer of `(1/n) Σ (f_i − f(X_i))² + λ‖f‖²_k`.
///
/// Returns the expansion over the sample with coefficients `ŵ / n`, where
/// `(λI + K/n) ŵ = f`. `λ = 0` interpolates the data.
pub fn fit_ridge(kernel: &KernelSpec, data: &Dataset, lambda: f64) -> Result<KernelExpansion> {
    check_lambda(lambda, true)?;
    let k = gram(kernel, data.xs())?;
    let w = ridge_weights(&k, data.fs(), lambda)?;
    let n = data.len() as f64;
    Ok(KernelExpansion {
        kernel: *kernel,
        centers: data.xs().to_vec(),
        coeffs: w.iter().map(|v| v / n).collect(),
    })
}

/// Minimizer of `(1/n) (f − f(x))ᵀ Λ^{-1} (f − f(x)) + ‖f‖²_k` for a symmetric
/// invertible `Λ`.
///
/// The weights `w = n (KΛ^{-1}K + nK)^{-1} KΛ^{-1} f` satisfy the normal
/// equations exactly when `(K + nΛ) w = n f`, which stays solvable when `K`
/// itself is singular; that system is what gets solved here.
pub fn fit_generalized(kernel: &KernelSpec, data: &Dataset, reg: &DMatrix<f64>) -> Result<KernelExpansion> {
    let n = data.len();
    if reg.nrows() != n || reg.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: reg.nrows(),
        });
    }
    let asym = (reg - reg.transpose()).amax();
    if asym > 1e-12 * reg.amax().max(1.0) {
        return Err(Error::InvalidParameter("regularization matrix is not symmetric".into()));
    }
    if reg.clone().lu().try_inverse().is_none() {
        return Err(Error::Singular("regularization matrix"));
    }
    let k = gram(kernel, data.xs())?;
    let nf = n as f64;
    let system = &k + reg * nf;
    let rhs = DVector::from_iterator(n, data.fs().iter().map(|f| f * nf));
    let w = system.lu().solve(&rhs).ok_or(Error::Singular("K + nΛ"))?;
    Ok(KernelExpansion {
        kernel: *kernel,
        centers: data.xs().to_vec(),
        coeffs: w.iter().map(|v| v / nf).collect(),
    })
}

pub fn evaluate(f: &KernelExpansion, x: &[f64]) -> Result<f64> {
    f.evaluate(x)
}

/// Clamps tiny negative roundoff of a quadratic form to zero.
pub(crate) fn clamp_quadratic(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_NORM_TOL * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::NegativeNorm(value))
    }
}

/// `aᵀ G a` together with `Σ |a_i||a_j||G_ij|` for roundoff scaling.
fn quadratic_form(kernel: &KernelSpec, centers: &[Point], coeffs: &[f64]) -> (f64, f64) {
    let mut value = 0.0;
    let mut scale = 0.0;
    for i in 0..centers.len() {
        let ai = coeffs[i];
        if ai == 0.0 {
            continue;
        }
        value += ai * ai * kernel.eval_unchecked(&centers[i], &centers[i]);
        scale += ai * ai;
        for j in 0..i {
            let t = ai * coeffs[j] * kernel.eval_unchecked(&centers[i], &centers[j]);
            value += 2.0 * t;
            scale += 2.0 * t.abs();
        }
    }
    (value, scale)
}

/// `‖f‖²_k = aᵀ G a`.
pub fn rkhs_norm_sq(f: &KernelExpansion) -> Result<f64> {
    let (value, scale) = quadratic_form(&f.kernel, &f.centers, &f.coeffs);
    clamp_quadratic(value, scale)
}

/// `⟨f, g⟩_k = Σ_ij a_i b_j k(c_i, d_j)`.
pub fn rkhs_inner(f: &KernelExpansion, g: &KernelExpansion) -> Result<f64> {
    if f.kernel != g.kernel {
        return Err(Error::KernelMismatch);
    }
    let mut s = 0.0;
    for (ci, ai) in f.centers.iter().zip(&f.coeffs) {
        for (dj, bj) in g.centers.iter().zip(&g.coeffs) {
            s += ai * bj * f.kernel.eval_unchecked(ci, dj);
        }
    }
    Ok(s)
}

/// `‖f − g‖²_k`. Expansions over identical center lists are differenced
/// coefficient-wise; otherwise the centers are concatenated.
pub fn rkhs_dist_sq(f: &KernelExpansion, g: &KernelExpansion) -> Result<f64> {
    if f.kernel != g.kernel {
        return Err(Error::KernelMismatch);
    }
    let diff = if f.centers == g.centers {
        KernelExpansion {
            kernel: f.kernel,
            centers: f.centers.clone(),
            coeffs: f.coeffs.iter().zip(&g.coeffs).map(|(a, b)| a - b).collect(),
        }
    } else {
        let mut centers = f.centers.clone();
        centers.extend(g.centers.iter().cloned());
        let mut coeffs = f.coeffs.clone();
        coeffs.extend(g.coeffs.iter().map(|b| -b));
        KernelExpansion {
            kernel: f.kernel,
            centers,
            coeffs,
        }
    };
    rkhs_norm_sq(&diff)
}

/// `(1/n) Σ (f_i − f(X_i))² + λ ‖f‖²_k`.
pub fn empirical_objective(f: &KernelExpansion, data: &Dataset, lambda: f64) -> Result<f64> {
    let fitted = f.evaluate_many(data.xs())?;
    let mse = data.fs().iter().zip(&fitted).map(|(y, v)| (y - v).powi(2)).sum::<f64>() / data.len() as f64;
    Ok(mse + lambda * rkhs_norm_sq(f)?)
}

/// Certificate `C_k ‖f − g‖_k ≥ sup |f − g|` on the design support, where
/// `C_k = sup sqrt(k(x, x))` over that support.
pub fn sup_error_bound(f: &KernelExpansion, g: &KernelExpansion, c_k: f64) -> Result<f64> {
    Ok(c_k * rkhs_dist_sq(f, g)?.sqrt())
}

/// Gaussian-process posterior with observation-noise variance `λ_gp`:
/// mean `k(x,X)(K + λ_gp)^{-1} f` and variance
/// `k(x,x) − k(x,X)(K + λ_gp)^{-1} k(X,x)`.
///
/// With `λ_gp = n λ` the mean coincides with [`fit_ridge`] at `λ`.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    xs: Vec<Point>,
    factor: SpdFactor,
    alpha: DVector<f64>,
}

impl GpPosterior {
    pub fn fit(kernel: &KernelSpec, data: &Dataset, lambda_gp: f64) -> Result<Self> {
        check_lambda(lambda_gp, false)?;
        kernel.check_points(data.xs())?;
        let n = data.len();
        let mut a = gram_unchecked(kernel, data.xs());
        for i in 0..n {
            a[(i, i)] += lambda_gp;
        }
        let factor = SpdFactor::new(&a, &SpdSolveOptions::default())?;
        let alpha = factor.solve_vec(&DVector::from_column_slice(data.fs()));
        Ok(Self {
            kernel: *kernel,
            xs: data.xs().to_vec(),
            factor,
            alpha,
        })
    }

    fn k_vec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.xs.len(),
            self.xs.iter().map(|xi| self.kernel.eval_unchecked(x, xi)),
        )
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        Ok(self.k_vec(x).dot(&self.alpha))
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point(x)?;
        let kx = self.k_vec(x);
        let kxx = self.kernel.eval_unchecked(x, x);
        let v = kxx - kx.dot(&self.factor.solve_vec(&kx));
        clamp_quadratic(v, kxx)
    }

    /// The equivalent ridge expansion: coefficients `(K + λ_gp)^{-1} f`.
    pub fn mean_expansion(&self) -> KernelExpansion {
        KernelExpansion {
            kernel: self.kernel,
            centers: self.xs.clone(),
            coeffs: self.alpha.iter().copied().collect(),
        }
    }
}

pub fn gp_posterior_mean(kernel: &KernelSpec, data: &Dataset, lambda_gp: f64, x: &[f64]) -> Result<f64> {
    GpPosterior::fit(kernel, data, lambda_gp)?.mean(x)
}

pub fn gp_posterior_var(kernel: &KernelSpec, data: &Dataset, lambda_gp: f64, x: &[f64]) -> Result<f64> {
    GpPosterior::fit(kernel, data, lambda_gp)?.variance(x)
}
