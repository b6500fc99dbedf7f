use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_with_spectrum, sandwich, sym_eig};

/// Regularization values each random matrix is checked at.
pub const SANDWICH_LAMBDAS: [f64; 4] = [1e-3, 1e-1, 1.0, 10.0];

/// Relative tolerance on `(λ+K)^{-1} K (λ+K)^{-1} ⪯ I / (4λ)`.
pub const SANDWICH_TOL: f64 = 1e-8;

/// Smallest eigenvalue of `I/(4λ) − (λ+K)^{-1} K (λ+K)^{-1}`, scaled by `4λ`.
///
/// Nonnegative for every PSD `K`; zero exactly when `λ` is an eigenvalue of `K`.
pub fn sandwich_margin(k: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    let s = sandwich(k, lambda)?;
    let top = sym_eig(&s)?.max();
    Ok(1.0 - 4.0 * lambda * top)
}

/// A random symmetric PSD matrix of size `1..=max_dim`. A fifth of the
/// eigenvalues are zero; the rest are log-uniform on `[1e-4, 1e2]`, which
/// straddles every value in [`SANDWICH_LAMBDAS`].
pub fn random_test_matrix<R: Rng + ?Sized>(rng: &mut R, max_dim: usize) -> DMatrix<f64> {
    let n = rng.random_range(1..=max_dim);
    let spectrum: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < 0.2 {
                0.0
            } else {
                10f64.powf(rng.random_range(-4.0..2.0))
            }
        })
        .collect();
    psd_with_spectrum(rng, &spectrum)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichViolation {
    pub lambda: f64,
    pub margin: f64,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SandwichOutcome {
    pub matrices: usize,
    pub checks: usize,
    /// Smallest relative margin seen over all checks.
    pub min_margin: f64,
    /// Margin of the `K = [λ]` equality cases, largest in absolute value.
    pub equality_margin: f64,
    pub violations: Vec<SandwichViolation>,
}

impl SandwichOutcome {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn rows(k: &DMatrix<f64>) -> Vec<Vec<f64>> {
    k.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Checks `count` random matrices at every value in [`SANDWICH_LAMBDAS`],
/// plus, per value, the scalar equality case `K = [λ]` and a random matrix
/// with `λ` planted among its eigenvalues.
pub fn sandwich_suite<R: Rng + ?Sized>(rng: &mut R, count: usize, max_dim: usize) -> Result<SandwichOutcome> {
    if count == 0 || max_dim == 0 {
        return Err(Error::InvalidParameter(
            "sandwich suite needs count and max_dim of at least one".into(),
        ));
    }
    let mut out = SandwichOutcome {
        matrices: 0,
        checks: 0,
        min_margin: f64::INFINITY,
        equality_margin: 0.0,
        violations: Vec::new(),
    };
    let record = |out: &mut SandwichOutcome, k: &DMatrix<f64>, lambda: f64| -> Result<f64> {
        let margin = sandwich_margin(k, lambda)?;
        out.checks += 1;
        out.min_margin = out.min_margin.min(margin);
        if margin < -SANDWICH_TOL {
            out.violations.push(SandwichViolation {
                lambda,
                margin,
                matrix: rows(k),
            });
        }
        Ok(margin)
    };
    for _ in 0..count {
        let k = random_test_matrix(rng, max_dim);
        out.matrices += 1;
        for lambda in SANDWICH_LAMBDAS {
            record(&mut out, &k, lambda)?;
        }
    }
    for lambda in SANDWICH_LAMBDAS {
        let scalar = DMatrix::from_element(1, 1, lambda);
        let m = record(&mut out, &scalar, lambda)?;
        if m.abs() > out.equality_margin.abs() {
            out.equality_margin = m;
        }
        let n = rng.random_range(1..=max_dim);
        let mut spectrum: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-4.0..2.0))).collect();
        spectrum[0] = lambda;
        let planted = psd_with_spectrum(rng, &spectrum);
        record(&mut out, &planted, lambda)?;
        out.matrices += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn margins_of_simple_cases() {
        assert!(sandwich_margin(&DMatrix::from_element(1, 1, 0.3), 0.3).unwrap().abs() <= 1e-12);
        // Eigenvalue 4λ: 4λ / (5λ)² · 4λ = 16/25.
        let m = sandwich_margin(&DMatrix::from_element(1, 1, 2.0), 0.5).unwrap();
        assert!((m - (1.0 - 16.0 / 25.0)).abs() <= 1e-12);
        assert_eq!(sandwich_margin(&DMatrix::zeros(3, 3), 1.0).unwrap(), 1.0);
    }

    #[test]
    fn small_suite_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = sandwich_suite(&mut rng, 50, 8).unwrap();
        assert!(out.ok());
        assert_eq!(out.checks, 50 * 4 + 8);
        assert!(out.equality_margin.abs() <= 1e-12);
        assert!(out.min_margin.abs() <= 1e-10);
        assert!(sandwich_suite(&mut rng, 0, 3).is_err());
    }
}
