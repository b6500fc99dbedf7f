//! Dense symmetric linear algebra: SPD solves with a jitter fallback,
//! symmetric eigendecomposition and Loewner-order comparisons.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative residual accepted by [`solve_spd`].
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

const REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdSolveOptions {
    /// Jitter is `jitter_rel * trace(A) / n`, doubled on every retry.
    pub jitter_rel: f64,
    pub max_jitter_doublings: u32,
}

impl Default for SpdSolveOptions {
    fn default() -> Self {
        Self {
            jitter_rel: 1e-12,
            max_jitter_doublings: 20,
        }
    }
}

impl SpdSolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.jitter_rel >= 0.0 && self.jitter_rel.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "jitter_rel must be nonnegative, got {}",
                self.jitter_rel
            )));
        }
        Ok(())
    }

    /// Diagonal shifts tried in order: none, then `base · 2^k` for
    /// `k = 0..=max_jitter_doublings`.
    fn jitter_schedule(&self, a: &DMatrix<f64>) -> impl Iterator<Item = f64> {
        let n = a.nrows().max(1) as f64;
        let trace = a.diagonal().sum();
        let scale = if trace > 0.0 { trace / n } else { 1.0 };
        let base = self.jitter_rel * scale;
        let retries = if base > 0.0 {
            self.max_jitter_doublings as i32 + 1
        } else {
            0
        };
        std::iter::once(0.0).chain((0..retries).map(move |k| base * 2f64.powi(k)))
    }
}

/// A Cholesky factorization of `A + jitter·I`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    matrix: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    /// Factorizes `a`, retrying with growing jitter when Cholesky fails.
    pub fn new(a: &DMatrix<f64>, opts: &SpdSolveOptions) -> Result<Self> {
        check_square(a)?;
        opts.validate()?;
        let mut attempts: u32 = 0;
        for jitter in opts.jitter_schedule(a) {
            if let Some(f) = Self::try_with_jitter(a, jitter) {
                return Ok(f);
            }
            attempts += 1;
        }
        Err(Error::NotPositiveDefinite {
            attempts: attempts.saturating_sub(1),
        })
    }

    fn try_with_jitter(a: &DMatrix<f64>, jitter: f64) -> Option<Self> {
        let mut shifted = a.clone();
        if jitter > 0.0 {
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += jitter;
            }
        }
        let chol = Cholesky::new(shifted.clone())?;
        Some(Self {
            matrix: shifted,
            chol,
            jitter,
        })
    }

    /// Diagonal shift that was needed for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Solves with a few steps of iterative refinement.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.chol.solve(b);
        for _ in 0..REFINEMENT_STEPS {
            let r = b - &self.matrix * &x;
            if r.norm() <= f64::EPSILON * b.norm() {
                break;
            }
            x += self.chol.solve(&r);
        }
        x
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let x = self.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()));
        DVector::from_column_slice(x.as_slice())
    }

    fn relative_residual(&self, x: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let bn = b.norm();
        let r = (&self.matrix * x - b).norm();
        if bn == 0.0 {
            r
        } else {
            r / bn
        }
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::EmptyInput("matrix has no rows"));
    }
    Ok(())
}

/// Solves `A X = B` for symmetric positive definite `A`.
///
/// A factorization is accepted only if the relative residual
/// `‖AX − B‖ / ‖B‖` stays below [`SOLVE_RESIDUAL_TOL`]; otherwise the next
/// jitter level is tried.
pub fn solve_spd(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &SpdSolveOptions) -> Result<DMatrix<f64>> {
    check_square(a)?;
    opts.validate()?;
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let mut attempts: u32 = 0;
    for jitter in opts.jitter_schedule(a) {
        if let Some(f) = SpdFactor::try_with_jitter(a, jitter) {
            let x = f.solve(b);
            if f.relative_residual(&x, b) <= SOLVE_RESIDUAL_TOL {
                return Ok(x);
            }
        }
        attempts += 1;
    }
    Err(Error::NotPositiveDefinite {
        attempts: attempts.saturating_sub(1),
    })
}

pub fn solve_spd_vec(a: &DMatrix<f64>, b: &DVector<f64>, opts: &SpdSolveOptions) -> Result<DVector<f64>> {
    let x = solve_spd(a, &DMatrix::from_column_slice(b.len(), 1, b.as_slice()), opts)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Eigenvalues in ascending order; column `i` of `vectors` belongs to `values[i]`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }
}

pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    check_square(a)?;
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100_000).ok_or(Error::EigenNonConvergence)?;
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Maximum absolute row sum.
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of `B − A`; nonnegative iff `A ≤ B` in Loewner order.
pub fn loewner_margin(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: a.nrows(),
        });
    }
    let mut diff = b - a;
    symmetrize(&mut diff);
    Ok(sym_eig(&diff)?.min())
}

/// `A ≤ B` in Loewner order, up to `tol · max(1, ‖B‖_∞)`.
pub fn loewner_leq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let margin = loewner_margin(a, b)?;
    Ok(margin >= -tol * inf_norm(b).max(1.0))
}

/// `(λI + K)^{-1} K (λI + K)^{-1}`, symmetrized.
pub fn sandwich(k: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    check_square(k)?;
    let shifted = k + DMatrix::identity(k.nrows(), k.nrows()) * lambda;
    let opts = SpdSolveOptions::default();
    // X = (λ+K)^{-1} K, so Xᵀ = K (λ+K)^{-1}.
    let x = solve_spd(&shifted, k, &opts)?;
    let mut s = solve_spd(&shifted, &x.transpose(), &opts)?;
    symmetrize(&mut s);
    Ok(s)
}

/// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = qr.unpack();
    // Fix column signs so the distribution does not depend on the QR convention.
    let mut q = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(spectrum) Qᵀ` for a random orthogonal `Q`, symmetrized.
pub fn psd_with_spectrum<R: Rng + ?Sized>(rng: &mut R, spectrum: &[f64]) -> DMatrix<f64> {
    let n = spectrum.len();
    let q = random_orthogonal(rng, n);
    let mut k = &q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose();
    symmetrize(&mut k);
    k
}

/// Random PSD matrix with eigenvalues drawn uniformly from `[0, max_eig]`.
pub fn random_psd<R: Rng + ?Sized>(rng: &mut R, n: usize, max_eig: f64) -> DMatrix<f64> {
    let spectrum: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * max_eig).collect();
    psd_with_spectrum(rng, &spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn solve_examples() {
        let opts = SpdSolveOptions::default();
        let x = solve_spd(&DMatrix::identity(2, 2), &col(&[3.0, 4.0]), &opts).unwrap();
        assert_eq!(x, col(&[3.0, 4.0]));
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_spd(&a, &col(&[2.0, 4.0]), &opts).unwrap();
        assert_abs_diff_eq!(x, col(&[1.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn solve_random_spd_multiplies_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = SpdSolveOptions::default();
        for _ in 0..50 {
            let spectrum: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..10.0)).collect();
            let a = psd_with_spectrum(&mut rng, &spectrum);
            let b = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_spd(&a, &b, &opts).unwrap();
            assert!((&a * &x - &b).norm() <= 1e-10 * b.norm());
        }
    }

    #[test]
    fn jitter_rescues_singular_psd_matrix() {
        // Rank one; plain Cholesky fails or is inaccurate, jitter makes it solvable.
        let a = DMatrix::from_element(3, 3, 1.0);
        let b = col(&[1.0, 1.0, 1.0]);
        let x = solve_spd(&a, &b, &SpdSolveOptions::default()).unwrap();
        assert!((&a * &x - &b).norm() <= 1e-6);
        let f = SpdFactor::new(&a, &SpdSolveOptions::default()).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let err = solve_spd(&a, &col(&[1.0, 1.0]), &SpdSolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { attempts: 21 }));
        let no_jitter = SpdSolveOptions {
            jitter_rel: 0.0,
            max_jitter_doublings: 20,
        };
        assert!(solve_spd(&a, &col(&[1.0, 1.0]), &no_jitter).is_err());
        assert!(solve_spd(&a, &col(&[1.0]), &no_jitter).is_err());
    }

    #[test]
    fn eig_examples() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let e = sym_eig(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        assert_abs_diff_eq!(e.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let e = sym_eig(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[2.0, 5.0]);
        assert_abs_diff_eq!(e.vectors[(0, 0)].abs(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e.vectors[(1, 1)].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn loewner_examples() {
        let z = DMatrix::zeros(3, 3);
        let i = DMatrix::identity(3, 3);
        assert!(loewner_leq(&z, &i, 0.0).unwrap());
        assert!(!loewner_leq(&i, &z, 0.0).unwrap());
        assert!(loewner_leq(&i, &DMatrix::zeros(2, 2), 0.0).is_err());
    }

    #[test]
    fn sandwich_examples() {
        for lambda in [1e-3, 0.3, 1.0, 10.0] {
            let s = sandwich(&DMatrix::from_element(1, 1, lambda), lambda).unwrap();
            assert_abs_diff_eq!(s[(0, 0)], 1.0 / (4.0 * lambda), epsilon = 1e-12 / lambda);
        }
        let s = sandwich(&DMatrix::zeros(4, 4), 0.5).unwrap();
        assert_eq!(s, DMatrix::zeros(4, 4));
        assert!(sandwich(&DMatrix::zeros(2, 2), 0.0).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = random_psd(&mut rng, 8, 100.0);
        let s = sandwich(&k, 0.3).unwrap();
        assert!(sym_eig(&s).unwrap().max() <= 1.0 / (4.0 * 0.3) + 1e-10);
    }

    #[test]
    fn sandwich_bound_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let lambdas = [1e-3, 1e-1, 1.0, 10.0];
        for _ in 0..1000 {
            let n = rng.random_range(1..=20);
            let k = random_psd(&mut rng, n, 100.0);
            for &lambda in &lambdas {
                let s = sandwich(&k, lambda).unwrap();
                let bound = DMatrix::identity(n, n) / (4.0 * lambda);
                assert!(loewner_leq(&s, &bound, 1e-8).unwrap());
            }
        }
    }

    #[test]
    fn kmin_refinement_chain() {
        // For K with K² − k_min K ⪰ 0 the sandwich is bounded by I / k_min.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let k_min = rng.random_range(0.05..2.0);
            // Eigenvalues either 0 or ≥ k_min makes K² − k_min K PSD.
            let spectrum: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.3 {
                        0.0
                    } else {
                        k_min + rng.random_range(0.0..20.0)
                    }
                })
                .collect();
            let k = psd_with_spectrum(&mut rng, &spectrum);
            let k2 = &k * &k;
            assert!(loewner_leq(&(&k * k_min), &k2, 1e-9).unwrap());
            for lambda in [1e-3, 0.1, 1.0] {
                let s = sandwich(&k, lambda).unwrap();
                let bound = DMatrix::identity(n, n) / k_min;
                assert!(loewner_leq(&s, &bound, 1e-8).unwrap());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn eig_reconstructs(seed in 0u64..10_000, n in 1usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
            symmetrize(&mut a);
            let e = sym_eig(&a).unwrap();
            prop_assert!((e.reconstruct() - &a).norm() <= 1e-8 * a.norm().max(1e-300));
            for i in 1..n {
                prop_assert!(e.values[i - 1] <= e.values[i]);
            }
        }

        #[test]
        fn solve_then_multiply_is_identity(seed in 0u64..10_000, n in 1usize..15) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_psd(&mut rng, n, 10.0) + DMatrix::identity(n, n) * 0.01;
            let b = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            let x = solve_spd(&a, &b, &SpdSolveOptions::default()).unwrap();
            prop_assert!((&a * &x - &b).norm() <= 1e-8 * b.norm());
        }
    }
}
