//! Kernel families, pointwise evaluation and Gram assembly.
//!
//! Every family here is continuous, symmetric, positive definite on `R^d` and
//! bounded by one, with `k(x, x) = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// `exp(-|x-y|² / (2h²))`
    Gaussian,
    /// `exp(-|x-y| / h)`
    Laplace,
    /// `(1 + |x-y|² / (2h²))^{-1}`
    RationalQuadratic,
    /// `1` everywhere; the bandwidth is ignored.
    Constant,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Laplace => "laplace",
            KernelFamily::RationalQuadratic => "rational_quadratic",
            KernelFamily::Constant => "constant",
        }
    }
}

#[derive(Debug, Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    #[serde(default = "default_bandwidth")]
    bandwidth: f64,
    #[serde(default = "default_dim")]
    dim: usize,
}

fn default_bandwidth() -> f64 {
    1.0
}

fn default_dim() -> usize {
    1
}

/// A kernel family with its bandwidth and the dimension of the design space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec")]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
    dim: usize,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.family, raw.bandwidth, raw.dim)
    }
}

impl KernelSpec {
    pub fn new(family: KernelFamily, bandwidth: f64, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("kernel dimension must be positive".into()));
        }
        if family != KernelFamily::Constant && !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        Ok(Self { family, bandwidth, dim })
    }

    pub fn gaussian(bandwidth: f64, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Gaussian, bandwidth, dim)
    }

    pub fn constant(dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Constant, 1.0, dim)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `sup_x sqrt(k(x, x))`; one for every built-in family.
    pub fn sup_diag_sqrt(&self) -> f64 {
        1.0
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `k(x, y)` with dimensions checked.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// `k(x, y)` for points already known to have dimension `dim`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let h = self.bandwidth;
        match self.family {
            KernelFamily::Constant => 1.0,
            KernelFamily::Gaussian => (-sq_dist(x, y) / (2.0 * h * h)).exp(),
            KernelFamily::Laplace => (-sq_dist(x, y).sqrt() / h).exp(),
            KernelFamily::RationalQuadratic => 1.0 / (1.0 + sq_dist(x, y) / (2.0 * h * h)),
        }
    }

    pub(crate) fn check_points(&self, points: &[Vec<f64>]) -> Result<()> {
        points.iter().try_for_each(|p| self.check_point(p))
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gram matrix `G_ij = k(p_i, p_j)`, filled once per unordered pair so the
/// result is exactly symmetric.
pub fn gram(spec: &KernelSpec, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("gram requires at least one point"));
    }
    spec.check_points(points)?;
    Ok(gram_unchecked(spec, points))
}

pub(crate) fn gram_unchecked(spec: &KernelSpec, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = spec.eval_unchecked(&points[i], &points[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// Rectangular kernel matrix `C_ij = k(xs_i, ys_j)`.
pub fn cross_gram(spec: &KernelSpec, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    spec.check_points(xs)?;
    spec.check_points(ys)?;
    Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        spec.eval_unchecked(&xs[i], &ys[j])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FAMILIES: [KernelFamily; 4] = [
        KernelFamily::Gaussian,
        KernelFamily::Laplace,
        KernelFamily::RationalQuadratic,
        KernelFamily::Constant,
    ];

    #[test]
    fn closed_form_values() {
        let g = KernelSpec::gaussian(1.0, 1).unwrap();
        assert_eq!(g.eval(&[0.0], &[0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            g.eval(&[0.0], &[1.0]).unwrap(),
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        let c = KernelSpec::constant(2).unwrap();
        assert_eq!(c.eval(&[3.0, -1.0], &[100.0, 7.0]).unwrap(), 1.0);
        let l = KernelSpec::new(KernelFamily::Laplace, 2.0, 1).unwrap();
        assert_abs_diff_eq!(l.eval(&[0.0], &[1.0]).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        let rq = KernelSpec::new(KernelFamily::RationalQuadratic, 1.0, 1).unwrap();
        assert_abs_diff_eq!(rq.eval(&[0.0], &[1.0]).unwrap(), 1.0 / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::gaussian(0.0, 1).is_err());
        assert!(KernelSpec::gaussian(-1.0, 1).is_err());
        assert!(KernelSpec::gaussian(1.0, 0).is_err());
        assert!(KernelSpec::new(KernelFamily::Constant, 0.0, 1).is_ok());
        let g = KernelSpec::gaussian(1.0, 2).unwrap();
        assert!(matches!(
            g.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn gram_examples() {
        let g = KernelSpec::gaussian(1.0, 1).unwrap();
        assert!(gram(&g, &[]).is_err());
        let one = gram(&g, &[vec![0.3]]).unwrap();
        assert_eq!(one[(0, 0)], 1.0);
        let two = gram(&g, &[vec![0.0], vec![1.0]]).unwrap();
        let e = (-0.5f64).exp();
        assert_eq!(two, DMatrix::from_row_slice(2, 2, &[1.0, e, e, 1.0]));
        for fam in FAMILIES {
            let k = KernelSpec::new(fam, 0.7, 1).unwrap();
            let dup = gram(&k, &[vec![0.2], vec![0.2]]).unwrap();
            assert!(dup.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn gram_is_psd_for_random_point_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..200 {
            let fam = FAMILIES[trial % 4];
            let d = 1 + trial % 3;
            let n = rng.random_range(1..=30);
            let h = rng.random_range(0.05..2.0);
            let spec = KernelSpec::new(fam, h, d).unwrap();
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let g = gram(&spec, &pts).unwrap();
            let max_diag = (0..n).map(|i| g[(i, i)]).fold(0.0, f64::max);
            let min_eig = sym_eig(&g).unwrap().values[0];
            assert!(min_eig >= -1e-8 * n as f64 * max_diag, "{fam:?} n={n}: {min_eig}");
        }
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let spec: KernelSpec = serde_json::from_str(r#"{"family":"gaussian","bandwidth":0.25,"dim":1}"#).unwrap();
        assert_eq!(spec, KernelSpec::gaussian(0.25, 1).unwrap());
        let back: KernelSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"laplace","bandwidth":-1}"#).is_err());
        assert!(serde_json::from_str::<KernelSpec>(r#"{"family":"cosine","bandwidth":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(fam in 0usize..4, h in 0.01f64..5.0,
                                 x in proptest::collection::vec(-3.0f64..3.0, 2),
                                 y in proptest::collection::vec(-3.0f64..3.0, 2)) {
            let k = KernelSpec::new(FAMILIES[fam], h, 2).unwrap();
            let kxy = k.eval(&x, &y).unwrap();
            prop_assert_eq!(kxy, k.eval(&y, &x).unwrap());
            prop_assert!((0.0..=1.0).contains(&kxy));
            prop_assert_eq!(k.eval(&x, &x).unwrap(), 1.0);
        }

        #[test]
        fn gram_permutation_equivariant(seed in 0u64..1000, n in 2usize..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = KernelSpec::gaussian(0.4, 1).unwrap();
            let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
            let perm: Vec<usize> = (0..n).rev().collect();
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
            let g = gram(&k, &pts).unwrap();
            let gp = gram(&k, &permuted).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(gp[(i, j)], g[(perm[i], perm[j])]);
                }
            }
        }
    }
}
