//! Hermitian eigenvalues and empirical spectral distributions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gram::GramMatrix;

/// Relative Hermitian-symmetry tolerance accepted by the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Residual tolerance `||G v - lambda v|| <= RESIDUAL_TOL ||G||`.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Eigenvalues below `ZERO_TOL * max(1, largest)` count as zero.
pub const ZERO_TOL: f64 = 1e-9;

pub fn eigenvalues(g: &GramMatrix) -> Result<Vec<f64>> {
    hermitian_eigenvalues(g.entries())
}

/// All eigenvalues of a Hermitian matrix, ascending. Three eigenpairs (lowest,
/// middle, highest) are spot-checked against the residual tolerance.
pub fn hermitian_eigenvalues(a: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    let dim = a.nrows();
    if a.ncols() != dim {
        return Err(Error::ShapeMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            dim,
            a.ncols()
        )));
    }
    if dim == 0 {
        return Ok(Vec::new());
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let deviation = (0..dim)
        .flat_map(|i| (i..dim).map(move |j| (i, j)))
        .map(|(i, j)| (a[(i, j)] - a[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NonHermitian { deviation });
    }

    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 100 * dim + 1000)
        .ok_or(Error::NoConvergence)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let norm = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tolerance = RESIDUAL_TOL * norm;
    for &idx in [order[0], order[dim / 2], order[dim - 1]].iter() {
        let lambda = eig.eigenvalues[idx];
        let v: DVector<Complex64> = eig.eigenvectors.column(idx).into_owned();
        let residual = (a * &v - &v * Complex64::new(lambda, 0.0)).norm();
        if residual > tolerance && residual > f64::MIN_POSITIVE {
            return Err(Error::EigenResidual {
                residual,
                tolerance,
            });
        }
    }
    Ok(order.into_iter().map(|i| eig.eigenvalues[i]).collect())
}

/// Empirical spectral distribution of an `N x N` matrix known through the `m`
/// eigenvalues of its Gram matrix. When `m <= N` the remaining `N - m`
/// eigenvalues are structural zeros (`zero_mass`); when `m > N` the `m - N`
/// smallest atoms are the structural zeros and are excluded from the ESD.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDistribution {
    atoms: Vec<f64>,
    ambient_dim: u64,
    zero_mass: f64,
}

impl SpectralDistribution {
    /// All `m` atoms, ascending and clamped at zero.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// The atoms that are eigenvalues of the ambient matrix (at most `N`).
    pub fn ambient_atoms(&self) -> &[f64] {
        let m = self.atoms.len() as u64;
        let skip = m.saturating_sub(self.ambient_dim) as usize;
        &self.atoms[skip..]
    }

    pub fn ambient_dim(&self) -> u64 {
        self.ambient_dim
    }

    /// `(N - m) / N` when `m <= N`, else 0.
    pub fn zero_mass(&self) -> f64 {
        self.zero_mass
    }

    /// Number of implied zero eigenvalues beyond the stored atoms.
    pub fn implied_zeros(&self) -> u64 {
        self.ambient_dim.saturating_sub(self.atoms.len() as u64)
    }

    /// `F(x) = (#{atoms <= x} + (N - m) 1{x >= 0}) / N`.
    pub fn cdf(&self, x: f64) -> f64 {
        let atoms = self.ambient_atoms();
        let below = atoms.partition_point(|&a| a <= x) as f64;
        let zeros = if x >= 0.0 {
            self.implied_zeros() as f64
        } else {
            0.0
        };
        (below + zeros) / self.ambient_dim as f64
    }

    pub fn largest(&self) -> f64 {
        self.atoms.last().copied().unwrap_or(0.0)
    }
}

/// Builds the ESD from eigenvalues of the Gram matrix and the ambient
/// dimension `N`. Small negative eigenvalues are clamped to zero.
pub fn esd(eigs: &[f64], ambient_dim: u64) -> Result<SpectralDistribution> {
    if ambient_dim == 0 {
        return Err(Error::InvalidParam("ambient dimension must be >= 1".into()));
    }
    let mut atoms = eigs.to_vec();
    atoms.sort_by(f64::total_cmp);
    let largest = atoms.last().copied().unwrap_or(0.0);
    let tolerance = ZERO_TOL * largest.max(1.0);
    let mut clamped = 0usize;
    for a in atoms.iter_mut() {
        if *a < 0.0 {
            if *a < -tolerance {
                return Err(Error::NegativeEigenvalue {
                    value: *a,
                    tolerance,
                });
            }
            *a = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::debug!("clamped {clamped} slightly negative eigenvalues to zero");
    }
    let m = atoms.len() as u64;
    if m > ambient_dim {
        let expected = (m - ambient_dim) as usize;
        if let Some(&value) = atoms[..expected].iter().find(|&&a| a > tolerance) {
            return Err(Error::RankBound { expected, value });
        }
    }
    let zero_mass = if m <= ambient_dim {
        (ambient_dim - m) as f64 / ambient_dim as f64
    } else {
        0.0
    };
    Ok(SpectralDistribution {
        atoms,
        ambient_dim,
        zero_mass,
    })
}

/// Eigenvalues above the zero threshold `ZERO_TOL * max(1, largest)`.
pub fn nonzero_eigenvalues(eigs: &[f64]) -> Vec<f64> {
    let largest = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = ZERO_TOL * largest.max(1.0);
    let mut out: Vec<f64> = eigs.iter().copied().filter(|&e| e > threshold).collect();
    out.sort_by(f64::total_cmp);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::aux_rng;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Number of eigenvalues of `a` below `x`: by Sylvester's law of inertia
    /// it equals the number of negative pivots in an LDL* elimination of
    /// `a - x I`.
    fn count_below(a: &DMatrix<Complex64>, x: f64) -> usize {
        let n = a.nrows();
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= c(x, 0.0);
        }
        let mut negatives = 0;
        for p in 0..n {
            let mut pivot = m[(p, p)].re;
            if pivot == 0.0 {
                pivot = -1e-300;
            }
            if pivot < 0.0 {
                negatives += 1;
            }
            for i in p + 1..n {
                let factor = m[(i, p)] / pivot;
                for j in p + 1..n {
                    let update = factor * m[(p, j)];
                    m[(i, j)] -= update;
                }
            }
        }
        negatives
    }

    fn bisection_eigenvalues(a: &DMatrix<Complex64>) -> Vec<f64> {
        let n = a.nrows();
        let bound = a.iter().map(|z| z.norm()).sum::<f64>() + 1.0;
        (0..n)
            .map(|idx| {
                let (mut lo, mut hi) = (-bound, bound);
                while hi - lo > 1e-13 {
                    let mid = 0.5 * (lo + hi);
                    if count_below(a, mid) > idx {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect()
    }

    fn random_hermitian(dim: usize, index: u64) -> DMatrix<Complex64> {
        let mut rng = aux_rng(99, 1, index);
        let mut a = DMatrix::from_element(dim, dim, c(0.0, 0.0));
        for i in 0..dim {
            a[(i, i)] = c(rng.random_range(-2.0..2.0), 0.0);
            for j in i + 1..dim {
                let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![
            c(3.0, 0.0),
            c(1.0, 0.0),
            c(2.0, 0.0),
        ]));
        assert_eq!(hermitian_eigenvalues(&a).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn rank_one_two_by_two() {
        let a = DMatrix::from_element(2, 2, c(1.0, 0.0));
        let e = hermitian_eigenvalues(&a).unwrap();
        assert!(e[0].abs() < 1e-15 && (e[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn matches_bisection_oracle() {
        for index in 0..5 {
            let a = random_hermitian(5, index);
            let fast = hermitian_eigenvalues(&a).unwrap();
            let slow = bisection_eigenvalues(&a);
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).abs() < 1e-8, "{fast:?} vs {slow:?}");
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = random_hermitian(4, 7);
        a[(0, 1)] += c(0.1, 0.0);
        assert!(matches!(
            hermitian_eigenvalues(&a),
            Err(Error::NonHermitian { .. })
        ));
    }

    #[test]
    fn esd_counting_example() {
        let s = esd(&[1.2, 0.9, 0.9], 4).unwrap();
        assert_eq!(s.zero_mass(), 0.25);
        assert_eq!(s.cdf(-1e-300), 0.0);
        assert_eq!(s.cdf(0.0), 0.25);
        assert_eq!(s.cdf(1.0), 0.75);
        assert_eq!(s.cdf(1.2), 1.0);
    }

    #[test]
    fn esd_full_rank_and_step() {
        let s = esd(&[1.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(s.zero_mass(), 0.0);
        assert_eq!(s.cdf(0.999), 0.0);
        assert_eq!(s.cdf(1.0), 1.0);
    }

    #[test]
    fn esd_clamps_and_rejects_negatives() {
        let s = esd(&[-1e-12, 0.5, 2.0], 5).unwrap();
        assert_eq!(s.atoms()[0], 0.0);
        assert!(matches!(
            esd(&[-1e-3, 0.5, 2.0], 5),
            Err(Error::NegativeEigenvalue { .. })
        ));
    }

    #[test]
    fn esd_rank_bound_when_m_exceeds_n() {
        let s = esd(&[0.0, 1e-14, 1.5, 2.5], 2).unwrap();
        assert_eq!(s.ambient_atoms(), &[1.5, 2.5]);
        assert_eq!(s.zero_mass(), 0.0);
        assert_eq!(s.cdf(2.0), 0.5);
        assert!(matches!(
            esd(&[0.0, 0.3, 1.5, 2.5], 2),
            Err(Error::RankBound { .. })
        ));
    }
}
