//! Gram matrices carrying the nonzero spectrum of the `n^k`-dimensional models.
//!
//! With `Y` the `N x m` matrix of (normalized) tensor samples and `L = diag(tau)`,
//! `Y L Y*` and `L^{1/2} Y* Y L^{1/2}` share their nonzero eigenvalues, so the
//! `m x m` matrix with entries `sqrt(tau_a tau_b) <Y_a, Y_b>` is all we need.
//! Tensor inner products are products of per-level inner products.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{ModelKind, TauScheme};
use crate::error::{Error, Result};
use crate::sampler::{inner, norm_profile, BaseSample};

/// Largest ambient dimension [`materialize_dense`] accepts.
pub const DENSE_CAP: u64 = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    model: ModelKind,
    entries: DMatrix<Complex64>,
}

impl GramMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn get(&self, alpha: usize, beta: usize) -> Complex64 {
        self.entries[(alpha, beta)]
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &GramMatrix) -> f64 {
        assert_eq!(self.order(), other.order(), "Gram orders differ");
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_tau(sample: &BaseSample, tau: &TauScheme) -> Result<()> {
    if tau.len() != sample.m() {
        return Err(Error::ShapeMismatch(format!(
            "tau has {} values for {} samples",
            tau.len(),
            sample.m()
        )));
    }
    Ok(())
}

/// Fills the upper triangle with `off_diag(a, b)` for `a < b` (rows in
/// parallel), mirrors it by conjugation and sets the diagonal.
fn assemble<F, D>(m: usize, model: ModelKind, off_diag: F, diag: D) -> GramMatrix
where
    F: Fn(usize, usize) -> Complex64 + Sync,
    D: Fn(usize) -> f64,
{
    let rows: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|a| (a + 1..m).map(|b| off_diag(a, b)).collect())
        .collect();
    let mut entries = DMatrix::from_element(m, m, Complex64::new(0.0, 0.0));
    for (a, row) in rows.into_iter().enumerate() {
        entries[(a, a)] = Complex64::new(diag(a), 0.0);
        for (offset, value) in row.into_iter().enumerate() {
            let b = a + 1 + offset;
            entries[(a, b)] = value;
            entries[(b, a)] = value.conj();
        }
    }
    GramMatrix { model, entries }
}

/// Correlation-model Gram: `sqrt(tau_a tau_b) prod_l rho_l(a, b)` with
/// `rho_l = <y_a, y_b> / (||y_a|| ||y_b||)`. Each factor has modulus at most
/// one, so the product neither overflows nor underflows prematurely in `k`.
/// The diagonal is exactly `tau`.
pub fn build_correlation_gram(sample: &BaseSample, tau: &TauScheme) -> Result<GramMatrix> {
    check_tau(sample, tau)?;
    let profile = norm_profile(sample)?;
    let t = tau.values();
    let k = sample.k();
    Ok(assemble(
        sample.m(),
        ModelKind::Correlation,
        |a, b| {
            let mut value = Complex64::new((t[a] * t[b]).sqrt(), 0.0);
            for level in 0..k {
                let denom =
                    (profile.level_sq_norm(a, level) * profile.level_sq_norm(b, level)).sqrt();
                value *= sample.level_inner(a, b, level) / denom;
            }
            value
        },
        |a| t[a],
    ))
}

/// Covariance-model Gram: `sqrt(tau_a tau_b) prod_l <y_a, y_b> / n`, which is
/// `sqrt(tau_a tau_b) <Y_a, Y_b> / n^k`.
pub fn build_covariance_gram(sample: &BaseSample, tau: &TauScheme) -> Result<GramMatrix> {
    check_tau(sample, tau)?;
    let profile = norm_profile(sample)?;
    let t = tau.values();
    let k = sample.k();
    let n = sample.n() as f64;
    Ok(assemble(
        sample.m(),
        ModelKind::Covariance,
        |a, b| {
            let mut value = Complex64::new((t[a] * t[b]).sqrt(), 0.0);
            for level in 0..k {
                value *= sample.level_inner(a, b, level) / n;
            }
            value
        },
        |a| {
            profile
                .level_sq_norms(a)
                .iter()
                .fold(t[a], |acc, sq| acc * (sq / n))
        },
    ))
}

pub fn build_gram(sample: &BaseSample, tau: &TauScheme, model: ModelKind) -> Result<GramMatrix> {
    match model {
        ModelKind::Correlation => build_correlation_gram(sample, tau),
        ModelKind::Covariance => build_covariance_gram(sample, tau),
    }
}

/// Gram of the product-state model: every level vector is first scaled to the
/// unit sphere, then entries are `sqrt(tau_a tau_b) prod_l <u_a, u_b>` with no
/// further normalization. The diagonal is computed, not assigned.
pub fn build_unit_level_gram(sample: &BaseSample, tau: &TauScheme) -> Result<GramMatrix> {
    check_tau(sample, tau)?;
    let (m, k, n) = sample.shape();
    let mut units = Vec::with_capacity(m * k * n);
    for a in 0..m {
        for level in 0..k {
            let v = sample.level(a, level);
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateSample { alpha: a, level });
            }
            units.extend(v.iter().map(|z| z / norm));
        }
    }
    let unit = |a: usize, level: usize| &units[(a * k + level) * n..(a * k + level + 1) * n];
    let t = tau.values();
    let pair = |a: usize, b: usize| {
        (0..k).fold(Complex64::new((t[a] * t[b]).sqrt(), 0.0), |acc, level| {
            acc * inner(unit(a, level), unit(b, level))
        })
    };
    Ok(assemble(m, ModelKind::Correlation, pair, |a| pair(a, a).re))
}

/// Explicit `N x N` model matrix, built from the materialized tensors
/// `(Y_a)_{(j_1..j_k)} = prod_l (y_a^(l))_{j_l}` (first level most significant).
/// Test oracle for the Gram path; `N` is capped at [`DENSE_CAP`].
pub fn materialize_dense(
    sample: &BaseSample,
    tau: &TauScheme,
    model: ModelKind,
) -> Result<DMatrix<Complex64>> {
    check_tau(sample, tau)?;
    let (m, k, n) = sample.shape();
    let ambient = (n as u64)
        .checked_pow(k as u32)
        .filter(|&d| d <= DENSE_CAP)
        .ok_or(Error::DenseCap {
            ambient: (n as f64).powi(k as i32) as u64,
            cap: DENSE_CAP,
        })? as usize;
    let mut dense = DMatrix::from_element(ambient, ambient, Complex64::new(0.0, 0.0));
    for a in 0..m {
        let mut tensor = vec![Complex64::new(1.0, 0.0)];
        for level in 0..k {
            let y = sample.level(a, level);
            tensor = tensor
                .iter()
                .flat_map(|t| y.iter().map(move |v| t * v))
                .collect();
        }
        let weight = match model {
            ModelKind::Correlation => {
                let sq: f64 = tensor.iter().map(|z| z.norm_sqr()).sum();
                if sq == 0.0 {
                    return Err(Error::DegenerateSample { alpha: a, level: 0 });
                }
                tau.values()[a] / sq
            }
            ModelKind::Covariance => tau.values()[a] / ambient as f64,
        };
        for i in 0..ambient {
            for j in 0..ambient {
                dense[(i, j)] += tensor[i] * tensor[j].conj() * weight;
            }
        }
    }
    Ok(dense)
}
