//! Distances between distribution functions, plus the column-normalization
//! identity and the Lévy perturbation bound that tie the correlation model to
//! the covariance model.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mp::MpLaw;
use crate::spectrum::{esd, hermitian_eigenvalues, SpectralDistribution};

/// Number of grid points used to discretize an analytic MP CDF.
pub const MP_GRID_POINTS: usize = 4096;
/// Margin added on both sides of the MP support for the grid.
pub const MP_GRID_MARGIN: f64 = 0.1;
/// Absolute tolerance of the Lévy bisection.
pub const LEVY_TOL: f64 = 1e-9;

/// Right-continuous step distribution function: `F(x) = cumulative[i]` for
/// `breakpoints[i] <= x < breakpoints[i + 1]`, zero before the first
/// breakpoint and one from the last.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    breakpoints: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EmpiricalCdf {
    /// Checks that breakpoints are strictly increasing, cumulative values are
    /// nondecreasing in `[0, 1]` and the last one is 1.
    pub fn from_steps(breakpoints: Vec<f64>, cumulative: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != cumulative.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} breakpoints, {} cumulative values",
                breakpoints.len(),
                cumulative.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParam(
                "breakpoints must strictly increase".into(),
            ));
        }
        if cumulative.windows(2).any(|w| w[1] < w[0])
            || cumulative.iter().any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidParam(
                "cumulative values must be nondecreasing in [0, 1]".into(),
            ));
        }
        if (cumulative[cumulative.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(
                "cumulative values must end at 1".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            cumulative,
        })
    }

    /// Point masses `(location, mass)` with total mass 1.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut masses: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match breakpoints.last() {
                Some(&last) if last == x => *masses.last_mut().unwrap() += w,
                _ => {
                    breakpoints.push(x);
                    masses.push(w);
                }
            }
        }
        let mut total = 0.0;
        let mut cumulative: Vec<f64> = masses
            .iter()
            .map(|w| {
                total += w;
                total
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            if (*last - 1.0).abs() <= 1e-9 {
                *last = 1.0;
            }
        }
        for v in cumulative.iter_mut() {
            *v = v.min(1.0);
        }
        Self::from_steps(breakpoints, cumulative)
    }

    /// Equal-weight samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let w = 1.0 / samples.len() as f64;
        Self::from_atoms(samples.iter().map(|&x| (x, w)))
    }

    /// ESD including the implied zero eigenvalues. Cumulative values are
    /// exact counts divided by `N`.
    pub fn from_spectral(s: &SpectralDistribution) -> Self {
        let n = s.ambient_dim() as f64;
        let mut breakpoints = Vec::new();
        let mut counts: Vec<u64> = Vec::new();
        let zeros = s.implied_zeros();
        if zeros > 0 {
            breakpoints.push(0.0);
            counts.push(zeros);
        }
        for &a in s.ambient_atoms() {
            match breakpoints.last() {
                Some(&last) if last == a => *counts.last_mut().unwrap() += 1,
                _ => {
                    breakpoints.push(a);
                    counts.push(1);
                }
            }
        }
        let mut running = 0u64;
        let cumulative = counts
            .iter()
            .map(|c| {
                running += c;
                running as f64 / n
            })
            .collect();
        Self {
            breakpoints,
            cumulative,
        }
    }

    /// MP CDF sampled on [`MP_GRID_POINTS`] evenly spaced points spanning the
    /// support widened by [`MP_GRID_MARGIN`], plus the atom at zero.
    pub fn from_mp(law: &MpLaw) -> Self {
        Self::from_mp_with(law, MP_GRID_POINTS)
    }

    pub fn from_mp_with(law: &MpLaw, points: usize) -> Self {
        let lo = law.lambda_minus() - MP_GRID_MARGIN;
        let hi = law.lambda_plus() + MP_GRID_MARGIN;
        let mut xs: Vec<f64> = law.grid(lo, hi, points).into_iter().map(|g| g.x).collect();
        if law.atom_mass() > 0.0 {
            xs.push(0.0);
            xs.sort_by(f64::total_cmp);
            xs.dedup();
        }
        let mut breakpoints = Vec::with_capacity(xs.len());
        let mut cumulative: Vec<f64> = Vec::with_capacity(xs.len());
        for x in xs {
            let v = law.cdf(x);
            if v <= 0.0 {
                continue;
            }
            // merge flat stretches so breakpoints only mark increases
            if cumulative.last().is_some_and(|&last| v <= last) {
                continue;
            }
            breakpoints.push(x);
            cumulative.push(v);
        }
        Self {
            breakpoints,
            cumulative,
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `F(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// `F(x-)`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < x);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }
}

/// `sup_x |F(x) - G(x)|`. Both functions are constant between consecutive
/// merged breakpoints, so the right values at every breakpoint (which also
/// give every left limit) cover the supremum exactly.
pub fn ks_distance(f: &EmpiricalCdf, g: &EmpiricalCdf) -> f64 {
    merged(f, g)
        .map(|x| (f.eval(x) - g.eval(x)).abs())
        .fold(0.0, f64::max)
}

fn merged<'a>(f: &'a EmpiricalCdf, g: &'a EmpiricalCdf) -> impl Iterator<Item = f64> + 'a {
    f.breakpoints.iter().chain(&g.breakpoints).copied()
}

/// Lévy distance `inf{e > 0 : F(x - e) - e <= G(x) <= F(x + e) + e for all x}`,
/// by bisection on `e` to [`LEVY_TOL`]; returns exactly 0 when `F = G`.
pub fn levy_distance(f: &EmpiricalCdf, g: &EmpiricalCdf) -> f64 {
    if levy_feasible(f, g, 0.0) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > LEVY_TOL {
        let mid = 0.5 * (lo + hi);
        if levy_feasible(f, g, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Whether `eps` satisfies both Lévy inequalities at every `x`.
///
/// `F(x - eps) - G(x)` is a difference of right-continuous step functions,
/// constant on the intervals cut by the breakpoints of `G` and the breakpoints
/// of `F` shifted right by `eps`, so its supremum is attained at one of those
/// points. Likewise `G(x) - F(x + eps)` with `F`'s breakpoints shifted left.
pub fn levy_feasible(f: &EmpiricalCdf, g: &EmpiricalCdf, eps: f64) -> bool {
    const SLACK: f64 = 1e-15;
    // lower: F(x - eps) - eps <= G(x)
    for (i, &b) in f.breakpoints.iter().enumerate() {
        if f.cumulative[i] - eps > g.eval(b + eps) + SLACK {
            return false;
        }
    }
    for &b in &g.breakpoints {
        if f.eval(b - eps) - eps > g.eval(b) + SLACK {
            return false;
        }
    }
    // upper: G(x) <= F(x + eps) + eps
    for &b in &g.breakpoints {
        if g.eval(b) > f.eval(b + eps) + eps + SLACK {
            return false;
        }
    }
    for (i, &b) in f.breakpoints.iter().enumerate() {
        // x = b - eps, where F(x + eps) = F(b)
        if g.eval(b - eps) > f.cumulative[i] + eps + SLACK {
            return false;
        }
    }
    true
}

/// `(1/N) sum atoms^q`; implied zeros contribute nothing for `q >= 1`.
pub fn empirical_moment(s: &SpectralDistribution, q: u32) -> f64 {
    assert!((1..=20).contains(&q), "moment order must be in 1..=20");
    s.ambient_atoms()
        .iter()
        .map(|a| a.powi(q as i32))
        .sum::<f64>()
        / s.ambient_dim() as f64
}

/// Both sides of the column-normalization trace identity
///
/// ```text
/// Tr((A/sqrt n - B) L (A/sqrt n - B)*)
///   = sum_j L_jj (||A_j||^2/n - 1) - 2 sum_j L_jj (||A_j||/sqrt n - 1)
/// ```
///
/// for an `n x p` matrix `A`, `B` its column-normalized copy and `L` a
/// `p x p` positive diagonal.
pub fn column_normalization_sides(a: &DMatrix<Complex64>, lambda: &[f64]) -> Result<(f64, f64)> {
    let (n, p) = a.shape();
    if lambda.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "diagonal has {} entries for {p} columns",
            lambda.len()
        )));
    }
    let norms: Vec<f64> = a.column_iter().map(|col| col.norm()).collect();
    if let Some(j) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let root_n = (n as f64).sqrt();
    let mut b = a.clone();
    for (j, mut col) in b.column_iter_mut().enumerate() {
        col /= Complex64::new(norms[j], 0.0);
    }
    let d = a.map(|z| z / root_n) - b;
    let l = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        p,
        lambda.iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    let lhs = (&d * l * d.adjoint()).trace().re;
    let rhs = lambda
        .iter()
        .zip(&norms)
        .map(|(w, v)| w * (v * v / n as f64 - 1.0) - 2.0 * w * (v / root_n - 1.0))
        .sum();
    Ok((lhs, rhs))
}

/// Both sides of the Lévy-distance perturbation bound for `p x n` matrices:
/// `L^4(F^{AA*}, F^{BB*})` and `(2/p^2) Tr((A-B)(A-B)*) Tr(AA* + BB*)`.
pub fn levy_perturbation_sides(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Result<(f64, f64)> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let p = a.nrows();
    let gram = |m: &DMatrix<Complex64>| -> Result<SpectralDistribution> {
        let mut h = m * m.adjoint();
        symmetrize(&mut h);
        let eigs = hermitian_eigenvalues(&h)?;
        esd(&eigs, p as u64)
    };
    let fa = EmpiricalCdf::from_spectral(&gram(a)?);
    let fb = EmpiricalCdf::from_spectral(&gram(b)?);
    let lhs = levy_distance(&fa, &fb).powi(4);
    let diff = a - b;
    let tr_diff = diff.norm_squared();
    let tr_sum = a.norm_squared() + b.norm_squared();
    let rhs = 2.0 / (p * p) as f64 * tr_diff * tr_sum;
    Ok((lhs, rhs))
}

/// Replaces `h` by `(h + h*) / 2`.
fn symmetrize(h: &mut DMatrix<Complex64>) {
    let n = h.nrows();
    for i in 0..n {
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
    }
}
