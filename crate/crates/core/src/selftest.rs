//! Property suite run by the `selftest` subcommand. Every check reports its
//! worst residual against a tolerance.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{make_tau, EntryLaw, ModelKind, ModelParams, TauSpec};
use crate::error::Result;
use crate::gram::{build_correlation_gram, build_covariance_gram, build_gram, materialize_dense};
use crate::metrics::{
    column_normalization_sides, ks_distance, levy_distance, levy_perturbation_sides, EmpiricalCdf,
    MP_GRID_POINTS,
};
use crate::mp::{integrate_against, MpLaw};
use crate::rng::aux_rng;
use crate::sampler::{norm_moment_check, sample_base};
use crate::spectrum::{eigenvalues, esd, hermitian_eigenvalues, nonzero_eigenvalues};

/// `c` values used by the MP checks.
pub const MP_C_GRID: [f64; 5] = [0.1, 0.25, 0.5, 0.9, 1.0];

// purpose tags for auxiliary random streams
const NORMALIZATION_STREAM: u64 = 11;
const PERTURBATION_STREAM: u64 = 12;
const DISTANCE_STREAM: u64 = 13;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `max_residual <= tolerance`.
    pub fn bounded(name: &str, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: max_residual <= tolerance,
            max_residual,
            tolerance,
        }
    }

    fn failed(name: &str, err: impl fmt::Display) -> Self {
        log::error!("{name}: {err}");
        Self {
            name: name.to_string(),
            passed: false,
            max_residual: f64::NAN,
            tolerance: f64::NAN,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .checks
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(
            f,
            "{:<width$}  status  {:>12}  {:>12}",
            "check", "max_residual", "tolerance"
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<width$}  {:<6}  {:>12.3e}  {:>12.3e}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.max_residual,
                c.tolerance
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn run(name: &str, check: impl FnOnce() -> Result<Check>) -> Check {
    check().unwrap_or_else(|e| Check::failed(name, e))
}

/// Runs the full suite with base seed `seed`.
pub fn run_selftest(seed: u64) -> SelfTestReport {
    let seeds = [seed, seed.wrapping_add(1), seed.wrapping_add(2)];
    let checks = vec![
        run("gram oracle", || gram_oracle_check(&seeds)),
        run("trace identity", || trace_identity_check(&seeds)),
        run("column normalization identity", || {
            column_normalization_check(seed, 100)
        }),
        run("levy perturbation bound", || {
            levy_perturbation_check(seed, 200)
        }),
        run("norm moments, unit circle", || {
            let p = ModelParams::new(10, 3, 0.001).with_law(EntryLaw::UnitCircle);
            norm_moment_case("norm moments, unit circle", p.with_seed(seed))
        }),
        run("norm moments, complex gaussian", || {
            let p = ModelParams::new(10, 3, 0.001);
            norm_moment_case("norm moments, complex gaussian", p.with_seed(seed))
        }),
        run("norm moments, k = 1", || {
            let p = ModelParams::new(10, 1, 0.1).with_law(EntryLaw::RealGaussian);
            norm_moment_case("norm moments, k = 1", p.with_seed(seed))
        }),
        run("entry law moments", || entry_law_check(seed)),
        run("mp normalization", || {
            mp_normalization_check_with(mp_density_reference)
        }),
        run("mp first moment", mp_first_moment_check),
        run("mp cdf monotone", mp_cdf_monotone_check),
        run("mp grid refinement", || mp_grid_doubling_check(seed)),
        run("unit modulus collapse", || {
            unit_modulus_collapse_check(&seeds)
        }),
        run("levy below ks", || levy_below_ks_check(seed, 100)),
    ];
    SelfTestReport { checks }
}

/// Nonzero spectrum of the dense `n^k` matrix against the Gram path for
/// `(n, k, m) in {2,3} x {1,2,3} x {1..5}`, both models, every seed.
pub fn gram_oracle_check(seeds: &[u64]) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &seed in seeds {
        for n in [2u64, 3] {
            for k in [1u32, 2, 3] {
                for m in 1..=5u64 {
                    let ambient = n.pow(k);
                    let params = ModelParams::new(n, k, m as f64 / ambient as f64).with_seed(seed);
                    let sample = sample_base(&params, 0)?;
                    let tau = make_tau(&params.tau, sample.m())?;
                    for model in [ModelKind::Correlation, ModelKind::Covariance] {
                        let gram =
                            nonzero_eigenvalues(&eigenvalues(&build_gram(&sample, &tau, model)?)?);
                        let dense = nonzero_eigenvalues(&hermitian_eigenvalues(
                            &materialize_dense(&sample, &tau, model)?,
                        )?);
                        if gram.len() != dense.len() {
                            return Ok(Check::bounded("gram oracle", f64::INFINITY, 1e-9));
                        }
                        for (a, b) in gram.iter().zip(&dense) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
        }
    }
    Ok(Check::bounded("gram oracle", worst, 1e-9))
}

/// Sum of correlation-model eigenvalues against `sum tau`, relative.
pub fn trace_identity_check(seeds: &[u64]) -> Result<Check> {
    let taus = [
        TauSpec::ConstantOne,
        TauSpec::TwoPoint {
            a: 1.0,
            b: 2.0,
            weight: 0.5,
        },
        TauSpec::TwoPoint {
            a: 0.5,
            b: 3.0,
            weight: 0.25,
        },
    ];
    let mut worst: f64 = 0.0;
    for &seed in seeds {
        for tau_spec in &taus {
            for (n, k, c) in [(2u64, 1u32, 1.0), (3, 2, 0.5), (4, 3, 0.2), (6, 2, 0.7)] {
                let params = ModelParams::new(n, k, c)
                    .with_seed(seed)
                    .with_tau(tau_spec.clone());
                let sample = sample_base(&params, 0)?;
                let tau = make_tau(tau_spec, sample.m())?;
                let eigs = eigenvalues(&build_correlation_gram(&sample, &tau)?)?;
                let total = tau.total();
                worst = worst.max((eigs.iter().sum::<f64>() - total).abs() / total);
            }
        }
    }
    Ok(Check::bounded("trace identity", worst, 1e-9))
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
}

/// Column-normalization identity on `instances` random complex `n x p`
/// matrices with `n in 2..=8`, `p in 1..=8`; residual scaled by `1 + |lhs|`.
pub fn column_normalization_check(seed: u64, instances: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = aux_rng(seed, NORMALIZATION_STREAM, i);
        let n = rng.random_range(2..=8usize);
        let p = rng.random_range(1..=8usize);
        let a = DMatrix::from_fn(n, p, |_, _| complex_gaussian(&mut rng));
        let lambda: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..3.0)).collect();
        let (lhs, rhs) = column_normalization_sides(&a, &lambda)?;
        worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    Ok(Check::bounded(
        "column normalization identity",
        worst,
        1e-10,
    ))
}

/// Lévy perturbation bound on `pairs` random complex `5 x 8` pairs. The
/// residual is `lhs - rhs`, which must stay below `1e-12`.
pub fn levy_perturbation_check(seed: u64, pairs: u64) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..pairs {
        let mut rng = aux_rng(seed, PERTURBATION_STREAM, i);
        let a = DMatrix::from_fn(5, 8, |_, _| complex_gaussian(&mut rng));
        // mix small and large perturbations so both regimes of the bound show up
        let scale = 10f64.powf(rng.random_range(-3.0..0.5));
        let b = DMatrix::from_fn(5, 8, |i, j| a[(i, j)] + complex_gaussian(&mut rng) * scale);
        let (lhs, rhs) = levy_perturbation_sides(&a, &b)?;
        worst = worst.max(lhs - rhs);
    }
    Ok(Check::bounded("levy perturbation bound", worst, 1e-12))
}

fn norm_moment_case(name: &str, params: ModelParams) -> Result<Check> {
    let report = norm_moment_check(&params, 10_000)?;
    // residual in standard errors; zero-variance laws must match exactly
    let z = report
        .second
        .z_score()
        .abs()
        .max(report.fourth.z_score().abs());
    let mut check = Check::bounded(name, z, 4.0);
    check.passed = report.passed();
    Ok(check)
}

/// Sample second and fourth absolute moments of every entry law over `10^5`
/// draws, in standard errors.
pub fn entry_law_check(seed: u64) -> Result<Check> {
    let draws = 100_000;
    let mut worst: f64 = 0.0;
    for law in EntryLaw::ALL {
        let mut rng = aux_rng(seed, 14, law.code() as u64);
        let sq: Vec<f64> = (0..draws)
            .map(|_| law.sample(&mut rng).norm_sqr())
            .collect();
        for (values, target) in [
            (sq.clone(), 1.0),
            (sq.iter().map(|v| v * v).collect::<Vec<_>>(), law.m4()),
        ] {
            let t = values.len() as f64;
            let mean = values.iter().sum::<f64>() / t;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
            let se = (var / t).sqrt();
            let z = if se < 1e-14 {
                if (mean - target).abs() < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (mean - target).abs() / se
            };
            worst = worst.max(z);
        }
    }
    Ok(Check::bounded("entry law moments", worst, 4.0))
}

fn mp_density_reference(law: &MpLaw, x: f64) -> f64 {
    law.density(x)
}

/// `|int density - (1 - atom)|` over [`MP_C_GRID`] for a given density,
/// so a corrupted density can be checked with the same machinery.
pub fn mp_normalization_check_with<D: Fn(&MpLaw, f64) -> f64 + Copy>(density: D) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for c in MP_C_GRID {
        let law = MpLaw::new(c)?;
        let mass = integrate_against(&law, density, |_| 1.0, law.lambda_plus());
        worst = worst.max((mass - (1.0 - law.atom_mass())).abs());
    }
    Ok(Check::bounded("mp normalization", worst, 1e-8))
}

pub fn mp_first_moment_check() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for c in MP_C_GRID {
        worst = worst.max((MpLaw::new(c)?.moment(1) - c).abs());
    }
    Ok(Check::bounded("mp first moment", worst, 1e-8))
}

/// Largest decrease of the CDF on a `10^4` point grid, together with
/// `|cdf(lambda_plus) - 1|`.
pub fn mp_cdf_monotone_check() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for c in MP_C_GRID {
        let law = MpLaw::new(c)?;
        let grid = law.grid(-0.5, law.lambda_plus() + 0.5, 10_000);
        for w in grid.windows(2) {
            worst = worst.max(w[0].cdf - w[1].cdf);
        }
        worst = worst.max((law.cdf(law.lambda_plus()) - 1.0).abs());
    }
    Ok(Check::bounded("mp cdf monotone", worst, 1e-8))
}

/// Change in KS and Lévy distances to MP when the reference grid doubles.
pub fn mp_grid_doubling_check(seed: u64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for c in [0.25, 0.5] {
        let params = ModelParams::new(12, 2, c).with_seed(seed);
        let report = params.validate()?;
        let sample = sample_base(&params, 0)?;
        let tau = make_tau(&params.tau, sample.m())?;
        let s = esd(
            &eigenvalues(&build_correlation_gram(&sample, &tau)?)?,
            report.ambient_dim,
        )?;
        let f = EmpiricalCdf::from_spectral(&s);
        let law = MpLaw::new(report.ratio())?;
        let coarse = EmpiricalCdf::from_mp_with(&law, MP_GRID_POINTS);
        let fine = EmpiricalCdf::from_mp_with(&law, 2 * MP_GRID_POINTS);
        worst = worst
            .max((ks_distance(&f, &coarse) - ks_distance(&f, &fine)).abs())
            .max((levy_distance(&f, &coarse) - levy_distance(&f, &fine)).abs());
    }
    Ok(Check::bounded("mp grid refinement", worst, 1e-4))
}

/// Largest entrywise difference between the two model Grams for
/// unit-modulus laws, with a non-constant tau.
pub fn unit_modulus_collapse_check(seeds: &[u64]) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &seed in seeds {
        for law in [EntryLaw::UnitCircle, EntryLaw::Rademacher] {
            let params = ModelParams::new(5, 2, 0.6)
                .with_law(law)
                .with_seed(seed)
                .with_tau(TauSpec::TwoPoint {
                    a: 1.0,
                    b: 2.0,
                    weight: 0.5,
                });
            let sample = sample_base(&params, 0)?;
            let tau = make_tau(&params.tau, sample.m())?;
            let corr = build_correlation_gram(&sample, &tau)?;
            let cov = build_covariance_gram(&sample, &tau)?;
            worst = worst.max(corr.max_abs_diff(&cov));
        }
    }
    Ok(Check::bounded("unit modulus collapse", worst, 0.0))
}

/// `levy - ks` over random pairs of small ESDs.
pub fn levy_below_ks_check(seed: u64, pairs: u64) -> Result<Check> {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..pairs {
        let mut rng = aux_rng(seed, DISTANCE_STREAM, i);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<EmpiricalCdf> {
            let len = rng.random_range(1..=12usize);
            let ambient = len as u64 + rng.random_range(0..4u64);
            let eigs: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..3.0)).collect();
            Ok(EmpiricalCdf::from_spectral(&esd(&eigs, ambient)?))
        };
        let f = draw(&mut rng)?;
        let g = draw(&mut rng)?;
        worst = worst.max(levy_distance(&f, &g) - ks_distance(&f, &g));
    }
    Ok(Check::bounded("levy below ks", worst, 1e-9))
}
