//! Experiment parameters, base-entry laws and tau weight sequences.
//!
//! Everything here is immutable once built. [`ModelParams::validate`] is the
//! single place where the derived dimensions (ambient dimension `N = n^k` and
//! sample count `m`) are computed, so every other module goes through it.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use crate::error::{Error, Result};

/// Largest ambient dimension that survives a round trip through an `f64`.
pub const MAX_AMBIENT_DIM: u64 = 1 << 53;

/// Ratio `k / n` above which a configuration is reported as outside the
/// `k = o(n)` regime. Only a warning.
pub const REGIME_WARNING_RATIO: f64 = 0.5;

/// Default constant `A` in the tau moment growth diagnostic `|m_q| <= A^q q^q`.
pub const DEFAULT_TAU_BOUND: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Rank-one summands normalized by the norm of each tensor sample.
    #[default]
    Correlation,
    /// Rank-one summands normalized by the ambient dimension (Wishart type).
    Covariance,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Correlation => "correlation",
            ModelKind::Covariance => "covariance",
        }
    }
}

/// Law of a single base-vector entry. All laws are centered with `E|x|^2 = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryLaw {
    /// Real and imaginary parts independent `N(0, 1/2)`.
    #[default]
    ComplexGaussian,
    /// Standard real Gaussian embedded in the complex field.
    RealGaussian,
    /// Uniform on `{-1, +1}`.
    Rademacher,
    /// Uniform on the unit circle of the complex plane.
    UnitCircle,
}

impl EntryLaw {
    pub const ALL: [EntryLaw; 4] = [
        EntryLaw::ComplexGaussian,
        EntryLaw::RealGaussian,
        EntryLaw::Rademacher,
        EntryLaw::UnitCircle,
    ];

    /// Fourth absolute moment `E|x|^4`.
    pub fn m4(self) -> f64 {
        match self {
            EntryLaw::ComplexGaussian => 2.0,
            EntryLaw::RealGaussian => 3.0,
            EntryLaw::Rademacher | EntryLaw::UnitCircle => 1.0,
        }
    }

    /// True when `|x| = 1` almost surely.
    pub fn unit_modulus(self) -> bool {
        matches!(self, EntryLaw::Rademacher | EntryLaw::UnitCircle)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Complex64 {
        match self {
            EntryLaw::ComplexGaussian => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
            }
            EntryLaw::RealGaussian => Complex64::new(rng.sample(StandardNormal), 0.0),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(-1.0, 0.0)
                }
            }
            EntryLaw::UnitCircle => {
                let theta = rng.random::<f64>() * TAU;
                Complex64::new(theta.cos(), theta.sin())
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EntryLaw::ComplexGaussian => "complexgaussian",
            EntryLaw::RealGaussian => "realgaussian",
            EntryLaw::Rademacher => "rademacher",
            EntryLaw::UnitCircle => "unitcircle",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            EntryLaw::ComplexGaussian => 0,
            EntryLaw::RealGaussian => 1,
            EntryLaw::Rademacher => 2,
            EntryLaw::UnitCircle => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|law| law.code() == code)
    }
}

/// Configured tau scheme, before it is materialized for a concrete `m`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TauSpec {
    #[default]
    ConstantOne,
    /// `floor(weight * m)` leading entries equal `a`, the rest equal `b`.
    TwoPoint {
        a: f64,
        b: f64,
        weight: f64,
    },
    ExplicitList {
        values: Vec<f64>,
    },
}

impl TauSpec {
    pub fn is_constant_one(&self) -> bool {
        matches!(self, TauSpec::ConstantOne)
    }

    fn check(&self) -> Result<()> {
        match self {
            TauSpec::ConstantOne => Ok(()),
            TauSpec::TwoPoint { a, b, weight } => {
                if !(a.is_finite() && *a > 0.0 && b.is_finite() && *b > 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "two-point tau values must be positive (a = {a}, b = {b})"
                    )));
                }
                if !(*weight > 0.0 && *weight < 1.0) {
                    return Err(Error::InvalidParam(format!(
                        "two-point tau weight must lie in (0, 1), got {weight}"
                    )));
                }
                Ok(())
            }
            TauSpec::ExplicitList { values } => {
                match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    Some(i) => Err(Error::InvalidParam(format!(
                        "tau[{i}] = {} is not positive",
                        values[i]
                    ))),
                    None => Ok(()),
                }
            }
        }
    }
}

/// A tau sequence materialized for a concrete sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct TauScheme {
    spec: TauSpec,
    values: Vec<f64>,
}

impl TauScheme {
    pub fn spec(&self) -> &TauSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Materializes a tau sequence of length `m`. No scheme uses randomness, so the
/// limiting moments are realized exactly.
pub fn make_tau(spec: &TauSpec, m: usize) -> Result<TauScheme> {
    if m == 0 {
        return Err(Error::InvalidParam("tau length must be at least 1".into()));
    }
    spec.check()?;
    let values = match spec {
        TauSpec::ConstantOne => vec![1.0; m],
        TauSpec::TwoPoint { a, b, weight } => {
            let first = (weight * m as f64).floor() as usize;
            (0..m).map(|i| if i < first { *a } else { *b }).collect()
        }
        TauSpec::ExplicitList { values } => {
            if values.len() != m {
                return Err(Error::InvalidParam(format!(
                    "explicit tau list has {} values, sample count is {m}",
                    values.len()
                )));
            }
            values.clone()
        }
    };
    Ok(TauScheme {
        spec: spec.clone(),
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TauMoment {
    pub value: f64,
    /// `A^q q^q` for the constant used.
    pub bound: f64,
    pub within_bound: bool,
}

/// `(1/m) sum tau^q` with the growth diagnostic at [`DEFAULT_TAU_BOUND`].
pub fn tau_moments(tau: &TauScheme, q: u32) -> TauMoment {
    tau_moments_with_bound(tau, q, DEFAULT_TAU_BOUND)
}

pub fn tau_moments_with_bound(tau: &TauScheme, q: u32, a: f64) -> TauMoment {
    assert!(q >= 1, "tau moment order must be at least 1");
    let m = tau.values.len() as f64;
    let value = tau.values.iter().map(|t| t.powi(q as i32)).sum::<f64>() / m;
    let bound = a.powi(q as i32) * (q as f64).powi(q as i32);
    TauMoment {
        value,
        bound,
        within_bound: value.abs() <= bound,
    }
}

fn default_replicas() -> u32 {
    1
}

/// Full configuration of one experiment point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u64,
    pub k: u32,
    pub c: f64,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub entry_law: EntryLaw,
    #[serde(default)]
    pub tau: TauSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
}

impl ModelParams {
    /// Correlation model, complex Gaussian entries, `tau = 1`, one replica.
    pub fn new(n: u64, k: u32, c: f64) -> Self {
        Self {
            n,
            k,
            c,
            model: ModelKind::Correlation,
            entry_law: EntryLaw::ComplexGaussian,
            tau: TauSpec::ConstantOne,
            seed: 0,
            replicas: 1,
        }
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn with_law(mut self, law: EntryLaw) -> Self {
        self.entry_law = law;
        self
    }

    pub fn with_tau(mut self, tau: TauSpec) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replicas(mut self, replicas: u32) -> Self {
        self.replicas = replicas;
        self
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        if self.n < 2 {
            return Err(Error::InvalidParam(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if self.k < 1 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::InvalidParam(format!(
                "c must be positive, got {}",
                self.c
            )));
        }
        if self.replicas < 1 {
            return Err(Error::InvalidParam("replicas must be >= 1".into()));
        }
        let ambient_dim = self
            .n
            .checked_pow(self.k)
            .filter(|&dim| dim <= MAX_AMBIENT_DIM)
            .ok_or(Error::DimensionOverflow {
                n: self.n,
                k: self.k,
            })?;
        let samples = (self.c * ambient_dim as f64 + 0.5).floor();
        if samples < 1.0 {
            return Err(Error::EmptySample {
                c: self.c,
                ambient: ambient_dim,
            });
        }
        if samples > MAX_AMBIENT_DIM as f64 {
            return Err(Error::InvalidParam(format!(
                "sample count {samples} too large"
            )));
        }
        let samples = samples as u64;
        self.tau.check()?;
        if let TauSpec::ExplicitList { values } = &self.tau {
            if values.len() as u64 != samples {
                return Err(Error::InvalidParam(format!(
                    "explicit tau list has {} values, sample count is {samples}",
                    values.len()
                )));
            }
        }
        let k_over_n = self.k as f64 / self.n as f64;
        Ok(ValidationReport {
            ambient_dim,
            samples,
            k_over_n,
            outside_regime: k_over_n > REGIME_WARNING_RATIO,
        })
    }
}

/// Derived quantities of a valid [`ModelParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValidationReport {
    /// `N = n^k`.
    pub ambient_dim: u64,
    /// `m = floor(c N + 1/2)`.
    pub samples: u64,
    pub k_over_n: f64,
    pub outside_regime: bool,
}

impl ValidationReport {
    pub fn m(&self) -> usize {
        self.samples as usize
    }

    /// Realized ratio `m / N`.
    pub fn ratio(&self) -> f64 {
        self.samples as f64 / self.ambient_dim as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn validate_examples() {
        let r = ModelParams::new(3, 4, 0.5).validate().unwrap();
        assert_eq!(r.ambient_dim, 81);
        assert_eq!(r.samples, 41);

        let err = ModelParams::new(2, 60, 1.0).validate().unwrap_err();
        assert!(matches!(err, Error::DimensionOverflow { n: 2, k: 60 }));

        let r = ModelParams::new(30, 2, 0.5).validate().unwrap();
        assert_eq!((r.ambient_dim, r.samples), (900, 450));
        assert!((r.k_over_n - 0.0667).abs() < 1e-4);
        assert!(!r.outside_regime);
    }

    #[test]
    fn validate_errors_and_warning() {
        assert!(matches!(
            ModelParams::new(4, 2, 0.0).validate(),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            ModelParams::new(4, 2, -1.0).validate(),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            ModelParams::new(4, 2, 0.01).validate(),
            Err(Error::EmptySample { .. })
        ));
        // 2^53 itself is accepted, 2^54 is not.
        assert!(ModelParams::new(2, 53, 1e-15).validate().is_ok());
        assert!(ModelParams::new(2, 54, 1e-15).validate().is_err());
        assert!(
            ModelParams::new(4, 3, 0.5)
                .validate()
                .unwrap()
                .outside_regime
        );
        let explicit = ModelParams::new(2, 1, 1.0).with_tau(TauSpec::ExplicitList {
            values: vec![1.0, 2.0, 3.0],
        });
        assert!(explicit.validate().is_err());
    }

    #[test]
    fn validate_is_pure() {
        let p = ModelParams::new(7, 3, 0.3).with_seed(9);
        assert_eq!(p.validate().unwrap(), p.validate().unwrap());
    }

    #[test]
    fn tau_moment_examples() {
        let one = make_tau(&TauSpec::ConstantOne, 17).unwrap();
        for q in 1..=20 {
            assert_eq!(tau_moments(&one, q).value, 1.0);
        }
        let two = make_tau(
            &TauSpec::TwoPoint {
                a: 1.0,
                b: 2.0,
                weight: 0.5,
            },
            4,
        )
        .unwrap();
        assert_eq!(tau_moments(&two, 3).value, 4.5);
        let list = make_tau(
            &TauSpec::ExplicitList {
                values: vec![1.0, 1.0, 4.0],
            },
            3,
        )
        .unwrap();
        let moment = tau_moments(&list, 2);
        assert_eq!(moment.value, 6.0);
        assert!(moment.within_bound);
        assert!(!tau_moments_with_bound(&list, 1, 0.5).within_bound);
    }

    #[test]
    fn make_tau_examples() {
        assert_eq!(
            make_tau(&TauSpec::ConstantOne, 5).unwrap().values(),
            &[1.0; 5]
        );
        let spec = TauSpec::TwoPoint {
            a: 1.0,
            b: 2.0,
            weight: 0.5,
        };
        assert_eq!(make_tau(&spec, 4).unwrap().values(), &[1.0, 1.0, 2.0, 2.0]);
        assert_eq!(
            make_tau(&spec, 5).unwrap().values(),
            &[1.0, 1.0, 2.0, 2.0, 2.0]
        );
        let bad = TauSpec::TwoPoint {
            a: 0.0,
            b: 2.0,
            weight: 0.5,
        };
        assert!(make_tau(&bad, 4).is_err());
    }

    #[test]
    fn law_moments_match_stored_values() {
        for law in EntryLaw::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let draws = 1_000_000;
            let (mut sum, mut sq, mut sq2) = (Complex64::new(0.0, 0.0), 0.0f64, 0.0f64);
            for _ in 0..draws {
                let x = law.sample(&mut rng);
                let a = x.norm_sqr();
                sum += x;
                sq += a;
                sq2 += a * a;
            }
            let d = draws as f64;
            let mean_sq = sq / d;
            let sd_sq = (sq2 / d - mean_sq * mean_sq).max(0.0).sqrt();
            // component-wise mean band uses the per-entry standard deviation (1)
            let band = 4.0 / d.sqrt();
            assert!((sum / d).re.abs() <= band, "{law:?} mean re");
            assert!((sum / d).im.abs() <= band, "{law:?} mean im");
            if law.unit_modulus() {
                assert!((mean_sq - 1.0).abs() < 1e-12);
                assert_eq!(law.m4(), 1.0);
            } else {
                assert!(
                    (mean_sq - 1.0).abs() <= 4.0 * sd_sq / d.sqrt(),
                    "{law:?} E|x|^2"
                );
                assert!((sq2 / d - law.m4()).abs() < 0.05, "{law:?} E|x|^4");
            }
        }
    }

    #[test]
    fn json_uses_lowercase_enums() {
        let p = ModelParams::new(10, 2, 0.5)
            .with_law(EntryLaw::UnitCircle)
            .with_tau(TauSpec::TwoPoint {
                a: 1.0,
                b: 2.0,
                weight: 0.5,
            });
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"unitcircle\""));
        assert!(json.contains("\"correlation\""));
        assert!(json.contains("\"twopoint\""));
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);

        let minimal: ModelParams = serde_json::from_str(r#"{"n": 5, "k": 2, "c": 0.5}"#).unwrap();
        assert_eq!(minimal, ModelParams::new(5, 2, 0.5));
    }
}
