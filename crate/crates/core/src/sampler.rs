//! Base-vector sampling and the per-level quantities derived from it.
//!
//! A tensor sample `Y_a = y_a^(1) ⊗ ... ⊗ y_a^(k)` is never formed. Inner
//! products and norms of tensor samples factor over levels:
//!
//! ```text
//! <Y_a, Y_b> = prod_l <y_a^(l), y_b^(l)>        ||Y_a||^2 = prod_l ||y_a^(l)||^2
//! ```
//!
//! so everything downstream works with the `m x k x n` array of base entries.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{EntryLaw, ModelParams};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Replica slot reserved for the norm-moment Monte Carlo streams.
const NORM_CHECK_REPLICA: u64 = u64::MAX - 1;

/// Base-vector entries for one replica, indexed `(alpha, level, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseSample {
    n: usize,
    k: usize,
    m: usize,
    seed: u64,
    replica: u64,
    law: EntryLaw,
    entries: Vec<Complex64>,
}

/// Draws the base vectors of `replica`. Entry block `(alpha, level)` comes from
/// the stream keyed by `(seed, replica, alpha, level)`.
pub fn sample_base(params: &ModelParams, replica: u64) -> Result<BaseSample> {
    let report = params.validate()?;
    let n = params.n as usize;
    let k = params.k as usize;
    let m = report.m();
    let law = params.entry_law;
    let mut entries = vec![Complex64::new(0.0, 0.0); m * k * n];
    entries
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(block, chunk)| {
            let (alpha, level) = (block / k, block % k);
            let mut rng = StreamKey::new(params.seed, replica, alpha as u64, level as u64).rng();
            for z in chunk.iter_mut() {
                *z = law.sample(&mut rng);
            }
        });
    Ok(BaseSample {
        n,
        k,
        m,
        seed: params.seed,
        replica,
        law,
        entries,
    })
}

impl BaseSample {
    /// Builds a sample from explicit level vectors, `levels[alpha][level]`.
    /// Claiming a unit-modulus law requires every entry to have modulus one.
    pub fn from_levels(law: EntryLaw, levels: &[Vec<Vec<Complex64>>]) -> Result<Self> {
        let m = levels.len();
        let k = levels.first().map_or(0, Vec::len);
        let n = levels.first().and_then(|l| l.first()).map_or(0, Vec::len);
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::ShapeMismatch("empty sample".into()));
        }
        let mut entries = Vec::with_capacity(m * k * n);
        for (alpha, sample) in levels.iter().enumerate() {
            if sample.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "sample {alpha} has {} levels, expected {k}",
                    sample.len()
                )));
            }
            for (level, v) in sample.iter().enumerate() {
                if v.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "vector ({alpha}, {level}) has length {}, expected {n}",
                        v.len()
                    )));
                }
                entries.extend_from_slice(v);
            }
        }
        Self::from_raw(n, k, m, 0, 0, law, entries)
    }

    fn from_raw(
        n: usize,
        k: usize,
        m: usize,
        seed: u64,
        replica: u64,
        law: EntryLaw,
        entries: Vec<Complex64>,
    ) -> Result<Self> {
        if entries.len() != m * k * n {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for shape {m}x{k}x{n}",
                entries.len()
            )));
        }
        if law.unit_modulus() {
            if let Some(z) = entries.iter().find(|z| (z.norm_sqr() - 1.0).abs() > 1e-12) {
                return Err(Error::InvalidParam(format!(
                    "entry {z} is not unit modulus under law {}",
                    law.as_str()
                )));
            }
        }
        Ok(Self {
            n,
            k,
            m,
            seed,
            replica,
            law,
            entries,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica(&self) -> u64 {
        self.replica
    }

    pub fn law(&self) -> EntryLaw {
        self.law
    }

    /// `(m, k, n)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m, self.k, self.n)
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// The base vector `y_alpha^(level)` (zero-based indices).
    pub fn level(&self, alpha: usize, level: usize) -> &[Complex64] {
        let start = (alpha * self.k + level) * self.n;
        &self.entries[start..start + self.n]
    }

    /// `<y_alpha^(l), y_beta^(l)> = sum_j y_alpha[j] * conj(y_beta[j])`.
    pub fn level_inner(&self, alpha: usize, beta: usize, level: usize) -> Complex64 {
        inner(self.level(alpha, level), self.level(beta, level))
    }

    /// `||y_alpha^(level)||^2`. Unit-modulus laws give exactly `n`.
    pub fn level_sq_norm(&self, alpha: usize, level: usize) -> f64 {
        if self.law.unit_modulus() {
            self.n as f64
        } else {
            self.level(alpha, level).iter().map(|z| z.norm_sqr()).sum()
        }
    }

    /// Writes the debug dump: a little-endian header `(n, k, m, seed)` as
    /// `u64`, the law code as one byte, then every entry as an `(re, im)` pair
    /// of `f64` in `(alpha, level, j)` row-major order.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DUMP_MAGIC)?;
        for word in [self.n as u64, self.k as u64, self.m as u64, self.seed] {
            out.write_all(&word.to_le_bytes())?;
        }
        out.write_all(&[self.law.code()])?;
        for z in &self.entries {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`BaseSample::write_dump`]. The replica index is
    /// not part of the format and reads back as 0.
    pub fn read_dump<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Parse("not a base-sample dump".into()));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            input.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let mut code = [0u8; 1];
        input.read_exact(&mut code)?;
        let law = EntryLaw::from_code(code[0])
            .ok_or_else(|| Error::Parse(format!("unknown law code {}", code[0])))?;
        let [n, k, m, seed] = header;
        let (n, k, m) = (n as usize, k as usize, m as usize);
        let len = n
            .checked_mul(k)
            .and_then(|v| v.checked_mul(m))
            .ok_or_else(|| Error::Parse("dump shape overflows".into()))?;
        let mut entries = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            input.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            input.read_exact(&mut word)?;
            let im = f64::from_le_bytes(word);
            entries.push(Complex64::new(re, im));
        }
        Self::from_raw(n, k, m, seed, 0, law, entries)
    }
}

const DUMP_MAGIC: &[u8; 4] = b"TMPS";

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Per-level squared norms and the log of each tensor sample's squared norm.
#[derive(Clone, Debug, PartialEq)]
pub struct NormProfile {
    k: usize,
    level_sq_norms: Vec<f64>,
    log_sq_norms: Vec<f64>,
}

impl NormProfile {
    pub fn level_sq_norm(&self, alpha: usize, level: usize) -> f64 {
        self.level_sq_norms[alpha * self.k + level]
    }

    pub fn level_sq_norms(&self, alpha: usize) -> &[f64] {
        &self.level_sq_norms[alpha * self.k..(alpha + 1) * self.k]
    }

    /// `ln ||Y_alpha||^2 = sum_l ln ||y_alpha^(l)||^2`.
    pub fn log_sq_norm(&self, alpha: usize) -> f64 {
        self.log_sq_norms[alpha]
    }

    pub fn log_sq_norms(&self) -> &[f64] {
        &self.log_sq_norms
    }
}

pub fn norm_profile(sample: &BaseSample) -> Result<NormProfile> {
    let (m, k, _) = sample.shape();
    let mut level_sq_norms = Vec::with_capacity(m * k);
    let mut log_sq_norms = Vec::with_capacity(m);
    for alpha in 0..m {
        let mut log_norm = 0.0;
        for level in 0..k {
            let sq = sample.level_sq_norm(alpha, level);
            if !(sq > 0.0) {
                return Err(Error::DegenerateSample { alpha, level });
            }
            level_sq_norms.push(sq);
            log_norm += sq.ln();
        }
        log_sq_norms.push(log_norm);
    }
    Ok(NormProfile {
        k,
        level_sq_norms,
        log_sq_norms,
    })
}

/// Monte Carlo estimate of one normalized moment of `||Y||^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    pub passed: bool,
}

impl MomentEstimate {
    fn new(values: &[f64], target: f64) -> Self {
        let t = values.len() as f64;
        let mean = values.iter().sum::<f64>() / t;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
        let std_error = (var / t).sqrt();
        let passed = if std_error == 0.0 {
            (mean - target).abs() <= 1e-12 * target.abs()
        } else {
            (mean - target).abs() <= SIGMA_BAND * std_error
        };
        Self {
            estimate: mean,
            target,
            std_error,
            passed,
        }
    }

    /// Deviation from the target in standard errors.
    pub fn z_score(&self) -> f64 {
        if self.std_error == 0.0 {
            0.0
        } else {
            (self.estimate - self.target) / self.std_error
        }
    }
}

const SIGMA_BAND: f64 = 4.0;

/// Moments of the tensor norm, reported in units where they are `O(1)`:
/// `second` estimates `E||Y||^2 / n^k` (target 1) and `fourth` estimates
/// `E||Y||^4 / n^{2k}` (target `(1 + (m4 - 1)/n)^k`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentReport {
    pub trials: usize,
    /// `k ln n`, the log of the normalization `n^k`.
    pub log_scale: f64,
    pub second: MomentEstimate,
    pub fourth: MomentEstimate,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.second.passed && self.fourth.passed
    }
}

/// Checks the tensor norm moments over `trials` independent tensor samples,
/// each pass judged at four standard errors.
pub fn norm_moment_check(params: &ModelParams, trials: usize) -> Result<MomentReport> {
    if trials < 1000 {
        return Err(Error::Precondition(format!(
            "norm moment check needs at least 1000 trials, got {trials}"
        )));
    }
    params.validate()?;
    let n = params.n as usize;
    let k = params.k as usize;
    let law = params.entry_law;
    let ln_n = (n as f64).ln();
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut log_ratio = 0.0;
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            for level in 0..k {
                let mut rng =
                    StreamKey::new(params.seed, NORM_CHECK_REPLICA, trial as u64, level as u64)
                        .rng();
                for z in v.iter_mut() {
                    *z = law.sample(&mut rng);
                }
                if !law.unit_modulus() {
                    let sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                    log_ratio += sq.ln() - ln_n;
                }
            }
            log_ratio.exp()
        })
        .collect();
    let squares: Vec<f64> = ratios.iter().map(|r| r * r).collect();
    let fourth_target = (1.0 + (law.m4() - 1.0) / n as f64).powi(k as i32);
    Ok(MomentReport {
        trials,
        log_scale: k as f64 * ln_n,
        second: MomentEstimate::new(&ratios, 1.0),
        fourth: MomentEstimate::new(&squares, fourth_target),
    })
}
