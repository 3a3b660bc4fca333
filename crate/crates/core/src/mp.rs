//! Marčenko–Pastur law with ratio `c`: the limiting spectral distribution for
//! `tau = 1`.
//!
//! ```text
//! p(x) = sqrt((l+ - x)(x - l-)) / (2 pi x)  on (l-, l+),   l± = (1 ± sqrt c)^2
//! ```
//!
//! plus an atom of mass `1 - c` at zero when `c < 1`. Integrals against the
//! density use `x = (l+ + l-)/2 + ((l+ - l-)/2) sin(theta)`, which turns both
//! square-root endpoints into smooth integrands.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::quadrature::integrate_adaptive;

/// Absolute (for `O(1)` values) quadrature tolerance.
pub const QUAD_TOL: f64 = 1e-9;

/// Highest moment order [`MpLaw::moment`] supports.
pub const MAX_MOMENT: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpLaw {
    c: f64,
    lambda_minus: f64,
    lambda_plus: f64,
    atom_mass: f64,
}

impl MpLaw {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParam(format!(
                "MP ratio must be positive, got {c}"
            )));
        }
        let root = c.sqrt();
        Ok(Self {
            c,
            lambda_minus: (1.0 - root).powi(2),
            lambda_plus: (1.0 + root).powi(2),
            atom_mass: (1.0 - c).max(0.0),
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn lambda_minus(&self) -> f64 {
        self.lambda_minus
    }

    pub fn lambda_plus(&self) -> f64 {
        self.lambda_plus
    }

    pub fn atom_mass(&self) -> f64 {
        self.atom_mass
    }

    /// Density of the absolutely continuous part; zero outside the open
    /// support and at `x <= 0`.
    pub fn density(&self, x: f64) -> f64 {
        mp_density(self, x)
    }

    /// `atom 1{x >= 0} + int_{l-}^{min(x, l+)} p`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= self.lambda_plus {
            return 1.0;
        }
        if x <= self.lambda_minus {
            return self.atom_mass;
        }
        let mass = integrate_against(self, mp_density, |_| 1.0, x);
        (self.atom_mass + mass).clamp(self.atom_mass, 1.0)
    }

    /// `int x^q dF`; the atom only contributes to `q = 0`.
    pub fn moment(&self, q: u32) -> f64 {
        assert!(q <= MAX_MOMENT, "MP moment order {q} above {MAX_MOMENT}");
        if q == 0 {
            return 1.0;
        }
        integrate_against(self, mp_density, |x| x.powi(q as i32), self.lambda_plus)
    }

    /// Mass of the continuous part, `1 - atom_mass` in exact arithmetic.
    pub fn continuous_mass(&self) -> f64 {
        integrate_against(self, mp_density, |_| 1.0, self.lambda_plus)
    }

    /// Evenly spaced evaluation grid over `[from, to]`.
    pub fn grid(&self, from: f64, to: f64, points: usize) -> Vec<GridPoint> {
        let step = if points > 1 {
            (to - from) / (points - 1) as f64
        } else {
            0.0
        };
        (0..points)
            .map(|i| {
                let x = if i + 1 == points {
                    to
                } else {
                    from + step * i as f64
                };
                GridPoint {
                    x,
                    density: self.density(x),
                    cdf: self.cdf(x),
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub density: f64,
    pub cdf: f64,
}

fn mp_density(law: &MpLaw, x: f64) -> f64 {
    if x <= 0.0 || x <= law.lambda_minus || x >= law.lambda_plus {
        return 0.0;
    }
    ((law.lambda_plus - x) * (x - law.lambda_minus)).sqrt() / (2.0 * PI * x)
}

/// `int_{l-}^{upper} g(x) density(law, x) dx` under the sine substitution.
/// The density is a parameter so alternative densities can be checked with
/// the same quadrature.
pub fn integrate_against<D, G>(law: &MpLaw, density: D, g: G, upper: f64) -> f64
where
    D: Fn(&MpLaw, f64) -> f64,
    G: Fn(f64) -> f64,
{
    let center = 0.5 * (law.lambda_plus + law.lambda_minus);
    let half = 0.5 * (law.lambda_plus - law.lambda_minus);
    let top = ((upper - center) / half).clamp(-1.0, 1.0).asin();
    if top <= -FRAC_PI_2 {
        return 0.0;
    }
    let integrand = |theta: f64| {
        let x = center + half * theta.sin();
        g(x) * density(law, x) * half * theta.cos()
    };
    let q = integrate_adaptive(integrand, -FRAC_PI_2, top, QUAD_TOL);
    if !q.converged {
        log::warn!(
            "MP quadrature up to {upper} did not reach tolerance (estimate {:e})",
            q.error_estimate
        );
    }
    q.value
}
