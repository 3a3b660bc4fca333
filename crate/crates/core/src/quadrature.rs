//! Gauss-Legendre panels with bounded adaptive bisection.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub const PANEL_NODES: usize = 64;
pub const MAX_BISECTIONS: u32 = 8;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n from the Tricomi initial guess
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 64-point rule.
    pub fn panel() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(PANEL_NODES))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let j = j as f64;
        let p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Difference between the final refinement and its parent panel.
    pub error_estimate: f64,
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` with 64-point panels, bisecting a panel while
/// its two halves disagree with it by more than `tol * max(1, |value|)`, at
/// most [`MAX_BISECTIONS`] levels deep.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Quadrature {
    let rule = GaussLegendre::panel();
    let whole = rule.integrate(&f, a, b);
    refine(&f, rule, a, b, whole, tol, MAX_BISECTIONS)
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Quadrature {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let value = left + right;
    let error_estimate = (value - whole).abs();
    if error_estimate <= tol * value.abs().max(1.0) {
        return Quadrature {
            value,
            error_estimate,
            converged: true,
        };
    }
    if depth == 0 {
        return Quadrature {
            value,
            error_estimate,
            converged: false,
        };
    }
    let l = refine(f, rule, a, mid, left, 0.5 * tol, depth - 1);
    let r = refine(f, rule, mid, b, right, 0.5 * tol, depth - 1);
    Quadrature {
        value: l.value + r.value,
        error_estimate: l.error_estimate + r.error_estimate,
        converged: l.converged && r.converged,
    }
}
