//! Adaptive Gauss–Legendre quadrature.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
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

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const PANEL_NODES: usize = 20;
const INITIAL_PANELS: usize = 10;
const MAX_DEPTH: usize = 40;

/// Integrates `f` over `[a, b]` to relative tolerance `tol` (absolute when the
/// integral is near zero). Starts from 10 panels of 20 nodes and bisects panels
/// whose estimate disagrees with the sum of their halves.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("non-finite interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let rule = GaussLegendre::new(PANEL_NODES);
    let width = (b - a) / INITIAL_PANELS as f64;
    let coarse: f64 = (0..INITIAL_PANELS)
        .map(|i| rule.integrate(&f, a + i as f64 * width, a + (i + 1) as f64 * width))
        .sum();
    let scale = coarse.abs().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    for i in 0..INITIAL_PANELS {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == INITIAL_PANELS { b } else { lo + width };
        let whole = rule.integrate(&f, lo, hi);
        total += refine(&rule, &f, lo, hi, whole, tol * scale / INITIAL_PANELS as f64, 0)?;
    }
    if !total.is_finite() {
        return Err(Error::Numeric("quadrature produced a non-finite value".into()));
    }
    Ok(total)
}

fn refine<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    abs_tol: f64,
    depth: usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = rule.integrate(f, a, mid);
    let right = rule.integrate(f, mid, b);
    let both = left + right;
    if (both - whole).abs() <= abs_tol.max(f64::EPSILON * both.abs()) {
        return Ok(both);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numeric(format!("quadrature did not converge on [{a}, {b}]")));
    }
    Ok(refine(rule, f, a, mid, left, 0.5 * abs_tol, depth + 1)?
        + refine(rule, f, mid, b, right, 0.5 * abs_tol, depth + 1)?)
}
