//! The two VAMP estimators.
//!
//! `g2` is the Bayes posterior mean of a section-sparse vector observed in
//! Gaussian noise of precision `gamma`, a per-section softmax. `g1` is the LMMSE
//! estimate of `x` from `y = A x + noise` under a Gaussian prior centred at `p`.
//! Both return the exact mean derivative along with the estimate.

use nalgebra::DVector;

use crate::design::{DesignOperator, GaussianDense, OperatorKind, SubsampledDct};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserOutput {
    pub estimate: Vec<f64>,
    /// Mean of the component-wise partial derivatives.
    pub divergence: f64,
}

fn check_precision(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "precision must be positive, got {gamma}"
        )));
    }
    if !gamma.is_finite() {
        return Err(Error::NonFinite("precision"));
    }
    Ok(())
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Section-wise softmax of `gamma * p`.
pub fn g2_denoise(p: &[f64], gamma: f64, b: usize) -> Result<DenoiserOutput> {
    check_precision(gamma)?;
    if b == 0 || !p.len().is_multiple_of(b) {
        return Err(Error::InvalidArgument(format!(
            "length {} is not a multiple of section size {b}",
            p.len()
        )));
    }
    check_finite(p, "g2 input")?;
    let mut estimate = vec![0.0; p.len()];
    let mut div_sum = 0.0;
    for (sec, out) in p.chunks_exact(b).zip(estimate.chunks_exact_mut(b)) {
        div_sum += softmax_section(sec, gamma, 1.0, out);
    }
    Ok(DenoiserOutput {
        estimate,
        divergence: div_sum / p.len().max(1) as f64,
    })
}

/// Posterior mean when section `l` carries the value `amplitudes[l]` at its
/// nonzero position. The `gamma c^2 / 2` term of the Gaussian likelihood is
/// constant within a section and drops out of the softmax.
pub fn g2_denoise_scaled(p: &[f64], gamma: f64, b: usize, amplitudes: &[f64]) -> Result<DenoiserOutput> {
    check_precision(gamma)?;
    if b == 0 || p.len() != amplitudes.len() * b {
        return Err(Error::DimensionMismatch {
            expected: amplitudes.len() * b,
            got: p.len(),
        });
    }
    check_finite(p, "g2 input")?;
    let mut estimate = vec![0.0; p.len()];
    let mut div_sum = 0.0;
    for ((sec, out), &c) in p.chunks_exact(b).zip(estimate.chunks_exact_mut(b)).zip(amplitudes) {
        div_sum += softmax_section(sec, gamma, c, out);
    }
    Ok(DenoiserOutput {
        estimate,
        divergence: div_sum / p.len().max(1) as f64,
    })
}

// Writes c * softmax(gamma * c * p) into `out`; returns the summed derivatives.
fn softmax_section(p: &[f64], gamma: f64, c: f64, out: &mut [f64]) -> f64 {
    let k = gamma * c;
    let max = p.iter().map(|&v| k * v).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(p) {
        *o = (k * v - max).exp();
        total += *o;
    }
    let mut div = 0.0;
    for o in out.iter_mut() {
        let q = *o / total;
        div += gamma * c * c * q * (1.0 - q);
        *o = c * q;
    }
    div
}

/// LMMSE stage, dispatching on the operator kind.
pub fn g1_lmmse(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, snr: f64) -> Result<DenoiserOutput> {
    match &op.kind {
        OperatorKind::GaussianDense(g) => g1_dense(p, gamma, y, op, g, snr),
        OperatorKind::RowOrthogonalDct(d) => g1_roworth(p, gamma, y, op, d, snr),
    }
}

/// `(snr A^T A + gamma I)^{-1} (snr A^T y + gamma p)` through the Woodbury
/// identity on the precomputed eigendecomposition of `A A^T`.
pub fn g1_lmmse_dense(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, snr: f64) -> Result<DenoiserOutput> {
    match &op.kind {
        OperatorKind::GaussianDense(g) => g1_dense(p, gamma, y, op, g, snr),
        _ => Err(Error::InvalidArgument("dense LMMSE needs a dense operator".into())),
    }
}

/// LMMSE for operators with `A A^T = a I`: `p + snr / (gamma + a snr) A^T (y - A p)`.
pub fn g1_lmmse_roworth(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, snr: f64) -> Result<DenoiserOutput> {
    match &op.kind {
        OperatorKind::RowOrthogonalDct(d) => g1_roworth(p, gamma, y, op, d, snr),
        _ => Err(Error::InvalidArgument(
            "row-orthogonal LMMSE needs a DCT operator".into(),
        )),
    }
}

fn check_g1_inputs(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, snr: f64) -> Result<()> {
    check_precision(gamma)?;
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    check_len(op.n, p.len())?;
    check_len(op.m, y.len())?;
    check_finite(p, "g1 prior mean")?;
    check_finite(y, "g1 observation")
}

/// LMMSE output split into the pieces the decoder needs with full precision.
#[derive(Clone, Debug)]
pub(crate) struct LmmseParts {
    /// `x1 - p`.
    pub delta: Vec<f64>,
    pub divergence: f64,
    /// `1 - divergence`, evaluated without cancellation.
    pub complement: f64,
}

impl LmmseParts {
    fn into_output(self, p: &[f64]) -> DenoiserOutput {
        DenoiserOutput {
            estimate: p.iter().zip(&self.delta).map(|(a, b)| a + b).collect(),
            divergence: self.divergence,
        }
    }
}

pub(crate) fn lmmse_parts(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, snr: f64) -> Result<LmmseParts> {
    check_g1_inputs(p, gamma, y, op, snr)?;
    match &op.kind {
        OperatorKind::GaussianDense(g) => Ok(dense_parts(p, gamma, y, op, g, snr)),
        OperatorKind::RowOrthogonalDct(d) => roworth_parts(p, gamma, y, op, d, snr),
    }
}

fn g1_dense(
    p: &[f64],
    gamma: f64,
    y: &[f64],
    op: &DesignOperator,
    g: &GaussianDense,
    snr: f64,
) -> Result<DenoiserOutput> {
    check_g1_inputs(p, gamma, y, op, snr)?;
    Ok(dense_parts(p, gamma, y, op, g, snr).into_output(p))
}

// Woodbury: (snr A^T A + gamma I)^{-1} (snr A^T y + gamma p) - p
//   = A^T (A A^T + gamma/snr I)^{-1} (y - A p),
// with A A^T = Q diag(d) Q^T, so only m × m work beyond the two products with A.
fn dense_parts(p: &[f64], gamma: f64, y: &[f64], op: &DesignOperator, g: &GaussianDense, snr: f64) -> LmmseParts {
    let a = &g.matrix;
    let q = &g.gram_eigenvectors;
    let shift = gamma / snr;
    let residual = DVector::from_column_slice(y) - a * DVector::from_column_slice(p);
    let mut t = q.tr_mul(&residual);
    for (ti, &d) in t.iter_mut().zip(g.gram_eigenvalues.iter()) {
        *ti /= d.max(0.0) + shift;
    }
    let delta: Vec<f64> = a.tr_mul(&(q * t)).data.into();
    // Tr[(snr A^T A + gamma I)^{-1}] = (n - m)/gamma + sum_i 1/(snr d_i + gamma)
    let n = op.n as f64;
    let in_range: f64 = g
        .gram_eigenvalues
        .iter()
        .map(|&d| gamma / (snr * d.max(0.0) + gamma))
        .sum();
    let explained: f64 = g
        .gram_eigenvalues
        .iter()
        .map(|&d| {
            let d = d.max(0.0);
            d / (d + shift)
        })
        .sum();
    LmmseParts {
        delta,
        divergence: ((op.n - op.m) as f64 + in_range) / n,
        complement: explained / n,
    }
}

fn g1_roworth(
    p: &[f64],
    gamma: f64,
    y: &[f64],
    op: &DesignOperator,
    d: &SubsampledDct,
    snr: f64,
) -> Result<DenoiserOutput> {
    check_g1_inputs(p, gamma, y, op, snr)?;
    Ok(roworth_parts(p, gamma, y, op, d, snr)?.into_output(p))
}

fn roworth_parts(
    p: &[f64],
    gamma: f64,
    y: &[f64],
    op: &DesignOperator,
    d: &SubsampledDct,
    snr: f64,
) -> Result<LmmseParts> {
    let a = d.scale * d.scale;
    let ap = op.apply_forward(p)?;
    let residual: Vec<f64> = y.iter().zip(&ap).map(|(yi, ai)| yi - ai).collect();
    let mut delta = op.apply_adjoint(&residual)?;
    let shift = gamma / snr;
    let gain = 1.0 / (a + shift);
    delta.iter_mut().for_each(|v| *v *= gain);
    let alpha = op.aspect_ratio();
    Ok(LmmseParts {
        delta,
        divergence: (1.0 - alpha) + alpha * shift / (a + shift),
        complement: alpha * a / (a + shift),
    })
}
