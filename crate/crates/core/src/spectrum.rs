//! Limiting nonzero spectra of `B^{-1} A^T A`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;

/// Relative accuracy requested from every spectral quadrature.
pub const QUAD_TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Marchenko–Pastur bulk with aspect ratio `alpha`.
    MarchenkoPastur,
    /// All nonzero eigenvalues equal to one.
    DeltaAtOne,
    /// Finite mixture of point masses, `(weight, location)`.
    Atoms { atoms: Vec<(f64, f64)> },
}

/// Nonzero part of the spectrum of `B^{-1} A^T A` together with the aspect
/// ratio `alpha = m / n`, the mass it carries in the full spectrum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralModel {
    pub kind: SpectrumKind,
    pub alpha: f64,
    /// Cached `∫ λ ρ_supp(λ) dλ`.
    pub first_moment: f64,
}

impl SpectralModel {
    pub fn delta_at_one(alpha: f64) -> Self {
        Self {
            kind: SpectrumKind::DeltaAtOne,
            alpha,
            first_moment: 1.0,
        }
    }

    pub fn marchenko_pastur(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Marchenko–Pastur aspect ratio must lie in (0, 1], got {alpha}"
            )));
        }
        let mut model = Self {
            kind: SpectrumKind::MarchenkoPastur,
            alpha,
            first_moment: 1.0,
        };
        model.first_moment = model.expect(|l| l)?;
        Ok(model)
    }

    /// Point-mass spectrum; weights are normalized to sum to one.
    pub fn atoms(alpha: f64, atoms: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        if atoms.is_empty() || !(total > 0.0) || atoms.iter().any(|a| a.0 < 0.0 || a.1 < 0.0) {
            return Err(Error::InvalidArgument(
                "atoms need nonnegative weights and locations".into(),
            ));
        }
        let atoms: Vec<(f64, f64)> = atoms.into_iter().map(|(w, l)| (w / total, l)).collect();
        let first_moment = atoms.iter().map(|(w, l)| w * l).sum();
        Ok(Self {
            kind: SpectrumKind::Atoms { atoms },
            alpha,
            first_moment,
        })
    }

    /// Support edges `(1 ± sqrt(alpha))^2` of the Marchenko–Pastur bulk.
    pub fn mp_edges(alpha: f64) -> (f64, f64) {
        let s = alpha.sqrt();
        ((1.0 - s).powi(2), (1.0 + s).powi(2))
    }

    /// Marchenko–Pastur density of the nonzero bulk at `lambda`.
    pub fn mp_density(alpha: f64, lambda: f64) -> f64 {
        let (lo, hi) = Self::mp_edges(alpha);
        if lambda <= lo || lambda >= hi {
            return 0.0;
        }
        ((lambda - lo) * (hi - lambda)).sqrt() / (2.0 * PI * alpha * lambda)
    }

    /// `∫ f(λ) ρ_supp(λ) dλ`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match &self.kind {
            SpectrumKind::DeltaAtOne => Ok(f(1.0)),
            SpectrumKind::Atoms { atoms } => Ok(atoms.iter().map(|&(w, l)| w * f(l)).sum()),
            SpectrumKind::MarchenkoPastur => {
                let alpha = self.alpha;
                let (lo, hi) = Self::mp_edges(alpha);
                let center = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo);
                // λ = center - half·cos φ turns the square-root edges into sin² φ.
                let g = |phi: f64| {
                    let lambda = center - half * phi.cos();
                    let s = phi.sin();
                    f(lambda) * half * half * s * s / (2.0 * PI * alpha * lambda)
                };
                quadrature::integrate(g, 0.0, PI, QUAD_TOL)
            }
        }
    }

    /// Mass of the full spectrum `(1 - alpha) δ_0 + alpha ρ_supp` applied to `f`.
    pub fn expect_full<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        Ok((1.0 - self.alpha) * f(0.0) + self.alpha * self.expect(f)?)
    }
}
