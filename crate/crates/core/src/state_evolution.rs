//! State evolution: the finite-`B` recursion tracked by the decoder, the
//! large-`B` limit recursion over `(sigma, phi, tau, psi)`, rate thresholds,
//! and the wave-propagation guarantee of the coupled limit recursion.
//!
//! Limit quantities and thresholds are in nats; convert user-facing bit rates
//! with [`bits_to_nats`].

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::code_spec::{CodeSpec, CouplingWindow, Dimensions, Ensemble};
use crate::decoder::{GAMMA_MIN, PRECISION_MAX};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::spectrum::SpectralModel;

/// Relative accuracy of threshold quadratures.
pub const THRESHOLD_TOL: f64 = 1e-12;
/// Bisection stops once the bracket is this narrow.
pub const BISECTION_TOL: f64 = 1e-13;

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

/// `F(x) = E_{rho0} λ / (λ x + σ²)`.
pub fn f_limit(x: f64, rho0: &SpectralModel, sigma2: f64) -> Result<f64> {
    rho0.expect(|l| l / (l * x + sigma2))
}

/// `E_1(γ) = E_rho (snr B λ + γ)^{-1}` over the full spectrum of `B^{-1} A^T A`.
pub fn e1(gamma: f64, spectrum: &SpectralModel, b: usize, snr: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let sb = snr * b as f64;
    spectrum.expect_full(|l| 1.0 / (sb * l + gamma))
}

/// `1 - γ E_1(γ) = E_rho snr B λ / (snr B λ + γ)`.
fn e1_complement(gamma: f64, spectrum: &SpectralModel, b: usize, snr: f64) -> Result<f64> {
    let sb = snr * b as f64;
    spectrum.expect_full(|l| sb * l / (sb * l + gamma))
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// A fixed bank of Gaussian draws used to evaluate `E_2` at many precisions
/// with common random numbers.
#[derive(Clone, Debug)]
pub struct E2Sampler {
    b: usize,
    draws: Vec<f64>,
}

impl E2Sampler {
    pub fn new<R: Rng + ?Sized>(b: usize, n_samples: usize, rng: &mut R) -> Result<Self> {
        if b < 2 || n_samples < 2 {
            return Err(Error::InvalidArgument("need b >= 2 and at least two samples".into()));
        }
        let draws = (0..b * n_samples).map(|_| StandardNormal.sample(rng)).collect();
        Ok(Self { b, draws })
    }

    pub fn samples(&self) -> usize {
        self.draws.len() / self.b
    }

    /// `E_2(γ) = 1 - E[e^{√γ U_1} / (e^{√γ U_1} + e^{-γ} Σ_{j≥2} e^{√γ U_j})]`.
    pub fn eval(&self, gamma: f64) -> Result<McEstimate> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        let s = gamma.sqrt();
        let (sum, sum_sq) = self
            .draws
            .par_chunks(self.b * 1024)
            .map(|chunk| {
                let mut acc = (0.0, 0.0);
                for u in chunk.chunks_exact(self.b) {
                    // Exponents relative to the true entry, which carries +γ.
                    let first = gamma + s * u[0];
                    let max = u[1..].iter().fold(first, |m, &v| m.max(s * v));
                    let num = (first - max).exp();
                    let den = num + u[1..].iter().map(|&v| (s * v - max).exp()).sum::<f64>();
                    let err = 1.0 - num / den;
                    acc.0 += err;
                    acc.1 += err * err;
                }
                acc
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = self.samples() as f64;
        let mean = sum / n;
        let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
        Ok(McEstimate {
            mean,
            std_err: (var / n).sqrt(),
        })
    }
}

pub fn e2_mc<R: Rng + ?Sized>(gamma: f64, b: usize, n_samples: usize, rng: &mut R) -> Result<McEstimate> {
    E2Sampler::new(b, n_samples, rng)?.eval(gamma)
}

/// One iteration of the finite-`B` recursion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteSeState {
    pub k: usize,
    pub gamma1: Vec<f64>,
    pub eta1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub eta2: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    /// Predicted per-section MSE `B / eta_hat` per column block.
    pub predicted_mse: Vec<f64>,
    pub clips: usize,
}

impl FiniteSeState {
    pub fn mean_predicted_mse(&self) -> f64 {
        self.predicted_mse.iter().sum::<f64>() / self.predicted_mse.len() as f64
    }
}

/// Row-block spectra for a code: Marchenko–Pastur for Gaussian designs and a
/// flat nonzero spectrum for row-orthogonal ones, at each block's aspect ratio.
pub fn code_spectra(spec: &CodeSpec, dims: &Dimensions) -> Result<Vec<SpectralModel>> {
    dims.n_r
        .iter()
        .map(|&n| {
            let alpha = dims.m_r as f64 / n as f64;
            match spec.ensemble {
                Ensemble::Gaussian => SpectralModel::marchenko_pastur(alpha),
                Ensemble::RowOrthogonalDct => Ok(SpectralModel::delta_at_one(alpha)),
            }
        })
        .collect()
}

fn clip(v: f64, floor: f64, clips: &mut usize) -> f64 {
    if v.is_nan() || v < floor {
        *clips += 1;
        floor
    } else {
        v.min(PRECISION_MAX)
    }
}

/// Runs `k_max` iterations of the finite-`B` recursion, starting from
/// `gamma1 = B`, with the decoder's clipping policy.
pub fn finite_b_se(
    windows: &CouplingWindow,
    spectra: &[SpectralModel],
    b: usize,
    snr: f64,
    k_max: usize,
    sampler: &E2Sampler,
) -> Result<Vec<FiniteSeState>> {
    let rows = windows.rows();
    if spectra.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            got: spectra.len(),
        });
    }
    let bf = b as f64;
    let mut gamma1 = vec![bf; rows];
    let mut trace = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let mut clips = 0;
        let mut eta1 = Vec::with_capacity(rows);
        let mut gamma2 = Vec::with_capacity(rows);
        for (&g, s) in gamma1.iter().zip(spectra) {
            let e = e1(g, s, b, snr)?;
            eta1.push((1.0 / e).min(PRECISION_MAX));
            // eta1 - gamma1 without cancellation once gamma1 is large.
            let c = e1_complement(g, s, b, snr)?;
            gamma2.push(clip(c / e, GAMMA_MIN, &mut clips));
        }
        let gamma_hat: Vec<f64> = (1..=windows.gamma)
            .map(|c| {
                windows
                    .rows_of(c)
                    .iter()
                    .map(|&r| gamma2[r - 1])
                    .sum::<f64>()
                    .min(PRECISION_MAX)
            })
            .collect();
        let predicted_mse = gamma_hat
            .iter()
            .map(|&g| sampler.eval(g).map(|e| e.mean))
            .collect::<Result<Vec<f64>>>()?;
        let eta_hat: Vec<f64> = predicted_mse
            .iter()
            .map(|&e| {
                if e > 0.0 {
                    (bf / e).min(PRECISION_MAX)
                } else {
                    PRECISION_MAX
                }
            })
            .collect();
        let eta2: Vec<f64> = windows
            .windows
            .iter()
            .map(|w| {
                let inv: f64 = w.iter().map(|&c| 1.0 / eta_hat[c - 1]).sum();
                (w.len() as f64 / inv).min(PRECISION_MAX)
            })
            .collect();
        let next: Vec<f64> = eta2
            .iter()
            .zip(&gamma2)
            .map(|(e, g)| clip(e - g, GAMMA_MIN, &mut clips))
            .collect();
        let state = FiniteSeState {
            k,
            gamma1: gamma1.clone(),
            eta1,
            gamma2,
            eta2,
            gamma_hat,
            eta_hat,
            predicted_mse,
            clips,
        };
        if state
            .predicted_mse
            .iter()
            .chain(&state.gamma_hat)
            .any(|v| !v.is_finite())
        {
            return Err(Error::SeDiverged { iteration: k });
        }
        trace.push(state);
        gamma1 = next;
    }
    Ok(trace)
}

/// One iteration of the limit recursion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSeState {
    pub k: usize,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    pub psi: Vec<u8>,
}

impl LimitSeState {
    pub fn decoded(&self) -> bool {
        self.psi.iter().all(|&p| p == 0)
    }
}

/// Limit recursion with `sigma^0 = 1`; `f` is `F` evaluated at `sigma_r`,
/// `r_all_nats` the overall rate in nats. Returns states `0..k_max`.
pub fn limit_se<F: Fn(f64) -> f64>(windows: &CouplingWindow, r_all_nats: f64, f: F, k_max: usize) -> Vec<LimitSeState> {
    let rows = windows.rows();
    let theta = rows as f64 / windows.gamma as f64;
    let mut sigma = vec![1.0; rows];
    let mut trace = Vec::with_capacity(k_max);
    for k in 0..k_max {
        let phi: Vec<f64> = sigma.iter().map(|&s| f(s)).collect();
        let tau: Vec<f64> = (1..=windows.gamma)
            .map(|c| {
                let sum: f64 = windows
                    .rows_of(c)
                    .iter()
                    .map(|&r| phi[r - 1] / (theta * windows.window(r).len() as f64))
                    .sum();
                r_all_nats / sum
            })
            .collect();
        let psi: Vec<u8> = tau.iter().map(|&t| u8::from(t > 0.5)).collect();
        let next = windows
            .windows
            .iter()
            .map(|w| w.iter().map(|&c| psi[c - 1] as f64).sum::<f64>() / w.len() as f64)
            .collect();
        trace.push(LimitSeState {
            k,
            sigma: std::mem::replace(&mut sigma, next),
            phi,
            tau,
            psi,
        });
    }
    trace
}

/// Rate thresholds in nats with bit copies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Thresholds {
    pub r_alg: f64,
    pub r_it: f64,
    pub capacity: f64,
    pub r_alg_bits: f64,
    pub r_it_bits: f64,
    pub capacity_bits: f64,
}

/// `R_alg = F(1)/2` and `R_IT = ∫_0^1 F / 2` for the spectrum `rho0`.
pub fn thresholds(rho0: &SpectralModel, snr: f64) -> Result<Thresholds> {
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    let sigma2 = 1.0 / snr;
    let r_alg = f_limit(1.0, rho0, sigma2)? / 2.0;
    let r_it = integrate_f(rho0, sigma2, 1.0)? / 2.0;
    let capacity = 0.5 * snr.ln_1p();
    if r_it > capacity * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Numeric(format!(
            "information-theoretic threshold {r_it} exceeds capacity {capacity}"
        )));
    }
    Ok(Thresholds {
        r_alg,
        r_it,
        capacity,
        r_alg_bits: nats_to_bits(r_alg),
        r_it_bits: nats_to_bits(r_it),
        capacity_bits: nats_to_bits(capacity),
    })
}

/// `∫_0^x F(t) dt` by quadrature.
fn integrate_f(rho0: &SpectralModel, sigma2: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(0.0);
    }
    let failure = std::cell::RefCell::new(None);
    let value = quadrature::integrate(
        |t| match f_limit(t, rho0, sigma2) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        x,
        THRESHOLD_TOL,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => value,
    }
}

/// Which part of the rate axis a coupled code sits in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `R_all < R_alg / θ`: decoded after one iteration.
    BelowAlgorithmic,
    /// `R_alg / θ < R_all < R_IT / θ`: the wave regime.
    Coupled,
    /// `R_all >= R_IT / θ`, or exactly on the algorithmic boundary.
    Outside,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Constants {
    pub theta: f64,
    pub r_all: f64,
    pub delta: f64,
    pub l_star: f64,
    pub h_star: f64,
    /// Guaranteed front speed; zero when the width condition fails.
    pub g: usize,
    /// `1 + ⌈Γ / (2g)⌉`, absent when `g = 0`.
    pub k_bound: Option<usize>,
    pub w_min: usize,
    /// `W > w_min`.
    pub sufficient: bool,
}

pub fn regime(theta: f64, r_all_nats: f64, th: &Thresholds) -> Regime {
    if r_all_nats < th.r_alg / theta {
        Regime::BelowAlgorithmic
    } else if r_all_nats > th.r_alg / theta && r_all_nats < th.r_it / theta {
        Regime::Coupled
    } else {
        Regime::Outside
    }
}

/// Monotone bisection on `[lo, hi]` for `f(x) = target`; `increasing` gives
/// the direction of `f`.
pub fn bisect<F: Fn(f64) -> Result<f64>>(f: F, target: f64, mut lo: f64, mut hi: f64, increasing: bool) -> Result<f64> {
    for _ in 0..200 {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let below = f(mid)? < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Constants of the wave guarantee; errors outside the coupled regime.
pub fn prop1_constants(
    theta: f64,
    r_all_nats: f64,
    rho0: &SpectralModel,
    snr: f64,
    gamma: usize,
    w: usize,
) -> Result<Prop1Constants> {
    let th = thresholds(rho0, snr)?;
    let reg = regime(theta, r_all_nats, &th);
    if reg != Regime::Coupled {
        return Err(Error::InvalidArgument(format!(
            "rate {r_all_nats} nats is in the {reg:?} regime, constants need the coupled one"
        )));
    }
    let sigma2 = 1.0 / snr;
    let f1 = 2.0 * th.r_alg;
    let delta = th.r_it / theta - r_all_nats;
    let l_target = theta * r_all_nats / th.r_alg;
    let l_star = bisect(|x| Ok(x - x.ln()), l_target, 0.0, 1.0, false)?;
    let h_star = bisect(
        |x| Ok(integrate_f(rho0, sigma2, x)? - f1 * x),
        2.0 * theta * delta,
        0.0,
        1.0,
        true,
    )?;
    let wf = w as f64;
    let g = ((h_star * wf).floor() as usize).min((l_star * wf).floor() as usize);
    let w_min = ((1.0 / l_star).ceil() as usize).max((1.0 / h_star).ceil() as usize);
    Ok(Prop1Constants {
        theta,
        r_all: r_all_nats,
        delta,
        l_star,
        h_star,
        g,
        k_bound: (g > 0).then(|| 1 + gamma.div_ceil(2 * g)),
        w_min,
        sufficient: w > w_min,
    })
}

/// Outcome of checking the limit recursion against the wave guarantee.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prop1Report {
    pub gamma: usize,
    pub w: usize,
    pub r_all: f64,
    pub regime: Regime,
    pub constants: Option<Prop1Constants>,
    pub iterations_run: usize,
    /// First iteration at which every `psi` is zero.
    pub decoded_at: Option<usize>,
    /// `(k, c)` of the first block inside the guaranteed front with `psi = 1`.
    pub first_violation: Option<(usize, usize)>,
    pub symmetric: bool,
    pub monotone: bool,
    pub passed: bool,
    pub note: String,
}

/// Runs the limit recursion and checks the guarantee iteration by iteration.
pub fn verify_prop1(gamma: usize, w: usize, r_all_nats: f64, rho0: &SpectralModel, snr: f64) -> Result<Prop1Report> {
    let windows = CouplingWindow::new(gamma, w)?;
    let theta = windows.rows() as f64 / gamma as f64;
    let th = thresholds(rho0, snr)?;
    let reg = regime(theta, r_all_nats, &th);
    let sigma2 = 1.0 / snr;
    let f = |x: f64| f_limit(x, rho0, sigma2).unwrap_or(f64::NAN);
    let constants = match reg {
        Regime::Coupled => Some(prop1_constants(theta, r_all_nats, rho0, snr, gamma, w)?),
        _ => None,
    };
    let k_bound = match (reg, &constants) {
        (Regime::BelowAlgorithmic, _) => Some(1),
        (_, Some(c)) if c.sufficient => c.k_bound,
        _ => None,
    };
    let k_run = k_bound.map_or(2 * gamma + 2, |k| k + 1);
    let trace = limit_se(&windows, r_all_nats, f, k_run);
    let half = gamma.div_ceil(2);
    let symmetric = trace
        .iter()
        .all(|s| (1..=gamma).all(|c| s.psi[c - 1] == s.psi[gamma - c]));
    let monotone = trace
        .windows(2)
        .all(|p| p[0].psi.iter().zip(&p[1].psi).all(|(a, b)| *a == 1 || *b == 0));
    let decoded_at = trace.iter().position(LimitSeState::decoded);
    let mut first_violation = None;
    let (passed, note) = match reg {
        Regime::BelowAlgorithmic => {
            let ok = trace.len() > 1 && trace[1].decoded();
            (
                ok,
                "below the algorithmic threshold: one iteration suffices".to_string(),
            )
        }
        Regime::Outside => (
            true,
            "rate outside the coupled regime: no guarantee to check".to_string(),
        ),
        Regime::Coupled => {
            let c = constants.as_ref().expect("coupled regime has constants");
            if !c.sufficient {
                (
                    true,
                    format!("sufficient condition not met: W = {w} <= W_min = {}", c.w_min),
                )
            } else {
                'outer: for s in &trace {
                    let front = ((s.k + 1) * c.g).min(half);
                    for cc in 1..=front {
                        if s.psi[cc - 1] != 0 || s.psi[gamma - cc] != 0 {
                            first_violation = Some((s.k, cc));
                            break 'outer;
                        }
                    }
                }
                let k = c.k_bound.expect("sufficient implies g >= 1");
                let in_time = decoded_at.is_some_and(|d| d <= k);
                (
                    first_violation.is_none() && in_time && symmetric,
                    format!("front speed g = {}, bound K = {k}", c.g),
                )
            }
        }
    };
    Ok(Prop1Report {
        gamma,
        w,
        r_all: r_all_nats,
        regime: reg,
        constants,
        iterations_run: trace.len(),
        decoded_at,
        first_violation,
        symmetric,
        monotone,
        passed,
        note,
    })
}

/// Smallest `W >= 2` satisfying the width condition at its own `θ`.
pub fn smallest_sufficient_w(gamma: usize, r_all_nats: f64, rho0: &SpectralModel, snr: f64) -> Result<Option<usize>> {
    for w in 2..=gamma {
        let theta = (gamma + w - 1) as f64 / gamma as f64;
        match prop1_constants(theta, r_all_nats, rho0, snr, gamma, w) {
            Ok(c) if c.sufficient => return Ok(Some(w)),
            Ok(_) => {}
            Err(Error::InvalidArgument(_)) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f_for_flat_spectrum() {
        let d = SpectralModel::delta_at_one(0.0);
        assert_eq!(f_limit(1.0, &d, 1.0 / 15.0).unwrap(), 1.0 / (1.0 + 1.0 / 15.0));
        assert!((f_limit(0.0, &d, 1.0 / 15.0).unwrap() - 15.0).abs() < 1e-12);
    }

    #[test]
    fn e1_closed_form() {
        let d = SpectralModel::delta_at_one(0.5);
        assert!((e1(4.0, &d, 4, 15.0).unwrap() - 0.1328125).abs() < 1e-15);
        assert!(e1(1e12, &d, 4, 15.0).unwrap() < 1e-11);
        assert!(e1(0.0, &d, 4, 15.0).is_err());
    }

    #[test]
    fn e2_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let low = e2_mc(1e-6, 4, 100_000, &mut rng).unwrap();
        assert!((low.mean - 0.75).abs() < 3.0 * low.std_err + 1e-3);
        let high = e2_mc(50.0, 4, 100_000, &mut rng).unwrap();
        assert!(high.mean < 1e-3);
    }

    #[test]
    fn e2_standard_error_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = e2_mc(2.0, 4, 10_000, &mut rng).unwrap();
        let b = e2_mc(2.0, 4, 160_000, &mut rng).unwrap();
        let ratio = a.std_err / b.std_err;
        assert!((ratio - 4.0).abs() < 0.4, "ratio {ratio}");
    }

    #[test]
    fn flat_thresholds() {
        let th = thresholds(&SpectralModel::delta_at_one(0.0), 15.0).unwrap();
        assert!((th.r_alg - 0.46875).abs() < 1e-12);
        assert!((th.r_it - 0.5 * 16f64.ln()).abs() < 1e-9);
        assert!((th.r_it_bits - 2.0).abs() < 1e-9);
        let small = thresholds(&SpectralModel::delta_at_one(0.0), 1e-6).unwrap();
        assert!((small.r_it - 0.5e-6).abs() < 1e-12);
    }

    #[test]
    fn two_atoms_fall_short_of_capacity() {
        let rho = SpectralModel::atoms(0.0, vec![(0.5, 0.5), (0.5, 1.5)]).unwrap();
        let th = thresholds(&rho, 15.0).unwrap();
        assert!(th.capacity - th.r_it > 1e-4);
        assert!(th.r_alg <= th.r_it);
    }

    #[test]
    fn constants_at_reference_rate() {
        let c = prop1_constants(
            17.0 / 16.0,
            bits_to_nats(1.6),
            &SpectralModel::delta_at_one(0.0),
            15.0,
            16,
            2,
        )
        .unwrap();
        assert!((c.l_star - 0.0886).abs() < 5e-4, "{}", c.l_star);
        assert!((c.h_star - 0.0380).abs() < 5e-4, "{}", c.h_star);
        assert_eq!(c.w_min, 27);
        assert!(!c.sufficient);
        assert_eq!(c.g, 0);
        assert_eq!(c.k_bound, None);
    }

    #[test]
    fn uncoupled_limit_stuck_above_threshold() {
        let w = CouplingWindow::new(1, 1).unwrap();
        let f = |x: f64| 1.0 / (x + 1.0 / 15.0);
        let t = limit_se(&w, 0.6, f, 20);
        assert!(t.iter().all(|s| s.psi == vec![1]));
        let t = limit_se(&w, 0.4, f, 3);
        assert_eq!(t[0].psi, vec![0]);
    }
}
