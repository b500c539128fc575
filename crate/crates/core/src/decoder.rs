//! SC-VAMP decoding and its uncoupled baselines.
//!
//! One iteration runs three phases with a barrier between them:
//!
//! 1. LMMSE, per row block `r`: `x1 = g1(p1, gamma1, y_r, A_r)` and the
//!    extrinsic pair `(p2, gamma2)`.
//! 2. Denoising, per column block `c`: merge the `c`-blocks of `p2` over the
//!    rows coupled to `c` by precision-weighted averaging, then apply `g2`.
//! 3. Concatenation, per row block: rebuild `x2` from the denoised column
//!    blocks, collapse their precisions to one harmonic mean, and form the
//!    next `(p1, gamma1)`.
//!
//! With `gamma = w = 1` this is plain VAMP.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code_spec::CouplingWindow;
use crate::codec::{hard_decision, metrics_against, BlockMetrics, Message};
use crate::denoisers::{g2_denoise, g2_denoise_scaled, lmmse_parts};
use crate::design::DesignOperator;
use crate::error::{check_len, Error, Result};

/// Lower clip applied to every extrinsic precision.
pub const GAMMA_MIN: f64 = 1e-9;
/// Upper bound on precisions once the denoiser is numerically certain.
pub const PRECISION_MAX: f64 = 1e100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub k_max: usize,
    /// Weight on the previous `(gamma1, p1)` in the concatenation update; 0 disables damping.
    #[serde(default)]
    pub damping: f64,
    #[serde(default = "default_gamma_min")]
    pub gamma_min: f64,
    /// Early stop once no estimate entry moves by more than this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Keep the full estimate of every iteration in the report.
    #[serde(default, skip_serializing)]
    pub record_estimates: bool,
}

fn default_gamma_min() -> f64 {
    GAMMA_MIN
}

fn default_tol() -> f64 {
    1e-8
}

impl DecoderConfig {
    pub fn new(k_max: usize) -> Self {
        Self {
            k_max,
            damping: 0.0,
            gamma_min: GAMMA_MIN,
            tol: default_tol(),
            record_estimates: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k_max < 1 {
            return Err(Error::InvalidArgument("k_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument(format!(
                "damping {} outside [0, 1)",
                self.damping
            )));
        }
        if !(self.gamma_min > 0.0) {
            return Err(Error::InvalidArgument("gamma_min must be positive".into()));
        }
        Ok(())
    }
}

/// Messages of one SC-VAMP iteration. Row-block vectors are indexed `r - 1`,
/// column-block vectors `c - 1`.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub p1: Vec<Vec<f64>>,
    pub gamma1: Vec<f64>,
    pub x1: Vec<Vec<f64>>,
    pub eta1: Vec<f64>,
    pub p2: Vec<Vec<f64>>,
    pub gamma2: Vec<f64>,
    pub x2: Vec<Vec<f64>>,
    pub eta2: Vec<f64>,
    pub p_hat: Vec<Vec<f64>>,
    pub gamma_hat: Vec<f64>,
    pub x_hat: Vec<Vec<f64>>,
    pub eta_hat: Vec<f64>,
    pub k: usize,
}

impl DecoderState {
    /// `p1 = 0`, `gamma1 = B` for every row block.
    pub fn initial(ops: &[DesignOperator], windows: &CouplingWindow, b: usize) -> Self {
        let rows = ops.len();
        let block_len = ops.first().map_or(0, |op| op.n / windows.windows[0].len().max(1));
        let zeros_r: Vec<Vec<f64>> = ops.iter().map(|op| vec![0.0; op.n]).collect();
        let zeros_c = vec![vec![0.0; block_len]; windows.gamma];
        Self {
            p1: zeros_r.clone(),
            gamma1: vec![b as f64; rows],
            x1: zeros_r.clone(),
            eta1: vec![0.0; rows],
            p2: zeros_r.clone(),
            gamma2: vec![0.0; rows],
            x2: zeros_r,
            eta2: vec![0.0; rows],
            p_hat: zeros_c.clone(),
            gamma_hat: vec![0.0; windows.gamma],
            x_hat: zeros_c,
            eta_hat: vec![0.0; windows.gamma],
            k: 0,
        }
    }

    /// Denoised estimate `x~` over all column blocks.
    pub fn estimate(&self) -> Vec<f64> {
        self.x_hat.concat()
    }
}

/// Per-iteration record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub metrics: Option<BlockMetrics>,
    pub gamma_hat: Vec<f64>,
    pub eta_hat: Vec<f64>,
    /// Clip events during this iteration.
    pub clips: usize,
    /// Wall time since the decode started.
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub estimate: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeReport {
    pub history: Vec<IterationRecord>,
    pub estimate: Vec<f64>,
    #[serde(skip)]
    pub decision: Message,
    pub iterations: usize,
    pub clip_events: usize,
    pub converged: bool,
}

impl DecodeReport {
    pub fn final_metrics(&self) -> Option<&BlockMetrics> {
        self.history.last().and_then(|h| h.metrics.as_ref())
    }

    pub fn final_ser(&self) -> Option<f64> {
        self.final_metrics().map(|m| m.overall_ser)
    }
}

/// Borrowed problem data shared by every iteration.
struct Problem<'a> {
    y_blocks: Vec<&'a [f64]>,
    ops: &'a [DesignOperator],
    windows: &'a CouplingWindow,
    snr: f64,
    b: usize,
    block_len: usize,
    amplitudes: Option<&'a [f64]>,
}

/// Per-section amplitudes for power-allocated codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub amplitudes: Vec<f64>,
}

impl PowerAllocation {
    pub fn constant(l: usize) -> Self {
        Self {
            amplitudes: vec![1.0; l],
        }
    }

    /// `c_l^2 ∝ 2^{-2 κ C l / L}` for `l = 1..=L`, normalized to `Σ c_l^2 = L`.
    /// `capacity_bits` is `C`; `decay` is `κ` (1 gives the classic law).
    pub fn exponential(l: usize, capacity_bits: f64, decay: f64) -> Self {
        let raw: Vec<f64> = (1..=l)
            .map(|i| (-2.0 * decay * capacity_bits * i as f64 / l as f64).exp2())
            .collect();
        let total: f64 = raw.iter().sum();
        let scale = l as f64 / total;
        Self {
            amplitudes: raw.iter().map(|p| (p * scale).sqrt()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.amplitudes.len() as f64;
        let power: f64 = self.amplitudes.iter().map(|c| c * c).sum();
        if self.amplitudes.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidArgument("amplitudes must be positive and finite".into()));
        }
        if (power - l).abs() > 1e-9 * l {
            return Err(Error::InvalidArgument(format!(
                "squared amplitudes sum to {power}, expected {l}"
            )));
        }
        Ok(())
    }
}

/// SC-VAMP over a coupled design.
pub fn scvamp_decode(
    y: &[f64],
    ops: &[DesignOperator],
    windows: &CouplingWindow,
    snr: f64,
    b: usize,
    config: &DecoderConfig,
    truth: Option<&Message>,
) -> Result<DecodeReport> {
    run(y, ops, windows, snr, b, None, config, truth)
}

/// Uncoupled VAMP: a single design matrix over the whole message.
pub fn vamp_decode(
    y: &[f64],
    op: &DesignOperator,
    snr: f64,
    b: usize,
    config: &DecoderConfig,
    truth: Option<&Message>,
) -> Result<DecodeReport> {
    let windows = CouplingWindow::new(1, 1)?;
    run(y, std::slice::from_ref(op), &windows, snr, b, None, config, truth)
}

/// Uncoupled VAMP for a power-allocated code.
pub fn exp_pa_vamp_decode(
    y: &[f64],
    op: &DesignOperator,
    snr: f64,
    b: usize,
    allocation: &PowerAllocation,
    config: &DecoderConfig,
    truth: Option<&Message>,
) -> Result<DecodeReport> {
    allocation.validate()?;
    check_len(op.n / b, allocation.amplitudes.len())?;
    let windows = CouplingWindow::new(1, 1)?;
    run(
        y,
        std::slice::from_ref(op),
        &windows,
        snr,
        b,
        Some(&allocation.amplitudes),
        config,
        truth,
    )
}

#[allow(clippy::too_many_arguments)]
fn run(
    y: &[f64],
    ops: &[DesignOperator],
    windows: &CouplingWindow,
    snr: f64,
    b: usize,
    amplitudes: Option<&[f64]>,
    config: &DecoderConfig,
    truth: Option<&Message>,
) -> Result<DecodeReport> {
    config.validate()?;
    check_len(windows.rows(), ops.len())?;
    let total_rows: usize = ops.iter().map(|op| op.m).sum();
    check_len(total_rows, y.len())?;
    let n_first = ops[0].n;
    let block_len = n_first / windows.window(1).len();
    for (ri, op) in ops.iter().enumerate() {
        check_len(windows.windows[ri].len() * block_len, op.n)?;
    }
    if !block_len.is_multiple_of(b) {
        return Err(Error::InvalidArgument(format!(
            "block length {block_len} is not a multiple of section size {b}"
        )));
    }
    if let Some(t) = truth {
        check_len(block_len * windows.gamma, t.len())?;
    }
    let mut y_blocks = Vec::with_capacity(ops.len());
    let mut offset = 0;
    for op in ops {
        y_blocks.push(&y[offset..offset + op.m]);
        offset += op.m;
    }
    let problem = Problem {
        y_blocks,
        ops,
        windows,
        snr,
        b,
        block_len,
        amplitudes,
    };
    let truth_vector = match (truth, amplitudes) {
        (Some(t), Some(a)) => Some(t.to_scaled_vector(a)?),
        (Some(t), None) => Some(t.to_vector()),
        _ => None,
    };

    let mut state = DecoderState::initial(ops, windows, b);
    let mut history = Vec::new();
    let mut clip_events = 0;
    let mut converged = false;
    let mut previous: Option<Vec<Vec<f64>>> = None;
    let start = std::time::Instant::now();
    for k in 0..config.k_max {
        state.k = k;
        let clips = iterate(&mut state, &problem, config).map_err(|e| match e {
            Error::NonFinite(_) => Error::Diverged { iteration: k },
            other => other,
        })?;
        clip_events += clips;
        let metrics = match (truth, &truth_vector) {
            (Some(t), Some(tv)) => Some(metrics_against(&state.estimate(), tv, t, windows.gamma)?),
            _ => None,
        };
        let perfect = metrics.as_ref().is_some_and(|m| m.overall_ser == 0.0);
        let settled = previous
            .as_ref()
            .is_some_and(|prev| max_abs_change(prev, &state.x_hat) < config.tol);
        history.push(IterationRecord {
            k,
            metrics,
            gamma_hat: state.gamma_hat.clone(),
            eta_hat: state.eta_hat.clone(),
            clips,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            estimate: config.record_estimates.then(|| state.estimate()),
        });
        if perfect || settled {
            converged = true;
            break;
        }
        previous = Some(state.x_hat.clone());
    }
    let estimate = state.estimate();
    let decision = hard_decision(&estimate, b)?;
    Ok(DecodeReport {
        iterations: history.len(),
        history,
        estimate,
        decision,
        clip_events,
        converged,
    })
}

fn max_abs_change(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn clip(value: f64, floor: f64, clips: &mut usize) -> f64 {
    if value.is_nan() || value < floor {
        *clips += 1;
        floor
    } else {
        value.min(PRECISION_MAX)
    }
}

fn ensure_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("decoder state"))
    }
}

/// One full iteration; returns the number of clip events.
fn iterate(state: &mut DecoderState, pb: &Problem<'_>, config: &DecoderConfig) -> Result<usize> {
    let rows = pb.ops.len();
    let mut clips = 0;

    // LMMSE phase.
    let lmmse: Vec<_> = (0..rows)
        .into_par_iter()
        .map(|ri| lmmse_parts(&state.p1[ri], state.gamma1[ri], pb.y_blocks[ri], &pb.ops[ri], pb.snr))
        .collect::<Result<_>>()?;
    for (ri, parts) in lmmse.into_iter().enumerate() {
        let gamma1 = state.gamma1[ri];
        let p1 = &state.p1[ri];
        // eta1 = gamma1 / alpha1 and gamma2 = eta1 - gamma1 = gamma1 (1 - alpha1) / alpha1.
        state.eta1[ri] = gamma1 / parts.divergence;
        let gamma2 = clip(
            gamma1 * parts.complement / parts.divergence,
            config.gamma_min,
            &mut clips,
        );
        state.gamma2[ri] = gamma2;
        // p2 = (eta1 x1 - gamma1 p1) / gamma2 = p1 + (x1 - p1) / (1 - alpha1)
        let scale = if parts.complement > 0.0 {
            1.0 / parts.complement
        } else {
            0.0
        };
        state.p2[ri] = p1.iter().zip(&parts.delta).map(|(p, d)| p + scale * d).collect();
        state.x1[ri] = p1.iter().zip(&parts.delta).map(|(p, d)| p + d).collect();
        ensure_finite(&state.p2[ri])?;
    }

    // Denoising phase.
    let denoised: Vec<_> = (1..=pb.windows.gamma)
        .into_par_iter()
        .map(|c| denoise_block(state, pb, c))
        .collect::<Result<_>>()?;
    for (ci, (p_hat, gamma_hat, x_hat, eta_hat)) in denoised.into_iter().enumerate() {
        state.p_hat[ci] = p_hat;
        state.gamma_hat[ci] = gamma_hat;
        state.x_hat[ci] = x_hat;
        state.eta_hat[ci] = eta_hat;
    }

    // Concatenation phase.
    for ri in 0..rows {
        let window = &pb.windows.windows[ri];
        let inv_sum: f64 = window.iter().map(|&c| 1.0 / state.eta_hat[c - 1]).sum();
        let eta2 = (window.len() as f64 / inv_sum).min(PRECISION_MAX);
        state.eta2[ri] = eta2;
        let x2: Vec<f64> = window
            .iter()
            .flat_map(|&c| state.x_hat[c - 1].iter().copied())
            .collect();
        let gamma2 = state.gamma2[ri];
        let gamma1_new = clip(eta2 - gamma2, config.gamma_min, &mut clips);
        // p1 = (eta2 x2 - gamma2 p2) / gamma1
        let p1_new: Vec<f64> = x2
            .iter()
            .zip(&state.p2[ri])
            .map(|(x, p)| (eta2 * x - gamma2 * p) / gamma1_new)
            .collect();
        ensure_finite(&p1_new)?;
        if config.damping > 0.0 {
            let d = config.damping;
            state.gamma1[ri] = (1.0 - d) * gamma1_new + d * state.gamma1[ri];
            for (old, new) in state.p1[ri].iter_mut().zip(&p1_new) {
                *old = (1.0 - d) * new + d * *old;
            }
        } else {
            state.gamma1[ri] = gamma1_new;
            state.p1[ri] = p1_new;
        }
        state.x2[ri] = x2;
    }
    Ok(clips)
}

type BlockOutput = (Vec<f64>, f64, Vec<f64>, f64);

fn denoise_block(state: &DecoderState, pb: &Problem<'_>, c: usize) -> Result<BlockOutput> {
    let len = pb.block_len;
    let rows = pb.windows.rows_of(c);
    let gamma_hat: f64 = rows.iter().map(|&r| state.gamma2[r - 1]).sum();
    let mut p_hat = vec![0.0; len];
    for &r in rows {
        let pos = pb.windows.block_position(c, r)?;
        let weight = state.gamma2[r - 1] / gamma_hat;
        let block = &state.p2[r - 1][(pos - 1) * len..pos * len];
        for (acc, v) in p_hat.iter_mut().zip(block) {
            *acc += weight * v;
        }
    }
    let out = match pb.amplitudes {
        None => g2_denoise(&p_hat, gamma_hat, pb.b)?,
        Some(all) => {
            let per_block = len / pb.b;
            let amps = &all[(c - 1) * per_block..c * per_block];
            g2_denoise_scaled(&p_hat, gamma_hat, pb.b, amps)?
        }
    };
    let eta_hat = if out.divergence > 0.0 {
        (gamma_hat / out.divergence).min(PRECISION_MAX)
    } else {
        PRECISION_MAX
    };
    Ok((p_hat, gamma_hat, out.estimate, eta_hat))
}
