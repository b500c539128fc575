//! Messages, encoding through the coupled design, the AWGN channel, hard
//! decisions, and per-block error metrics.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use crate::code_spec::CouplingWindow;
use crate::design::DesignOperator;
use crate::error::{check_len, Error, Result};

/// A section-sparse message: one nonzero per length-`b` section.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub b: usize,
    /// 0-based position of the nonzero entry in each section.
    pub positions: Vec<usize>,
}

impl Message {
    pub fn from_positions(b: usize, positions: Vec<usize>) -> Result<Self> {
        if let Some(&p) = positions.iter().find(|&&p| p >= b) {
            return Err(Error::InvalidArgument(format!(
                "position {p} outside section of size {b}"
            )));
        }
        Ok(Self { b, positions })
    }

    pub fn sections(&self) -> usize {
        self.positions.len()
    }

    pub fn len(&self) -> usize {
        self.positions.len() * self.b
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Dense 0/1 vector of length `L * B`.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for (l, &p) in self.positions.iter().enumerate() {
            x[l * self.b + p] = 1.0;
        }
        x
    }

    /// Dense vector whose section `l` carries `amplitudes[l]` instead of one.
    pub fn to_scaled_vector(&self, amplitudes: &[f64]) -> Result<Vec<f64>> {
        check_len(self.sections(), amplitudes.len())?;
        let mut x = vec![0.0; self.len()];
        for (l, (&p, &c)) in self.positions.iter().zip(amplitudes).enumerate() {
            x[l * self.b + p] = c;
        }
        Ok(x)
    }
}

pub fn sample_message<R: Rng + ?Sized>(l: usize, b: usize, gamma: usize, rng: &mut R) -> Result<Message> {
    if gamma == 0 || !l.is_multiple_of(gamma) {
        return Err(Error::InvalidArgument(format!(
            "{l} sections cannot be split into {gamma} equal blocks"
        )));
    }
    let dist = Uniform::new(0, b).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(Message {
        b,
        positions: (0..l).map(|_| dist.sample(rng)).collect(),
    })
}

/// AWGN channel parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Channel {
    pub sigma2: f64,
    pub snr: f64,
    pub capacity_bits: f64,
}

impl Channel {
    pub fn from_snr(snr: f64) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
        }
        Ok(Self {
            sigma2: 1.0 / snr,
            snr,
            capacity_bits: 0.5 * (1.0 + snr).log2(),
        })
    }

    pub fn capacity_nats(&self) -> f64 {
        0.5 * self.snr.ln_1p()
    }
}

/// Concatenation of the column blocks in `window`, each `block_len` long.
pub fn gather_blocks(x: &[f64], window: &[usize], block_len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(window.len() * block_len);
    for &c in window {
        out.extend_from_slice(&x[(c - 1) * block_len..c * block_len]);
    }
    out
}

/// `z = [A_1 x_1, ..., A_R x_R]` where `x_r` concatenates the blocks of `W_r`.
pub fn encode(x: &[f64], ops: &[DesignOperator], windows: &CouplingWindow) -> Result<Vec<f64>> {
    check_len(windows.rows(), ops.len())?;
    if !x.len().is_multiple_of(windows.gamma) {
        return Err(Error::DimensionMismatch {
            expected: x.len() - x.len() % windows.gamma,
            got: x.len(),
        });
    }
    let block_len = x.len() / windows.gamma;
    let mut z = Vec::with_capacity(ops.iter().map(|op| op.m).sum());
    for (ri, op) in ops.iter().enumerate() {
        let xr = gather_blocks(x, &windows.windows[ri], block_len);
        z.extend(op.apply_forward(&xr)?);
    }
    Ok(z)
}

pub fn awgn<R: Rng + ?Sized>(z: &[f64], sigma2: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(z.iter().map(|&v| v + normal.sample(rng)).collect())
}

/// Per-section argmax; ties resolve to the lowest index.
pub fn hard_decision(estimate: &[f64], b: usize) -> Result<Message> {
    if b == 0 || !estimate.len().is_multiple_of(b) {
        return Err(Error::InvalidArgument(format!(
            "length {} is not a multiple of section size {b}",
            estimate.len()
        )));
    }
    let positions = estimate
        .chunks_exact(b)
        .map(|sec| {
            let mut best = 0;
            for (i, &v) in sec.iter().enumerate().skip(1) {
                if v > sec[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(Message { b, positions })
}

/// Per-block MSE per section and section error rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockMetrics {
    pub mse: Vec<f64>,
    pub ser: Vec<f64>,
    pub overall_ser: f64,
}

impl BlockMetrics {
    pub fn overall_mse(&self) -> f64 {
        self.mse.iter().sum::<f64>() / self.mse.len() as f64
    }
}

pub fn metrics(estimate: &[f64], truth: &Message, gamma: usize) -> Result<BlockMetrics> {
    metrics_against(estimate, &truth.to_vector(), truth, gamma)
}

/// Metrics against an explicit (possibly power-allocated) truth vector.
pub fn metrics_against(estimate: &[f64], truth_vector: &[f64], truth: &Message, gamma: usize) -> Result<BlockMetrics> {
    check_len(truth.len(), estimate.len())?;
    check_len(truth.len(), truth_vector.len())?;
    if gamma == 0 || !truth.sections().is_multiple_of(gamma) {
        return Err(Error::InvalidArgument(
            "block partition does not divide the sections".into(),
        ));
    }
    let decided = hard_decision(estimate, truth.b)?;
    let per_block = truth.sections() / gamma;
    let block_len = per_block * truth.b;
    let mut mse = Vec::with_capacity(gamma);
    let mut ser = Vec::with_capacity(gamma);
    for c in 0..gamma {
        let span = c * block_len..(c + 1) * block_len;
        let sq: f64 = estimate[span.clone()]
            .iter()
            .zip(&truth_vector[span])
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        mse.push(sq / per_block as f64);
        let secs = c * per_block..(c + 1) * per_block;
        let wrong = decided.positions[secs.clone()]
            .iter()
            .zip(&truth.positions[secs])
            .filter(|(a, b)| a != b)
            .count();
        ser.push(wrong as f64 / per_block as f64);
    }
    let overall_ser = ser.iter().sum::<f64>() / gamma as f64;
    Ok(BlockMetrics { mse, ser, overall_ser })
}
