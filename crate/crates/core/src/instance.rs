//! Seeded problem instances: RNG streams, designs, message and channel output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::code_spec::{derive_dimensions, CodeSpec, CouplingWindow, Dimensions};
use crate::codec::{awgn, encode, sample_message, Channel, Message};
use crate::design::{sample_design, DesignOperator};
use crate::error::Result;

/// Stream tags. Design streams use the row-block index `r >= 1`.
pub const STREAM_MESSAGE: u64 = u64::MAX - 1;
pub const STREAM_NOISE: u64 = u64::MAX;
/// Stream used by state-evolution Monte Carlo.
pub const STREAM_SE: u64 = u64::MAX - 2;

/// Independent ChaCha stream keyed by `(base_seed, trial)` with stream id `tag`.
pub fn stream(base_seed: u64, trial: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(tag);
    rng
}

/// Seed reported for trial `t`; distinct trials get distinct values.
pub fn trial_seed(base_seed: u64, trial: u64) -> u64 {
    base_seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Everything a decoder needs for one trial, plus the ground truth.
#[derive(Clone, Debug)]
pub struct Instance {
    pub dims: Dimensions,
    pub windows: CouplingWindow,
    pub channel: Channel,
    pub ops: Vec<DesignOperator>,
    pub message: Message,
    pub y: Vec<f64>,
}

impl Instance {
    /// Samples designs, message and noise for `trial` from `spec.seed`.
    pub fn sample(spec: &CodeSpec, trial: u64) -> Result<Self> {
        let dims = derive_dimensions(spec)?;
        let windows = CouplingWindow::new(spec.gamma, spec.w)?;
        let channel = Channel::from_snr(spec.snr)?;
        let ops = (1..=dims.rows)
            .map(|r| sample_design(spec, &dims, r, &mut stream(spec.seed, trial, r as u64)))
            .collect::<Result<Vec<_>>>()?;
        let message = sample_message(
            spec.l,
            spec.b,
            spec.gamma,
            &mut stream(spec.seed, trial, STREAM_MESSAGE),
        )?;
        let y = Self::transmit(&message.to_vector(), &ops, &windows, &channel, spec.seed, trial)?;
        Ok(Self {
            dims,
            windows,
            channel,
            ops,
            message,
            y,
        })
    }

    /// Encodes an arbitrary message vector and adds the trial's noise.
    pub fn transmit(
        x: &[f64],
        ops: &[DesignOperator],
        windows: &CouplingWindow,
        channel: &Channel,
        base_seed: u64,
        trial: u64,
    ) -> Result<Vec<f64>> {
        let z = encode(x, ops, windows)?;
        awgn(&z, channel.sigma2, &mut stream(base_seed, trial, STREAM_NOISE))
    }
}
