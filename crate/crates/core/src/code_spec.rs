//! Code parameters, derived dimensions, and the coupling-window geometry.
//!
//! Block indices are 1-based throughout: row blocks run over `1..=gamma + w - 1`
//! and column blocks over `1..=gamma`. Rates are in bits per channel use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Design-matrix ensemble used for every row block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Dense i.i.d. Gaussian entries (Marchenko–Pastur spectrum).
    Gaussian,
    /// Randomly subsampled DCT rows scaled by `sqrt(B)` (flat nonzero spectrum).
    #[serde(alias = "dct")]
    RowOrthogonalDct,
}

fn default_true() -> bool {
    true
}

/// The full code tuple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeSpec {
    /// Number of sections.
    pub l: usize,
    /// Section size.
    pub b: usize,
    /// Overall design rate in bits per channel use.
    pub r_all: f64,
    /// Signal-to-noise ratio, `1 / sigma^2`.
    pub snr: f64,
    /// Number of column blocks.
    pub gamma: usize,
    /// Coupling width.
    pub w: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
    /// Random column permutation and sign flips for the DCT ensemble.
    #[serde(default = "default_true")]
    pub dct_randomize: bool,
}

impl CodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::Config(format!("section size b = {} must be >= 2", self.b)));
        }
        if self.l == 0 {
            return Err(Error::Config("section count l must be positive".into()));
        }
        if self.gamma < 1 || self.w < 1 || self.w > self.gamma {
            return Err(Error::Config(format!(
                "coupling requires 1 <= w <= gamma, got gamma = {}, w = {}",
                self.gamma, self.w
            )));
        }
        if !self.l.is_multiple_of(self.gamma) {
            return Err(Error::Config(format!(
                "l = {} is not divisible by gamma = {}",
                self.l, self.gamma
            )));
        }
        if !(self.r_all > 0.0 && self.r_all.is_finite()) {
            return Err(Error::Config(format!("r_all = {} must be positive", self.r_all)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::Config(format!("snr = {} must be positive", self.snr)));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / self.snr
    }
}

/// Dimensions derived from a [`CodeSpec`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Dimensions {
    /// Message length `L * B`.
    pub n: usize,
    /// Row-block count `gamma + w - 1`.
    pub rows: usize,
    /// Column-block count `gamma`.
    pub cols: usize,
    /// Coupling rate loss `rows / cols`.
    pub theta: f64,
    /// Rows per row block.
    pub m_r: usize,
    /// Total rows `rows * m_r`.
    pub m: usize,
    /// Columns of each row-block design matrix.
    pub n_r: Vec<usize>,
    /// Per-row-block rate in bits.
    pub r_r: Vec<f64>,
    /// Overall rate after rounding the row count, in bits.
    pub r_eff: f64,
    /// Sections per column block.
    pub sections_per_block: usize,
    /// Entries per column block, `N / gamma`.
    pub block_len: usize,
}

/// Rounding drift tolerated between the requested and the realized rate.
pub const RATE_DRIFT_TOLERANCE: f64 = 0.01;

pub fn derive_dimensions(spec: &CodeSpec) -> Result<Dimensions> {
    spec.validate()?;
    let bits_per_section = (spec.b as f64).log2();
    let rows = spec.gamma + spec.w - 1;
    let cols = spec.gamma;
    let m_target = spec.l as f64 * bits_per_section / spec.r_all;
    let m_r = (m_target / rows as f64).round() as usize;
    if m_r < 1 {
        return Err(Error::InfeasibleRate(format!(
            "rate {} bits leaves fewer than one row per row block",
            spec.r_all
        )));
    }
    let m = m_r * rows;
    let r_eff = spec.l as f64 * bits_per_section / m as f64;
    let drift = (r_eff - spec.r_all).abs() / spec.r_all;
    if drift > RATE_DRIFT_TOLERANCE {
        return Err(Error::Config(format!(
            "rounding rows to {m_r} per block moves the rate from {} to {r_eff:.5} bits ({:.2}% drift)",
            spec.r_all,
            100.0 * drift
        )));
    }
    let n = spec.l * spec.b;
    let block_len = n / cols;
    let theta = rows as f64 / cols as f64;
    let windows = CouplingWindow::new(spec.gamma, spec.w)?;
    let n_r: Vec<usize> = windows.windows.iter().map(|w| w.len() * block_len).collect();
    let r_r = windows.windows.iter().map(|w| theta * w.len() as f64 * r_eff).collect();
    Ok(Dimensions {
        n,
        rows,
        cols,
        theta,
        m_r,
        m,
        n_r,
        r_r,
        r_eff,
        sections_per_block: spec.l / cols,
        block_len,
    })
}

/// Returns the sorted set of column blocks `W_r` coupled into row block `r`.
pub fn coupling_window(r: usize, gamma: usize, w: usize) -> Result<Vec<usize>> {
    if gamma < 1 || w < 1 || w > gamma {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= w <= gamma, got gamma = {gamma}, w = {w}"
        )));
    }
    let rows = gamma + w - 1;
    if r < 1 || r > rows {
        return Err(Error::InvalidArgument(format!("row block {r} outside 1..={rows}")));
    }
    let range = if r < w {
        1..=r
    } else if r <= gamma {
        (r + 1 - w)..=r
    } else {
        (r + 1 - w)..=gamma
    };
    Ok(range.collect())
}

/// All windows of a coupled code together with their inverse map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingWindow {
    pub gamma: usize,
    pub w: usize,
    /// `windows[r - 1]` is `W_r`.
    pub windows: Vec<Vec<usize>>,
    /// `inverse[c - 1]` lists the row blocks whose window contains `c`.
    pub inverse: Vec<Vec<usize>>,
}

impl CouplingWindow {
    pub fn new(gamma: usize, w: usize) -> Result<Self> {
        let rows = gamma.checked_add(w).map(|s| s.saturating_sub(1)).unwrap_or(0);
        let windows = (1..=rows)
            .map(|r| coupling_window(r, gamma, w))
            .collect::<Result<Vec<_>>>()?;
        let mut inverse = vec![Vec::new(); gamma];
        for (ri, win) in windows.iter().enumerate() {
            for &c in win {
                inverse[c - 1].push(ri + 1);
            }
        }
        Ok(Self {
            gamma,
            w,
            windows,
            inverse,
        })
    }

    pub fn rows(&self) -> usize {
        self.windows.len()
    }

    pub fn window(&self, r: usize) -> &[usize] {
        &self.windows[r - 1]
    }

    pub fn rows_of(&self, c: usize) -> &[usize] {
        &self.inverse[c - 1]
    }

    /// 1-based position of column block `c` inside the concatenated vector of row block `r`.
    pub fn block_position(&self, c: usize, r: usize) -> Result<usize> {
        if r < 1 || r > self.rows() {
            return Err(Error::InvalidArgument(format!("row block {r} out of range")));
        }
        self.window(r)
            .iter()
            .position(|&x| x == c)
            .map(|p| p + 1)
            .ok_or_else(|| Error::InvalidArgument(format!("column block {c} is not in window of row block {r}")))
    }
}
