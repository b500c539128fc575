//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's estimators; only problem setup is shared.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use scvamp::code_spec::{CodeSpec, Ensemble};

#[allow(clippy::too_many_arguments)]
pub fn spec(
    l: usize,
    b: usize,
    r_all: f64,
    snr: f64,
    gamma: usize,
    w: usize,
    ensemble: Ensemble,
    seed: u64,
) -> CodeSpec {
    CodeSpec {
        l,
        b,
        r_all,
        snr,
        gamma,
        w,
        ensemble,
        seed,
        dct_randomize: true,
    }
}

/// Window of row block `r` straight from the three-case definition.
pub fn window(r: usize, gamma: usize, w: usize) -> Vec<usize> {
    if r < w {
        (1..=r).collect()
    } else if r <= gamma {
        (r + 1 - w..=r).collect()
    } else {
        (r + 1 - w..=gamma).collect()
    }
}

/// Position of block `c` inside row block `r`: `c + N(r) - r`, with
/// `N(r) = |W_r|` for `r <= W` and `W` otherwise.
pub fn closed_form_position(c: usize, r: usize, gamma: usize, w: usize) -> usize {
    let n_r = if r <= w { window(r, gamma, w).len() } else { w };
    c + n_r - r
}

fn softmax_sections(p: &[f64], gamma: f64, b: usize) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; p.len()];
    let mut div = 0.0;
    for (sec, o) in p.chunks(b).zip(out.chunks_mut(b)) {
        let m = sec.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(gamma * v));
        let z: f64 = sec.iter().map(|&v| (gamma * v - m).exp()).sum();
        for (oi, &v) in o.iter_mut().zip(sec) {
            *oi = (gamma * v - m).exp() / z;
            div += gamma * *oi * (1.0 - *oi);
        }
    }
    (out, div / p.len() as f64)
}

/// Line-by-line decoder recursion with dense `n x n` solves. Returns the denoised
/// estimate after every iteration.
pub fn transcribe_algorithm1(
    y_blocks: &[Vec<f64>],
    a: &[DMatrix<f64>],
    gamma_blocks: usize,
    w: usize,
    snr: f64,
    b: usize,
    iterations: usize,
) -> Vec<Vec<f64>> {
    let rows = gamma_blocks + w - 1;
    let wins: Vec<Vec<usize>> = (1..=rows).map(|r| window(r, gamma_blocks, w)).collect();
    let block_len = a[0].ncols() / wins[0].len();
    let mut p1: Vec<DVector<f64>> = a.iter().map(|m| DVector::zeros(m.ncols())).collect();
    let mut g1: Vec<f64> = vec![b as f64; rows];
    let mut history = Vec::new();
    for _ in 0..iterations {
        // LMMSE phase.
        let mut p2 = Vec::new();
        let mut g2 = Vec::new();
        for r in 0..rows {
            let n = a[r].ncols();
            let y = DVector::from_column_slice(&y_blocks[r]);
            let mut q = a[r].transpose() * &a[r] * snr;
            for i in 0..n {
                q[(i, i)] += g1[r];
            }
            let qinv = q.try_inverse().expect("invertible");
            let x1 = &qinv * (a[r].transpose() * &y * snr + &p1[r] * g1[r]);
            let alpha1 = g1[r] * qinv.trace() / n as f64;
            let eta1 = g1[r] / alpha1;
            let gamma2 = eta1 - g1[r];
            p2.push((x1 * eta1 - &p1[r] * g1[r]) / gamma2);
            g2.push(gamma2);
        }
        // Denoising phase.
        let mut xhat = Vec::new();
        let mut etahat = Vec::new();
        for c in 1..=gamma_blocks {
            let rs: Vec<usize> = (c..c + w).collect();
            let ghat: f64 = rs.iter().map(|&r| g2[r - 1]).sum();
            let mut phat = vec![0.0; block_len];
            for &r in &rs {
                let pos = closed_form_position(c, r, gamma_blocks, w);
                for (i, v) in phat.iter_mut().enumerate() {
                    *v += g2[r - 1] * p2[r - 1][(pos - 1) * block_len + i];
                }
            }
            for v in phat.iter_mut() {
                *v /= ghat;
            }
            let (x, div) = softmax_sections(&phat, ghat, b);
            xhat.push(x);
            etahat.push(ghat / div);
        }
        // Concatenating phase.
        for r in 1..=rows {
            let win = &wins[r - 1];
            let x2: Vec<f64> = win.iter().flat_map(|&c| xhat[c - 1].clone()).collect();
            let eta2 = win.len() as f64 / win.iter().map(|&c| 1.0 / etahat[c - 1]).sum::<f64>();
            let gnew = eta2 - g2[r - 1];
            p1[r - 1] = (DVector::from_vec(x2) * eta2 - &p2[r - 1] * g2[r - 1]) / gnew;
            g1[r - 1] = gnew;
        }
        history.push(xhat.concat());
    }
    history
}

/// `E||S - E[S | S + Z/sqrt(gamma)]||^2` by simulating the section directly.
pub fn e2_posterior_mc<R: Rng + ?Sized>(gamma: f64, b: usize, n: usize, rng: &mut R) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let sd = 1.0 / gamma.sqrt();
    let mut p = vec![0.0; b];
    for _ in 0..n {
        let hot = rng.random_range(0..b);
        for (j, v) in p.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            *v = if j == hot { 1.0 } else { 0.0 } + sd * z;
        }
        let (post, _) = softmax_sections(&p, gamma, b);
        let err: f64 = post
            .iter()
            .enumerate()
            .map(|(j, q)| (q - if j == hot { 1.0 } else { 0.0 }).powi(2))
            .sum();
        sum += err;
        sum_sq += err * err;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// `(snr A^T A + gamma I)^{-1}(snr A^T y + gamma p)` and its mean derivative.
pub fn lmmse_direct(p: &[f64], gamma: f64, y: &[f64], a: &DMatrix<f64>, snr: f64) -> (Vec<f64>, f64) {
    let n = a.ncols();
    let mut q = a.transpose() * a * snr;
    for i in 0..n {
        q[(i, i)] += gamma;
    }
    let qinv = q.try_inverse().expect("invertible");
    let rhs = a.transpose() * DVector::from_column_slice(y) * snr + DVector::from_column_slice(p) * gamma;
    (
        (qinv.clone() * rhs).as_slice().to_vec(),
        gamma * qinv.trace() / n as f64,
    )
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
