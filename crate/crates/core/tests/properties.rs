mod common;

use common::{closed_form_position, lmmse_direct, max_abs_diff, spec, window};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scvamp::code_spec::{derive_dimensions, CouplingWindow, Ensemble};
use scvamp::codec::encode;
use scvamp::denoisers::{g1_lmmse_dense, g1_lmmse_roworth, g2_denoise};
use scvamp::design::{sample_design, DesignOperator};
use scvamp::spectrum::SpectralModel;
use scvamp::state_evolution::{f_limit, limit_se};

fn gamma_w() -> impl Strategy<Value = (usize, usize)> {
    (1usize..40).prop_flat_map(|g| (Just(g), 1..=g))
}

proptest! {
    #[test]
    fn windows_match_definition((gamma, w) in gamma_w()) {
        let cw = CouplingWindow::new(gamma, w).unwrap();
        prop_assert_eq!(cw.rows(), gamma + w - 1);
        let mut total = 0;
        for r in 1..=cw.rows() {
            prop_assert_eq!(cw.window(r).to_vec(), window(r, gamma, w));
            total += cw.window(r).len();
            for &c in cw.window(r) {
                prop_assert_eq!(cw.block_position(c, r).unwrap(), closed_form_position(c, r, gamma, w));
            }
        }
        prop_assert_eq!(total, gamma * w);
        for c in 1..=gamma {
            prop_assert_eq!(cw.rows_of(c).to_vec(), (c..c + w).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dimensions_are_consistent(
        (gamma, w) in gamma_w(),
        per_block in 1usize..16,
        log_b in 1u32..6,
        r_all in 0.3f64..1.8,
    ) {
        let b = 1usize << log_b;
        let s = spec(per_block * gamma * 4, b, r_all, 15.0, gamma, w, Ensemble::Gaussian, 0);
        let Ok(d) = derive_dimensions(&s) else { return Ok(()); };
        // Each column block sits in W row blocks.
        prop_assert_eq!(d.n_r.iter().sum::<usize>(), w * d.n);
        prop_assert_eq!(d.theta, (gamma + w - 1) as f64 / gamma as f64);
        prop_assert_eq!(d.m, d.m_r * d.rows);
        prop_assert!((d.r_eff - r_all).abs() / r_all <= 0.01);
        let again = derive_dimensions(&scvamp::code_spec::CodeSpec { r_all: d.r_eff, ..s }).unwrap();
        prop_assert_eq!(again, d);
    }

    #[test]
    fn softmax_is_on_the_simplex_and_shift_invariant(
        p in prop::collection::vec(-3.0f64..3.0, 16),
        gamma in 0.01f64..200.0,
        shift in -50.0f64..50.0,
    ) {
        let out = g2_denoise(&p, gamma, 4).unwrap();
        for sec in out.estimate.chunks(4) {
            prop_assert!(sec.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((sec.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let shifted: Vec<f64> = p.iter().map(|v| v + shift).collect();
        let again = g2_denoise(&shifted, gamma, 4).unwrap();
        prop_assert!(max_abs_diff(&out.estimate, &again.estimate) < 1e-9);
        prop_assert!((out.divergence - again.divergence).abs() < 1e-9 * gamma.max(1.0));
    }

    #[test]
    fn softmax_divergence_matches_finite_differences(
        p in prop::collection::vec(-2.0f64..2.0, 12),
        gamma in 0.1f64..20.0,
    ) {
        let b = 3;
        let out = g2_denoise(&p, gamma, b).unwrap();
        let h = 1e-6;
        let mut fd = 0.0;
        for i in 0..p.len() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let d = g2_denoise(&up, gamma, b).unwrap().estimate[i] - g2_denoise(&dn, gamma, b).unwrap().estimate[i];
            fd += d / (2.0 * h);
        }
        fd /= p.len() as f64;
        prop_assert!((fd - out.divergence).abs() < 1e-6 * (1.0 + gamma), "{} vs {}", fd, out.divergence);
    }

    #[test]
    fn limit_recursion_front_is_monotone_and_symmetric(
        (gamma, w) in (4usize..40).prop_flat_map(|g| (Just(g), 1..=g)),
        r_all in 0.2f64..1.4,
    ) {
        let cw = CouplingWindow::new(gamma, w).unwrap();
        let rho = SpectralModel::delta_at_one(1.0);
        let f = |s: f64| f_limit(s, &rho, 1.0 / 15.0).unwrap();
        let trace = limit_se(&cw, r_all, f, 3 * gamma);
        for pair in trace.windows(2) {
            for c in 0..gamma {
                prop_assert!(pair[1].psi[c] <= pair[0].psi[c]);
                prop_assert!(pair[1].tau[c] <= pair[0].tau[c] * (1.0 + 1e-12));
            }
        }
        for st in &trace {
            for c in 0..gamma {
                prop_assert!((st.tau[c] - st.tau[gamma - 1 - c]).abs() <= 1e-12 * st.tau[c]);
                prop_assert_eq!(st.psi[c], st.psi[gamma - 1 - c]);
            }
            // Edges decode first: tau grows towards the middle.
            for c in 1..gamma.div_ceil(2) {
                prop_assert!(st.tau[c] >= st.tau[c - 1] * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn encoding_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, bcoef in -2.0f64..2.0) {
        let s = spec(80, 4, 1.0, 15.0, 4, 2, Ensemble::RowOrthogonalDct, seed);
        let d = derive_dimensions(&s).unwrap();
        let cw = CouplingWindow::new(4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops: Vec<DesignOperator> = (1..=d.rows).map(|r| sample_design(&s, &d, r, &mut rng).unwrap()).collect();
        let x: Vec<f64> = (0..d.n).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
        let z: Vec<f64> = (0..d.n).map(|i| ((i * 5 + 1) % 13) as f64 * 0.1).collect();
        let mix: Vec<f64> = x.iter().zip(&z).map(|(u, v)| a * u + bcoef * v).collect();
        let ex = encode(&x, &ops, &cw).unwrap();
        let ez = encode(&z, &ops, &cw).unwrap();
        let em = encode(&mix, &ops, &cw).unwrap();
        let lin: Vec<f64> = ex.iter().zip(&ez).map(|(u, v)| a * u + bcoef * v).collect();
        prop_assert!(max_abs_diff(&em, &lin) < 1e-9);
    }

    #[test]
    fn row_orthogonal_lmmse_matches_dense(
        seed in any::<u64>(),
        gamma in 0.01f64..100.0,
        snr in 0.5f64..100.0,
    ) {
        let s = spec(48, 4, 1.0, snr, 2, 2, Ensemble::RowOrthogonalDct, seed);
        let d = derive_dimensions(&s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = sample_design(&s, &d, 2, &mut rng).unwrap();
        let p: Vec<f64> = (0..op.n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..op.m).map(|i| (i as f64 * 0.91).cos()).collect();
        let fast = g1_lmmse_roworth(&p, gamma, &y, &op, snr).unwrap();
        let slow = g1_lmmse_dense(&p, gamma, &y, &DesignOperator::from_dense(2, op.to_dense()), snr).unwrap();
        let (direct, direct_div) = lmmse_direct(&p, gamma, &y, &op.to_dense(), snr);
        prop_assert!(max_abs_diff(&fast.estimate, &direct) < 1e-8);
        prop_assert!((fast.divergence - direct_div).abs() < 1e-10);
        prop_assert!(max_abs_diff(&fast.estimate, &slow.estimate) < 1e-8);
        prop_assert!((fast.divergence - slow.divergence).abs() < 1e-10);
    }
}
