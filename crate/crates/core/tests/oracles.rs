//! Library values against frozen references from `oracles/derive.py`, which
//! builds the continuous-time Fisher matrix straight from the signal model
//! with adaptive quadrature and inverts it densely.

use extended_crlb::fisher::{self, fim_oracle_fd};
use extended_crlb::scene::{self, TargetScene};
use extended_crlb::series;
use extended_crlb::waveform::{self, WaveformSpec};
use extended_crlb::Quadrature;
use nalgebra::DMatrix;
use num_complex::Complex64;

const GAMMA: f64 = 1.0 / 1.06;
const DELTA: f64 = 6.25e-8;

const REF_M00: f64 = 2.659882908135364e-05;
const REF_LAMBDA_12_P2: f64 = 2.651328038545304e-05;
const REF_N0_P4_26DB: f64 = 1.1266569919522665e-06;
const REF_CRLB_TAU_P4_26DB: f64 = 3.1721200606745734e-14;
const REF_CRLB_GAMMA_P4_26DB: f64 = 1.4215886977982471e-05;
const REF_N0_P1_20DB: f64 = 2.81947588262349e-07;
const REF_CRLB_TAU_P1_20DB: f64 = 1.0794556978325524e-13;
const REF_CRLB_GAMMA_P1_20DB: f64 = 5.642299823447573e-05;

fn chirp() -> WaveformSpec {
    WaveformSpec::chirp(2.56e9, 5e-5).unwrap()
}

fn reference_scene(p: usize) -> TargetScene {
    TargetScene::new(2e-4, GAMMA, DELTA, vec![Complex64::new(1.0, 0.0); p], 5e-5, None).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn chirp_energy_and_gram_entry() {
    let q = Quadrature::default();
    let m = waveform::moments(&chirp(), 1, &q).unwrap();
    assert!(rel(m.m(0, 0), REF_M00) < 1e-8);
    let g = scene::gram_matrix(&reference_scene(2), &chirp(), &q).unwrap();
    assert!(rel(g.lambda[(0, 1)].re, REF_LAMBDA_12_P2) < 1e-8, "{}", g.lambda[(0, 1)]);
    assert!(g.lambda[(0, 1)].im.abs() < 1e-12 * REF_LAMBDA_12_P2);
    assert!(rel(g.lambda[(0, 0)].re, REF_M00) < 1e-8);
}

#[test]
fn n0_for_26_db() {
    let s = reference_scene(4);
    let g = scene::gram_matrix(&s, &chirp(), &Quadrature::default()).unwrap();
    let n0 = scene::n0_for_snr(&s, &g, 26.0).unwrap();
    assert!(rel(n0, REF_N0_P4_26DB) < 1e-8, "{n0:e}");
}

#[test]
fn integral_crlb_matches_model_level_reference() {
    let q = Quadrature::default();
    for (p, n0, t, g) in [
        (4, REF_N0_P4_26DB, REF_CRLB_TAU_P4_26DB, REF_CRLB_GAMMA_P4_26DB),
        (1, REF_N0_P1_20DB, REF_CRLB_TAU_P1_20DB, REF_CRLB_GAMMA_P1_20DB),
    ] {
        let r = fisher::scene_crlb(&reference_scene(p), &chirp(), n0, &q).unwrap();
        assert!(rel(r.crlb_tau, t) < 1e-6, "P={p} {:e}", r.crlb_tau);
        assert!(rel(r.crlb_gamma, g) < 1e-6, "P={p} {:e}", r.crlb_gamma);
    }
}

#[test]
fn pinned_fixture_agrees_with_sampled_fd_oracle() {
    let s = reference_scene(4);
    let fd = fisher::crlb_from_fim(&fim_oracle_fd(&s, &chirp(), REF_N0_P4_26DB, 1e-5).unwrap()).unwrap();
    assert!(rel(fd.crlb_tau, REF_CRLB_TAU_P4_26DB) < 0.01);
    assert!(rel(fd.crlb_gamma, REF_CRLB_GAMMA_P4_26DB) < 0.01);
}

#[test]
fn scalar_blocks_match_fd_fim_p4() {
    let s = reference_scene(4);
    let n0 = REF_N0_P4_26DB;
    let b = fisher::fisher_blocks(&s, &chirp(), n0, &Quadrature::default()).unwrap();
    let j = fim_oracle_fd(&s, &chirp(), n0, 1e-5).unwrap();
    assert!(rel(b.f11, j[(0, 0)]) < 0.01);
    assert!(rel(b.f12, j[(0, 1)]) < 0.01);
    assert!(rel(b.f22, j[(1, 1)]) < 0.01);
    for r in 0..4 {
        for c in 0..4 {
            assert!((b.f33[(r, c)].re - j[(2 + r, 2 + c)]).abs() < 0.01 * j[(2 + r, 2 + r)]);
        }
    }
}

// Smooth pulse, so sampled sums and integrals agree without edge terms.
#[test]
fn every_block_matches_fd_fim_on_smooth_pulse() {
    let p = 4;
    let spec = WaveformSpec::gaussian_pulse(2e-6, 3e5, 2.4e-5).unwrap();
    let x = vec![
        Complex64::new(1.0, 0.3),
        Complex64::new(-0.4, 0.8),
        Complex64::new(0.7, -0.6),
        Complex64::new(0.2, 1.1),
    ];
    let s = TargetScene::new(2e-4, GAMMA, 5e-8, x, 2.4e-5, None).unwrap();
    let n0 = 1e-6;
    let b = fisher::fisher_blocks(&s, &spec, n0, &Quadrature::default()).unwrap();
    let j = fim_oracle_fd(&s, &spec, n0, 1e-6).unwrap();
    assert!(rel(b.f11, j[(0, 0)]) < 1e-3);
    assert!(rel(b.f12, j[(0, 1)]) < 1e-3);
    assert!(rel(b.f22, j[(1, 1)]) < 1e-3);
    let vec_rel = |f: &nalgebra::DVector<Complex64>, row: usize| {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..p {
            let fd = Complex64::new(j[(row, 2 + i)], j[(row, 2 + p + i)]);
            num += (f[i] - fd).norm_sqr();
            den += fd.norm_sqr();
        }
        (num / den).sqrt()
    };
    assert!(vec_rel(&b.f31, 0) < 1e-3, "{}", vec_rel(&b.f31, 0));
    assert!(vec_rel(&b.f32, 1) < 1e-3, "{}", vec_rel(&b.f32, 1));
    let scale = j[(2, 2)];
    for r in 0..p {
        for c in 0..p {
            let f = b.f33[(r, c)];
            assert!((f.re - j[(2 + r, 2 + c)]).abs() < 1e-3 * scale);
            assert!((-f.im - j[(2 + r, 2 + p + c)]).abs() < 1e-3 * scale);
            assert!((f.im - j[(2 + p + r, 2 + c)]).abs() < 1e-3 * scale);
        }
    }
}

#[test]
fn fd_reduced_over_real_part_matches_single_closed_form() {
    let s = reference_scene(1);
    let n0 = REF_N0_P1_20DB;
    let j = fim_oracle_fd(&s, &chirp(), n0, 1e-5).unwrap();
    // Known-real coefficient: drop the imaginary column, eliminate the real one.
    let jaa = j[(2, 2)];
    let red = |a: usize, b: usize| j[(a, b)] - j[(a, 2)] * j[(2, b)] / jaa;
    let m = waveform::moments(&chirp(), 1, &Quadrature::default()).unwrap();
    let c = fisher::crlb_single_from_moments(&m, 1.0, GAMMA, n0).unwrap();
    assert!(rel(red(0, 0), c.a11) < 0.01);
    assert!(rel(red(0, 1), c.a12) < 0.01);
    assert!(rel(red(1, 1), c.a22) < 0.01);
}

#[test]
fn riemann_sum_of_echo_energy_converges_first_order() {
    let spec = chirp();
    let target = REF_M00 / GAMMA;
    let mut errors = Vec::new();
    for k in 0..4 {
        let d = DELTA / f64::powi(2.0, k);
        let s = TargetScene::new(2e-4, GAMMA, d, vec![Complex64::new(1.0, 0.0)], 5e-5, None).unwrap();
        let phi = scene::measurement_matrix(&s, &spec).unwrap();
        let e: f64 = phi.column(0).iter().map(|v| v.norm_sqr()).sum::<f64>() * d;
        errors.push((e - target).abs() / target);
    }
    assert!(errors[3] < 1e-3, "{errors:?}");
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((0.8..1.3).contains(&order), "{errors:?}");
    }
}

#[test]
fn dense_inverse_of_fd_fim_equals_equilibrated_schur() {
    let s = reference_scene(4);
    let j = fim_oracle_fd(&s, &chirp(), REF_N0_P4_26DB, 1e-5).unwrap();
    let inv: DMatrix<f64> = j.clone().try_inverse().unwrap();
    let c = fisher::crlb_from_fim(&j).unwrap();
    assert!(rel(c.crlb_tau, inv[(0, 0)]) < 1e-8);
    assert!(rel(c.crlb_gamma, inv[(1, 1)]) < 1e-8);
}

fn series_fixture(p: usize) -> (TargetScene, WaveformSpec) {
    let x = (0..p)
        .map(|i| Complex64::new(1.0 + 0.1 * i as f64, 0.2 * (i % 3) as f64))
        .collect();
    let s = TargetScene::new(2e-5, GAMMA, DELTA, x, 5e-6, None).unwrap();
    (s, WaveformSpec::gaussian_pulse(1.5e-7, 1e6, 5e-6).unwrap())
}

#[test]
fn series_gaps_shrink_strictly_once_the_tail_is_reached() {
    let (s, spec) = series_fixture(2);
    let orders: Vec<usize> = (7..=14).collect();
    let d = series::truncation_decay(&s, &spec, 1e-9, &orders, true, &Quadrature::default()).unwrap();
    assert!(d.monotone);
    for w in d.rows.windows(2) {
        assert!(w[1].gap_tau < w[0].gap_tau, "{:?}", d.rows);
        assert!(w[1].gap_gamma < w[0].gap_gamma, "{:?}", d.rows);
    }
    let last = d.rows.last().unwrap();
    assert!(last.gap_tau < 1e-8 && last.gap_gamma < 1e-8);
}

#[test]
fn larger_targets_need_more_series_terms() {
    let first_below = |p: usize| {
        let (s, spec) = series_fixture(p);
        let orders: Vec<usize> = (1..=16).collect();
        let d = series::truncation_decay(&s, &spec, 1e-9, &orders, true, &Quadrature::default()).unwrap();
        d.rows.iter().find(|r| r.failure.is_none() && r.gap_tau < 1e-2).map(|r| r.order).unwrap()
    };
    let k: Vec<usize> = [2, 3, 4].into_iter().map(first_below).collect();
    assert!(k[0] < k[1] && k[1] < k[2], "{k:?}");
}
