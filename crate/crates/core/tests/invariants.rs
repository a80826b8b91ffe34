//! Cross-module invariants: describing-function reductions, band linearity,
//! jump-law edge cases, and certificate consistency.

mod common;

use common::{random_element, random_stable_pair, rng, slowest_decay, with_unit_multipliers};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use reset_control::df::{df_oracle, sidf, sidf_band};
use reset_control::elements::{make_cglp, make_fore};
use reset_control::linear::{freq_response, StateSpace};
use reset_control::sim::{
    simulate, simulate_from, NoiseSpec, Quantizer, QuantizerMode, ReferenceSignal, RunDuration,
    SimConfig, SineComponent,
};
use reset_control::stability::{default_grid, hbeta_response, search_hbeta};
use reset_control::tuning::{delta_bound, DeltaTuningSpec};
use std::f64::consts::PI;

fn random_freq(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    10.0f64.powf(rng.gen_range(-1.3..1.7))
}

#[test]
fn zero_band_df_collapses_to_the_plain_sidf() {
    let mut rng = rng(11);
    for _ in 0..50 {
        let rc = random_element(&mut rng, 3);
        for _ in 0..10 {
            let w = random_freq(&mut rng);
            let e = rng.gen_range(0.5..5.0);
            let plain = sidf(&rc, w).unwrap();
            let banded = sidf_band(&rc, w, e, 0.0).unwrap();
            let scale = plain.norm().max(1.0);
            assert!(
                (banded - plain).norm() <= 1e-12 * scale,
                "w={w} plain={plain} banded={banded}"
            );
        }
    }
}

#[test]
fn identity_jump_df_matches_the_linear_response() {
    let mut rng = rng(12);
    for _ in 0..50 {
        let rc = with_unit_multipliers(&random_element(&mut rng, 3));
        for _ in 0..10 {
            let w = random_freq(&mut rng);
            let e = rng.gen_range(0.5..5.0);
            let linear = freq_response(rc.base(), w).unwrap();
            let scale = linear.norm().max(1.0);
            let plain = sidf(&rc, w).unwrap();
            assert!(
                (plain - linear).norm() <= 1e-12 * scale,
                "w={w} sidf={plain} linear={linear}"
            );
            let banded = sidf_band(&rc, w, e, 0.3 * e).unwrap();
            assert!(
                (banded - linear).norm() <= 1e-12 * scale,
                "w={w} banded={banded} linear={linear}"
            );
        }
    }
}

#[test]
fn zero_band_df_ignores_amplitude() {
    let mut rng = rng(13);
    for _ in 0..25 {
        let rc = random_element(&mut rng, 3);
        let w = random_freq(&mut rng);
        let small = sidf_band(&rc, w, 0.4, 0.0).unwrap();
        let large = sidf_band(&rc, w, 7.0, 0.0).unwrap();
        assert!(
            (small - large).norm() <= 1e-13 * small.norm().max(1.0),
            "w={w} small={small} large={large}"
        );
    }
}

#[test]
fn band_df_depends_only_on_the_band_to_amplitude_ratio() {
    let mut rng = rng(14);
    for _ in 0..25 {
        let rc = random_element(&mut rng, 3);
        let w = random_freq(&mut rng);
        let e = rng.gen_range(0.5..2.0);
        let ratio = rng.gen_range(0.05..0.9);
        let one = sidf_band(&rc, w, e, ratio * e).unwrap();
        let two = sidf_band(&rc, w, 3.0 * e, ratio * 3.0 * e).unwrap();
        assert!(
            (one - two).norm() <= 1e-12 * one.norm().max(1.0),
            "w={w} ratio={ratio} one={one} two={two}"
        );
    }
}

#[test]
fn oracle_agrees_with_the_band_df_on_random_elements() {
    let mut rng = rng(15);
    let elements = vec![
        make_fore(3.0, 0.2).unwrap(),
        make_cglp(2.0, 2.2, 40.0, 0.4).unwrap(),
        random_element(&mut rng, 2),
    ];
    for rc in &elements {
        for _ in 0..3 {
            let w = 10.0f64.powf(rng.gen_range(-0.5..1.2));
            let analytic = sidf_band(rc, w, 1.0, 0.3).unwrap();
            let measured = df_oracle(rc, w, 1.0, 0.3).unwrap();
            let mag = (measured.norm() / analytic.norm() - 1.0).abs();
            let phase = (measured.arg() - analytic.arg()).abs().to_degrees();
            assert!(
                mag <= 0.02 && phase <= 2.0,
                "w={w} analytic={analytic} measured={measured} mag_err={mag} phase_err={phase}"
            );
        }
    }
}

#[test]
fn unit_multipliers_simulate_like_a_linear_controller() {
    let mut rng = rng(16);
    for _ in 0..3 {
        let (plant, rc) = random_stable_pair(&mut rng);
        let linear = with_unit_multipliers(&rc);
        let banded = linear.clone().with_band(0.05).unwrap();
        let reference = ReferenceSignal::sine(1.0, 2.0).unwrap();
        let cfg = SimConfig {
            sample_rate_hz: 400.0,
            substeps: 2,
            duration: RunDuration::Periods(6),
            transient_discard: 0.5,
        };
        let a = simulate(&plant, &linear, &Quantizer::none(), &reference, &NoiseSpec::None, &cfg)
            .unwrap();
        let b = simulate(&plant, &banded, &Quantizer::none(), &reference, &NoiseSpec::None, &cfg)
            .unwrap();
        let worst = a
            .y
            .iter()
            .zip(&b.y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(worst, 0.0, "identity jumps must not disturb the flow");
    }
}

#[test]
fn wide_band_runs_settle_onto_the_base_linear_orbit() {
    let mut rng = rng(17);
    let (plant, rc) = random_stable_pair(&mut rng);
    let sigma = slowest_decay(&plant, &rc);
    let omega = 0.4 * sigma;
    let reference = ReferenceSignal::sine(1.0, omega).unwrap();
    // Band wide enough that steady state never leaves it.
    let spec = DeltaTuningSpec {
        omega_s: 2.0 * omega,
        reference: reference.clone(),
        q: 0.0,
        k: 3.0,
        noise_margin: 0.0,
    };
    let delta = reset_control::tuning::tune_delta(&plant, &rc, &spec).unwrap();
    let banded = rc.clone().with_band(delta).unwrap();
    let linear = with_unit_multipliers(&banded);
    let cfg = SimConfig {
        sample_rate_hz: (40.0 * sigma / (2.0 * PI)).max(200.0),
        substeps: 2,
        duration: RunDuration::Periods(20),
        transient_discard: 0.5,
    };
    let a = simulate(&plant, &banded, &Quantizer::none(), &reference, &NoiseSpec::None, &cfg)
        .unwrap();
    let b = simulate(&plant, &linear, &Quantizer::none(), &reference, &NoiseSpec::None, &cfg)
        .unwrap();
    let total = cfg.duration_seconds(&reference);
    let t0 = cfg.steady_start(total);
    assert_eq!(a.reset_count_in_window(t0, total).unwrap(), 0);
    let worst = a
        .t
        .iter()
        .zip(a.y.iter().zip(&b.y))
        .filter(|(t, _)| **t >= t0)
        .map(|(_, (p, q))| (p - q).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-9, "steady-state band orbit drifted by {worst}");
}

#[test]
fn summed_bound_covers_the_multisine_linear_error() {
    let mut rng = rng(18);
    for _ in 0..5 {
        let (plant, rc) = random_stable_pair(&mut rng);
        let sigma = slowest_decay(&plant, &rc);
        let reference = ReferenceSignal::new(vec![
            SineComponent { amplitude: 1.0, frequency: 0.2 * sigma, phase: 0.0 },
            SineComponent { amplitude: 0.5, frequency: 0.45 * sigma, phase: 0.7 },
        ])
        .unwrap();
        let spec = DeltaTuningSpec {
            omega_s: sigma,
            reference: reference.clone(),
            q: 0.0,
            k: 1.0,
            noise_margin: 0.0,
        };
        let bound = delta_bound(&plant, &rc, &spec).unwrap();
        let linear = with_unit_multipliers(&rc);
        let cfg = SimConfig {
            sample_rate_hz: (300.0 * sigma / (2.0 * PI)).max(300.0),
            substeps: 4,
            duration: RunDuration::Periods(12),
            transient_discard: 0.5,
        };
        let trace =
            simulate(&plant, &linear, &Quantizer::none(), &reference, &NoiseSpec::None, &cfg)
                .unwrap();
        let total = cfg.duration_seconds(&reference);
        let observed = trace.max_abs_error_in(cfg.steady_start(total), total).unwrap();
        // The bound is exact for the continuous loop; the sampled loop sees
        // it through a half-sample hold delay, so allow that bias.
        assert!(
            observed <= bound * (1.0 + 5e-3),
            "observed {observed} exceeds summed bound {bound}"
        );
    }
}

#[test]
fn certificate_margin_is_reproducible_on_its_grid() {
    let plant = StateSpace::first_order_lpf(1.0).unwrap();
    let rc = make_fore(1.0, 0.0).unwrap();
    let cert = search_hbeta(&plant, &rc, &default_grid())
        .unwrap()
        .expect("this loop admits a certificate");
    assert!(cert.is_valid());
    let mut margin = f64::INFINITY;
    for &w in &cert.freq_grid {
        if cert.skipped.contains(&w) {
            continue;
        }
        let h = hbeta_response(&plant, &rc, &cert.beta, &cert.p_rho, w).unwrap();
        // SISO here, so the Hermitian-part eigenvalue is just the real part.
        margin = margin.min(h[(0, 0)].re);
    }
    assert!(
        (margin - cert.min_real_margin).abs() <= 1e-9 * margin.abs().max(1.0),
        "replayed margin {margin} vs certificate {}",
        cert.min_real_margin
    );
}

#[test]
fn certified_loop_decays_from_random_initial_states() {
    let plant = StateSpace::first_order_lpf(1.0).unwrap();
    let rc = make_fore(1.0, 0.0).unwrap();
    assert!(search_hbeta(&plant, &rc, &default_grid()).unwrap().is_some());
    let mut rng = rng(19);
    let cfg = SimConfig {
        sample_rate_hz: 50.0,
        substeps: 2,
        duration: RunDuration::Seconds(20.0),
        transient_discard: 0.0,
    };
    let reference = ReferenceSignal::zero();
    for _ in 0..10 {
        let mut x_p = DVector::zeros(1);
        x_p[0] = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut x_r = DVector::zeros(1);
        x_r[0] = rng.gen_range(-2.0..2.0);
        let trace = simulate_from(
            &plant,
            &rc,
            &Quantizer::none(),
            &reference,
            &NoiseSpec::None,
            &cfg,
            &x_p,
            &x_r,
        )
        .unwrap();
        let n = trace.len();
        let head = trace.y[..n / 10].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tail = trace.y[9 * n / 10..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(
            tail < 0.01 * head,
            "x_p={} x_r={} head={head} tail={tail}",
            x_p[0],
            x_r[0]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rounding_error_stays_within_half_a_level(
        v in -1e4f64..1e4,
        range in 1.0f64..1e5,
        bits in 1u32..16,
    ) {
        let q = Quantizer::from_range_bits(QuantizerMode::Rounding, range, bits).unwrap();
        let err = q.quantize(v) - v;
        prop_assert!(err.abs() <= q.level() / 2.0 + 1e-12 * v.abs().max(1.0));
    }

    #[test]
    fn truncation_error_is_one_sided(
        v in -1e4f64..1e4,
        range in 1.0f64..1e5,
        bits in 1u32..16,
    ) {
        let q = Quantizer::from_range_bits(QuantizerMode::Truncation, range, bits).unwrap();
        let err = q.quantize(v) - v;
        let slack = 1e-12 * v.abs().max(1.0);
        prop_assert!(err <= slack && err > -q.level() - slack);
    }

    #[test]
    fn reference_amplitude_sum_bounds_the_signal(
        a1 in 0.1f64..10.0,
        a2 in 0.0f64..10.0,
        w1 in 0.1f64..50.0,
        w2 in 0.1f64..50.0,
        phase in 0.0f64..6.2,
        t in 0.0f64..100.0,
    ) {
        let r = ReferenceSignal::new(vec![
            SineComponent { amplitude: a1, frequency: w1, phase: 0.0 },
            SineComponent { amplitude: a2, frequency: w2, phase },
        ]).unwrap();
        prop_assert!(r.eval(t).abs() <= r.amplitude_sum() + 1e-12);
    }
}
