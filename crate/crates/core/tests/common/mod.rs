//! Shared generators for the integration suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reset_control::elements::{make_fore, ResetCondition, ResetController};
use reset_control::linear::{eigenvalues, series, Mat, StateSpace};
use reset_control::stability::closed_loop_a;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn signed_gain(rng: &mut ChaCha8Rng) -> f64 {
    let m = rng.gen_range(0.5..2.0);
    if rng.gen_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Random stable SISO element of order `1..=max_order` with per-state reset
/// multipliers in `[-1, 1]`.
pub fn random_element(rng: &mut ChaCha8Rng, max_order: usize) -> ResetController {
    let n = rng.gen_range(1..=max_order);
    let mut a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let max_re = eigenvalues(&a)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    // Shift the diagonal so every eigenvalue is safely damped.
    let shift = max_re + rng.gen_range(0.2..1.5);
    for i in 0..n {
        a[(i, i)] -= shift;
    }
    let b = Mat::from_fn(n, 1, |_, _| signed_gain(rng));
    let c = Mat::from_fn(1, n, |_, _| signed_gain(rng));
    let d = if rng.gen_bool(0.25) {
        Mat::from_element(1, 1, rng.gen_range(-0.5..0.5))
    } else {
        Mat::zeros(1, 1)
    };
    let base = StateSpace::new(a, b, c, d).unwrap();
    let a_rho = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ResetController::new(base, a_rho, ResetCondition::ZeroCrossing).unwrap()
}

/// Same element with every multiplier forced to one.
pub fn with_unit_multipliers(rc: &ResetController) -> ResetController {
    ResetController::new(
        rc.base().clone(),
        vec![1.0; rc.order()],
        rc.condition(),
    )
    .unwrap()
}

/// Random first-order plant and gain+reset-lag controller whose base-linear
/// closed loop has every eigenvalue real part below `-0.3`.
pub fn random_stable_pair(rng: &mut ChaCha8Rng) -> (StateSpace, ResetController) {
    loop {
        let pole = rng.gen_range(0.5..5.0);
        let dc = rng.gen_range(0.5..4.0);
        let plant = series(
            &StateSpace::gain(dc),
            &StateSpace::first_order_lpf(pole).unwrap(),
        )
        .unwrap();
        let w_r = rng.gen_range(1.0..20.0);
        let gamma = rng.gen_range(-0.5..0.9);
        let k = rng.gen_range(0.5..10.0);
        let fore = make_fore(w_r, gamma).unwrap();
        let base = series(&StateSpace::gain(k), fore.base()).unwrap();
        let rc =
            ResetController::new(base, fore.a_rho().to_vec(), ResetCondition::ZeroCrossing)
                .unwrap();
        let a_cl = closed_loop_a(&plant, &rc).unwrap();
        let re_max = eigenvalues(&a_cl)
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if re_max < -0.3 {
            return (plant, rc);
        }
    }
}

/// Slowest decay rate of the base-linear closed loop.
pub fn slowest_decay(plant: &StateSpace, rc: &ResetController) -> f64 {
    let a_cl = closed_loop_a(plant, rc).unwrap();
    eigenvalues(&a_cl)
        .iter()
        .map(|l| -l.re)
        .fold(f64::INFINITY, f64::min)
}
