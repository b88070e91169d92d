//! Fixtures shared by the benchmarks.

use emstad_core::montecarlo::{simulate_scene, Prepared, TrialSetup};
use emstad_core::rng::derive_trial_rng;
use emstad_core::{CMat, HermitianPd};

/// Table I scene at `sinr_db` with its precomputed covariance and steering set.
pub fn reference_scene(sinr_db: f64, seed: u64) -> (TrialSetup, Prepared, CMat) {
    let setup = TrialSetup::reference(sinr_db, false);
    let prep = setup.prepare().expect("reference setup is valid");
    let scene = simulate_scene(&setup, &prep, &mut derive_trial_rng(seed, 0)).expect("scene");
    (setup, prep, scene.z)
}

/// Sample covariance of a reference scene, a typical N = 8 positive-definite input.
pub fn sample_covariance_8x8() -> HermitianPd {
    let (_, _, z) = reference_scene(20.0, 1);
    let mut s = z.matmul(&z.conj_transpose());
    s.scale(1.0 / z.cols() as f64);
    HermitianPd::new(s).expect("sample covariance is positive definite")
}
