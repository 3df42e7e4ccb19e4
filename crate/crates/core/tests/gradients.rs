mod common;

use common::{random_params, random_sample, toy_config};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tad_core::model::{grad_check, grad_check_with, ModelParams};

#[test]
fn analytic_gradients_match_finite_differences() {
    let cfg = toy_config();
    for seed in 0..3 {
        let p = random_params(seed, cfg);
        let s = random_sample(&mut ChaCha8Rng::seed_from_u64(100 + seed), &cfg, 5);
        let err = grad_check(&p, &s, 1e-4).unwrap();
        assert!(err < 1e-4, "seed {seed}: max relative error {err:e}");
    }
}

#[test]
fn corrupted_gradient_is_detected() {
    let cfg = toy_config();
    let p = random_params(7, cfg);
    let s = random_sample(&mut ChaCha8Rng::seed_from_u64(8), &cfg, 4);
    let err = grad_check_with(&p, &s, 1e-4, 1.0, |g| {
        g.decoder.u.iter_mut().for_each(|v| *v *= 2.0)
    })
    .unwrap();
    assert!(err > 0.3, "fault not detected: {err}");
}

#[test]
fn zero_model_gradcheck_is_finite() {
    let cfg = toy_config();
    let p = ModelParams::<f64>::zeros(cfg);
    let s = random_sample(&mut ChaCha8Rng::seed_from_u64(1), &cfg, 4);
    let err = grad_check(&p, &s, 1e-4).unwrap();
    assert!(err.is_finite());
    assert!(err < 1e-4, "{err}");
}
