use super::train::run;
use super::{loss_and_grad, ModelParams, TrainingSample};
use crate::error::Result;

/// Maximum relative error between the analytic gradient and central finite
/// differences with step `eps`, over every parameter.
///
/// Ego predictions feeding the box decoder are held at their values under the
/// unperturbed parameters, matching the stop-gradient used in training.
pub fn grad_check(
    params: &ModelParams<f64>,
    sample: &TrainingSample<f64>,
    eps: f64,
) -> Result<f64> {
    grad_check_with(params, sample, eps, 1.0, |_| {})
}

/// As [`grad_check`], with an explicit ego-loss weight and a hook that may
/// tamper with the analytic gradient before comparison.
pub fn grad_check_with(
    params: &ModelParams<f64>,
    sample: &TrainingSample<f64>,
    eps: f64,
    lambda_ego: f64,
    tamper: impl FnOnce(&mut ModelParams<f64>),
) -> Result<f64> {
    let (_, mut analytic) = loss_and_grad(params, std::slice::from_ref(sample), lambda_ego)?;
    tamper(&mut analytic);
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let n_tensors = params.tensors().len();
    for ti in 0..n_tensors {
        let len = params.tensors()[ti].1.len();
        for i in 0..len {
            let orig = probe.tensors()[ti].1[i];
            probe.tensors_mut()[ti].1[i] = orig + eps;
            let plus = run(&probe, Some(params), sample, lambda_ego, None)?;
            probe.tensors_mut()[ti].1[i] = orig - eps;
            let minus = run(&probe, Some(params), sample, lambda_ego, None)?;
            probe.tensors_mut()[ti].1[i] = orig;
            // difference each term separately so the larger one does not
            // swamp the other in round-off
            let numeric = ((plus.boxes - minus.boxes) + (plus.ego - minus.ego)) / (2.0 * eps);
            let ga = analytic.tensors()[ti].1[i];
            let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(1e-8);
            // NaN must not be swallowed by `max`
            worst = if rel.is_nan() {
                f64::INFINITY
            } else {
                worst.max(rel)
            };
        }
    }
    Ok(worst)
}
