use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tad_core::features::ObjectFeature;
use tad_core::geometry::{BBox, FrameDims};
use tad_core::model::{EgoDelta, ModelConfig, ModelParams, ObjectStep, SampleStep, TrainingSample};

pub fn toy_config() -> ModelConfig {
    ModelConfig {
        h_loc: 16,
        h_ego: 8,
        horizon: 3,
        dims: FrameDims::new(320, 180).unwrap(),
    }
}

/// Random track with moving boxes, noisy features and a couple of steps
/// without targets or without an object. Ego targets are those of a slow
/// vehicle: a large ego loss would bury small gradients in the round-off of
/// the finite differences.
pub fn random_sample(rng: &mut ChaCha8Rng, cfg: &ModelConfig, len: usize) -> TrainingSample<f64> {
    let mut b = BBox::new(
        rng.random_range(60.0..260.0),
        rng.random_range(40.0..140.0),
        30.0,
        20.0,
    )
    .unwrap();
    let v = (rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0));
    let mut steps = Vec::new();
    for t in 0..len {
        let ego_delta = EgoDelta {
            dphi: rng.random_range(-0.05..0.05),
            dx: rng.random_range(-0.3..0.3),
            dz: rng.random_range(0.0..1.5),
        };
        let ego_target = (t + 1 < len).then(|| {
            (1..=cfg.horizon)
                .map(|j| EgoDelta {
                    dphi: 0.003 * j as f64,
                    dx: rng.random_range(-0.15..0.15),
                    dz: 0.3 * j as f64,
                })
                .collect()
        });
        b = b.translate(v.0, v.1);
        let object = (t != 1).then(|| {
            let feature =
                ObjectFeature::new((0..50).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let target = (t % 3 != 2).then(|| {
                (1..=cfg.horizon)
                    .map(|j| {
                        b.translate(v.0 * j as f64 + rng.random_range(-3.0..3.0), v.1 * j as f64)
                    })
                    .collect()
            });
            ObjectStep {
                bbox: b,
                feature,
                target,
            }
        });
        steps.push(SampleStep {
            ego_delta,
            ego_target,
            object,
        });
    }
    TrainingSample {
        dims: cfg.dims,
        steps,
    }
}

/// Randomized heads so that every tensor carries gradient.
pub fn random_params(seed: u64, cfg: ModelConfig) -> ModelParams<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(cfg, &mut rng);
    for v in p.head.w.iter_mut().chain(p.ego_head.w.iter_mut()) {
        *v = rng.random_range(-0.3..0.3);
    }
    p
}
