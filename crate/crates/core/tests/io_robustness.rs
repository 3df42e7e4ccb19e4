use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tad_core::error::Error;
use tad_core::geometry::FrameDims;
use tad_core::io::{read_checkpoint, read_scores, read_video, write_checkpoint, write_video};
use tad_core::model::{ModelConfig, ModelParams};
use tad_core::synth::{generate_normal, inject_anomaly, AnomalyKind, ScenarioConfig};

fn small_video() -> Vec<u8> {
    let config = ScenarioConfig {
        seed: 4,
        length: 12,
        dims: FrameDims::new(320, 180).unwrap(),
        flow_grid: FrameDims::new(4, 3).unwrap(),
        ..ScenarioConfig::default()
    };
    let v = inject_anomaly(&generate_normal(&config).unwrap(), AnomalyKind::EgoCrash, 5).unwrap();
    let mut out = Vec::new();
    write_video(&v, &mut out).unwrap();
    out
}

fn small_checkpoint() -> Vec<u8> {
    let cfg = ModelConfig {
        h_loc: 3,
        h_ego: 2,
        horizon: 2,
        dims: FrameDims::new(64, 48).unwrap(),
    };
    let p: ModelParams<f32> = ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let mut out = Vec::new();
    write_checkpoint(&p, &mut out).unwrap();
    out
}

fn typed(e: &Error) -> bool {
    !e.to_string().is_empty()
}

#[test]
fn round_trips_are_byte_stable() {
    let bytes = small_video();
    let v = read_video(&bytes[..]).unwrap();
    let mut again = Vec::new();
    write_video(&v, &mut again).unwrap();
    assert_eq!(bytes, again);

    let ck = small_checkpoint();
    let p: ModelParams<f32> = read_checkpoint(&ck, None).unwrap();
    let mut again = Vec::new();
    write_checkpoint(&p, &mut again).unwrap();
    assert_eq!(ck, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mutated_videos_fail_cleanly(pos in any::<prop::sample::Index>(), byte in any::<u8>(), cut in any::<prop::sample::Index>()) {
        let mut bytes = small_video();
        let i = pos.index(bytes.len());
        bytes[i] = byte;
        if let Err(e) = read_video(&bytes[..]) {
            prop_assert!(typed(&e));
        }
        let n = cut.index(bytes.len());
        if let Err(e) = read_video(&bytes[..n]) {
            prop_assert!(typed(&e));
        }
    }

    #[test]
    fn mutated_checkpoints_fail_cleanly(pos in any::<prop::sample::Index>(), byte in any::<u8>(), cut in any::<prop::sample::Index>()) {
        let mut bytes = small_checkpoint();
        let i = pos.index(bytes.len());
        let changed = bytes[i] != byte;
        bytes[i] = byte;
        let r = read_checkpoint::<f64>(&bytes, None);
        if changed {
            prop_assert!(r.is_err());
        }
        let n = cut.index(bytes.len());
        prop_assert!(read_checkpoint::<f64>(&bytes[..n], None).is_err());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = read_video(&bytes[..]);
        let _ = read_checkpoint::<f32>(&bytes, None);
        let _ = read_scores(&bytes[..]);
    }

    #[test]
    fn arbitrary_text_lines_never_panic(lines in prop::collection::vec("[ -~]{0,60}", 0..6)) {
        let mut text = String::from("{\"format_version\":1,\"dims\":{\"width\":8,\"height\":8},\"frame_rate\":10,\"video_id\":\"x\"}\n");
        for l in &lines {
            text.push_str(l);
            text.push('\n');
        }
        let _ = read_video(text.as_bytes());
        let _ = read_scores(lines.join("\n").as_bytes());
    }
}
