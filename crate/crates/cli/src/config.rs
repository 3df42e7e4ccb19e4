//! Run settings: defaults, then `key = value` lines from `--config`, then
//! `--set` overrides, then dedicated flags.

use std::path::Path;

use serde_json::Value;
use tad_core::geometry::FrameDims;
use tad_core::pipeline::Method;
use tad_core::synth::{benchmark_config, ScenarioConfig};
use tad_core::tracking::{DEFAULT_IOU_THRESHOLD, DEFAULT_MAX_AGE};

use crate::Failure;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub delta: usize,
    pub methods: Vec<Method>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub lambda_ego: f64,
    pub h_loc: usize,
    pub h_ego: usize,
    pub max_age: u32,
    pub iou_threshold: f64,
    pub mask_raster: Option<FrameDims>,
    pub normalize_std: bool,
    pub scene: ScenarioConfig,
    /// Whether `delta` was set explicitly rather than defaulted.
    pub delta_given: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let scene = benchmark_config();
        Self {
            seed: 0,
            delta: scene.horizon,
            methods: Method::ALL.to_vec(),
            epochs: 50,
            lr: 1e-3,
            batch: 8,
            lambda_ego: 1.0,
            h_loc: 64,
            h_ego: 32,
            max_age: DEFAULT_MAX_AGE,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            mask_raster: None,
            normalize_std: true,
            scene,
            delta_given: false,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Failure> {
    value
        .parse()
        .map_err(|_| usage(format!("invalid value '{value}' for '{key}'")))
}

pub fn parse_dims(value: &str) -> Result<FrameDims, String> {
    let (w, h) = value
        .split_once('x')
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{value}'"))?;
    let w = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in '{value}'"))?;
    let h = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in '{value}'"))?;
    FrameDims::new(w, h).map_err(|e| e.to_string())
}

pub fn parse_methods(value: &str) -> Result<Vec<Method>, String> {
    let methods: Vec<Method> = value
        .split(',')
        .map(|m| m.trim().parse::<Method>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err("no methods given".into());
    }
    Ok(methods)
}

impl Settings {
    /// Applies one setting. Scene fields are addressed as `scene.<field>`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "delta" => {
                self.delta = parse(key, value)?;
                self.delta_given = true;
            }
            "method" => self.methods = parse_methods(value).map_err(usage)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lambda_ego" => self.lambda_ego = parse(key, value)?,
            "h_loc" => self.h_loc = parse(key, value)?,
            "h_ego" => self.h_ego = parse(key, value)?,
            "max_age" => self.max_age = parse(key, value)?,
            "iou_threshold" => self.iou_threshold = parse(key, value)?,
            "mask_raster" => self.mask_raster = Some(parse_dims(value).map_err(usage)?),
            "normalize_std" => self.normalize_std = parse(key, value)?,
            _ => match key.strip_prefix("scene.") {
                Some(field) => self.set_scene(field, value)?,
                None => return Err(usage(format!("unknown setting '{key}'"))),
            },
        }
        Ok(())
    }

    fn set_scene(&mut self, field: &str, value: &str) -> Result<(), Failure> {
        let bad = |why: String| usage(format!("scene.{field}: {why}"));
        let mut scene = serde_json::to_value(&self.scene).map_err(|e| bad(e.to_string()))?;
        let slot = match scene.get_mut(field) {
            Some(slot) if !matches!(field, "anomaly" | "seed" | "horizon") => slot,
            _ => return Err(usage(format!("unknown setting 'scene.{field}'"))),
        };
        *slot = if matches!(field, "dims" | "flow_grid") {
            serde_json::to_value(parse_dims(value).map_err(bad)?).map_err(|e| bad(e.to_string()))?
        } else if slot.is_array() {
            let items: Vec<Value> = value
                .split(',')
                .map(|v| {
                    serde_json::from_str(v.trim())
                        .map_err(|_| bad(format!("expected 'min,max', got '{value}'")))
                })
                .collect::<Result<_, _>>()?;
            Value::Array(items)
        } else {
            serde_json::from_str(value).map_err(|_| bad(format!("invalid value '{value}'")))?
        };
        self.scene = serde_json::from_value(scene).map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn load(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                usage(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    i + 1
                ))
            })?;
            self.set(key.trim(), value)
                .map_err(|e| usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    /// Scene configuration with the shared seed and horizon applied.
    pub fn scene(&self) -> Result<ScenarioConfig, Failure> {
        let scene = ScenarioConfig {
            seed: self.seed,
            horizon: self.delta,
            ..self.scene.clone()
        };
        scene.validate().map_err(|e| usage(e.to_string()))?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_settings_win() {
        let mut s = Settings::default();
        s.set("seed", "3").unwrap();
        s.set("seed", " 9 ").unwrap();
        assert_eq!(s.seed, 9);
    }

    #[test]
    fn scene_fields_accept_ranges_and_dims() {
        let mut s = Settings::default();
        s.set("scene.speed", "0, 0").unwrap();
        s.set("scene.dims", "320x180").unwrap();
        s.set("scene.jitter", "0").unwrap();
        assert_eq!(s.scene.speed, (0.0, 0.0));
        assert_eq!(s.scene.dims, FrameDims::new(320, 180).unwrap());
        assert_eq!(s.scene.jitter, 0.0);
    }

    #[test]
    fn unknown_and_malformed_settings_are_usage_errors() {
        let mut s = Settings::default();
        for (k, v) in [
            ("colour", "red"),
            ("scene.colour", "1"),
            ("scene.anomaly", "x"),
            ("epochs", "-1"),
            ("method", "best"),
        ] {
            assert!(matches!(s.set(k, v), Err(Failure::Usage(_))), "{k}={v}");
        }
        assert!(matches!(
            s.set("scene.speed", "fast"),
            Err(Failure::Usage(_))
        ));
        assert_eq!(s, Settings::default());
    }

    #[test]
    fn methods_parse_from_a_list() {
        assert_eq!(
            parse_methods("max-std, avg-iou").unwrap(),
            vec![Method::MaxStd, Method::AvgIou]
        );
    }
}
