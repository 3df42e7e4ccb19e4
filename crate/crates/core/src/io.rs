//! On-disk formats: JSON-lines video records, binary checkpoints and score
//! CSVs.
//!
//! Writers go through a temporary file in the destination directory that is
//! renamed into place, so a failed write never leaves a partial file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::AnomalyAnnotation;
use crate::features::{FlowField, FlowPatch};
use crate::geometry::FrameDims;
use crate::model::{EgoPose, ModelConfig, ModelParams};
use crate::pipeline::MethodEvaluation;
use crate::scalar::Scalar;
use crate::scoring::{FrameScore, ScoreSeries};
use crate::synth::{Detection, ScenarioConfig, SyntheticVideo, VideoFrame};

pub const VIDEO_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"TADCKPT\0";

/// Writes `path` atomically: `write` fills a sibling temporary file which is
/// renamed over `path` only on success.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Data(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    dims: FrameDims,
    frame_rate: f64,
    video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowRecord {
    grid: FrameDims,
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    patches: Vec<FlowPatch>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    frame: usize,
    detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    truth: Vec<Detection>,
    ego: EgoPose,
    flow: FlowRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    annotation: AnomalyAnnotation,
}

/// Serializes a video as JSON lines: header, one line per frame, then the
/// annotation if present. Flow is stored inline at its lattice resolution.
pub fn write_video(video: &SyntheticVideo, w: &mut dyn Write) -> Result<()> {
    let header = Header {
        format_version: VIDEO_FORMAT_VERSION,
        dims: video.dims,
        frame_rate: video.frame_rate,
        video_id: video.video_id.clone(),
        scenario: video.scenario.clone(),
    };
    let json = |w: &mut dyn Write, v: &dyn erased::Ser| -> Result<()> {
        v.write_json(w)?;
        w.write_all(b"\n")?;
        Ok(())
    };
    json(w, &header)?;
    for f in &video.frames {
        let rec = FrameRecord {
            frame: f.frame,
            detections: f.detections.clone(),
            truth: f.truth.clone(),
            ego: f.ego,
            flow: FlowRecord {
                grid: f.flow.grid(),
                data: f.flow.data().to_vec(),
                patches: f.flow.patches().to_vec(),
            },
        };
        json(w, &rec)?;
    }
    if let Some(a) = video.annotation {
        json(w, &AnnotationRecord { annotation: a })?;
    }
    Ok(())
}

mod erased {
    use std::io::Write;

    pub trait Ser {
        fn write_json(&self, w: &mut dyn Write) -> serde_json::Result<()>;
    }

    impl<T: serde::Serialize> Ser for T {
        fn write_json(&self, w: &mut dyn Write) -> serde_json::Result<()> {
            serde_json::to_writer(w, self)
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Data(e.to_string())
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn checked_dims(d: FrameDims, line: usize, what: &str) -> Result<FrameDims> {
    FrameDims::new(d.width, d.height).map_err(|e| parse_err(line, format!("{what}: {e}")))
}

/// Parses a JSON-lines video record.
pub fn read_video(r: impl BufRead) -> Result<SyntheticVideo> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a header"))?;
    let first = first?;
    let value: Value = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    if let Some(v) = value.get("format_version") {
        let found = v
            .as_u64()
            .ok_or_else(|| parse_err(1, "format_version must be an integer"))?;
        if found != VIDEO_FORMAT_VERSION as u64 {
            return Err(Error::Version {
                found: found.min(u32::MAX as u64) as u32,
                expected: VIDEO_FORMAT_VERSION,
            });
        }
    }
    let header: Header =
        serde_json::from_value(value).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let dims = checked_dims(header.dims, 1, "dims")?;
    if !(header.frame_rate.is_finite() && header.frame_rate > 0.0) {
        return Err(parse_err(1, "frame_rate must be positive"));
    }

    let mut frames: Vec<VideoFrame> = Vec::new();
    let mut annotation = None;
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if annotation.is_some() {
            return Err(parse_err(no, "content after the annotation line"));
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| parse_err(no, e.to_string()))?;
        if value.get("annotation").is_some() {
            let rec: AnnotationRecord =
                serde_json::from_value(value).map_err(|e| parse_err(no, e.to_string()))?;
            annotation = Some((no, rec.annotation));
            continue;
        }
        let rec: FrameRecord =
            serde_json::from_value(value).map_err(|e| parse_err(no, e.to_string()))?;
        if let Some(prev) = frames.last() {
            if rec.frame <= prev.frame {
                return Err(parse_err(
                    no,
                    format!("frame {} does not follow frame {}", rec.frame, prev.frame),
                ));
            }
        }
        for d in rec.detections.iter().chain(&rec.truth) {
            if !d.bbox.is_valid() {
                return Err(parse_err(no, format!("invalid box for object {}", d.id)));
            }
        }
        if ![rec.ego.phi, rec.ego.x, rec.ego.z]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(parse_err(no, "ego pose must be finite"));
        }
        let grid = checked_dims(rec.flow.grid, no, "flow grid")?;
        let flow = FlowField::new(dims, grid, rec.flow.data)
            .and_then(|f| f.with_patches(rec.flow.patches))
            .map_err(|e| parse_err(no, e.to_string()))?;
        frames.push(VideoFrame {
            frame: rec.frame,
            detections: rec.detections,
            truth: rec.truth,
            ego: rec.ego,
            flow,
        });
    }
    let annotation = match annotation {
        Some((no, a)) => {
            let len = frames.last().map_or(0, |f| f.frame + 1);
            a.validate(len).map_err(|e| parse_err(no, e.to_string()))?;
            Some(a)
        }
        None => None,
    };
    Ok(SyntheticVideo {
        video_id: header.video_id,
        dims,
        frame_rate: header.frame_rate,
        frames,
        annotation,
        scenario: header.scenario,
    })
}

pub fn save_video(video: &SyntheticVideo, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_video(video, w))
}

pub fn load_video(path: &Path) -> Result<SyntheticVideo> {
    read_video(BufReader::new(File::open(path)?))
}

/// Serializes parameters as a binary checkpoint: magic, version, model sizes,
/// a CRC-32 of everything that follows it, then each named tensor as
/// little-endian `f32`.
pub fn write_checkpoint<T: Scalar>(params: &ModelParams<T>, w: &mut dyn Write) -> Result<()> {
    let c = &params.config;
    let mut body = Vec::with_capacity(params.num_params() * 4 + 256);
    for v in [c.h_loc, c.h_ego, c.horizon] {
        body.extend_from_slice(&(v as u32).to_le_bytes());
    }
    body.extend_from_slice(&c.dims.width.to_le_bytes());
    body.extend_from_slice(&c.dims.height.to_le_bytes());
    let tensors = params.tensors();
    body.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, values) in tensors {
        body.extend_from_slice(&(name.len() as u16).to_le_bytes());
        body.extend_from_slice(name.as_bytes());
        body.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            body.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&crc32fast::hash(&body).to_le_bytes())?;
    w.write_all(&body)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end =
            end.ok_or_else(|| Error::Header(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Reads only the model sizes stored in a checkpoint.
pub fn checkpoint_config(bytes: &[u8]) -> Result<ModelConfig> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(8).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(Error::Header("not a checkpoint (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    cur.u32()?;
    let (h_loc, h_ego, horizon) = (
        cur.u32()? as usize,
        cur.u32()? as usize,
        cur.u32()? as usize,
    );
    let (width, height) = (cur.u32()?, cur.u32()?);
    let dims = FrameDims::new(width, height).map_err(|e| Error::Header(e.to_string()))?;
    let config = ModelConfig {
        h_loc,
        h_ego,
        horizon,
        dims,
    };
    config
        .validate()
        .map_err(|e| Error::Header(e.to_string()))?;
    Ok(config)
}

/// Parses a checkpoint. With `expected`, the stored model sizes must match
/// before any tensor is read.
pub fn read_checkpoint<T: Scalar>(
    bytes: &[u8],
    expected: Option<&ModelConfig>,
) -> Result<ModelParams<T>> {
    let config = checkpoint_config(bytes)?;
    if let Some(e) = expected {
        if *e != config {
            return Err(Error::Header(format!(
                "checkpoint has h_loc={} h_ego={} horizon={} dims={}, expected h_loc={} h_ego={} horizon={} dims={}",
                config.h_loc, config.h_ego, config.horizon, config.dims, e.h_loc, e.h_ego, e.horizon, e.dims
            )));
        }
    }
    let stored = u32::from_le_bytes(bytes[12..16].try_into().expect("header present"));
    let computed = crc32fast::hash(&bytes[16..]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    // size sanity before allocating: every parameter needs 4 bytes
    let mut params = ModelParams::<T>::zeros(config);
    if params.num_params().saturating_mul(4) > bytes.len() {
        return Err(Error::Header(
            "checkpoint is smaller than its declared model".into(),
        ));
    }
    let mut cur = Cursor {
        buf: bytes,
        pos: 16 + 5 * 4,
    };
    let count = cur.u32()? as usize;
    let mut slots = params.tensors_mut();
    if count != slots.len() {
        return Err(Error::Header(format!(
            "checkpoint has {count} tensors, expected {}",
            slots.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let len = cur.u16()? as usize;
        let found = cur.take(len)?;
        if found != name.as_bytes() {
            return Err(Error::Header(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let n = cur.u32()? as usize;
        if n != slot.len() {
            return Err(Error::Header(format!(
                "tensor {name} has {n} values, expected {}",
                slot.len()
            )));
        }
        let raw = cur.take(n * 4)?;
        for (dst, chunk) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *dst = T::lit(f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64);
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::Header("trailing bytes after the last tensor".into()));
    }
    Ok(params)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_checkpoint(params, w))
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<ModelParams<T>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    read_checkpoint(&bytes, expected)
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    frame: usize,
    raw: f64,
    normalized: f64,
    top_object_id: Option<u64>,
}

/// Writes a score series as CSV: `frame,raw,normalized,top_object_id`.
pub fn write_scores(series: &ScoreSeries, w: &mut dyn Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (s, n) in series.scores.iter().zip(&series.normalized) {
        out.serialize(ScoreRow {
            frame: s.frame,
            raw: s.raw,
            normalized: *n,
            top_object_id: s.top_object(),
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a score CSV back. Per-object scores are not stored; the top object
/// id is kept as the only per-object entry.
pub fn read_scores(r: impl Read) -> Result<ScoreSeries> {
    let mut rd = csv::Reader::from_reader(r);
    let mut scores = Vec::new();
    let mut normalized = Vec::new();
    for row in rd.deserialize::<ScoreRow>() {
        let row = row.map_err(csv_err)?;
        if !row.raw.is_finite() || !row.normalized.is_finite() {
            return Err(Error::Parse {
                line: scores.len() + 2,
                message: "scores must be finite".into(),
            });
        }
        let per_object = row
            .top_object_id
            .map(|id| [(id, row.raw)].into_iter().collect());
        scores.push(FrameScore {
            frame: row.frame,
            raw: row.raw,
            per_object,
        });
        normalized.push(row.normalized);
    }
    Ok(ScoreSeries { scores, normalized })
}

pub fn save_scores(series: &ScoreSeries, path: &Path) -> Result<()> {
    write_atomic(path, |w| write_scores(series, w))
}

pub fn load_scores(path: &Path) -> Result<ScoreSeries> {
    read_scores(File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub method: String,
    pub auc: f64,
    pub videos: usize,
}

/// Corpus AUC per method as CSV: `method,auc,videos`.
pub fn write_auc_table(rows: &[MethodEvaluation], w: &mut dyn Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(AucRow {
            method: r.method.label().to_string(),
            auc: r.corpus.auc,
            videos: r.per_video.len(),
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_auc_table(r: impl Read) -> Result<Vec<AucRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize::<AucRow>()
        .map(|row| row.map_err(csv_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_normal, inject_anomaly, AnomalyKind};
    use rand::SeedableRng;

    fn video() -> SyntheticVideo {
        let config = ScenarioConfig {
            seed: 7,
            length: 20,
            flow_grid: FrameDims {
                width: 8,
                height: 5,
            },
            ..Default::default()
        };
        inject_anomaly(
            &generate_normal(&config).unwrap(),
            AnomalyKind::SuddenStop,
            8,
        )
        .unwrap()
    }

    fn to_bytes(v: &SyntheticVideo) -> Vec<u8> {
        let mut buf = Vec::new();
        write_video(v, &mut buf).unwrap();
        buf
    }

    #[test]
    fn video_round_trip() {
        let v = video();
        let back = read_video(&to_bytes(&v)[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(to_bytes(&back), to_bytes(&v));
    }

    #[test]
    fn header_only_is_empty_video() {
        let text = r#"{"format_version":1,"dims":{"width":64,"height":32},"frame_rate":10.0,"video_id":"x"}"#;
        let v = read_video(text.as_bytes()).unwrap();
        assert!(v.is_empty());
        assert!(v.annotation.is_none());
    }

    #[test]
    fn truncated_file_names_the_line() {
        let bytes = to_bytes(&video());
        let cut = &bytes[..bytes.len() * 2 / 3];
        let line = cut.iter().filter(|b| **b == b'\n').count() + 1;
        match read_video(cut) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = r#"{"format_version":2,"dims":{"width":64,"height":32},"frame_rate":10.0,"video_id":"x"}"#;
        assert!(matches!(
            read_video(text.as_bytes()),
            Err(Error::Version {
                found: 2,
                expected: 1
            })
        ));
    }

    #[test]
    fn rejects_bad_records() {
        let head = r#"{"format_version":1,"dims":{"width":4,"height":4},"frame_rate":10.0,"video_id":"x"}"#;
        let frame = |n: usize, w: f64| {
            format!(
                r#"{{"frame":{n},"detections":[{{"id":0,"cx":1.0,"cy":1.0,"w":{w},"h":1.0}}],"ego":{{"phi":0.0,"x":0.0,"z":0.0}},"flow":{{"grid":{{"width":2,"height":2}},"data":[0,0,0,0,0,0,0,0]}}}}"#
            )
        };
        let ok = format!("{head}\n{}\n{}\n", frame(0, 1.0), frame(1, 1.0));
        assert_eq!(read_video(ok.as_bytes()).unwrap().len(), 2);
        let bad = [
            format!("{head}\n{}\n{}\n", frame(1, 1.0), frame(1, 1.0)),
            format!("{head}\n{}\n", frame(0, -1.0)),
            format!(
                "{head}\n{}\n{{\"annotation\":{{\"start\":0,\"end\":3,\"ego_involved\":false}}}}\n",
                frame(0, 1.0)
            ),
            format!(
                "{head}\n{{\"annotation\":{{\"start\":0,\"end\":0,\"ego_involved\":false}}}}\n{}\n",
                frame(0, 1.0)
            ),
            format!(
                "{head}\n{}\n",
                frame(0, 1.0).replace("0,0,0,0,0,0,0,0", "0,0")
            ),
            "{\"dims\":1}".to_string(),
            String::new(),
        ];
        for text in bad {
            assert!(read_video(text.as_bytes()).is_err(), "accepted: {text}");
        }
    }

    fn params() -> ModelParams<f32> {
        let config = ModelConfig {
            h_loc: 6,
            h_ego: 3,
            horizon: 2,
            dims: FrameDims {
                width: 64,
                height: 32,
            },
        };
        ModelParams::init(config, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let p = params();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let back: ModelParams<f32> = read_checkpoint(&buf, Some(&p.config)).unwrap();
        for ((_, a), (_, b)) in p.tensors().into_iter().zip(back.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn checkpoint_header_and_corruption() {
        let p = params();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let other = ModelConfig {
            h_loc: 64,
            ..p.config
        };
        assert!(matches!(
            read_checkpoint::<f32>(&buf, Some(&other)),
            Err(Error::Header(_))
        ));
        for bit in [0usize, 7, 131, 8 * (buf.len() - 20), 8 * buf.len() - 1] {
            let mut bad = buf.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(
                read_checkpoint::<f32>(&bad, None).is_err(),
                "bit {bit} undetected"
            );
        }
        assert!(read_checkpoint::<f32>(&buf[..buf.len() - 3], None).is_err());
        assert!(read_checkpoint::<f32>(&[], None).is_err());
    }

    #[test]
    fn score_csv_round_trip() {
        let scores = vec![
            FrameScore {
                frame: 0,
                raw: 0.0,
                per_object: None,
            },
            FrameScore {
                frame: 1,
                raw: 0.25,
                per_object: Some([(4, 0.25), (9, 0.1)].into_iter().collect()),
            },
            FrameScore {
                frame: 2,
                raw: 1.0 / 3.0,
                per_object: None,
            },
        ];
        let series = ScoreSeries::new(scores).unwrap();
        let mut buf = Vec::new();
        write_scores(&series, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("frame,raw,normalized,top_object_id\n0,0.0,0.0,\n1,0.25,"));
        let back = read_scores(&buf[..]).unwrap();
        assert_eq!(back.raw(), series.raw());
        assert_eq!(back.normalized, series.normalized);
        assert_eq!(back.scores[1].top_object(), Some(4));
        assert!(read_scores("frame,raw\nx,1\n".as_bytes()).is_err());
    }

    #[test]
    fn atomic_write_leaves_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let r = write_atomic(&path, |w| {
            w.write_all(b"partial")?;
            Err(Error::Data("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        let v = video();
        save_video(&v, &path).unwrap();
        assert_eq!(load_video(&path).unwrap(), v);
    }
}
