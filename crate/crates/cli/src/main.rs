//! `tad`: simulate driving scenes, train the forecaster, score videos,
//! evaluate and plot.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;
mod output;
mod svg;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tad_core::evaluation::AnomalyAnnotation;
use tad_core::io::{
    checkpoint_config, load_scores, load_video, read_checkpoint, write_auc_table, write_checkpoint,
    write_scores, write_video,
};
use tad_core::model::{ModelConfig, ModelParams, RmsPropConfig};
use tad_core::pipeline::{build_samples, detect, evaluate, DetectConfig, Method, TrainConfig};
use tad_core::scoring::ScoreSeries;
use tad_core::synth::{
    benchmark_manifest, generate_normal, inject_anomaly, AnomalyKind, Split, SyntheticVideo,
};

use config::Settings;
use output::Outputs;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl From<tad_core::Error> for Failure {
    fn from(e: tad_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Prediction-based traffic anomaly detection.
#[derive(Parser, Debug)]
#[command(name = "tad", version, about)]
struct Cli {
    /// Random seed: scene seed for `simulate --single`, shift of every
    /// benchmark seed for `simulate`, initialization and shuffling seed for
    /// `train` [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// File of `key = value` settings; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Prediction horizon in frames [default: 5]
    #[arg(long, global = true)]
    delta: Option<usize>,

    /// Scoring methods, comma separated [default: all]
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_method)]
    method: Vec<Method>,

    /// Override any setting, e.g. `--set scene.dropout=0.2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: tad_core::Error| e.to_string())
}

fn parse_anomaly(s: &str) -> Result<(AnomalyKind, usize), String> {
    let (kind, onset) = s
        .split_once(':')
        .ok_or("expected KIND:ONSET, e.g. sudden_stop:30")?;
    let kind = kind.parse::<AnomalyKind>().map_err(|e| e.to_string())?;
    let onset = onset
        .parse()
        .map_err(|_| format!("invalid onset '{onset}'"))?;
    Ok((kind, onset))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the benchmark videos (or one scene with --single) as JSONL
    Simulate {
        /// Output directory (a file with --single)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        /// Write one scene built from the scene settings and --seed
        #[arg(long)]
        single: bool,
        /// Inject an anomaly into the single scene, e.g. ego_crash:30
        #[arg(long, value_parser = parse_anomaly, requires = "single", value_name = "KIND:ONSET")]
        anomaly: Option<(AnomalyKind, usize)>,
    },
    /// Train a checkpoint on normal videos
    Train {
        /// Video files or directories of .jsonl files
        #[arg(required = true)]
        videos: Vec<PathBuf>,
        /// Checkpoint to write
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Also write the epoch loss log (CSV) here
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score videos; writes <out>/<video_id>.<method>.csv
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        videos: Vec<PathBuf>,
    },
    /// Frame-level AUC of score CSVs against the videos' annotations; writes
    /// auc.csv, per_video.csv and roc.svg
    Eval {
        /// Directory holding <video_id>.<method>.csv files
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        videos: Vec<PathBuf>,
    },
    /// Plot a score CSV over time, shading the video's annotated window
    Report {
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Video whose annotation is shaded
        #[arg(long)]
        video: Option<PathBuf>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn settings(cli: &Cli) -> Result<Settings, Failure> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        s.load(path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        s.set(k.trim(), v)?;
    }
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(delta) = cli.delta {
        s.delta = delta;
        s.delta_given = true;
    }
    if !cli.method.is_empty() {
        s.methods = cli.method.clone();
    }
    if let Command::Train {
        epochs, lr, batch, ..
    } = &cli.command
    {
        s.epochs = epochs.unwrap_or(s.epochs);
        s.lr = lr.unwrap_or(s.lr);
        s.batch = batch.unwrap_or(s.batch);
    }
    Ok(s)
}

/// Expands directories into their `.jsonl` files, sorted by name.
fn video_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let entries =
                std::fs::read_dir(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Failure::Usage(format!(
                "no such file or directory: {}",
                p.display()
            )));
        }
    }
    if out.is_empty() {
        return Err(Failure::Data("no videos found".into()));
    }
    Ok(out)
}

fn read_video(path: &Path) -> Result<SyntheticVideo, Failure> {
    let v = load_video(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let ok = !v.video_id.is_empty()
        && v.video_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && !v.video_id.starts_with('.');
    if !ok {
        return Err(Failure::Data(format!(
            "{}: video id '{}' cannot name a file",
            path.display(),
            v.video_id
        )));
    }
    Ok(v)
}

fn read_videos(inputs: &[PathBuf]) -> Result<Vec<SyntheticVideo>, Failure> {
    let videos: Vec<SyntheticVideo> = video_paths(inputs)?
        .iter()
        .map(|p| read_video(p))
        .collect::<Result<_, _>>()?;
    let mut ids: Vec<&str> = videos.iter().map(|v| v.video_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Failure::Data(format!("video id '{}' appears twice", w[0])));
    }
    Ok(videos)
}

/// Maps `f` over `items` on all available cores; results keep input order.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len());
    if workers <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn video_bytes(v: &SyntheticVideo) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_video(v, &mut buf)?;
    Ok(buf)
}

fn simulate(
    s: &Settings,
    out: &Path,
    split: SplitArg,
    single: bool,
    anomaly: Option<(AnomalyKind, usize)>,
) -> Result<Outputs, Failure> {
    let scene = s.scene()?;
    let mut outputs = Outputs::default();
    if single {
        let mut video = generate_normal(&scene)?;
        if let Some((kind, onset)) = anomaly {
            video = inject_anomaly(&video, kind, onset).map_err(|e| match e {
                tad_core::Error::Contract(m) => Failure::Usage(m),
                other => other.into(),
            })?;
        }
        outputs.add(out.to_path_buf(), video_bytes(&video)?);
        return Ok(outputs);
    }
    let wanted = |sp: Split| match split {
        SplitArg::All => true,
        SplitArg::Train => sp == Split::Train,
        SplitArg::Val => sp == Split::Val,
        SplitArg::Test => sp == Split::Test,
    };
    let entries: Vec<_> = benchmark_manifest(&scene)?
        .into_iter()
        .filter(|e| wanted(e.split))
        .collect();
    let videos = par_map(&entries, |e| {
        e.generate()
            .map_err(Failure::from)
            .and_then(|v| video_bytes(&v))
    });
    for (e, bytes) in entries.iter().zip(videos) {
        let dir = match e.split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        outputs.add(
            out.join(dir).join(format!("{}.jsonl", e.video_id())),
            bytes?,
        );
    }
    Ok(outputs)
}

fn train(
    s: &Settings,
    videos: &[PathBuf],
    out: &Path,
    log: Option<&Path>,
) -> Result<Outputs, Failure> {
    if s.h_loc == 0 || s.h_ego == 0 || s.delta == 0 || s.batch == 0 {
        return Err(Failure::Usage(
            "h_loc, h_ego, delta and batch must be positive".into(),
        ));
    }
    if !(s.lr > 0.0 && s.lr.is_finite()) {
        return Err(Failure::Usage(format!(
            "learning rate must be positive, got {}",
            s.lr
        )));
    }
    let videos = read_videos(videos)?;
    let dims = videos[0].dims;
    let mut samples = Vec::new();
    for v in &videos {
        if v.annotation.is_some() {
            return Err(Failure::Data(format!(
                "{} is annotated; training uses normal videos only",
                v.video_id
            )));
        }
        if v.dims != dims {
            return Err(Failure::Data(format!(
                "{} is {} but {} is {}",
                v.video_id, v.dims, videos[0].video_id, dims
            )));
        }
        samples.extend(build_samples::<f32>(v, s.delta)?);
    }
    if samples.is_empty() {
        return Err(Failure::Data("the videos contain no object tracks".into()));
    }
    let config = ModelConfig {
        h_loc: s.h_loc,
        h_ego: s.h_ego,
        horizon: s.delta,
        dims,
    };
    let mut params = ModelParams::<f32>::init(config, &mut ChaCha8Rng::seed_from_u64(s.seed));
    let tc = TrainConfig {
        epochs: s.epochs,
        batch_size: s.batch,
        optimizer: RmsPropConfig {
            lr: s.lr,
            ..RmsPropConfig::default()
        },
        lambda_ego: s.lambda_ego,
        seed: s.seed,
    };
    let mut text = String::from("epoch,loss\n");
    println!("epoch,loss");
    tad_core::pipeline::train(&mut params, &samples, &tc, |epoch, loss| {
        let line = format!("{},{loss}", epoch + 1);
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    })?;
    let mut outputs = Outputs::default();
    let mut ckpt = Vec::new();
    write_checkpoint(&params, &mut ckpt)?;
    outputs.add(out.to_path_buf(), ckpt);
    if let Some(log) = log {
        outputs.add(log.to_path_buf(), text.into_bytes());
    }
    Ok(outputs)
}

fn detect_config(s: &Settings) -> DetectConfig {
    DetectConfig {
        max_age: s.max_age,
        iou_threshold: s.iou_threshold,
        mask_raster: s.mask_raster,
        normalize_std: s.normalize_std,
    }
}

fn score_file(dir: &Path, video_id: &str, m: Method) -> PathBuf {
    dir.join(format!("{video_id}.{m}.csv"))
}

fn run_detect(
    s: &Settings,
    checkpoint: &Path,
    out: &Path,
    videos: &[PathBuf],
) -> Result<Outputs, Failure> {
    let bytes = std::fs::read(checkpoint)
        .map_err(|e| Failure::Data(format!("{}: {e}", checkpoint.display())))?;
    let config = checkpoint_config(&bytes)
        .map_err(|e| Failure::Data(format!("{}: {e}", checkpoint.display())))?;
    if s.delta_given && s.delta != config.horizon {
        return Err(Failure::Usage(format!(
            "--delta {} does not match the checkpoint horizon {}",
            s.delta, config.horizon
        )));
    }
    let params: ModelParams<f32> = read_checkpoint(&bytes, None)
        .map_err(|e| Failure::Data(format!("{}: {e}", checkpoint.display())))?;
    let videos = read_videos(videos)?;
    let dc = detect_config(s);
    let scored = par_map(&videos, |v| {
        detect(&params, v, &s.methods, &dc)
            .map_err(|e| Failure::Data(format!("{}: {e}", v.video_id)))
    });
    let mut outputs = Outputs::default();
    for (v, by_method) in videos.iter().zip(scored) {
        for (m, series) in by_method? {
            let mut buf = Vec::new();
            write_scores(&series, &mut buf)?;
            outputs.add(score_file(out, &v.video_id, m), buf);
        }
    }
    Ok(outputs)
}

fn run_eval(
    s: &Settings,
    scores: &Path,
    out: &Path,
    videos: &[PathBuf],
) -> Result<Outputs, Failure> {
    let videos = read_videos(videos)?;
    let mut pairs: Vec<(BTreeMap<Method, ScoreSeries>, Vec<AnomalyAnnotation>)> = Vec::new();
    for v in &videos {
        let mut by_method = BTreeMap::new();
        for &m in &s.methods {
            let path = score_file(scores, &v.video_id, m);
            let series = load_scores(&path)
                .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            if series.len() != v.len() {
                return Err(Failure::Data(format!(
                    "{}: {} rows for a {}-frame video",
                    path.display(),
                    series.len(),
                    v.len()
                )));
            }
            by_method.insert(m, series);
        }
        pairs.push((by_method, v.annotation.into_iter().collect()));
    }
    let rows = evaluate(&pairs, &s.methods)?;

    let mut outputs = Outputs::default();
    let mut auc = Vec::new();
    write_auc_table(&rows, &mut auc)?;
    outputs.add(out.join("auc.csv"), auc);

    let mut per_video = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = std::iter::once("video_id")
        .chain(rows.iter().map(|r| r.method.label()))
        .collect();
    let csv_err = |e: csv::Error| Failure::Data(e.to_string());
    per_video.write_record(&header).map_err(csv_err)?;
    for (i, v) in videos.iter().enumerate() {
        let cells = rows
            .iter()
            .map(|r| r.per_video[i].map_or(String::new(), |a| a.to_string()));
        per_video
            .write_record(std::iter::once(v.video_id.clone()).chain(cells))
            .map_err(csv_err)?;
    }
    outputs.add(
        out.join("per_video.csv"),
        per_video
            .into_inner()
            .map_err(|e| Failure::Data(e.to_string()))?,
    );

    let curves: Vec<(String, _)> = rows
        .iter()
        .map(|r| (r.method.label().to_string(), r.corpus.clone()))
        .collect();
    let title = format!("Frame-level ROC over {} videos", videos.len());
    outputs.add(out.join("roc.svg"), svg::roc(&curves, &title).into_bytes());
    Ok(outputs)
}

fn run_report(
    scores: &Path,
    out: &Path,
    video: Option<&Path>,
    title: Option<&str>,
) -> Result<Outputs, Failure> {
    let series =
        load_scores(scores).map_err(|e| Failure::Data(format!("{}: {e}", scores.display())))?;
    if series.is_empty() {
        return Err(Failure::Data(format!("{}: no scores", scores.display())));
    }
    let window = match video {
        Some(p) => read_video(p)?.annotation,
        None => None,
    };
    let name = scores
        .file_stem()
        .map_or(String::new(), |n| n.to_string_lossy().into_owned());
    let mut outputs = Outputs::default();
    outputs.add(
        out.to_path_buf(),
        svg::timeline(&series, window.as_ref(), title.unwrap_or(&name)).into_bytes(),
    );
    Ok(outputs)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let s = settings(&cli)?;
    let outputs = match &cli.command {
        Command::Simulate {
            out,
            split,
            single,
            anomaly,
        } => simulate(&s, out, *split, *single, *anomaly)?,
        Command::Train {
            videos, out, log, ..
        } => train(&s, videos, out, log.as_deref())?,
        Command::Detect {
            checkpoint,
            out,
            videos,
        } => run_detect(&s, checkpoint, out, videos)?,
        Command::Eval {
            scores,
            out,
            videos,
        } => run_eval(&s, scores, out, videos)?,
        Command::Report {
            scores,
            out,
            video,
            title,
        } => run_report(scores, out, video.as_deref(), title.as_deref())?,
    };
    outputs.commit()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("tad: {f}");
            ExitCode::from(f.code())
        }
    }
}
