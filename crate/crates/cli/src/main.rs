use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use gebd_core::classifier::{train_logistic, LogisticModel, TrainConfig};
use gebd_core::container::write_atomic;
use gebd_core::data::{serialize_annotations, AnnotationSet, GtPolicy, DEFAULT_CONSISTENCY_THRESHOLD};
use gebd_core::eval::{default_thresholds, ClassMetric, EvalMode, PRIMARY_THRESHOLD};
use gebd_core::flow::FlowConfig;
use gebd_core::pipeline::{
    compute_flow_cache, evaluate_predictions, fill_all_consistency, load_annotations, load_training_set, sample_video,
    score_video, select_all_gt, write_eval_outputs, EvalOptions, Pipeline, PipelineConfig,
};
use gebd_core::postprocess::{scores_to_boundaries, DetectionConfig};
use gebd_core::report::{render_class_bars, render_timeline, TimelineSpec};
use gebd_core::synth::{generate_corpus, SynthConfig};
use gebd_core::tables::{read_boundaries_csv, read_scores_csv, write_boundaries_csv, write_scores_csv};
use gebd_core::window::{read_manifest, write_manifest, FlowProvider, FrameSequence, VideoStore, WindowSpec};
use gebd_core::{Error, Result};

#[derive(Parser)]
#[command(name = "gebd", version, about = "Generic event boundary detection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate an annotation file.
    Validate { annotations: PathBuf },
    /// Fill per-annotator consistency scores.
    Consistency {
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONSISTENCY_THRESHOLD)]
        threshold: f64,
        /// Recompute scores already present in the file.
        #[arg(long)]
        recompute: bool,
    },
    /// Pick one ground-truth track per video.
    SelectGt {
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        gt: GtArgs,
    },
    /// Compute the consecutive-frame flow cache for every video.
    Flow {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Label candidate windows and write the training subset.
    Sample {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Flow cache written by `gebd flow`.
        #[arg(long)]
        flow_cache: Option<PathBuf>,
        /// Ground-truth CSV from `gebd select-gt`.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, default_value_t = 3.0)]
        background_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train the boundary classifier on a sample manifest.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Score every candidate timestamp with a trained model.
    Score {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        flow_cache: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Turn scores into boundary predictions.
    Detect {
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        detect: DetectArgs,
    },
    /// Score predictions against selected ground truth.
    Eval {
        predictions: PathBuf,
        annotations: PathBuf,
        #[command(flatten)]
        gt: GtArgs,
        /// Comma-separated thresholds for the sweep.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        /// Primary threshold reported on standard output.
        #[arg(long, default_value_t = PRIMARY_THRESHOLD)]
        threshold: f64,
        /// `relative` or `window:SECONDS`.
        #[arg(long, default_value = "relative")]
        mode: String,
        /// Per-class metric: f1 or recall.
        #[arg(long, default_value = "f1")]
        class_metric: String,
        /// Directory for the CSV reports.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render SVG timelines and per-class bars.
    Report {
        predictions: PathBuf,
        annotations: PathBuf,
        #[command(flatten)]
        gt: GtArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also draw every annotator track in the timelines.
        #[arg(long)]
        all_tracks: bool,
    },
    /// Generate a synthetic corpus with planted boundaries.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 30)]
        videos: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 10.0)]
        fps: f64,
        #[arg(long, default_value_t = 64)]
        side: usize,
    },
    /// Run every stage, skipping stages whose outputs are up to date.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GtArgs {
    /// `highest` or `weighted:SEED`.
    #[arg(long, default_value = "highest")]
    gt_policy: String,
    /// Threshold for consistency scores missing from the file.
    #[arg(long, default_value_t = DEFAULT_CONSISTENCY_THRESHOLD)]
    consistency_threshold: f64,
    #[arg(long)]
    recompute: bool,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Directory holding one `<video_id>/` frame directory per video.
    #[arg(long)]
    frames: PathBuf,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long, default_value_t = 3)]
    flow_levels: usize,
    #[arg(long, default_value_t = 0.5)]
    flow_scale: f64,
    #[arg(long, default_value_t = 3)]
    flow_iterations: usize,
    #[arg(long, default_value_t = 5)]
    flow_poly_window: usize,
    #[arg(long, default_value_t = 1.1)]
    flow_poly_sigma: f64,
    #[arg(long, default_value_t = 15)]
    flow_window: usize,
}

impl FlowArgs {
    fn config(&self) -> FlowConfig {
        FlowConfig {
            pyramid_levels: self.flow_levels,
            pyramid_scale: self.flow_scale,
            iterations_per_level: self.flow_iterations,
            poly_window: self.flow_poly_window,
            poly_sigma: self.flow_poly_sigma,
            averaging_window: self.flow_window,
        }
    }
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 0.25)]
    stride: f64,
    #[arg(long, default_value_t = 224)]
    image_side: usize,
    #[arg(long, default_value_t = 0.125)]
    label_tolerance: f64,
}

impl WindowArgs {
    fn spec(&self) -> WindowSpec {
        WindowSpec {
            m: self.m,
            candidate_stride: self.stride,
            image_side: self.image_side,
            label_tolerance: self.label_tolerance,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 1e-4)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    decay_factor: f64,
    #[arg(long, default_value_t = 10)]
    decay_every: usize,
    #[arg(long, default_value_t = 16)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long, default_value_t = 1.0)]
    smooth_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    score_threshold: f64,
    #[arg(long, default_value_t = 0.5)]
    min_separation: f64,
}

#[derive(Args)]
struct PipelineArgs {
    /// Corpus root holding `annotations.json` and `frames/`.
    root: PathBuf,
    /// Flat key = value config; relative paths resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Work directory (default `<root>/work`).
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gt_policy: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    stride: Option<f64>,
    #[arg(long)]
    image_side: Option<usize>,
    /// Rerun every stage regardless of freshness.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::VideoMismatch(_) => 2,
        _ => 1,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(Error::Domain("workers must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))
}

fn gt_for(annotations: &Path, args: &GtArgs) -> Result<(Vec<AnnotationSet>, BTreeMap<String, Vec<f64>>)> {
    let policy: GtPolicy = args.gt_policy.parse()?;
    let mut sets = load_annotations(annotations)?;
    fill_all_consistency(&mut sets, args.consistency_threshold, args.recompute)?;
    let gt = select_all_gt(&sets, policy)?;
    Ok((sets, gt))
}

fn sequence(corpus: &CorpusArgs, set: &AnnotationSet) -> Result<FrameSequence> {
    FrameSequence::open(set.meta.clone(), corpus.frames.join(&set.meta.video_id))
}

fn store(corpus: &CorpusArgs, cache: Option<&Path>, flow: &FlowConfig, set: &AnnotationSet) -> Result<VideoStore> {
    let provider = match cache {
        Some(dir) => FlowProvider::cached(dir.join(&set.meta.video_id), *flow),
        None => FlowProvider::compute(*flow),
    };
    VideoStore::load(&sequence(corpus, set)?, &provider)
}

fn parse_mode(mode: &str) -> Result<(EvalMode, Option<f64>)> {
    if mode == "relative" {
        return Ok((EvalMode::Relative, None));
    }
    if let Some(s) = mode.strip_prefix("window:") {
        let w: f64 = s
            .parse()
            .map_err(|_| Error::Domain(format!("invalid window '{s}' in --mode")))?;
        if !(w > 0.0) {
            return Err(Error::Domain("window must be positive".into()));
        }
        return Ok((EvalMode::AbsoluteWindow, Some(w)));
    }
    Err(Error::Domain(format!("unknown mode '{mode}' (expected relative or window:SECONDS)")))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { annotations } => {
            let sets = load_annotations(&annotations)?;
            let tracks: usize = sets.iter().map(|s| s.tracks.len()).sum();
            println!("videos={}", sets.len());
            println!("tracks={tracks}");
        }
        Command::Consistency {
            annotations,
            out,
            threshold,
            recompute,
        } => {
            let mut sets = load_annotations(&annotations)?;
            fill_all_consistency(&mut sets, threshold, recompute)?;
            write_atomic(&out, serialize_annotations(&sets).as_bytes())?;
            println!("videos={}", sets.len());
        }
        Command::SelectGt { annotations, out, gt } => {
            let (sets, gt) = gt_for(&annotations, &gt)?;
            write_boundaries_csv(&out, &gt)?;
            println!("videos={}", sets.len());
            println!("boundaries={}", gt.values().map(Vec::len).sum::<usize>());
        }
        Command::Flow {
            corpus,
            out,
            flow,
            workers,
        } => {
            let config = flow.config();
            config.validate()?;
            let sets = load_annotations(&corpus.annotations)?;
            pool(workers)?.install(|| {
                sets.par_iter().try_for_each(|set| {
                    compute_flow_cache(&sequence(&corpus, set)?, &out.join(&set.meta.video_id), &config)
                })
            })?;
            println!("videos={}", sets.len());
        }
        Command::Sample {
            corpus,
            flow_cache,
            gt,
            out,
            window,
            background_ratio,
            seed,
            flow,
            workers,
        } => {
            let spec = window.spec();
            spec.validate()?;
            let sets = load_annotations(&corpus.annotations)?;
            let gt = read_boundaries_csv(&gt)?;
            if let Some(id) = gt.keys().find(|id| !sets.iter().any(|s| &s.meta.video_id == *id)) {
                return Err(Error::VideoMismatch(format!("ground truth references unknown video '{id}'")));
            }
            let empty = Vec::new();
            let config = flow.config();
            let rows = pool(workers)?.install(|| {
                sets.par_iter()
                    .map(|set| {
                        let store = store(&corpus, flow_cache.as_deref(), &config, set)?;
                        let id = &set.meta.video_id;
                        sample_video(&store, set, gt.get(id).unwrap_or(&empty), &spec, background_ratio, seed, &out)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            let rows = rows.concat();
            write_manifest(&out.join("manifest.csv"), &rows)?;
            println!("windows={}", rows.len());
            println!("boundary_windows={}", rows.iter().filter(|r| r.label.is_boundary()).count());
        }
        Command::Train { manifest, out, train } => {
            let config = TrainConfig {
                learning_rate: train.learning_rate,
                decay_factor: train.decay_factor,
                decay_every: train.decay_every,
                epochs: train.epochs,
                batch_size: train.batch_size,
                seed: train.seed,
            };
            let rows = read_manifest(&manifest)?;
            let base = manifest.parent().unwrap_or(Path::new("."));
            let data = load_training_set(&rows, base)?;
            let outcome = train_logistic(&data, &config)?;
            for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
                eprintln!("epoch {epoch}: loss {loss:.6}");
            }
            write_atomic(&out, outcome.model.to_json().as_bytes())?;
            println!("samples={}", data.len());
            println!("final_loss={:.6}", outcome.epoch_losses.last().copied().unwrap_or(f64::NAN));
        }
        Command::Score {
            corpus,
            model,
            flow_cache,
            out,
            window,
            flow,
            workers,
        } => {
            let spec = window.spec();
            spec.validate()?;
            let text = std::fs::read_to_string(&model).map_err(|e| Error::Io { path: model.clone(), source: e })?;
            let model = LogisticModel::from_json(&text)?;
            let sets = load_annotations(&corpus.annotations)?;
            let config = flow.config();
            let seqs = pool(workers)?.install(|| {
                sets.par_iter()
                    .map(|set| score_video(&store(&corpus, flow_cache.as_deref(), &config, set)?, set, &spec, &model))
                    .collect::<Result<Vec<_>>>()
            })?;
            write_scores_csv(&out, &seqs)?;
            println!("videos={}", seqs.len());
            println!("candidates={}", seqs.iter().map(|s| s.len()).sum::<usize>());
        }
        Command::Detect { scores, out, detect } => {
            let config = DetectionConfig {
                smooth_sigma: detect.smooth_sigma,
                score_threshold: detect.score_threshold,
                min_separation: detect.min_separation,
            };
            let predictions = read_scores_csv(&scores)?
                .iter()
                .map(|s| scores_to_boundaries(s, &config).map(|b| (b.video_id, b.timestamps)))
                .collect::<Result<BTreeMap<_, _>>>()?;
            write_boundaries_csv(&out, &predictions)?;
            println!("boundaries={}", predictions.values().map(Vec::len).sum::<usize>());
        }
        Command::Eval {
            predictions,
            annotations,
            gt,
            thresholds,
            threshold,
            mode,
            class_metric,
            out,
        } => {
            let (mode, window) = parse_mode(&mode)?;
            let class_metric = match class_metric.as_str() {
                "f1" => ClassMetric::F1,
                "recall" => ClassMetric::Recall,
                other => return Err(Error::Domain(format!("unknown class metric '{other}'"))),
            };
            let (thresholds, primary) = match window {
                Some(w) => (vec![w], w),
                None => {
                    let mut t = thresholds.unwrap_or_else(default_thresholds);
                    if !t.iter().any(|v| (v - threshold).abs() < 1e-12) {
                        t.push(threshold);
                    }
                    t.sort_by(f64::total_cmp);
                    (t, threshold)
                }
            };
            let (sets, gt) = gt_for(&annotations, &gt)?;
            let preds = read_boundaries_csv(&predictions)?;
            let options = EvalOptions {
                mode,
                thresholds,
                primary,
                class_metric,
            };
            let report = evaluate_predictions(&sets, &gt, &preds, &options)?;
            if let Some(dir) = out {
                write_eval_outputs(&dir, &report)?;
            }
            let p = report.primary();
            println!("mode={}", report.mode.name());
            println!("threshold={}", p.threshold);
            println!("precision={:.4}", p.precision);
            println!("recall={:.4}", p.recall);
            println!("f1={:.4}", p.f1);
        }
        Command::Report {
            predictions,
            annotations,
            gt,
            out,
            all_tracks,
        } => {
            let (sets, gt) = gt_for(&annotations, &gt)?;
            let preds = read_boundaries_csv(&predictions)?;
            let report = evaluate_predictions(&sets, &gt, &preds, &EvalOptions::default())?;
            let timelines = out.join("timelines");
            std::fs::create_dir_all(&timelines).map_err(|e| Error::Io { path: timelines.clone(), source: e })?;
            let classes: Vec<(String, f64)> = report.per_class.iter().map(|(c, s)| (c.clone(), s.mean)).collect();
            let svg = render_class_bars(&format!("mean F1 per class at threshold {PRIMARY_THRESHOLD}"), &classes)?;
            write_atomic(&out.join("classes.svg"), svg.as_bytes())?;
            let empty = Vec::new();
            for set in &sets {
                let id = &set.meta.video_id;
                let mut spec = TimelineSpec::new(id.as_str(), set.meta.duration);
                if all_tracks {
                    for track in &set.tracks {
                        let ts = track.boundaries.iter().map(|b| b.representative()).collect();
                        spec = spec.track(track.annotator_id.as_str(), ts);
                    }
                }
                spec = spec
                    .track("ground truth", gt.get(id).unwrap_or(&empty).clone())
                    .track("prediction", preds.get(id).unwrap_or(&empty).clone());
                write_atomic(&timelines.join(format!("{id}.svg")), render_timeline(&spec)?.as_bytes())?;
            }
            println!("figures={}", sets.len() + 1);
        }
        Command::Synth {
            out,
            videos,
            seed,
            duration,
            fps,
            side,
        } => {
            let config = SynthConfig {
                num_videos: videos,
                seed,
                duration,
                fps,
                side,
                ..SynthConfig::default()
            };
            let corpus = generate_corpus(&out, &config)?;
            println!("videos={}", corpus.sets.len());
            println!("boundaries={}", corpus.planted.values().map(Vec::len).sum::<usize>());
        }
        Command::Pipeline(args) => {
            let mut config = match &args.config {
                Some(path) => PipelineConfig::load(path)?,
                None => {
                    let mut c = PipelineConfig::default();
                    c.annotations = args.root.join(&c.annotations);
                    c.frames = args.root.join(&c.frames);
                    c.work_dir = args.root.join(&c.work_dir);
                    c
                }
            };
            if let Some(w) = args.work_dir {
                config.work_dir = w;
            }
            if let Some(w) = args.workers {
                config.workers = w;
            }
            if let Some(s) = args.seed {
                config.seed = s;
            }
            if let Some(p) = args.gt_policy {
                config.gt_policy = p;
            }
            if let Some(m) = args.m {
                config.m = m;
            }
            if let Some(s) = args.stride {
                config.stride = s;
            }
            if let Some(s) = args.image_side {
                config.image_side = s;
            }
            let mut pipeline = Pipeline::new(config)?;
            pipeline.force = args.force;
            let manifest = pipeline.run()?;
            for stage in &manifest.stages {
                eprintln!(
                    "{:<12} {:>8.2}s {}",
                    stage.name,
                    stage.seconds,
                    if stage.ran { "ran" } else { "skipped" }
                );
            }
            let ran: Vec<&str> = manifest.stages.iter().filter(|s| s.ran).map(|s| s.name.as_str()).collect();
            println!("stages_run={}", ran.join(","));
            if let Some(s) = &manifest.summary {
                println!("precision={:.4}", s.precision);
                println!("recall={:.4}", s.recall);
                println!("f1={:.4}", s.f1);
            }
            println!("seconds={:.2}", manifest.total_seconds);
        }
    }
    Ok(())
}
