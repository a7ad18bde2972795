//! Command implementations behind the `attmot` binary: dataset generation,
//! corruption, import, training, evaluation, and noise sweeps.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Ablation, RunConfig};
use crate::dataset::container::{load_sequence, save_sequence, write_atomic, import_frames};
use crate::dataset::corpus::{GlyphCorpus, SourceTag};
use crate::dataset::corrupt::{inject_noise, scramble_objects, NoiseSpec};
use crate::dataset::{generate_sequence, SequenceSpec, VideoSequence};
use crate::error::{AttmotError, Result};
use crate::metrics::{
    evaluate_tracks, hypotheses_to_tracks, motp_distance, save_hypotheses, MetricsReport,
    DEFAULT_IOU_THRESHOLD,
};
use crate::model::{rollout, ModelConfig};
use crate::objective::{train, TrainSummary};
use crate::params::{load_archive, save_png};
use crate::plot::{line_plot, Series};
use crate::rng::{stream_rng, STREAM_SCRAMBLE};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Confidence threshold turning continuous tracker confidences into discrete
/// hypotheses.
pub const MIN_CONFIDENCE: f64 = 0.5;

/// Frames per evaluation tape chunk.
pub const EVAL_CHUNK: usize = 25;

pub struct GenArgs {
    pub dataset: SourceTag,
    pub frames: usize,
    pub objects: usize,
    pub size: (usize, usize),
    pub seed: u64,
    pub sprite_side: usize,
    pub speed: (f64, f64),
    pub out: PathBuf,
    /// Directory of sprite PNGs for non-builtin corpora.
    pub sprites: Option<PathBuf>,
}

pub fn cmd_gen(args: &GenArgs) -> Result<()> {
    let corpus = match &args.sprites {
        Some(dir) => GlyphCorpus::from_image_dir(dir, args.dataset, args.sprite_side)?,
        None => GlyphCorpus::builtin(args.dataset, args.sprite_side, 10, args.seed)?,
    };
    let spec = SequenceSpec {
        frame_h: args.size.0,
        frame_w: args.size.1,
        n_objects: args.objects,
        n_frames: args.frames,
        speed_min: args.speed.0,
        speed_max: args.speed.1,
        seed: args.seed,
    };
    let seq = generate_sequence(&spec, &corpus)?;
    save_sequence(&seq, &args.out)?;
    println!(
        "wrote {} frames ({}x{}, {} objects) to {}",
        args.frames,
        args.size.0,
        args.size.1,
        args.objects,
        args.out.display()
    );
    Ok(())
}

pub struct CorruptArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    /// Additive Gaussian noise fraction; mutually exclusive with scramble.
    pub noise: Option<f64>,
    pub scramble: bool,
    pub seed: u64,
    pub no_clip: bool,
}

pub fn cmd_corrupt(args: &CorruptArgs) -> Result<()> {
    if args.noise.is_some() == args.scramble {
        return Err(AttmotError::validation(
            "corrupt: exactly one of --noise or --scramble required",
        ));
    }
    let seq = load_sequence(&args.input)?;
    let out_seq = if let Some(beta) = args.noise {
        let mut spec = NoiseSpec::new(beta, args.seed);
        spec.clip = !args.no_clip;
        VideoSequence {
            frames: inject_noise(&seq.frames, &spec)?,
            ..seq
        }
    } else {
        let mut rng = stream_rng(args.seed, STREAM_SCRAMBLE);
        scramble_objects(&seq, &mut rng)
    };
    save_sequence(&out_seq, &args.out)?;
    println!("wrote corrupted sequence to {}", args.out.display());
    Ok(())
}

pub struct ImportArgs {
    pub frames: PathBuf,
    pub size: (usize, usize),
    pub out: PathBuf,
}

pub fn cmd_import(args: &ImportArgs) -> Result<()> {
    let seq = import_frames(&args.frames, args.size.0, args.size.1, &args.out)?;
    println!(
        "imported {} frames ({}x{}) to {}",
        seq.frames.dim().0,
        args.size.0,
        args.size.1,
        args.out.display()
    );
    Ok(())
}

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    // command-line overrides on top of the config file
    pub dataset: Option<String>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub ablation: Option<String>,
    pub noise_train: Option<f64>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainSummary> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &args.dataset {
        cfg.dataset = d.clone();
    }
    if let Some(s) = args.steps {
        cfg.steps = s;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(a) = &args.ablation {
        cfg.ablation = match a.as_str() {
            "attunet" => Ablation::Attunet,
            "resunet" => Ablation::Resunet,
            _ => {
                return Err(AttmotError::validation(format!(
                    "ablation: expected attunet|resunet, got '{a}'"
                )))
            }
        };
    }
    if let Some(b) = args.noise_train {
        cfg.noise_train_beta = b;
    }
    cfg.validate()?;
    let summary = train(&cfg, &args.out)?;
    println!(
        "trained {} steps; final loss {:.6}; artifacts in {}",
        summary.steps_done,
        summary.final_loss,
        args.out.display()
    );
    Ok(summary)
}

pub struct EvalArgs {
    /// Training run directory (holds config.txt + checkpoint/).
    pub model: Option<PathBuf>,
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub threshold: f64,
    /// Extra noise applied to frames before the rollout.
    pub noise: Option<f64>,
    /// Scramble object boxes before the rollout (S-MOTA protocol).
    pub scramble: bool,
    pub seed: u64,
    /// Feed ground truth back as hypotheses (pipeline self-check).
    pub oracle: bool,
    /// Report distance-flavored MOTP instead of overlap.
    pub motp_dist: bool,
    pub label: String,
    /// Dump reconstruction PNGs for the first frames.
    pub dump_recon: usize,
}

#[derive(Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub label: String,
    pub dataset: String,
    pub model: Option<String>,
    pub iou_threshold: f64,
    pub min_confidence: f64,
    pub noise_beta: f64,
    pub scrambled: bool,
    pub seed: u64,
    pub metrics: MetricsReport,
    /// Mean matched center distance in pixels (the distance-MOTP variant).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub motp_distance_px: Option<f64>,
}

/// Load a trained run directory into a model config + parameter store.
pub fn load_model(dir: &Path) -> Result<(ModelConfig, crate::params::ParamStore)> {
    let cfg_text = std::fs::read_to_string(dir.join("config.txt"))
        .map_err(|e| AttmotError::validation(format!("{}: config.txt: {e}", dir.display())))?;
    let run_cfg = RunConfig::parse(&cfg_text)?;
    let model_cfg = ModelConfig {
        encoder: run_cfg.encoder_config(),
        tracker: run_cfg.tracker_config(),
        literal_sum: run_cfg.literal_sum,
    };
    let store = load_archive(&dir.join("checkpoint"))?;
    Ok((model_cfg, store))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    let seq = load_sequence(&args.dataset)?;
    let seq = if args.scramble {
        let mut rng = stream_rng(args.seed, STREAM_SCRAMBLE);
        scramble_objects(&seq, &mut rng)
    } else {
        seq
    };
    let frames = match args.noise {
        Some(beta) => inject_noise(&seq.frames, &NoiseSpec::new(beta, args.seed))?,
        None => seq.frames.clone(),
    };
    let n_frames = frames.dim().0;

    std::fs::create_dir_all(&args.out)?;
    let hyp_tracks = if args.oracle {
        seq.tracks.clone()
    } else {
        let model_dir = args.model.as_ref().ok_or_else(|| {
            AttmotError::validation("eval: --model required unless --oracle is set")
        })?;
        let (model_cfg, store) = load_model(model_dir)?;
        let res = rollout(
            &model_cfg,
            &store,
            &frames,
            EVAL_CHUNK,
            MIN_CONFIDENCE,
            args.dump_recon > 0,
        )?;
        save_hypotheses(&res.hypotheses, &args.out.join("hypotheses.jsonl"))?;
        if let Some(recon) = &res.recon {
            for ti in 0..args.dump_recon.min(n_frames) {
                let frame = recon.index_axis(ndarray::Axis(0), ti);
                save_png(&frame, &args.out.join(format!("recon_{ti:04}.png")))?;
                let orig = frames.index_axis(ndarray::Axis(0), ti);
                save_png(&orig, &args.out.join(format!("input_{ti:04}.png")))?;
            }
        }
        hypotheses_to_tracks(&res.hypotheses, n_frames, MIN_CONFIDENCE)
    };

    let mut metrics = evaluate_tracks(&seq.tracks, &hyp_tracks, n_frames, args.threshold)?;
    let mut dist = None;
    if args.motp_dist {
        // re-accumulate to fetch the distance sums
        let mut state = crate::metrics::MatchState::default();
        let mut assignments = Vec::new();
        for t in 0..n_frames {
            let gt: Vec<_> = seq
                .tracks
                .iter()
                .filter_map(|tr| tr.boxes.get(t).copied().flatten().map(|b| (tr.track_id, b)))
                .collect();
            let hyp: Vec<_> = hyp_tracks
                .iter()
                .filter_map(|tr| tr.boxes.get(t).copied().flatten().map(|b| (tr.track_id, b)))
                .collect();
            assignments.push(crate::metrics::frame_match(
                &gt,
                &hyp,
                &mut state,
                args.threshold,
            ));
        }
        let acc = crate::metrics::accumulate(&assignments, &seq.tracks);
        let d = motp_distance(&acc);
        metrics.motp = d;
        dist = Some(d);
    }

    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        label: args.label.clone(),
        dataset: args.dataset.display().to_string(),
        model: args.model.as_ref().map(|p| p.display().to_string()),
        iou_threshold: args.threshold,
        min_confidence: MIN_CONFIDENCE,
        noise_beta: args.noise.unwrap_or(0.0),
        scrambled: args.scramble,
        seed: args.seed,
        metrics,
        motp_distance_px: dist,
    };
    write_atomic(
        &args.out.join("report.json"),
        serde_json::to_string_pretty(&report)?.as_bytes(),
    )?;
    println!("{}", report.metrics.render_table(&args.label));
    Ok(report)
}

pub struct SweepArgs {
    pub models: Vec<PathBuf>,
    pub dataset: PathBuf,
    pub betas: Vec<f64>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.betas.is_empty() || args.models.is_empty() {
        return Err(AttmotError::validation("sweep: need >= 1 model and beta"));
    }
    let mut sorted = args.betas.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted != args.betas {
        return Err(AttmotError::validation("sweep: betas must be ascending"));
    }
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("sweep.csv");
    let existing = std::fs::read_to_string(&csv_path).unwrap_or_default();
    let run_id = existing.lines().skip(1).count();
    let mut rows = String::new();
    if existing.is_empty() {
        rows.push_str(&format!("run_id,model,dataset,beta,status,{}\n", MetricsReport::csv_header()));
    }

    let mut series: Vec<Series> = Vec::new();
    for (mi, model) in args.models.iter().enumerate() {
        let label = model
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| format!("model{mi}"));
        let mut points = Vec::new();
        for (bi, &beta) in args.betas.iter().enumerate() {
            let cell_out = args.out.join(format!("cell_{label}_{beta}"));
            let eval = EvalArgs {
                model: Some(model.clone()),
                dataset: args.dataset.clone(),
                out: cell_out,
                threshold: DEFAULT_IOU_THRESHOLD,
                noise: (beta > 0.0).then_some(beta),
                scramble: false,
                seed: args.seed,
                oracle: false,
                motp_dist: false,
                label: label.clone(),
                dump_recon: 0,
            };
            let id = run_id + mi * args.betas.len() + bi;
            match cmd_eval(&eval) {
                Ok(report) => {
                    points.push((beta, report.metrics.mota));
                    rows.push_str(&format!(
                        "{id},{label},{},{beta},ok,{}\n",
                        args.dataset.display(),
                        report.metrics.csv_row()
                    ));
                }
                Err(e) => {
                    // record the failed cell and keep sweeping
                    eprintln!("sweep cell ({label}, beta={beta}) failed: {e}");
                    rows.push_str(&format!(
                        "{id},{label},{},{beta},error: {},{}\n",
                        args.dataset.display(),
                        e.to_string().replace(',', ";"),
                        ",".repeat(MetricsReport::COLUMNS.len() - 1)
                    ));
                }
            }
        }
        if !points.is_empty() {
            series.push(Series { label, points });
        }
    }
    // append, never overwrite earlier runs
    write_atomic(&csv_path, format!("{existing}{rows}").as_bytes())?;
    if !series.is_empty() {
        line_plot(
            &series,
            "MOTA VS NOISE",
            "BETA",
            "MOTA",
            &args.out.join("sweep.png"),
        )?;
    }
    println!("sweep results in {}", args.out.display());
    Ok(())
}

pub fn cmd_config_defaults() -> String {
    RunConfig::default().to_text()
}
