//! `attmot` command line: generate, corrupt, and import benchmark videos;
//! train, evaluate, and sweep tracking models.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use attmot::cli::{
    cmd_config_defaults, cmd_corrupt, cmd_eval, cmd_gen, cmd_import, cmd_sweep, cmd_train,
    CorruptArgs, EvalArgs, GenArgs, ImportArgs, SweepArgs, TrainArgs,
};
use attmot::dataset::corpus::SourceTag;
use attmot::metrics::DEFAULT_IOU_THRESHOLD;
use attmot::Result;

#[derive(Parser)]
#[command(name = "attmot", version, about = "Unsupervised multi-object tracking on synthetic video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bouncing-glyph video with ground truth
    Gen(Gen),
    /// Corrupt an existing video with noise or object scrambling
    Corrupt(Corrupt),
    /// Import raw uint8 grayscale frames into a container
    Import(Import),
    /// Train a tracking model
    Train(Train),
    /// Evaluate a trained model (or the ground-truth oracle) on a video
    Eval(Eval),
    /// Evaluate several models across a noise ladder and plot the results
    Sweep(Sweep),
    /// Inspect configuration
    Config(Config),
}

#[derive(Args)]
struct Gen {
    /// Glyph corpus: mnist, kuzushiji, or fashion
    #[arg(long)]
    dataset: String,
    /// Number of frames
    #[arg(long)]
    frames: usize,
    /// Number of moving objects
    #[arg(long)]
    objects: usize,
    /// Frame size as HxW, e.g. 64x64
    #[arg(long, default_value = "64x64")]
    size: String,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output container directory
    #[arg(long)]
    out: PathBuf,
    /// Sprite side length in pixels
    #[arg(long, default_value_t = 18)]
    sprite_side: usize,
    /// Speed range in pixels/frame as MIN:MAX
    #[arg(long, default_value = "1:3")]
    speed: String,
    /// Directory of glyph PNGs to use instead of the builtin corpus
    #[arg(long)]
    sprites: Option<PathBuf>,
}

#[derive(Args)]
struct Corrupt {
    /// Input container directory
    #[arg(long = "in")]
    input: PathBuf,
    /// Output container directory
    #[arg(long)]
    out: PathBuf,
    /// Additive Gaussian noise fraction beta in [0, 1]
    #[arg(long, conflicts_with = "scramble")]
    noise: Option<f64>,
    /// Randomly swap object identities between tracks
    #[arg(long)]
    scramble: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep noisy values outside [0, 1] instead of clipping
    #[arg(long)]
    no_clip: bool,
}

#[derive(Args)]
struct Import {
    /// Raw frame file (uint8 grayscale, T*H*W bytes)
    #[arg(long)]
    frames: PathBuf,
    /// Frame size as HxW
    #[arg(long)]
    size: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    /// Run configuration file (key = value lines); defaults if omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints and logs
    #[arg(long)]
    out: PathBuf,
    /// Override: training dataset container
    #[arg(long)]
    dataset: Option<String>,
    /// Override: optimizer steps (0 saves an untrained checkpoint)
    #[arg(long)]
    steps: Option<usize>,
    /// Override: RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override: ablation (attunet or resunet)
    #[arg(long)]
    ablation: Option<String>,
    /// Override: noisy-training beta
    #[arg(long)]
    noise_train: Option<f64>,
}

#[derive(Args)]
struct Eval {
    /// Training run directory (config.txt + checkpoint/)
    #[arg(long, required_unless_present = "oracle")]
    model: Option<PathBuf>,
    /// Dataset container to evaluate on
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for report.json and hypotheses.jsonl
    #[arg(long)]
    out: PathBuf,
    /// IoU threshold for a valid match
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    threshold: f64,
    /// Inject noise at this beta before evaluating
    #[arg(long)]
    noise: Option<f64>,
    /// Scramble object identities before evaluating (S-MOTA protocol)
    #[arg(long)]
    scramble: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feed ground truth back as hypotheses (pipeline self-check)
    #[arg(long)]
    oracle: bool,
    /// Report MOTP as mean center distance in pixels instead of overlap
    #[arg(long)]
    motp_dist: bool,
    /// Row label in the printed table
    #[arg(long, default_value = "attmot")]
    label: String,
    /// Dump this many reconstruction/input PNG pairs
    #[arg(long, default_value_t = 0)]
    dump_recon: usize,
}

#[derive(Args)]
struct Sweep {
    /// Comma-separated training run directories
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated ascending noise betas, e.g. 0,0.1,0.2,0.3
    #[arg(long, value_delimiter = ',', required = true)]
    betas: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; sweep.csv is appended to, never overwritten
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Config {
    /// Print the default configuration
    #[arg(long)]
    defaults: bool,
}

fn parse_pair<T: std::str::FromStr>(s: &str, sep: char) -> Option<(T, T)> {
    let (a, b) = s.split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    parse_pair(s, 'x').ok_or_else(|| {
        attmot::AttmotError::validation(format!("size: expected HxW (e.g. 64x64), got '{s}'"))
    })
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    parse_pair(s, ':').ok_or_else(|| {
        attmot::AttmotError::validation(format!("speed: expected MIN:MAX (e.g. 1:3), got '{s}'"))
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&GenArgs {
            dataset: SourceTag::parse(&a.dataset)?,
            frames: a.frames,
            objects: a.objects,
            size: parse_size(&a.size)?,
            seed: a.seed,
            sprite_side: a.sprite_side,
            speed: parse_range(&a.speed)?,
            out: a.out,
            sprites: a.sprites,
        }),
        Command::Corrupt(a) => cmd_corrupt(&CorruptArgs {
            input: a.input,
            out: a.out,
            noise: a.noise,
            scramble: a.scramble,
            seed: a.seed,
            no_clip: a.no_clip,
        }),
        Command::Import(a) => cmd_import(&ImportArgs {
            frames: a.frames,
            size: parse_size(&a.size)?,
            out: a.out,
        }),
        Command::Train(a) => cmd_train(&TrainArgs {
            config: a.config,
            out: a.out,
            dataset: a.dataset,
            steps: a.steps,
            seed: a.seed,
            ablation: a.ablation,
            noise_train: a.noise_train,
        })
        .map(|_| ()),
        Command::Eval(a) => cmd_eval(&EvalArgs {
            model: a.model,
            dataset: a.dataset,
            out: a.out,
            threshold: a.threshold,
            noise: a.noise,
            scramble: a.scramble,
            seed: a.seed,
            oracle: a.oracle,
            motp_dist: a.motp_dist,
            label: a.label,
            dump_recon: a.dump_recon,
        })
        .map(|_| ()),
        Command::Sweep(a) => cmd_sweep(&SweepArgs {
            models: a.models,
            dataset: a.dataset,
            betas: a.betas,
            seed: a.seed,
            out: a.out,
        }),
        Command::Config(a) => {
            if a.defaults {
                print!("{}", cmd_config_defaults());
                Ok(())
            } else {
                Err(attmot::AttmotError::validation(
                    "config: pass --defaults to print the default configuration",
                ))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output exits 0; real argument errors exit 1
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
