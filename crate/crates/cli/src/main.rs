use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use panobev::metrics::VoidMode;

mod commands;
mod settings;

/// Panoramic bird's-eye-view semantic mapping tools.
#[derive(Debug, Parser)]
#[command(name = "panobev", version)]
struct Cli {
    /// Print every configuration key with its default value and exit.
    #[arg(long)]
    dump_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// `key=value` override, applied after the configuration file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Project a semantic panorama with depth into a ground-truth BEV map.
    GenBev {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        sem: PathBuf,
        /// Pose text file: 12 numbers, rotation row-major then translation.
        #[arg(long)]
        pose: PathBuf,
        /// Grid spec file or inline list such as `size=500,range=10`.
        #[arg(long)]
        spec: Option<String>,
        /// Vocabulary name (`matterport`, `stanford`) or class-list file.
        #[arg(long, default_value = "matterport")]
        classes: String,
        /// Output label PNG; the JSON sidecar goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Resample a set of pinhole views onto an equirectangular panorama.
    Stitch {
        #[arg(long)]
        views_manifest: PathBuf,
        /// Optional panorama depth, required for translated views.
        #[arg(long)]
        depth: Option<PathBuf>,
        #[arg(long, default_value = "matterport")]
        classes: String,
        #[arg(long)]
        out: PathBuf,
        /// Coverage mask output; defaults to `<out>.coverage.png`.
        #[arg(long)]
        coverage: Option<PathBuf>,
    },
    /// Score predicted BEV label maps against ground truth.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        classes: String,
        /// Output directory for report.csv and report.json.
        #[arg(long)]
        out: PathBuf,
        /// `class` scores void as an extra class, `ignore` skips void ground truth.
        #[arg(long, default_value = "class")]
        void_mode: VoidMode,
    },
    /// Train the toy mapper on a scene manifest or `synth:N` generated rooms.
    TrainToy {
        #[arg(long)]
        scenes: String,
        #[arg(long)]
        out_model: PathBuf,
        /// Optional JSON file for the loss curve and training metrics.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check the attention layer's analytic gradients by finite differences.
    Gradcheck {
        /// Channels, queries, heads, points.
        #[arg(long, default_value = "8,16,2,4")]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Color a BEV label map with a palette; void renders black.
    RenderMap {
        #[arg(long)]
        bev: PathBuf,
        /// Vocabulary name or palette file with `id r g b` lines.
        #[arg(long, default_value = "matterport")]
        palette: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a BEV map with a trained toy mapper.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        pose: PathBuf,
        #[arg(long, default_value = "matterport")]
        classes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write synthetic room scenes and a scene manifest.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Exit status: 2 for unusable inputs, 1 for a failed check or computation.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<panobev::Error> for Failure {
    fn from(e: panobev::Error) -> Self {
        let code = match e {
            panobev::Error::NonFinite(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        panobev::Error::from(e).into()
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.dump_config {
        print!("{}", settings::Settings::default().dump()?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure {
            code: 2,
            message: "no subcommand given; see --help".into(),
        });
    };
    match command {
        Command::GenBev {
            image,
            depth,
            sem,
            pose,
            spec,
            classes,
            out,
            cfg,
        } => {
            let s = settings::load(cfg.config.as_deref(), spec.as_deref(), &cfg.set)?;
            commands::gen_bev(&image, &depth, &sem, &pose, &s.bev, &classes, &out)
        }
        Command::Stitch {
            views_manifest,
            depth,
            classes,
            out,
            coverage,
        } => commands::stitch(&views_manifest, depth.as_deref(), &classes, &out, coverage.as_deref()),
        Command::Eval {
            pred_dir,
            gt_dir,
            classes,
            out,
            void_mode,
        } => commands::eval(&pred_dir, &gt_dir, &classes, &out, void_mode),
        Command::TrainToy {
            scenes,
            out_model,
            report,
            cfg,
        } => {
            let s = settings::load(cfg.config.as_deref(), None, &cfg.set)?;
            commands::train_toy(&scenes, &s, &out_model, report.as_deref())
        }
        Command::Gradcheck { dims, seed, step } => commands::gradcheck(&dims, seed, step),
        Command::RenderMap { bev, palette, out } => commands::render_map(&bev, &palette, &out),
        Command::Predict {
            model,
            image,
            depth,
            pose,
            classes,
            out,
        } => commands::predict(&model, &image, &depth, &pose, &classes, &out),
        Command::Synth {
            seed,
            count,
            out_dir,
            cfg,
        } => {
            let s = settings::load(cfg.config.as_deref(), None, &cfg.set)?;
            commands::synth(seed, count, &s, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("panobev: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
