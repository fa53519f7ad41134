//! Command-line interface: dataset generation, training, inference,
//! evaluation, the rotation and roundness studies, and gradient self-checks.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use circleseg::commands;
use circleseg::config::RunConfig;
use circleseg::deform::ProposalMode;
use circleseg::Error;

#[derive(Parser)]
#[command(name = "circleseg", version, about = "Circle-representation instance segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Circle,
    OctagonBaseline,
}

impl From<ModeArg> for ProposalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Circle => ProposalMode::Circle,
            ModeArg::OctagonBaseline => ProposalMode::OctagonBaseline,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON (defaults apply to missing fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.synth.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/val/test splits.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train the detector and contour network jointly.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Resume bitwise from a last.ckpt.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run inference over a manifest's images, writing results JSON.
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Results JSON path.
        #[arg(long = "results-out")]
        results_out: PathBuf,
        /// Detection score threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Contour proposal mode.
        #[arg(long, value_enum, default_value = "circle")]
        mode: ModeArg,
        /// Emit raw proposals without deformation (baseline).
        #[arg(long)]
        no_refine: bool,
    },
    /// Score results JSON against a manifest.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        results: PathBuf,
    },
    /// Rotation-consistency study (runs both orientations itself).
    RotateEval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value = "circle")]
        mode: ModeArg,
    },
    /// Axis-ratio sweep: generate, train, and score one dataset per range.
    Ellipticity {
        #[command(flatten)]
        config: ConfigArgs,
        /// Axis-ratio ranges as lo:hi, repeated.
        #[arg(long = "range", value_parser = parse_range,
              default_values = ["0.95:1.0", "0.7:0.8", "0.4:0.5"])]
        ranges: Vec<(f64, f64)>,
    },
    /// Finite-difference verification of every layer and composite stack.
    GradCheck {
        /// Probe fewer coordinates per tensor.
        #[arg(long)]
        quick: bool,
    },
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s}"))?;
    let lo: f64 = lo.parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(0.0 < lo && lo <= hi && hi <= 1.0) {
        return Err(format!("range {lo}:{hi} must satisfy 0 < lo <= hi <= 1"));
    }
    Ok((lo, hi))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData { config } => {
            let cfg = config.load()?;
            let report = commands::cmd_gen_data(&cfg)?;
            for m in &report.manifests {
                println!(
                    "{}: {} images, {} annotations",
                    m.split,
                    m.images.len(),
                    m.annotations.len()
                );
            }
            if report.skipped_objects > 0 {
                println!("skipped {} objects (overlap cap)", report.skipped_objects);
            }
            println!("wrote {}", cfg.data_dir.display());
        }
        Command::Train { config, resume } => {
            let cfg = config.load()?;
            let report = commands::cmd_train(&cfg, resume.as_deref())?;
            for row in &report.rows {
                println!("{}", row.csv());
            }
            println!(
                "best val dice {:.4}; checkpoints at {} and {}",
                report.best_val_dice,
                report.best_checkpoint.display(),
                report.last_checkpoint.display()
            );
        }
        Command::Infer {
            config,
            checkpoint,
            manifest,
            results_out,
            threshold,
            mode,
            no_refine,
        } => {
            let cfg = config.load()?;
            let summary = commands::cmd_infer(
                &cfg,
                &checkpoint,
                &manifest,
                &results_out,
                threshold.unwrap_or(cfg.score_threshold),
                mode.into(),
                !no_refine,
            )?;
            println!(
                "{} predictions over {} images -> {}",
                summary.predictions,
                summary.images,
                summary.out_path.display()
            );
        }
        Command::Eval {
            config,
            manifest,
            results,
        } => {
            let cfg = config.load()?;
            let report = commands::cmd_eval(&cfg, &manifest, &results, &cfg.out_dir)?;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "null".into());
            println!(
                "detection    AP {} AP50 {} AP75 {} AP_S {} AP_M {}",
                fmt(report.detection.ap),
                fmt(report.detection.ap50),
                fmt(report.detection.ap75),
                fmt(report.detection.ap_s),
                fmt(report.detection.ap_m)
            );
            println!(
                "segmentation AP {} AP50 {} AP75 {} AP_S {} AP_M {}",
                fmt(report.segmentation.ap),
                fmt(report.segmentation.ap50),
                fmt(report.segmentation.ap75),
                fmt(report.segmentation.ap_s),
                fmt(report.segmentation.ap_m)
            );
            println!(
                "instance dice {:.4}, pixel-union dice {:.4}",
                report.mean_dice, report.pixel_union_dice
            );
            println!("report at {}", cfg.out_dir.join("report.json").display());
        }
        Command::RotateEval {
            config,
            checkpoint,
            manifest,
            threshold,
            mode,
        } => {
            let cfg = config.load()?;
            let rc = commands::cmd_rotate_eval(
                &cfg,
                &checkpoint,
                &manifest,
                &cfg.out_dir,
                threshold.unwrap_or(cfg.score_threshold),
                mode.into(),
            )?;
            println!(
                "rotation consistency {:.4} over {} images ({} skipped)",
                rc.score, rc.scored_images, rc.skipped_images
            );
        }
        Command::Ellipticity { config, ranges } => {
            let cfg = config.load()?;
            let outcome = commands::cmd_ellipticity(&cfg, &ranges, &cfg.out_dir)?;
            println!("mean_axis_ratio,detection_ap,segmentation_ap,circle_dice,octagon_dice");
            for (i, p) in outcome.report.ellipticity_curve.iter().enumerate() {
                println!(
                    "{:.4},{:.4},{:.4},{:.4},{:.4}",
                    p.mean_axis_ratio,
                    p.detection_ap.unwrap_or(f64::NAN),
                    p.segmentation_ap.unwrap_or(f64::NAN),
                    outcome.circle_dice[i],
                    outcome.octagon_dice[i]
                );
            }
            println!("curve at {}", cfg.out_dir.join("ellipticity.csv").display());
        }
        Command::GradCheck { quick } => {
            let mut failed = false;
            for entry in circleseg::diagnostics::run_gradient_suite(quick) {
                let ok = entry.report.passes(entry.tolerance);
                failed |= !ok;
                println!(
                    "{:<18} max rel err {:.3e} (tol {:.0e}) over {} coords: {}",
                    entry.name,
                    entry.report.max_rel_err,
                    entry.tolerance,
                    entry.report.coords_checked,
                    if ok { "PASS" } else { "FAIL" },
                );
                if !ok {
                    println!("  worst: {}", entry.report.worst);
                }
            }
            if failed {
                return Err(Error::Runtime("gradient check failed".to_string()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Config(_) | Error::Manifest(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
