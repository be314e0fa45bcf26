//! `ucdmt`: phantom generation, training, translation and evaluation.
//!
//! Exit status: 0 on success, 1 for invalid invocations or configuration,
//! 2 for failures while running.

mod grid;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ucdmt::data::{generate_phantom_dataset, DatasetManifest, PhantomSpec, Split};
use ucdmt::inference::translate_volume;
use ucdmt::losses::GanMode;
use ucdmt::metrics::{evaluate_dataset, EvalOptions, L1Scale, CLASSIFIER_STEPS};
use ucdmt::training::{load_bundle, load_config, run_training, TrainConfig, TrainOptions};
use ucdmt::{Error, ModalityCode};

const SEED_ENV: &str = "UCDMT_SEED";

#[derive(Parser, Debug)]
#[command(name = "ucdmt", version, about = "Multimodal image translation with one conditional encoder/decoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multimodal phantom dataset.
    Phantom {
        #[arg(long, default_value_t = 14)]
        subjects: usize,
        /// Side length of the square slices.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 8)]
        slices: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        lesion_probability: f64,
        #[arg(long, default_value_t = 0.02)]
        noise_sigma: f64,
        /// Leading fraction of subjects assigned to the training split.
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the dataset's translator split.
    Train {
        /// JSON training config; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Run directory for checkpoints and metrics.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Drop the latent disentanglement term from the generator objective.
        #[arg(long, default_value_t = false)]
        disen_off: bool,
        /// Generator adversarial objective [default: from config, else nonsaturating].
        #[arg(long, value_parser = ["nonsaturating", "minimax"])]
        gan_mode: Option<String>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress per-step log lines on stderr.
        #[arg(long, default_value_t = false)]
        quiet: bool,
    },
    /// Translate one subject's retained slices.
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory holding manifest.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        subject: String,
        /// Source modality (t1, t1ce, t2, flair).
        #[arg(long)]
        from: String,
        /// Target modality, or `all` for every other modality.
        #[arg(long)]
        to: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write a PNG grid of input | output(s) | ground truth per slice.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset split and write a JSON report.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        report: PathBuf,
        /// Also evaluate the self-reconstruction directions.
        #[arg(long, default_value_t = false)]
        include_self: bool,
        #[arg(long, default_value = "byte", value_parser = ["byte", "unit"])]
        l1_scale: String,
        #[arg(long, default_value_t = 1)]
        is_splits: usize,
        /// Training steps of the inception-score classifier.
        #[arg(long, default_value_t = CLASSIFIER_STEPS)]
        classifier_steps: usize,
        /// Seed of the inception-score classifier.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Worker threads; results do not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

/// A failure and the exit status it maps to.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let text = err.to_string();
        match err {
            Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::UnknownModality(_)
            | Error::IndivisibleBatch { .. }
            | Error::InvalidCode(_) => Failure::Invalid(text),
            _ => Failure::Runtime(text),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure::Invalid(message.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let rendered = err.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments").trim();
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn print_effective(what: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let json = serde_json::to_string(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{what}: {json}");
    Ok(())
}

fn modality(name: &str, count: usize) -> Result<ModalityCode, Failure> {
    Ok(ModalityCode::from_name(name, count)?)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Phantom { subjects, size, slices, seed, lesion_probability, noise_sigma, train_fraction, out } => {
            let spec = PhantomSpec {
                n_subjects: subjects,
                image_size: size,
                slices_per_subject: slices,
                lesion_probability,
                noise_sigma,
                seed,
                train_fraction,
            };
            spec.validate()?;
            print_effective("phantom", &spec)?;
            let manifest = generate_phantom_dataset(&spec, &out)?;
            println!("wrote {} subjects to {}", manifest.subjects.len(), out.display());
            Ok(())
        }
        Command::Train { config, data, out, disen_off, gan_mode, resume, quiet } => {
            let mut cfg = match &config {
                Some(path) => load_config(path)?,
                None => TrainConfig::default(),
            };
            if let Ok(raw) = std::env::var(SEED_ENV) {
                cfg.seed = raw.trim().parse().map_err(|_| invalid(format!("{SEED_ENV}={raw:?} is not a u64")))?;
            }
            if disen_off {
                cfg.weights.disen_off = true;
            }
            if let Some(mode) = gan_mode {
                cfg.weights.gan_mode = mode.parse::<GanMode>()?;
            }
            let manifest = DatasetManifest::load(&data)?;
            cfg.validate(manifest.m)?;
            print_effective("config", &cfg)?;
            let options = TrainOptions { out_dir: Some(out.clone()), resume, max_steps: None, verbose: !quiet };
            let outcome = run_training(&cfg, &manifest, &options)?;
            let ckpt = outcome.checkpoint.expect("run directory given");
            println!("trained {} steps; checkpoint {}", outcome.state.step, ckpt.display());
            Ok(())
        }
        Command::Translate { checkpoint, input, subject, from, to, out, grid } => {
            let manifest = DatasetManifest::load(&input)?;
            let m_x = modality(&from, manifest.m)?;
            let targets: Vec<ModalityCode> = if to == "all" {
                (0..manifest.m)
                    .filter(|&k| k != m_x.index())
                    .map(|k| ModalityCode::one_hot(k, manifest.m))
                    .collect::<Result<_, _>>()?
            } else {
                vec![modality(&to, manifest.m)?]
            };
            manifest.subject(&subject)?;
            let (bundle, hash) = load_bundle(&checkpoint)?;
            let mut written = Vec::new();
            for m_y in &targets {
                let result = translate_volume(&bundle, &manifest, &subject, &m_x, m_y, &out, &hash)?;
                println!("{} -> {}", m_y.name(), result.volume_path.display());
                written.push(result);
            }
            if let Some(path) = grid {
                grid::write_translation_grid(&path, &manifest, &subject, &m_x, &written)?;
                println!("grid -> {}", path.display());
            }
            Ok(())
        }
        Command::Evaluate {
            checkpoint,
            data,
            split,
            report,
            include_self,
            l1_scale,
            is_splits,
            classifier_steps,
            seed,
            workers,
        } => {
            if workers == 0 {
                return Err(invalid("--workers must be at least 1"));
            }
            let split: Split = split.parse()?;
            let options = EvalOptions {
                include_self,
                l1_scale: l1_scale.parse::<L1Scale>()?,
                is_splits,
                classifier_steps,
                seed,
            };
            print_effective("evaluate", &options)?;
            let manifest = DatasetManifest::load(&data)?;
            let (bundle, hash) = load_bundle(&checkpoint)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            let result = pool.install(|| evaluate_dataset(&bundle, &manifest, split, &options, Some(&hash), Some(&report)))?;
            summarise(&result, &report);
            Ok(())
        }
    }
}

fn summarise(report: &ucdmt::metrics::MetricsReport, path: &Path) {
    let a = &report.model.aggregate;
    let b = &report.baseline.aggregate;
    println!(
        "model    l1 {:.3}±{:.3}  ssim {:.4}±{:.4}  psnr {:.2}±{:.2}  is {:.3}",
        a.l1.mean, a.l1.se, a.ssim.mean, a.ssim.se, a.psnr.mean, a.psnr.se, a.is.mean
    );
    println!(
        "baseline l1 {:.3}±{:.3}  ssim {:.4}±{:.4}  psnr {:.2}±{:.2}  is {:.3}",
        b.l1.mean, b.l1.se, b.ssim.mean, b.ssim.se, b.psnr.mean, b.psnr.se, b.is.mean
    );
    println!("report -> {}", path.display());
}
