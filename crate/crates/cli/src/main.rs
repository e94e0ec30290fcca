//! `cookcnn` command line: train, evaluate, verify gradients, compute
//! dataset statistics, preview augmentations and plot training curves.

mod config;
mod plot;

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cookcnn::data::{
    augment, compute_stats, load_image, resize_center_crop, scan_dataset, AugConfig, Dataset, Image,
    Split, Stats,
};
use cookcnn::fsutil::write_atomic;
use cookcnn::metrics::evaluate;
use cookcnn::model::{load_checkpoint, preset_by_name};
use cookcnn::rng::{purpose, Rng};
use cookcnn::train::{train, History};
use cookcnn::verify::{run_suite, Check};
use cookcnn::Error;

#[derive(Parser)]
#[command(name = "cookcnn", version, about = "Cooking-state CNN experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a checkpoint on one split and write reports.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "valid")]
        split: Split,
        /// Report directory; defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Normalization statistics overriding those in the checkpoint.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and a whole network (f64).
    Gradcheck {
        #[arg(long, default_value = "proposed-tiny")]
        preset: String,
        /// First seed; `--seeds` consecutive seeds are run.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Corrupts the analytic gradient of one check (testing aid).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Per-channel mean and std of the training split.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "stats.toml")]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        resize: usize,
        #[arg(long, default_value_t = 224)]
        crop: usize,
    },
    /// Write an image and augmented variants of it as PNG.
    Preview {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 256)]
        resize: usize,
        #[arg(long, default_value_t = 224)]
        crop: usize,
    },
    /// Render a history CSV as loss and accuracy curves.
    Plot {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Lib(Error),
    GradCheck(Vec<Check>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::GradCheck(_) => 5,
            Failure::Lib(e) => match e {
                Error::Config(_)
                | Error::Format { .. }
                | Error::UnsupportedVersion { .. }
                | Error::Shape(_)
                | Error::State(_) => 2,
                Error::Data(_) | Error::Manifest(_) | Error::Decode { .. } | Error::Io { .. } => 3,
                Error::Divergence { .. } | Error::Numeric(_) => 4,
            },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn png_bytes(img: &Image) -> Result<Vec<u8>, Error> {
    let mut buf = Cursor::new(Vec::new());
    img.to_rgb8()
        .write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            message: format!("png encoding failed: {e}"),
            offset: None,
        })?;
    Ok(buf.into_inner())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            data,
            epochs,
        } => {
            let mut cfg = config::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(d) = data {
                cfg.data = d;
            }
            if let Some(e) = epochs {
                cfg.max_epochs = e;
            }
            let outcome = train(&cfg)?;
            println!(
                "best validation accuracy {:.4} at epoch {} ({} epochs run{})",
                outcome.best_val_accuracy,
                outcome.best_epoch,
                outcome.history.records.len(),
                if outcome.stopped_early { ", stopped early" } else { "" }
            );
            println!("outputs in {}", cfg.out.display());
        }
        Command::Eval {
            ckpt,
            data,
            split,
            out,
            batch_size,
            stats,
        } => {
            let (graph, meta) = load_checkpoint(&ckpt)?;
            let mut preprocess = meta.preprocess.ok_or_else(|| {
                Error::Config("checkpoint carries no preprocessing settings; pass --stats".into())
            })?;
            if let Some(path) = stats {
                let s = Stats::load(&path)?;
                preprocess.mean = s.mean;
                preprocess.std = s.std;
            }
            let manifest = scan_dataset(&data)?;
            let records = manifest.split(split);
            if records.is_empty() {
                return Err(Error::Data(format!("the {split} split under {} has no images", data.display())).into());
            }
            let dataset = Dataset::new(records, preprocess, None)?;
            let report = evaluate(&graph, &dataset, batch_size.max(1))?;
            let dir = out.unwrap_or_else(|| ckpt.parent().map(Path::to_path_buf).unwrap_or_default());
            let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            write_atomic(&dir.join(format!("eval_{split}.txt")), report.to_text().as_bytes())?;
            write_atomic(&dir.join(format!("eval_{split}.json")), report.to_json().as_bytes())?;
            print!("{}", report.to_text());
            println!("accuracy {:.4}", report.accuracy);
        }
        Command::Gradcheck {
            preset,
            seed,
            seeds,
            inject_fault,
        } => {
            let spec = preset_by_name(&preset)?;
            let fault = match inject_fault.as_deref() {
                None => None,
                Some(name) => Some(Check::from_name(name).ok_or_else(|| {
                    Error::Config(format!("unknown check {name:?} for fault injection"))
                })?),
            };
            let seed_list: Vec<u64> = (seed..seed + seeds.max(1)).collect();
            let report = match run_suite(&spec, &Check::ALL, &seed_list, fault) {
                Err(Error::Numeric(m)) => {
                    eprintln!("error: {m}");
                    return Err(Failure::GradCheck(Vec::new()));
                }
                r => r?,
            };
            print!("{}", report.to_text());
            let failures = report.failures();
            if !failures.is_empty() {
                return Err(Failure::GradCheck(failures));
            }
            println!("all checks within tolerance over {} seeds", seed_list.len());
        }
        Command::Stats {
            data,
            out,
            resize,
            crop,
        } => {
            let manifest = scan_dataset(&data)?;
            print!("{}", manifest.summary());
            let stats = compute_stats(&manifest, Split::Train, resize, crop)?;
            stats.save(&out)?;
            println!("mean {:?}\nstd  {:?}", stats.mean, stats.std);
            if stats.std.iter().any(|&s| s == 0.0) {
                log::warn!("a channel has zero standard deviation; normalization will reject these statistics");
            }
            println!("wrote {}", out.display());
        }
        Command::Preview {
            image,
            seed,
            out,
            count,
            resize,
            crop,
        } => {
            let base = resize_center_crop(&load_image(&image)?, resize, crop)?;
            fs::create_dir_all(&out).map_err(io_err(&out))?;
            write_atomic(&out.join("original.png"), &png_bytes(&base)?)?;
            let cfg = AugConfig::default();
            let root = Rng::new(seed);
            for i in 1..=count {
                let img = augment(&base, &cfg, &root.child(&[purpose::PREVIEW, i as u64]));
                write_atomic(&out.join(format!("augmented_{i:02}.png")), &png_bytes(&img)?)?;
            }
            println!("wrote original and {count} variants to {}", out.display());
        }
        Command::Plot { history, out } => {
            let text = fs::read_to_string(&history).map_err(io_err(&history))?;
            let h = History::from_csv(&text)?;
            if h.records.is_empty() {
                return Err(Error::Data(format!("{} has no rows", history.display())).into());
            }
            write_atomic(&out, plot::render(&h).as_bytes())?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::GradCheck(checks) if !checks.is_empty() => {
                    let names: Vec<&str> = checks.iter().map(|c| c.name()).collect();
                    eprintln!("error: gradient check failed for {}", names.join(", "));
                }
                Failure::GradCheck(_) => eprintln!("error: gradient check failed"),
            }
            ExitCode::from(failure.code())
        }
    }
}
