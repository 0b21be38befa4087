use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mia3dcnn::augment::{plan, AugmentConfig, Op};
use mia3dcnn::model::{Checkpoint, Model};
use mia3dcnn::trainer::{self, parse_dims, Dataset, TrainConfig};
use mia3dcnn::volio::{self, DatasetIndex, Split};
use mia3dcnn::{Error, Result, Rng};

#[derive(Parser)]
#[command(name = "mia3dcnn", version, about = "3D CNN training and inference for CT volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; `--data` holds train.tsv and validation.tsv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on one split of a dataset directory.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long, default_value_t = 5)]
        batch_size: usize,
    },
    /// Classify one volume (MIAV file or slice directory).
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Resample a `<split>/<class>/<scan>/` slice tree to MIAV files plus index files.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "64x224x224")]
        dims: String,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Write slices before and after one seeded augmentation pass as PGM.
    AugmentPreview {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated depth indices; defaults to first, middle and last.
        #[arg(long)]
        slices: Option<String>,
    },
    /// Generate a synthetic dataset directory.
    Synth {
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value = "16x32x32")]
        dims: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "detection")]
        task: String,
        /// Validation volumes per class; defaults to `--per-class`.
        #[arg(long)]
        val_per_class: Option<usize>,
    },
}

fn load_model(path: &Path) -> Result<Model> {
    Model::from_checkpoint(&Checkpoint::load(path)?)
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, data, out } => {
            let cfg = TrainConfig::load(&config)?;
            let train_idx = DatasetIndex::load_split(&data, cfg.task, Split::Train)?;
            let val_idx = DatasetIndex::load_split(&data, cfg.task, Split::Validation)?;
            mkdir(&out)?;
            let result = trainer::train_with(
                &cfg,
                &Dataset::from_index(&train_idx),
                &Dataset::from_index(&val_idx),
                |r, _| {
                    eprintln!(
                        "epoch {}\ttrain_loss {:.6}\tval_loss {:.6}\tval_macro_f1 {:.4}\tlr {:e}",
                        r.epoch, r.train_loss, r.val_loss, r.val_macro_f1, r.lr
                    )
                },
            )?;
            let mut ckpt = result.model.to_checkpoint();
            ckpt.entries.extend(result.optimizer.state_entries());
            ckpt.save(out.join("model.miac"))?;
            result.log.save(out.join("runlog.tsv"))?;
            write(&out.join("config.txt"), &cfg.to_text())?;
            println!("epochs = {}", result.log.records.len());
            println!("best_epoch = {}", result.log.best_epoch.unwrap_or(0));
            println!("best_val_macro_f1 = {:.4}", result.log.best_metric.unwrap_or(0.0));
            println!("checkpoint = {}", out.join("model.miac").display());
        }
        Command::Evaluate {
            checkpoint,
            data,
            split,
            batch_size,
        } => {
            let model = load_model(&checkpoint)?;
            let split: Split = split.parse()?;
            let idx = DatasetIndex::load_split(&data, model.variant(), split)?;
            let report = trainer::evaluate(&model, &Dataset::from_index(&idx), batch_size)?;
            print!("split = {}\n{}", split.name(), report.to_text());
        }
        Command::Predict { checkpoint, input } => {
            let model = load_model(&checkpoint)?;
            let p = trainer::predict_path(&model, &input)?;
            println!("class = {}", p.class_name);
            for (name, prob) in volio::class_names(model.variant()).iter().zip(&p.probabilities) {
                println!("probability.{name} = {prob:.6}");
            }
        }
        Command::Preprocess { input, out, dims, jobs } => {
            let dims = parse_dims(&dims)?;
            for idx in volio::preprocess_tree(&input, &out, dims, jobs)? {
                println!("{} = {} volumes", idx.split.name(), idx.len());
            }
        }
        Command::AugmentPreview {
            input,
            seed,
            out,
            slices,
        } => {
            let vol = volio::load_volume(&input)?;
            let [d, h, w] = vol.dims();
            let raw = vol.voxels.map(|v| v * (255.0 / vol.scale.max()));
            let mut rng = Rng::new(seed);
            let cfg = AugmentConfig::default();
            let p = plan(&mut rng, &cfg, h, w)?;
            let aug = p.apply(&raw, &mut rng)?;
            let picks: Vec<usize> = match slices {
                Some(s) => s
                    .split(',')
                    .map(|t| {
                        t.trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&z| z < d)
                            .ok_or_else(|| Error::InvalidArgument(format!("slice {t:?} outside 0..{d}")))
                    })
                    .collect::<Result<_>>()?,
                None => {
                    let mut v = vec![0, d / 2, d - 1];
                    v.dedup();
                    v
                }
            };
            mkdir(&out)?;
            for z in picks {
                let plane = |t: &mia3dcnn::Tensor<f32>| t.data()[z * h * w..(z + 1) * h * w].to_vec();
                volio::write_pgm(out.join(format!("before_{z}.pgm")), h, w, &plane(&raw))?;
                volio::write_pgm(out.join(format!("after_{z}.pgm")), h, w, &plane(&aug))?;
            }
            for (i, op) in p.ops.iter().enumerate() {
                let desc = match op {
                    Op::Noise { std } => format!("noise std={std:.3}"),
                    Op::Blur { std } => format!("blur std={std:.3}"),
                    Op::Flip(a) => format!("flip axis={a:?}").to_lowercase(),
                    Op::Gamma { gamma } => format!("gamma value={gamma:.3}"),
                    Op::Rotation { degrees } => format!("rotation degrees={degrees:.3}"),
                    Op::Cutout { rects } => format!("cutout n={}", rects.len()),
                };
                println!("op.{} = {desc}", i + 1);
            }
        }
        Command::Synth {
            per_class,
            dims,
            seed,
            out,
            task,
            val_per_class,
        } => {
            let (train, val) = volio::write_synthetic_dataset(
                &out,
                task.parse()?,
                per_class,
                val_per_class.unwrap_or(per_class),
                parse_dims(&dims)?,
                seed,
            )?;
            println!("train = {} volumes", train.len());
            println!("validation = {} volumes", val.len());
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error\tusage\t{}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error\t{}\t{}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}
