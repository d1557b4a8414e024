use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mmml::harness::dataset::{
    ingest_manifest, write_dataset, DatasetManifest, IngestOptions, PixelScale,
};
use mmml::harness::protocol::parse_gallery_count;
use mmml::harness::{
    load_model, run_experiment, save_model, sweep, synth_generate, ProbeCount, SplitConfig,
    SweepAxis, SynthConfig, SynthPreset,
};
use mmml::{EmbeddingModel, Hyperparams, ModelSelection};

#[derive(Parser)]
#[command(
    name = "mmml",
    version,
    about = "Image-set classification with a metric learned over SPD and Grassmann set models"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (set files plus manifest.txt).
    Synth(SynthArgs),
    /// Validate a manifest and the set files it references.
    IngestCheck(IngestArgs),
    /// Fit a model on every set of a manifest and save it.
    Train(TrainArgs),
    /// Classify the sets of a manifest against a saved model.
    Predict(PredictArgs),
    /// Run the random gallery/probe protocol and print a report.
    Eval(EvalArgs),
    /// Evaluate a grid of values along one hyperparameter.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    sets_per_class: usize,
    #[arg(long, default_value_t = 30)]
    images_per_set: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// separated | mixed
    #[arg(long, default_value = "separated")]
    preset: String,
    #[arg(long, default_value_t = 3)]
    signal_dim: usize,
}

#[derive(Args, Clone)]
struct IngestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Divide pixel values by 255.
    #[arg(long)]
    unit_scale: bool,
    /// Resize side for sets stored as image directories.
    #[arg(long, default_value_t = 20)]
    image_side: u32,
}

impl IngestArgs {
    fn options(&self) -> IngestOptions {
        IngestOptions {
            pixel_scale: if self.unit_scale {
                PixelScale::Unit
            } else {
                PixelScale::Raw
            },
            image_side: self.image_side,
        }
    }
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long, default_value_t = 10)]
    q: usize,
    #[arg(long, default_value_t = 1000.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    u1: f64,
    #[arg(long, default_value_t = 0.2)]
    u2: f64,
    #[arg(long, default_value_t = 10)]
    dz: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// both | spd | grassmann
    #[arg(long, default_value = "both")]
    models: String,
    /// Divide each Gram matrix by its mean diagonal.
    #[arg(long)]
    normalize_kernels: bool,
}

impl HyperArgs {
    fn hyper(&self) -> Result<Hyperparams> {
        Ok(Hyperparams {
            q: self.q,
            alpha: self.alpha,
            u1: self.u1,
            u2: self.u2,
            d_z: self.dz,
            eps: self.eps,
            models: self.models.parse::<ModelSelection>()?,
            normalize_kernels: self.normalize_kernels,
        })
    }
}

#[derive(Args, Clone)]
struct SplitArgs {
    /// Gallery sets per class (a number or "one").
    #[arg(long, default_value = "5")]
    gallery: String,
    /// Probe sets per class (a number or "rest").
    #[arg(long, default_value = "rest")]
    probe: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitArgs {
    fn split(&self) -> Result<SplitConfig> {
        Ok(SplitConfig {
            gallery_per_class: parse_gallery_count(&self.gallery)?,
            probe_per_class: self.probe.parse::<ProbeCount>()?,
            folds: self.folds,
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// u2_given_u1 | u1_given_u2 | d_z | q
    #[arg(long)]
    axis: String,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Synth(a) => {
            let config = SynthConfig {
                classes: a.classes,
                sets_per_class: a.sets_per_class,
                images_per_set: a.images_per_set,
                d: a.d,
                separation: a.separation,
                seed: a.seed,
                preset: a.preset.parse::<SynthPreset>()?,
                signal_dim: a.signal_dim,
            };
            let sets = synth_generate(&config)?;
            let note = format!(
                "synthetic preset={} classes={} sets_per_class={} images_per_set={} d={} separation={} seed={}",
                a.preset, a.classes, a.sets_per_class, a.images_per_set, a.d, a.separation, a.seed
            );
            let path = write_dataset(&a.out, &sets, &note)?;
            println!("wrote {} sets; manifest {}", sets.len(), path.display());
        }
        Command::IngestCheck(a) => {
            let manifest = DatasetManifest::load(&a.manifest)?;
            let sets = ingest_manifest(&a.manifest, &a.options())?;
            let d = sets.first().map_or(0, |s| s.dim());
            let min_n = sets.iter().map(|s| s.len()).min().unwrap_or(0);
            let max_n = sets.iter().map(|s| s.len()).max().unwrap_or(0);
            println!("sets={}", sets.len());
            println!("classes={}", manifest.classes().len());
            println!("d={d}");
            println!("images_per_set_min={min_n}");
            println!("images_per_set_max={max_n}");
            println!("status=ok");
        }
        Command::Train(a) => {
            let sets = ingest_manifest(&a.ingest.manifest, &a.ingest.options())?;
            let model = EmbeddingModel::fit_sets(&sets, &a.hyper.hyper()?)?;
            save_model(&model, &a.out)?;
            println!(
                "trained on {} sets (d={}, q={}, d_z={}); saved {}",
                sets.len(),
                model.dim(),
                model.q(),
                model.d_z(),
                a.out.display()
            );
        }
        Command::Predict(a) => {
            let model = load_model(&a.model)?;
            let sets = ingest_manifest(&a.ingest.manifest, &a.ingest.options())?;
            let mut out = String::from("set_id,true_label,predicted,distance,nearest_set\n");
            let mut correct = 0;
            for set in &sets {
                let c = model.classify_set(set)?;
                let nearest = &c.neighbors[0];
                if c.label == set.label() {
                    correct += 1;
                }
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    set.set_id(),
                    set.label(),
                    c.label,
                    nearest.distance,
                    nearest.set_id
                ));
            }
            out.push_str(&format!(
                "accuracy={}\n",
                correct as f64 / sets.len() as f64
            ));
            emit(&out, None)?;
        }
        Command::Eval(a) => {
            let sets = ingest_manifest(&a.ingest.manifest, &a.ingest.options())?;
            let report = run_experiment(&sets, &a.split.split()?, &a.hyper.hyper()?)?;
            if !report.verify() {
                bail!("report summary does not match per-fold accuracies");
            }
            emit(&report.render(), a.out.as_deref())?;
        }
        Command::Sweep(a) => {
            let sets = ingest_manifest(&a.ingest.manifest, &a.ingest.options())?;
            let axis = a.axis.parse::<SweepAxis>()?;
            let table = sweep(&sets, &a.split.split()?, &a.hyper.hyper()?, axis, &a.grid)?;
            emit(&table.render(), a.out.as_deref())?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
