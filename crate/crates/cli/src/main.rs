use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use xlbeam_core::codebook::{write_codebook, Codebook, StoredCodebook};
use xlbeam_core::config::{Config, Preset, SchemeSpec};
use xlbeam_core::dataset::{generate_dataset, load_dataset, save_dataset, write_labels_csv, DatasetSpec};
use xlbeam_core::experiments::{run_experiment, ExperimentOutput, HeadSource};
use xlbeam_core::nn::{load_model, save_model};
use xlbeam_core::training::{evaluate_head, history_csv, train_heads, AccuracyReport, Head};

const DATASET_FILE: &str = "dataset.xlds";
const DIRECTION_MODEL: &str = "direction.xlnn";
const DISTANCE_MODEL: &str = "distance.xlnn";

#[derive(Parser)]
#[command(
    name = "xlbeam",
    version,
    about = "Near-field beam training with learned wide-beam classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// 64 antennas, 5 rings, 4x wide beams, 20k samples.
    #[arg(long, conflicts_with = "paper_scale")]
    desk_scale: bool,
    /// 512 antennas, 5 rings, 4x wide beams, 100k samples.
    #[arg(long)]
    paper_scale: bool,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = Config::load(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        if self.desk_scale {
            cfg.apply_preset(Preset::Desk);
        }
        if self.paper_scale {
            cfg.apply_preset(Preset::Paper);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        fs::write(self.out_dir.join("config.resolved.toml"), cfg.to_toml_string())?;
        Ok(cfg)
    }

    fn path(&self, given: &Option<PathBuf>, default: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out_dir.join(default))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Heads {
    /// Models written by `train`.
    Trained,
    /// One-hot at the sweep winner.
    Oracle,
    Uniform,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset and its label CSV.
    GenDataset {
        #[command(flatten)]
        common: Common,
    },
    /// Train the direction and distance heads.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset file (default: <out-dir>/dataset.xlds, generated if missing).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Accuracy of trained heads on one dataset split.
    EvalHeads {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory holding the two model files (default: <out-dir>).
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        top_k: Vec<usize>,
    },
    /// Monte-Carlo evaluation of every configured scheme over the SNR grid.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "trained")]
        heads: Heads,
    },
    /// Exhaustive sweep, far-field sweep and random baselines only.
    SweepBaseline {
        #[command(flatten)]
        common: Common,
    },
    /// Write the polar, wide and narrow codebooks as binary files.
    ExportCodebook {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenDataset { common } => gen_dataset(&common),
        Command::Train { common, dataset } => train(&common, &dataset),
        Command::EvalHeads {
            common,
            dataset,
            models,
            split,
            top_k,
        } => eval_heads(&common, &dataset, &models, split, &top_k),
        Command::RunExperiment { common, models, heads } => experiment(&common, &models, heads),
        Command::SweepBaseline { common } => sweep_baseline(&common),
        Command::ExportCodebook { common } => export_codebook(&common),
    }
}

fn gen_dataset(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let path = common.out_dir.join(DATASET_FILE);
    write_dataset_files(&cfg, &path)
}

fn write_dataset_files(cfg: &Config, path: &Path) -> Result<()> {
    let ds = generate_dataset(&DatasetSpec::from_config(cfg)?)?;
    save_dataset(path, &ds)?;
    let labels = path.with_file_name("labels.csv");
    write_labels_csv(std::io::BufWriter::new(fs::File::create(&labels)?), &ds)?;
    println!(
        "wrote {} samples ({} train / {} val / {} test) to {}",
        ds.samples.len(),
        ds.split.train,
        ds.split.val,
        ds.split.test,
        path.display()
    );
    Ok(())
}

fn train(common: &Common, dataset: &Option<PathBuf>) -> Result<()> {
    let cfg = common.load()?;
    let path = common.path(dataset, DATASET_FILE);
    if dataset.is_none() && !path.exists() {
        write_dataset_files(&cfg, &path)?;
    }
    let ds = load_dataset(&path).with_context(|| format!("loading {}", path.display()))?;
    let heads = train_heads(&ds, &cfg.net, &cfg.train, cfg.seed, &mut |r| {
        println!(
            "{:<9} epoch {:>3}  lr {:.5}  train loss {:.4} acc {:.3}  val loss {:.4} acc {:.3}",
            r.head.name(),
            r.epoch,
            r.learning_rate,
            r.train_loss,
            r.train_accuracy,
            r.val_loss,
            r.val_accuracy
        );
    })?;
    save_model(common.out_dir.join(DIRECTION_MODEL), &heads.direction)?;
    save_model(common.out_dir.join(DISTANCE_MODEL), &heads.distance)?;
    fs::write(common.out_dir.join("history.csv"), history_csv(&heads.history))?;
    println!("models written to {}", common.out_dir.display());
    Ok(())
}

fn print_report(head: Head, r: &AccuracyReport) {
    println!(
        "{} head: {} samples, {} classes, top-1 {:.4}",
        head.name(),
        r.count,
        r.classes,
        r.top1
    );
    for (k, acc) in &r.top_k {
        println!("  top-{k}: {acc:.4}");
    }
    for b in &r.by_snr {
        println!(
            "  SNR [{:>5.1}, {:>5.1}) dB: {:>6} samples, top-1 {:.4}",
            b.snr_db_lo, b.snr_db_hi, b.count, b.top1
        );
    }
    for (truth, pred, count) in r.top_confusions(5) {
        println!("  confused {truth} -> {pred}: {count}");
    }
}

fn eval_heads(
    common: &Common,
    dataset: &Option<PathBuf>,
    models: &Option<PathBuf>,
    split: Split,
    ks: &[usize],
) -> Result<()> {
    common.load()?;
    let ds = load_dataset(&common.path(dataset, DATASET_FILE))?;
    let dir = models.clone().unwrap_or_else(|| common.out_dir.clone());
    let samples = match split {
        Split::Train => ds.train(),
        Split::Val => ds.val(),
        Split::Test => ds.test(),
    };
    for (head, file) in [(Head::Direction, DIRECTION_MODEL), (Head::Distance, DISTANCE_MODEL)] {
        let model = load_model(dir.join(file)).with_context(|| format!("loading {}", dir.join(file).display()))?;
        let classes = head.classes(&ds);
        let ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= classes).collect();
        print_report(head, &evaluate_head(&model, samples, head, &ks, 5.0)?);
    }
    Ok(())
}

fn report(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    out.write_to(dir)?;
    for row in &out.summary {
        println!(
            "{:<18} SNR {:>5.1} dB  G_N {:.4} ± {:.4}  rate {:.3}  eff rate {:.3}  beams {}",
            row.scheme, row.snr_db, row.g_n.mean, row.g_n.ci95, row.rate.mean, row.eff_rate.mean, row.mean_beams
        );
    }
    println!("trials.csv and summary.csv written to {}", dir.display());
    Ok(())
}

fn experiment(common: &Common, models: &Option<PathBuf>, heads: Heads) -> Result<()> {
    let cfg = common.load()?;
    let out = match heads {
        Heads::Trained => {
            let dir = models.clone().unwrap_or_else(|| common.out_dir.clone());
            let direction = load_model(dir.join(DIRECTION_MODEL))
                .with_context(|| format!("missing direction model in {} (run `train` first)", dir.display()))?;
            let distance = load_model(dir.join(DISTANCE_MODEL))
                .with_context(|| format!("missing distance model in {} (run `train` first)", dir.display()))?;
            let sys = cfg.system()?;
            if direction.head_size() != sys.polar.num_angles()
                || distance.head_size() != sys.polar.num_rings()
                || direction.input_len() != sys.wide.len()
            {
                bail!(
                    "models in {} do not match the configured array and codebook",
                    dir.display()
                );
            }
            run_experiment(
                &cfg,
                &HeadSource::Models {
                    direction: &direction,
                    distance: &distance,
                },
            )?
        }
        Heads::Oracle => run_experiment(&cfg, &HeadSource::Oracle)?,
        Heads::Uniform => run_experiment(&cfg, &HeadSource::Uniform)?,
    };
    report(&out, &common.out_dir)
}

fn sweep_baseline(common: &Common) -> Result<()> {
    let mut cfg = common.load()?;
    cfg.experiment.schemes = vec![SchemeSpec::Sweep, SchemeSpec::FarField, SchemeSpec::Random];
    let out = run_experiment(&cfg, &HeadSource::Uniform)?;
    report(&out, &common.out_dir.join("baseline"))
}

fn export_codebook(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let sys = cfg.system()?;
    let (polar, wide, narrow) = (sys.polar.len(), sys.wide.len(), sys.narrow.len());
    for (name, book) in [
        ("polar.xlcb", StoredCodebook::Polar(sys.polar)),
        ("wide.xlcb", StoredCodebook::Wide(sys.wide)),
        ("narrow.xlcb", StoredCodebook::Narrow(sys.narrow)),
    ] {
        let path = common.out_dir.join(name);
        write_codebook(std::io::BufWriter::new(fs::File::create(&path)?), &book)?;
    }
    println!(
        "polar {polar} codewords, wide {wide}, narrow {narrow}; written to {}",
        common.out_dir.display()
    );
    Ok(())
}
