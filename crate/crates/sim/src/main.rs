use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use noma_csk::demod::{generate_dataset, train, DemodulatorModel};
use noma_csk::metrics::{complexity_estimate, energy_efficiency, spectral_efficiency};
use noma_csk_sim::{output, run_ber_sweep, run_robustness_sweep, run_security_eval, ExperimentConfig};

#[derive(Parser)]
#[command(name = "noma-sim", version, about = "Chaos-shift-keying NOMA link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Model weight file; its hyperparameters live next to it as `.toml`.
    #[arg(long, global = true, default_value = "model.dncw")]
    model: PathBuf,

    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training set and write it as CSV.
    DatasetGen,
    /// Generate a training set, train a demodulator and save it.
    Train,
    /// BER sweep over the SNR grid.
    Ber,
    /// Legitimate vs. eavesdropper BER, leakage and secrecy capacity.
    Security,
    /// BER sweep repeated over the CSI correlation grid.
    Robustness,
    /// Parameter counts, complexity and efficiency figures for the config.
    Info,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    eprintln!("writing {}", path.display());
    Ok(BufWriter::new(f))
}

fn load_model(path: &Path) -> Result<DemodulatorModel> {
    DemodulatorModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn info(cfg: &ExperimentConfig) -> Result<()> {
    let model = DemodulatorModel::new(cfg.beta, cfg.model, 0)?;
    let h = cfg.model;
    println!("vehicles {}  beta {}  scenario {:?}", cfg.n_vehicles, cfg.beta, cfg.scenario);
    println!("{:<8} {:>14} {:>12}", "layer", "output", "parameters");
    for ((name, shape), (_, count)) in model.shape_chain().iter().zip(model.layer_parameter_counts()) {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        println!("{:<8} {:>14} {:>12}", name, dims.join("x"), count);
    }
    println!("total parameters {}", model.parameter_count());
    let c = complexity_estimate(cfg.beta as u64, h.filters as u64, h.heads as u64, h.head_dim as u64, h.kernel_size as u64)?;
    println!(
        "operations per symbol: fft {} conv {} projections {} scores {} pooling {} classifier {} (total {}, dominant {})",
        c.fft,
        c.convolution,
        c.projections,
        c.attention_scores,
        c.pooling,
        c.classifier,
        c.total(),
        c.dominant()
    );
    println!("energy efficiency {}", energy_efficiency(0.0, 1.0)?);
    println!("spectral efficiency {}", spectral_efficiency(cfg.n_vehicles, cfg.beta)?);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;

    match cli.command {
        Command::DatasetGen => {
            let data = generate_dataset(&cfg.dataset()?, cfg.master_seed)?;
            output::write_dataset(create(&cli.out, "dataset.csv")?, &data)?;
        }
        Command::Train => {
            let data = generate_dataset(&cfg.dataset()?, cfg.master_seed)?;
            let init = DemodulatorModel::new(cfg.beta, cfg.model, cfg.training.init_seed)?;
            let (model, history) = train(&init, &data, &cfg.train_config())?;
            for e in &history.epochs {
                eprintln!(
                    "epoch {:>3}  train {:.5}  val {:.5}  acc {:.4}  lr {:e}",
                    e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.learning_rate
                );
            }
            if let Some(dir) = cli.model.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            model.save(&cli.model)?;
            eprintln!("saved {}", cli.model.display());
            output::write_history(create(&cli.out, "training.csv")?, &history)?;
        }
        Command::Ber => {
            let model = load_model(&cli.model)?;
            let records = run_ber_sweep(&cfg, &model)?;
            output::write_ber(create(&cli.out, "ber.csv")?, &records)?;
        }
        Command::Security => {
            let model = load_model(&cli.model)?;
            let points = run_security_eval(&cfg, &model, &cfg.eve_config())?;
            output::write_security(create(&cli.out, "security.csv")?, &points)?;
        }
        Command::Robustness => {
            let model = load_model(&cli.model)?;
            let records = run_robustness_sweep(&cfg, &model, &cfg.rho_grid)?;
            output::write_robustness(create(&cli.out, "robustness.csv")?, &records)?;
        }
        Command::Info => info(&cfg)?,
    }
    Ok(())
}
