//! Command-line front end. Exit codes: 0 ok, 1 config, 2 data, 3 numerical.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochpool::experiment::{
    cmd_combo_matrix, cmd_convert_svhn, cmd_eval, cmd_reduced_set, cmd_sweep_pool_size, cmd_train, cmd_visualize,
    eval_tables, Checkpoint, ExperimentConfig, Table, TrainOptions, VisualizeOptions,
};
use stochpool::pooling::PoolingMode;
use stochpool::{Error, Result};

#[derive(Parser)]
#[command(name = "stochpool", version, about = "Train and inspect CNNs with stochastic pooling")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Checkpoint directory to evaluate, visualize or resume from.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
}

fn parse_mode(s: &str) -> std::result::Result<PoolingMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; resumes when --checkpoint is given.
    Train {
        /// Stop after this many epochs while keeping the configured schedule.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Evaluate a checkpoint on its test split.
    Eval {
        /// Pooling mode at test time (default: the network's test modes).
        #[arg(long, value_parser = parse_mode)]
        mode: Option<PoolingMode>,
    },
    /// Train under each train mode and test under each test mode.
    ComboMatrix {
        #[arg(long, value_parser = parse_mode, value_delimiter = ',', default_value = "avg,max,stochastic")]
        train_modes: Vec<PoolingMode>,
        #[arg(long, value_parser = parse_mode, value_delimiter = ',', default_value = "avg,max,stochastic,probweight")]
        test_modes: Vec<PoolingMode>,
    },
    /// Train with each pooling region size.
    SweepPoolSize {
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        sizes: Vec<usize>,
        /// Pooling stride (default: min(size, 2)).
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_parser = parse_mode, value_delimiter = ',', default_value = "avg,max,stochastic")]
        methods: Vec<PoolingMode>,
    },
    /// Train on random subsets of the training split.
    ReducedSet {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_parser = parse_mode, value_delimiter = ',', default_value = "avg,max,stochastic")]
        methods: Vec<PoolingMode>,
    },
    /// Reconstruct a test image from a layer's activations.
    Visualize {
        /// Index into the test split.
        #[arg(long, default_value_t = 0)]
        image: usize,
        /// Layer to project from (default: the top feature layer).
        #[arg(long)]
        layer: Option<usize>,
        /// Switch sources, one per pooling layer or one for all: rec, ff, un.
        #[arg(long, default_value = "ff")]
        sources: String,
        /// Reconstructions per side of the output grid.
        #[arg(long, default_value_t = 4)]
        grid: usize,
        /// Reconstructions per group for the similarity statistic.
        #[arg(long, default_value_t = 16)]
        stat_samples: usize,
        /// Keep negative values between layers.
        #[arg(long)]
        no_rectify: bool,
    },
    /// Convert SVHN raw dumps to the CIFAR-10 binary layout.
    ConvertSvhn {
        /// n x 32 x 32 x 3 interleaved pixel bytes.
        #[arg(long)]
        images: PathBuf,
        /// One byte per image, digits 1..=10 with 10 meaning zero.
        #[arg(long)]
        labels: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(out) = &g.out {
        config.out_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn checkpoint(g: &Global) -> Result<Checkpoint> {
    let dir = g
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("--checkpoint is required for this command".into()))?;
    Checkpoint::load(dir)
}

fn save(dir: Option<&Path>, name: &str, table: &Table) -> Result<()> {
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
        let path = dir.join(name);
        fs::write(&path, table.to_csv()).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Train { stop_after } => {
            let config = load_config(g)?;
            let resume = g.checkpoint.as_ref().map(Checkpoint::load).transpose()?;
            let options = TrainOptions {
                out_dir: config.out_dir.clone(),
                resume,
                stop_after,
            };
            let run = cmd_train(&config, options)?;
            let last = run.last();
            println!(
                "epoch {} train error {:.4}% test error {:.4}%",
                last.epoch, last.train_error, last.test_error
            );
        }
        Command::Eval { mode } => {
            let ck = checkpoint(g)?;
            let eval = cmd_eval(&ck, mode, g.seed)?;
            let label = mode.map_or_else(|| "network".to_string(), |m| m.to_string());
            let (summary, confusion) = eval_tables(&label, &eval);
            print!("{}", summary.to_csv());
            save(g.out.as_deref(), "eval.csv", &summary)?;
            save(g.out.as_deref(), "confusion.csv", &confusion)?;
        }
        Command::ComboMatrix { train_modes, test_modes } => {
            let config = load_config(g)?;
            let table = cmd_combo_matrix(&config, &train_modes, &test_modes, config.out_dir.as_deref())?;
            print!("{}", table.to_csv());
        }
        Command::SweepPoolSize { sizes, stride, methods } => {
            let config = load_config(g)?;
            let table = cmd_sweep_pool_size(&config, &sizes, stride, &methods, config.out_dir.as_deref())?;
            print!("{}", table.to_csv());
        }
        Command::ReducedSet { sizes, methods } => {
            let config = load_config(g)?;
            let table = cmd_reduced_set(&config, &sizes, &methods, config.out_dir.as_deref())?;
            print!("{}", table.to_csv());
        }
        Command::Visualize {
            image,
            layer,
            sources,
            grid,
            stat_samples,
            no_rectify,
        } => {
            let ck = checkpoint(g)?;
            let options = VisualizeOptions {
                image_index: image,
                from_layer: layer,
                sources,
                grid,
                stat_samples,
                seed: g.seed.unwrap_or(ck.seed),
                rectify: !no_rectify,
                out_dir: g.out.clone().unwrap_or_else(|| PathBuf::from("visualize")),
            };
            let report = cmd_visualize(&ck, &options)?;
            println!("ff-ff similarity {:.6}, ff-uniform similarity {:.6}", report.ff_self, report.ff_uniform);
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::ConvertSvhn { images, labels } => {
            let out = g
                .out
                .clone()
                .ok_or_else(|| Error::Config("--out names the output file for convert-svhn".into()))?;
            let n = cmd_convert_svhn(&images, &labels, &out)?;
            println!("wrote {n} records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
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
