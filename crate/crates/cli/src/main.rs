mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cylpress::config::KeyValues;

use settings::{Settings, UsageError};

/// Stochastic in-cylinder pressure surrogate: principal components of the
/// pressure deviation with one Gaussian process per component weight.
#[derive(Parser, Debug)]
#[command(name = "cylpress", version)]
struct Cli {
    /// Flat `key = value` settings file; flags override it
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs and default inputs
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true)]
    quiet: bool,
    /// Extra `key=value` settings, same keys as the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// conditions CSV (default: <out-dir>/conditions.csv)
    #[arg(long)]
    conditions: Option<PathBuf>,
    /// pressure CSV (default: <out-dir>/pressure.csv)
    #[arg(long)]
    pressures: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct ModelArg {
    /// model file (default: <out-dir>/model.txt)
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct PipelineArgs {
    #[arg(long)]
    n_pc: Option<usize>,
    /// se | matern32 | matern52 | rq, optionally suffixed `+ard`
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    ard: bool,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    kappa_mot: Option<f64>,
    /// predictive | latent
    #[arg(long)]
    variance_mode: Option<String>,
}

#[derive(Args, Debug, Default)]
struct IccArgs {
    #[arg(long)]
    q_total: Option<f64>,
    #[arg(long)]
    br: Option<f64>,
    #[arg(long)]
    soi_di: Option<f64>,
    #[arg(long)]
    p_im: Option<f64>,
    #[arg(long)]
    t_im: Option<f64>,
    #[arg(long)]
    x_egr: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (conditions.csv, pressure.csv)
    Generate {
        #[arg(long)]
        n_conditions: Option<usize>,
        #[arg(long)]
        n_cyc: Option<usize>,
        /// uniform | lhs
        #[arg(long)]
        sampling: Option<String>,
    },
    /// Fit the surrogate and write the model file and training report
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Mean and standard-deviation error tables on a dataset
    Validate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArg,
        /// Retrain with all 8 kernel variants on the training data and compare
        #[arg(long)]
        all_kernels: bool,
        /// training conditions CSV for --all-kernels
        #[arg(long)]
        train_conditions: Option<PathBuf>,
        /// training pressure CSV for --all-kernels
        #[arg(long)]
        train_pressures: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Monte-Carlo cycles per condition
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Mean and variance trace plus metric statistics at one condition
    Predict {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        icc: IccArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Metric statistics along a sweep of one condition field
    Sweep {
        #[command(flatten)]
        model: ModelArg,
        /// q_total | br | soi_di | p_im | t_im | x_egr
        #[arg(long)]
        variable: Option<String>,
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        icc: IccArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Component shapes, per-cycle weights and weight correlation per condition
    Decompose {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArg,
    },
}

fn put<T: ToString>(kv: &mut KeyValues, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        kv.set(key, v.to_string());
    }
}

impl DataArgs {
    fn apply(&self, kv: &mut KeyValues) {
        put(kv, "conditions", &self.conditions.as_ref().map(|p| p.display()));
        put(kv, "pressures", &self.pressures.as_ref().map(|p| p.display()));
    }
}

impl ModelArg {
    fn apply(&self, kv: &mut KeyValues) {
        put(kv, "model", &self.model.as_ref().map(|p| p.display()));
    }
}

impl PipelineArgs {
    fn apply(&self, kv: &mut KeyValues) {
        put(kv, "n_pc", &self.n_pc);
        put(kv, "kernel", &self.kernel);
        if self.ard {
            kv.set("ard", "true");
        }
        put(kv, "restarts", &self.restarts);
        put(kv, "kappa_mot", &self.kappa_mot);
        put(kv, "variance_mode", &self.variance_mode);
    }
}

impl IccArgs {
    fn apply(&self, kv: &mut KeyValues) {
        put(kv, "q_total", &self.q_total);
        put(kv, "br", &self.br);
        put(kv, "soi_di", &self.soi_di);
        put(kv, "p_im", &self.p_im);
        put(kv, "t_im", &self.t_im);
        put(kv, "x_egr", &self.x_egr);
    }
}

fn overrides(cli: &Cli) -> anyhow::Result<KeyValues> {
    let mut kv = KeyValues::default();
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| settings::usage(format!("--set expects KEY=VALUE, got `{s}`")))?;
        kv.set(k, v.trim());
    }
    put(&mut kv, "seed", &cli.seed);
    match &cli.command {
        Command::Generate {
            n_conditions,
            n_cyc,
            sampling,
        } => {
            put(&mut kv, "n_conditions", n_conditions);
            put(&mut kv, "n_cyc", n_cyc);
            put(&mut kv, "sampling", sampling);
        }
        Command::Train { data, model, pipeline } => {
            data.apply(&mut kv);
            model.apply(&mut kv);
            pipeline.apply(&mut kv);
        }
        Command::Validate {
            data,
            model,
            all_kernels: _,
            train_conditions,
            train_pressures,
            pipeline,
            samples,
        } => {
            data.apply(&mut kv);
            model.apply(&mut kv);
            pipeline.apply(&mut kv);
            put(&mut kv, "train_conditions", &train_conditions.as_ref().map(|p| p.display()));
            put(&mut kv, "train_pressures", &train_pressures.as_ref().map(|p| p.display()));
            put(&mut kv, "samples", samples);
        }
        Command::Predict { model, icc, samples } => {
            model.apply(&mut kv);
            icc.apply(&mut kv);
            put(&mut kv, "samples", samples);
        }
        Command::Sweep {
            model,
            variable,
            from,
            to,
            steps,
            icc,
            samples,
        } => {
            model.apply(&mut kv);
            put(&mut kv, "variable", variable);
            put(&mut kv, "from", from);
            put(&mut kv, "to", to);
            put(&mut kv, "steps", steps);
            icc.apply(&mut kv);
            put(&mut kv, "samples", samples);
        }
        Command::Decompose { data, model } => {
            data.apply(&mut kv);
            model.apply(&mut kv);
        }
    }
    Ok(kv)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let kv = overrides(&cli)?;
    let settings = Settings::new(cli.config.as_deref(), kv, cli.out_dir.clone(), cli.quiet)?;
    match cli.command {
        Command::Generate { .. } => commands::generate(&settings),
        Command::Train { .. } => commands::train(&settings),
        Command::Validate { all_kernels, .. } => commands::validate(&settings, all_kernels),
        Command::Predict { .. } => commands::predict(&settings),
        Command::Sweep { .. } => commands::sweep(&settings),
        Command::Decompose { .. } => commands::decompose(&settings),
    }
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return EXIT_USAGE;
    }
    match err.chain().find_map(|e| e.downcast_ref::<cylpress::Error>()) {
        Some(e) if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
