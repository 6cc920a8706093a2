use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gpbandit::concentration::{coverage_theorem1, CoverageConfig, PointRule};
use gpbandit::environments::{Environment, NoiseKind, NoiseModel};
use gpbandit::harness::config::split_pair;
use gpbandit::harness::{build_environment, emit_plot_data, run_experiment, ExperimentConfig};
use gpbandit::{Error, KernelSpec, Result};

#[derive(Parser)]
#[command(name = "gpbandit", version, about = "Gaussian-process bandit experiments")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a regret experiment.
    Run(RunArgs),
    /// Monte-Carlo coverage of the self-normalized bound.
    Conc(ConcArgs),
    /// Merge summary CSVs into plot data and a gnuplot script.
    Plotdata(PlotArgs),
    /// Generate or inspect environments.
    #[command(subcommand)]
    Env(EnvCommand),
}

#[derive(Args)]
struct ExperimentArgs {
    /// key=value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Named preset (desk or paper), applied before everything else.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// noise, horizon or a positive number.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    /// Any other config key, as key=value.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ExperimentArgs {
    fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(p) = &self.preset {
            out.push(("preset".to_string(), p.clone()));
        }
        for s in &self.overrides {
            out.push(split_pair(s)?);
        }
        let flags = [
            ("policy", self.policy.clone()),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("lambda", self.lambda.clone()),
            ("workers", self.workers.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        }
        Ok(out)
    }

    fn load(&self, extra: &[(String, String)]) -> Result<ExperimentConfig> {
        let mut pairs = self.pairs()?;
        pairs.extend(extra.iter().cloned());
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &pairs),
            None => ExperimentConfig::from_pairs(pairs),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Directory for trace and summary CSVs.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ConcArgs {
    /// se or matern.
    #[arg(long, default_value = "se")]
    kernel: String,
    #[arg(long, default_value_t = 0.2)]
    lengthscale: f64,
    #[arg(long, default_value_t = 2.5)]
    nu: f64,
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Sub-Gaussian scale of the Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    noise_r: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Defaults to 2/T.
    #[arg(long)]
    eta: Option<f64>,
    /// iid or chase.
    #[arg(long, default_value = "iid")]
    rule: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial CSV (trial, first_violation_t).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Summary CSVs, optionally as LABEL=PATH.
    #[arg(required = true)]
    inputs: Vec<String>,
    /// Long-format CSV; the gnuplot script is written next to it.
    #[arg(short, long, default_value = "plot.csv")]
    output: PathBuf,
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Build the environment a trial would use and save it as JSON.
    Generate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a summary of a saved environment.
    Inspect { path: PathBuf },
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => {
            let extra: Vec<(String, String)> = args
                .output
                .iter()
                .map(|o| ("output".to_string(), o.display().to_string()))
                .collect();
            let cfg = args.exp.load(&extra)?;
            let res = run_experiment(&cfg)?;
            println!(
                "policy={} trials={} completed={} mean_final_regret={}",
                cfg.policy,
                cfg.trials,
                res.traces.len(),
                res.mean_final_regret()
            );
            if let Some(dir) = &cfg.output {
                println!("wrote {}", dir.display());
            }
            Ok(())
        }
        Command::Conc(a) => {
            let kernel = match a.kernel.as_str() {
                "se" => KernelSpec::squared_exponential(a.lengthscale)?,
                "matern" => KernelSpec::matern(a.nu, a.lengthscale)?,
                "linear" => KernelSpec::Linear,
                other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
            };
            if a.horizon == 0 {
                return Err(Error::Config("horizon must be at least 1".into()));
            }
            let cfg = CoverageConfig {
                kernel,
                horizon: a.horizon,
                trials: a.trials,
                d: a.dim,
                noise: NoiseModel::new(NoiseKind::Gaussian, a.noise_r)?,
                delta: a.delta,
                eta: a.eta.unwrap_or(2.0 / a.horizon as f64),
                rule: PointRule::parse(&a.rule)?,
            };
            let res = coverage_theorem1(&cfg, a.seed)?;
            if let Some(path) = &a.output {
                res.write_csv(BufWriter::new(File::create(path)?))?;
            }
            println!("{}", res.summary_line());
            Ok(())
        }
        Command::Plotdata(a) => {
            let inputs: Vec<(PathBuf, Option<String>)> = a
                .inputs
                .iter()
                .map(|s| match s.split_once('=') {
                    Some((label, path)) => (PathBuf::from(path), Some(label.to_string())),
                    None => (PathBuf::from(s), None),
                })
                .collect();
            let pd = emit_plot_data(&inputs, &a.output)?;
            if let Some(t) = pd.truncated_to {
                eprintln!("warning: horizons differ; truncated to t <= {t}");
            }
            println!(
                "wrote {} ({} rows, policies: {}) and {}",
                a.output.display(),
                pd.rows.len(),
                pd.policies.join(","),
                a.output.with_extension("gp").display()
            );
            Ok(())
        }
        Command::Env(EnvCommand::Generate {
            exp,
            trial,
            output,
        }) => {
            let mut cfg = exp.load(&[])?;
            if cfg.lambda.is_none() {
                // the regularizer plays no role in generating an environment
                cfg.set("lambda", "noise")?;
            }
            cfg.validate()?;
            let env = build_environment(&cfg, trial)?;
            env.dump(BufWriter::new(File::create(&output)?))?;
            print_env(&env);
            Ok(())
        }
        Command::Env(EnvCommand::Inspect { path }) => {
            let file = File::open(&path)?;
            let env = Environment::restore(file).map_err(|e| Error::Parse {
                path: Some(path.clone()),
                msg: e.to_string(),
            })?;
            print_env(&env);
            Ok(())
        }
    }
}

fn print_env(env: &Environment) {
    println!("candidates={} dim={}", env.len(), env.dim());
    println!("f_star={} argmax={} range={} mean={}", env.f_star(), env.argmax_index(), env.range(), env.mean_reward());
    println!("noise={:?} R={}", env.noise().kind, env.noise().r);
    if let Some(k) = env.kernel() {
        println!("kernel={k}");
    }
    match (env.rkhs_norm_sq(), env.surrogate_norm_sq()) {
        (Some(n), _) => println!("rkhs_norm={}", n.sqrt()),
        (None, Some(n)) => println!("interpolant_norm={}", n.sqrt()),
        _ => println!("norm=unknown"),
    }
    println!("provenance={:?}", env.provenance());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_degenerate() {
                ExitCode::from(3)
            } else if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
