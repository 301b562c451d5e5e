use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavepinn_core::activations::ActivationName;
use wavepinn_core::network::load_checkpoint;
use wavepinn_core::pde::{load_reference_csv, taylor_green, ProblemKind, ProblemSpec};
use wavepinn_harness::run::{evaluate_1d, evaluate_ns};
use wavepinn_harness::{
    aggregate, run_experiment_with, HarnessError, IterationUnit, RunConfig, RunStatus, Scale,
};

#[derive(Parser)]
#[command(
    name = "wavepinn",
    version,
    about = "Train and evaluate PINNs with wavelet-tanh activations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one (problem, activation) pair and write its artifacts.
    Train(Box<TrainArgs>),
    /// Score a saved checkpoint on the test set.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        problem: ProblemKind,
        #[arg(long)]
        convection_beta: Option<f64>,
        /// Reference CSV (Navier–Stokes).
        #[arg(long)]
        reference_data: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        eval_nx: usize,
        #[arg(long, default_value_t = 101)]
        eval_nt: usize,
        /// Also write the pointwise comparison here.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Merge run directories into a CSV table on stdout.
    Aggregate { dirs: Vec<PathBuf> },
    /// Write a Taylor–Green vortex reference field as CSV.
    SynthNs {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 8)]
        ny: usize,
        #[arg(long, default_value_t = 6)]
        nt: usize,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.01)]
        nu: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Size preset applied before the config file and flags.
    #[arg(long)]
    scale: Option<Scale>,
    #[arg(long)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    activation: Option<ActivationName>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Count `--iterations` in accepted steps or objective evaluations.
    #[arg(long)]
    iteration_unit: Option<IterationUnit>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    lambda_b: Option<f64>,
    #[arg(long)]
    lambda_i: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    n_random: Option<usize>,
    #[arg(long)]
    eval_nx: Option<usize>,
    #[arg(long)]
    eval_nt: Option<usize>,
    #[arg(long)]
    gabor_omega_init: Option<f64>,
    #[arg(long)]
    reference_data: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    convection_beta: Option<f64>,
    #[arg(long)]
    ns_continuity: bool,
    #[arg(long)]
    lbfgs_history: Option<usize>,
    /// Print progress every N iterations (0 = quiet).
    #[arg(long, default_value_t = 50)]
    log_every: usize,
}

impl TrainArgs {
    fn resolve(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let (Some(problem), Some(activation)) = (self.problem, self.activation) else {
                    return Err(HarnessError::Config(
                        "need --config or both --problem and --activation".into(),
                    ));
                };
                RunConfig::new(problem, activation)
            }
        };
        if let Some(scale) = self.scale {
            cfg.apply_scale(scale);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            problem,
            activation,
            hidden_layers,
            hidden_width,
            iterations,
            iteration_unit,
            seed
        );
        set!(
            nx,
            nt,
            n_random,
            eval_nx,
            eval_nt,
            gabor_omega_init,
            output_dir,
            lbfgs_history
        );
        if let Some(v) = &self.reference_data {
            cfg.reference_data = Some(v.clone());
        }
        if let Some(v) = self.convection_beta {
            cfg.convection_beta = Some(v);
        }
        if self.ns_continuity {
            cfg.ns_continuity = true;
        }
        if let Some(v) = self.lambda_r {
            cfg.weights.residual = v;
        }
        if let Some(v) = self.lambda_b {
            cfg.weights.boundary = v;
        }
        if let Some(v) = self.lambda_i {
            cfg.weights.initial = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn train(args: TrainArgs) -> Result<ExitCode, HarnessError> {
    let cfg = args.resolve()?;
    let every = args.log_every;
    eprintln!(
        "training {} / {} ({}x{}, {} iterations) -> {}",
        cfg.problem,
        cfg.activation,
        cfg.hidden_layers,
        cfg.hidden_width,
        cfg.iterations,
        cfg.output_dir.display()
    );
    let report = run_experiment_with(&cfg, |r| {
        if every > 0 && r.iter % every == 0 {
            eprintln!(
                "iter {:>5}  loss {:.6e}  |g| {:.3e}  evals {}",
                r.iter, r.loss, r.grad_norm, r.evals
            );
        }
    })?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(if report.status == RunStatus::Diverged {
        eprintln!("training diverged");
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn run(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Train(args) => train(*args),
        Command::Evaluate {
            checkpoint,
            problem,
            convection_beta,
            reference_data,
            eval_nx,
            eval_nt,
            grid_out,
        } => {
            let model = load_checkpoint(&checkpoint)?;
            let evaluation = if problem == ProblemKind::NavierStokes {
                let path = reference_data.ok_or_else(|| {
                    HarnessError::Config("navierstokes needs --reference-data".into())
                })?;
                evaluate_ns(&model, &load_reference_csv(path)?)?
            } else {
                let mut spec = ProblemSpec::default_1d(problem).expect("one-dimensional problem");
                if let (ProblemSpec::Convection { beta }, Some(b)) = (&mut spec, convection_beta) {
                    *beta = b;
                }
                if model.in_dim() != spec.in_dim() || model.out_dim() != spec.out_dim() {
                    return Err(HarnessError::Config(format!(
                        "checkpoint maps {} -> {}, {problem} needs {} -> {}",
                        model.in_dim(),
                        model.out_dim(),
                        spec.in_dim(),
                        spec.out_dim()
                    )));
                }
                evaluate_1d(&model, &spec, eval_nx, eval_nt)?
            };
            if let Some(path) = grid_out {
                evaluation.write_csv(path)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&evaluation.result).expect("serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Aggregate { dirs } => {
            let table = aggregate(&dirs);
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            table
                .write_csv(std::io::stdout().lock())
                .map_err(|e| HarnessError::Csv {
                    path: "<stdout>".into(),
                    source: e,
                })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::SynthNs {
            out,
            nx,
            ny,
            nt,
            t_end,
            nu,
        } => {
            let field = taylor_green(nx, ny, nt, t_end, nu);
            let file = std::fs::File::create(&out).map_err(|e| HarnessError::Io {
                path: out.clone(),
                source: e,
            })?;
            field.write_csv(file)?;
            eprintln!("wrote {} records to {}", field.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
