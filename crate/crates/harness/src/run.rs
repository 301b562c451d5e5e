//! One training run from config to artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use wavepinn_core::activations::{ActivationName, ActivationSpec};
use wavepinn_core::loss::{LossBreakdown, PinnObjective};
use wavepinn_core::metrics::{self, EvalResult};
use wavepinn_core::network::{init_model, predict, save_checkpoint, MlpConfig, MlpModel};
use wavepinn_core::optimizer::{
    minimize_with, IterRecord, LbfgsConfig, OptimError, OptimTrace, Status,
};
use wavepinn_core::pde::{
    analytic, load_reference_csv, sample_random, sample_uniform, uniform_grid, CollocationSet,
    ProblemKind, ProblemSpec, ReferenceField,
};

use crate::config::{IterationUnit, RunConfig};
use crate::HarnessError;

pub const REPORT_FILE: &str = "report.json";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const GRID_FILE: &str = "prediction_grid.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    MaxEvals,
    LineSearchFailed,
    /// The loss became non-finite; no metrics are reported.
    Diverged,
}

impl From<Status> for RunStatus {
    fn from(s: Status) -> Self {
        match s {
            Status::Converged => RunStatus::Converged,
            Status::MaxIters => RunStatus::MaxIters,
            Status::MaxEvals => RunStatus::MaxEvals,
            Status::LineSearchFailed => RunStatus::LineSearchFailed,
        }
    }
}

/// Learned coefficients of one activation slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub slot: usize,
    pub activation: ActivationName,
    /// Effective (post-softplus) values by coefficient name.
    pub effective: BTreeMap<String, f64>,
    pub frozen: Vec<String>,
}

impl CoefficientReport {
    fn from_spec(slot: usize, spec: &ActivationSpec) -> Self {
        let coefs = spec.kind().coefficients();
        CoefficientReport {
            slot,
            activation: spec.name,
            effective: coefs
                .iter()
                .zip(spec.effective_all())
                .map(|(c, v)| (c.name().to_string(), v))
                .collect(),
            frozen: coefs
                .iter()
                .filter(|c| !spec.is_trainable(**c))
                .map(|c| c.name().to_string())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub evaluations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub final_grad_norm: f64,
}

impl From<&OptimTrace> for TraceSummary {
    fn from(t: &OptimTrace) -> Self {
        TraceSummary {
            iterations: t.iterations(),
            evaluations: t.evals,
            initial_loss: t.initial_loss,
            final_loss: t.final_loss(),
            final_grad_norm: t.final_grad_norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: RunConfig,
    pub status: RunStatus,
    pub parameter_count: usize,
    pub breakdown: Option<LossBreakdown>,
    pub eval: Option<EvalResult>,
    pub coefficients: Vec<CoefficientReport>,
    pub trace: Option<TraceSummary>,
    pub wall_s: f64,
}

impl TrainReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }
}

/// Pointwise comparison on the test set.
pub struct Evaluation {
    pub result: EvalResult,
    header: [&'static str; 5],
    rows: Vec<[f64; 5]>,
}

impl Evaluation {
    pub fn rows(&self) -> &[[f64; 5]] {
        &self.rows
    }

    pub fn header(&self) -> [&'static str; 5] {
        self.header
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        w.write_record(self.header)
            .map_err(|e| HarnessError::csv(path, e))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| HarnessError::csv(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }
}

/// Compares `model` with the exact solution on an `nx × nt` grid.
pub fn evaluate_1d(
    model: &MlpModel,
    problem: &ProblemSpec,
    nx: usize,
    nt: usize,
) -> Result<Evaluation, HarnessError> {
    let grid = uniform_grid(problem, nx, nt);
    let coords: Vec<f64> = grid.iter().flat_map(|p| [p.x, p.t]).collect();
    let pred = predict(model, &coords)?;
    let exact = grid
        .iter()
        .map(|p| analytic(problem, p))
        .collect::<Result<Vec<_>, _>>()?;
    let result = metrics::evaluate(&pred, &exact)?;
    let rows = grid
        .iter()
        .zip(pred.iter().zip(&exact))
        .map(|(p, (u, e))| [p.x, p.t, *u, *e, (u - e).abs()])
        .collect();
    Ok(Evaluation {
        result,
        header: ["x", "t", "u_pred", "u_exact", "abs_err"],
        rows,
    })
}

/// Compares predicted pressure with the final-time reference snapshot.
pub fn evaluate_ns(
    model: &MlpModel,
    reference: &ReferenceField,
) -> Result<Evaluation, HarnessError> {
    let (_, test) = reference.split_final_time();
    let coords: Vec<f64> = test.iter().flat_map(|r| [r.x, r.y, r.t]).collect();
    let out = predict(model, &coords)?;
    let m = model.out_dim();
    let p_pred: Vec<f64> = (0..test.len()).map(|i| out[i * m + 2]).collect();
    let p_ref: Vec<f64> = test.iter().map(|r| r.p).collect();
    let result = metrics::evaluate(&p_pred, &p_ref)?;
    let rows = test
        .iter()
        .zip(p_pred.iter().zip(&p_ref))
        .map(|(r, (a, b))| [r.x, r.y, *a, *b, (a - b).abs()])
        .collect();
    Ok(Evaluation {
        result,
        header: ["x", "y", "p_pred", "p_ref", "abs_err"],
        rows,
    })
}

struct Setup {
    problem: ProblemSpec,
    colloc: CollocationSet,
    reference: Option<ReferenceField>,
}

fn setup(config: &RunConfig) -> Result<Setup, HarnessError> {
    if config.problem == ProblemKind::NavierStokes {
        let path = config
            .reference_data
            .as_ref()
            .ok_or_else(|| HarnessError::Config("navierstokes needs reference_data".into()))?;
        let reference = load_reference_csv(path)?;
        let mut problem = ProblemSpec::navier_stokes(reference.bounds());
        if let ProblemSpec::NavierStokes { continuity, .. } = &mut problem {
            *continuity = config.ns_continuity;
        }
        let colloc = sample_random(&problem, config.n_random, config.seed, Some(&reference))?;
        Ok(Setup {
            problem,
            colloc,
            reference: Some(reference),
        })
    } else {
        let problem = config.problem_spec_1d().expect("one-dimensional problem");
        let colloc = sample_uniform(&problem, config.nx, config.nt)?;
        Ok(Setup {
            problem,
            colloc,
            reference: None,
        })
    }
}

pub fn model_config(config: &RunConfig, problem: &ProblemSpec) -> MlpConfig {
    let mut cfg = MlpConfig::new(problem.in_dim(), problem.out_dim(), config.activation)
        .with_shape(config.hidden_layers, config.hidden_width);
    cfg.seed = config.seed;
    cfg.gabor_omega_init = config.gabor_omega_init;
    cfg
}

pub fn run_experiment(config: &RunConfig) -> Result<TrainReport, HarnessError> {
    run_experiment_with(config, |_| {})
}

/// Trains, evaluates and writes all artifacts to `config.output_dir`.
///
/// A run whose loss is non-finite at the start or at the end still writes
/// `report.json`, with status `diverged`.
pub fn run_experiment_with<C: FnMut(&IterRecord)>(
    config: &RunConfig,
    on_step: C,
) -> Result<TrainReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let Setup {
        problem,
        colloc,
        reference,
    } = setup(config)?;
    let model = init_model(&model_config(config, &problem))?;
    let theta0 = model.parameters();
    let parameter_count = theta0.len();
    let mut objective = PinnObjective::new(model, problem, &colloc, config.weights)?;
    let lbfgs = LbfgsConfig {
        max_iters: config.iterations,
        history: config.lbfgs_history,
        max_evals: match config.iteration_unit {
            IterationUnit::Steps => None,
            IterationUnit::Evaluations => Some(config.iterations),
        },
        ..Default::default()
    };
    let out_dir = &config.output_dir;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let outcome = minimize_with(&mut objective, &theta0, &lbfgs, on_step);
    let (theta, trace) = match outcome {
        Ok(r) => (r.theta, Some(r.trace)),
        Err(OptimError::NonFiniteStart) => (theta0, None),
        Err(e) => return Err(e.into()),
    };
    let breakdown = objective.evaluate(&theta)?.breakdown;
    let model = objective.into_model();
    let coefficients = model
        .activations()
        .iter()
        .enumerate()
        .map(|(i, s)| CoefficientReport::from_spec(i, s))
        .collect();

    let diverged = trace.is_none() || !breakdown.is_finite();
    let mut report = TrainReport {
        config: config.clone(),
        status: RunStatus::Diverged,
        parameter_count,
        breakdown: None,
        eval: None,
        coefficients,
        trace: trace.as_ref().map(TraceSummary::from),
        wall_s: 0.0,
    };
    if let Some(trace) = &trace {
        trace
            .save_csv(out_dir.join(HISTORY_FILE))
            .map_err(|e| HarnessError::csv(&out_dir.join(HISTORY_FILE), e))?;
    }
    if !diverged {
        let evaluation = match &reference {
            Some(r) => evaluate_ns(&model, r)?,
            None => evaluate_1d(&model, &problem, config.eval_nx, config.eval_nt)?,
        };
        evaluation.write_csv(out_dir.join(GRID_FILE))?;
        save_checkpoint(&model, out_dir.join(CHECKPOINT_FILE))?;
        report.status = trace
            .as_ref()
            .map(|t| t.status.into())
            .unwrap_or(RunStatus::Diverged);
        report.breakdown = Some(breakdown);
        report.eval = Some(evaluation.result);
    }
    report.wall_s = started.elapsed().as_secs_f64();
    report.save(out_dir.join(REPORT_FILE))?;
    Ok(report)
}
