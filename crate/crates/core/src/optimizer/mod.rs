//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! One iteration is one accepted step; the trace records each of them, so
//! its length never exceeds `max_iters`.

mod line_search;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::PinnObjective;
use line_search::{strong_wolfe, WolfeParams};

pub type ObjectiveError = Box<dyn std::error::Error + Send + Sync>;

/// Something that returns `f(θ)` and writes `∇f(θ)` into `grad`.
pub trait Objective {
    fn evaluate(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ObjectiveError>;
}

impl<F> Objective for F
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn evaluate(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ObjectiveError> {
        Ok(self(theta, grad))
    }
}

impl Objective for PinnObjective {
    fn evaluate(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ObjectiveError> {
        Ok(self.evaluate_into(theta, grad)?.total)
    }
}

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
    #[error("parameter vector has length {got}, gradient has length {expected}")]
    Length { expected: usize, got: usize },
    #[error("objective failed: {0}")]
    Objective(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    pub grad_tol: f64,
    pub max_linesearch_evals: usize,
    pub initial_step: f64,
    /// Optional cap on total objective evaluations.
    pub max_evals: Option<usize>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iters: 1000,
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-9,
            max_linesearch_evals: 25,
            initial_step: 1.0,
            max_evals: None,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: &str| Err(OptimError::Config(m.to_string()));
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return bad("need 0 < c1 < c2 < 1");
        }
        if self.history == 0 {
            return bad("history must be at least 1");
        }
        if self.max_linesearch_evals == 0 {
            return bad("max_linesearch_evals must be at least 1");
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return bad("grad_tol must be non-negative");
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return bad("initial_step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Gradient norm fell below `grad_tol`.
    Converged,
    MaxIters,
    MaxEvals,
    /// No step satisfying strong Wolfe was found within the budget.
    LineSearchFailed,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::MaxEvals => "max_evals",
            Status::LineSearchFailed => "line_search_failed",
        })
    }
}

/// One accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
    /// Cumulative objective evaluations, the initial one included.
    pub evals: usize,
    pub loss_prev: f64,
    /// `∇f(θ_k)·d` at the start of the line search.
    pub dir_deriv0: f64,
    /// `∇f(θ_k + t·d)·d` at the accepted step.
    pub dir_deriv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    pub initial_loss: f64,
    pub initial_grad_norm: f64,
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub evals: usize,
}

impl OptimTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map_or(self.initial_loss, |r| r.loss)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_grad_norm, |r| r.grad_norm)
    }

    /// CSV with header `iter,loss,grad_norm,step,evals`; row 0 is the
    /// starting point.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "loss", "grad_norm", "step", "evals"])?;
        w.write_record([
            "0".to_string(),
            self.initial_loss.to_string(),
            self.initial_grad_norm.to_string(),
            "0".to_string(),
            "1".to_string(),
        ])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.loss.to_string(),
                r.grad_norm.to_string(),
                r.step.to_string(),
                r.evals.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> csv::Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub theta: Vec<f64>,
    pub trace: OptimTrace,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `-H·g` by the two-loop recursion, with `H₀ = γI`, `γ = sᵀy / yᵀy`.
fn two_loop(history: &[Pair], g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; history.len()];
    for (i, p) in history.iter().enumerate().rev() {
        alpha[i] = p.rho * dot(&p.s, &q);
        q.iter_mut().zip(&p.y).for_each(|(q, y)| *q -= alpha[i] * y);
    }
    if let Some(p) = history.last() {
        let gamma = 1.0 / (p.rho * dot(&p.y, &p.y));
        q.iter_mut().for_each(|q| *q *= gamma);
    }
    for (i, p) in history.iter().enumerate() {
        let beta = p.rho * dot(&p.y, &q);
        q.iter_mut()
            .zip(&p.s)
            .for_each(|(q, s)| *q += (alpha[i] - beta) * s);
    }
    q.iter_mut().for_each(|q| *q = -*q);
    q
}

pub fn minimize<O: Objective + ?Sized>(
    objective: &mut O,
    theta0: &[f64],
    config: &LbfgsConfig,
) -> Result<OptimResult, OptimError> {
    minimize_with(objective, theta0, config, |_| {})
}

/// [`minimize`] with a callback invoked after every accepted step.
pub fn minimize_with<O, C>(
    objective: &mut O,
    theta0: &[f64],
    config: &LbfgsConfig,
    mut on_step: C,
) -> Result<OptimResult, OptimError>
where
    O: Objective + ?Sized,
    C: FnMut(&IterRecord),
{
    config.validate()?;
    let mut theta = theta0.to_vec();
    let mut grad = vec![0.0; theta.len()];
    let mut loss = objective
        .evaluate(&theta, &mut grad)
        .map_err(|e| OptimError::Objective(e.to_string()))?;
    if grad.len() != theta.len() {
        return Err(OptimError::Length {
            expected: grad.len(),
            got: theta.len(),
        });
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }
    let mut evals = 1;
    let mut trace = OptimTrace {
        initial_loss: loss,
        initial_grad_norm: norm(&grad),
        records: Vec::new(),
        status: Status::MaxIters,
        evals,
    };
    if trace.initial_grad_norm <= config.grad_tol {
        trace.status = Status::Converged;
        return Ok(OptimResult { theta, trace });
    }

    let params = WolfeParams {
        c1: config.c1,
        c2: config.c2,
        max_evals: config.max_linesearch_evals,
    };
    let mut history: Vec<Pair> = Vec::with_capacity(config.history);
    for iter in 1..=config.max_iters {
        let mut dir = two_loop(&history, &grad);
        let mut dir_deriv0 = dot(&grad, &dir);
        if dir_deriv0.is_nan() || dir_deriv0 >= 0.0 || dir.iter().any(|d| !d.is_finite()) {
            dir = grad.iter().map(|g| -g).collect();
            dir_deriv0 = -dot(&grad, &grad);
            history.clear();
        }
        // without curvature pairs, scale the first trial step by the gradient
        let step0 = if history.is_empty() {
            let l1: f64 = grad.iter().map(|g| g.abs()).sum();
            config.initial_step * (1.0 / l1).min(1.0)
        } else {
            config.initial_step
        };
        let mut params = params;
        if let Some(cap) = config.max_evals {
            params.max_evals = params.max_evals.min(cap.saturating_sub(evals));
            if params.max_evals == 0 {
                trace.status = Status::MaxEvals;
                break;
            }
        }
        let outcome = strong_wolfe(objective, &theta, loss, &dir, dir_deriv0, step0, params)?;
        evals += outcome.evals;
        trace.evals = evals;
        let Some(acc) = outcome.accepted else {
            trace.status = Status::LineSearchFailed;
            break;
        };

        let s: Vec<f64> = acc.theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = acc.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == config.history {
                history.remove(0);
            }
            history.push(Pair {
                s,
                y,
                rho: 1.0 / sy,
            });
        }
        let record = IterRecord {
            iter,
            loss: acc.loss,
            grad_norm: norm(&acc.grad),
            step: acc.step,
            evals,
            loss_prev: loss,
            dir_deriv0,
            dir_deriv: acc.dir_deriv,
        };
        theta = acc.theta;
        grad = acc.grad;
        loss = acc.loss;
        on_step(&record);
        trace.records.push(record);
        if record.grad_norm <= config.grad_tol {
            trace.status = Status::Converged;
            break;
        }
        if config.max_evals.is_some_and(|cap| evals >= cap) {
            trace.status = Status::MaxEvals;
            break;
        }
    }
    Ok(OptimResult { theta, trace })
}
