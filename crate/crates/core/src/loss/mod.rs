//! Composite training objective
//! `L = λ_R·L_R + λ_B·L_B + λ_I·L_I`, each component the mean of its
//! per-point squared terms.
//!
//! [`total_loss`] builds the loss on a tape from any [`Field`];
//! [`PinnObjective`] evaluates the same quantity for an [`MlpModel`]
//! with the batched engine.
//!
//! For Navier–Stokes the velocity data-fit terms occupy the `L_I` slot and
//! `L_B` is zero.
//!
//! [`MlpModel`]: crate::network::MlpModel

mod objective;

pub use objective::{Evaluation, PinnObjective, DEFAULT_CHUNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape};
use crate::network::{Field, NetworkError};
use crate::pde::{ic_bc_terms, residual, CollocationSet, PdeError, ProblemKind, ProblemSpec};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("collocation set has no {0} points")]
    EmptySet(&'static str),
    #[error("loss weights must be finite and non-negative, got {0:?}")]
    InvalidWeights(LossWeights),
    #[error("model maps {got:?} inputs/outputs, problem needs {expected:?}")]
    ModelShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub residual: f64,
    pub boundary: f64,
    pub initial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            residual: 1.0,
            boundary: 1.0,
            initial: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(residual: f64, boundary: f64, initial: f64) -> Self {
        LossWeights {
            residual,
            boundary,
            initial,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let ok = [self.residual, self.boundary, self.initial]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(LossError::InvalidWeights(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub residual_mse: f64,
    pub boundary_mse: f64,
    pub initial_mse: f64,
}

impl LossBreakdown {
    pub fn from_components(
        weights: &LossWeights,
        residual: f64,
        boundary: f64,
        initial: f64,
    ) -> Self {
        LossBreakdown {
            total: weights.residual * residual
                + weights.boundary * boundary
                + weights.initial * initial,
            residual_mse: residual,
            boundary_mse: boundary,
            initial_mse: initial,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.total,
            self.residual_mse,
            self.boundary_mse,
            self.initial_mse,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Per-component point counts `(N_R, N_B, N_I)`, checked non-empty.
pub(crate) fn counts(
    problem: &ProblemSpec,
    colloc: &CollocationSet,
) -> Result<(usize, usize, usize), LossError> {
    if colloc.n_r() == 0 {
        return Err(LossError::EmptySet("interior"));
    }
    if colloc.n_i() == 0 {
        return Err(LossError::EmptySet(
            if problem.kind() == ProblemKind::NavierStokes {
                "observation"
            } else {
                "initial"
            },
        ));
    }
    if colloc.n_b() == 0 && problem.kind() != ProblemKind::NavierStokes {
        return Err(LossError::EmptySet("boundary"));
    }
    Ok((colloc.n_r(), colloc.n_b(), colloc.n_i()))
}

fn mean<'t>(tape: &'t Tape, terms: &[Scalar<'t>]) -> Scalar<'t> {
    let mut it = terms.iter();
    match it.next() {
        None => tape.constant(0.0),
        Some(&first) => it.fold(first, |acc, &t| acc + t) * (1.0 / terms.len() as f64),
    }
}

/// The composite loss as a tape scalar, ready for [`Tape::backward`].
pub fn total_loss<'t, F: Field<'t>>(
    field: &F,
    tape: &'t Tape,
    problem: &ProblemSpec,
    colloc: &CollocationSet,
    weights: &LossWeights,
) -> Result<(Scalar<'t>, LossBreakdown), LossError> {
    weights.validate()?;
    counts(problem, colloc)?;
    let mut res_terms = Vec::with_capacity(colloc.n_r());
    for p in &colloc.interior {
        let comps = residual(problem, field, tape, p)?;
        let sq = comps
            .iter()
            .skip(1)
            .fold(comps[0].square(), |acc, c| acc + c.square());
        res_terms.push(sq);
    }
    let cond = ic_bc_terms(problem, field, tape, colloc)?;
    let l_r = mean(tape, &res_terms);
    let l_b = mean(tape, &cond.boundary);
    let l_i = mean(tape, &cond.initial);
    let loss = l_r * weights.residual + l_b * weights.boundary + l_i * weights.initial;
    let breakdown = LossBreakdown {
        total: loss.value(),
        residual_mse: l_r.value(),
        boundary_mse: l_b.value(),
        initial_mse: l_i.value(),
    };
    Ok((loss, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ConstantField;
    use crate::pde::{linspace, sample_uniform, AnalyticField};

    #[test]
    fn analytic_wave_has_zero_loss() {
        let p = ProblemSpec::wave();
        let colloc = sample_uniform(&p, 21, 21).unwrap();
        let tape = Tape::new();
        let (loss, b) = total_loss(
            &AnalyticField::new(p).unwrap(),
            &tape,
            &p,
            &colloc,
            &LossWeights::default(),
        )
        .unwrap();
        assert!(loss.value() < 1e-10, "{b:?}");
    }

    #[test]
    fn zero_field_on_convection() {
        let p = ProblemSpec::convection();
        let colloc = sample_uniform(&p, 101, 11).unwrap();
        let zero = ConstantField {
            in_dim: 2,
            values: vec![0.0],
        };
        let tape = Tape::new();
        let (_, b) = total_loss(&zero, &tape, &p, &colloc, &LossWeights::default()).unwrap();
        assert_eq!(b.residual_mse, 0.0);
        assert_eq!(b.boundary_mse, 0.0);
        let expected: f64 = linspace(0.0, 2.0 * std::f64::consts::PI, 101)
            .iter()
            .map(|x| x.sin().powi(2))
            .sum::<f64>()
            / 101.0;
        assert!((b.initial_mse - expected).abs() < 1e-15);
        // 50/101 exactly in exact arithmetic
        assert!((b.initial_mse - 50.0 / 101.0).abs() < 1e-14);

        let tape = Tape::new();
        let (_, only_i) =
            total_loss(&zero, &tape, &p, &colloc, &LossWeights::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(only_i.total, only_i.initial_mse);
    }

    #[test]
    fn weights_scale_components_linearly() {
        let p = ProblemSpec::reaction();
        let colloc = sample_uniform(&p, 7, 5).unwrap();
        let f = ConstantField {
            in_dim: 2,
            values: vec![0.3],
        };
        let run = |w: LossWeights| {
            let tape = Tape::new();
            total_loss(&f, &tape, &p, &colloc, &w).unwrap().1
        };
        let a = run(LossWeights::new(1.0, 1.0, 1.0));
        let b = run(LossWeights::new(2.0, 1.0, 1.0));
        assert_eq!(a.residual_mse, b.residual_mse);
        assert!((b.total - a.total - a.residual_mse).abs() < 1e-15);
        assert!(a.residual_mse > 0.0 && a.initial_mse > 0.0);
    }

    #[test]
    fn empty_sets_and_bad_weights_are_rejected() {
        let p = ProblemSpec::reaction();
        let f = ConstantField {
            in_dim: 2,
            values: vec![0.0],
        };
        let mut colloc = sample_uniform(&p, 3, 3).unwrap();
        colloc.boundary.clear();
        let tape = Tape::new();
        assert!(matches!(
            total_loss(&f, &tape, &p, &colloc, &LossWeights::default()),
            Err(LossError::EmptySet("boundary"))
        ));
        let colloc = sample_uniform(&p, 3, 3).unwrap();
        assert!(matches!(
            total_loss(&f, &tape, &p, &colloc, &LossWeights::new(-1.0, 1.0, 1.0)),
            Err(LossError::InvalidWeights(_))
        ));
    }
}
