//! Forward-over-reverse differentiation.
//!
//! [`Tape`] records scalar primitives for reverse-mode parameter gradients.
//! [`Jet2`] layers second-order forward jets on top, so input derivatives such
//! as `u_t` or `u_xx` are themselves tape nodes and can be differentiated with
//! respect to the network parameters.

mod jet;
mod tape;
pub mod taylor;

pub use jet::{hess_index, Jet2, MAX_DIM};
pub use tape::{
    sigmoid, softplus, softplus_inverse, DomainViolation, GradientVector, Op, Scalar, Tape,
    SOFTPLUS_BRANCH,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("domain error in {op} at node {node}")]
    Domain { op: &'static str, node: usize },
    #[error("scalar does not belong to this tape")]
    ForeignNode,
    #[error("direction {direction} out of range for a {dim}-dimensional jet")]
    DirectionOutOfRange { direction: usize, dim: usize },
    #[error("jet dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("unsupported jet dimension {0} (expected 1..=3)")]
    InvalidDim(usize),
}

/// Default central-difference step for [`grad_check`].
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Compares reverse-mode gradients of `objective` at `theta` with central
/// differences and returns `max_i |analytic - fd| / max(1, |analytic|)`.
///
/// `objective` receives one trainable leaf per entry of `theta`. Any leaf it
/// creates itself with [`Tape::constant`] is frozen and not checked.
pub fn grad_check<F>(objective: F, theta: &[f64], step: f64) -> Result<f64, AdError>
where
    F: for<'t> Fn(&'t Tape, &[Scalar<'t>]) -> Scalar<'t>,
{
    let analytic = {
        let tape = Tape::new();
        let params: Vec<Scalar<'_>> = theta.iter().map(|&v| tape.param(v)).collect();
        let loss = objective(&tape, &params);
        tape.backward(loss)?
    };
    let eval = |th: &[f64]| {
        let tape = Tape::new();
        let params: Vec<Scalar<'_>> = th.iter().map(|&v| tape.param(v)).collect();
        objective(&tape, &params).value()
    };
    let mut worst = 0.0f64;
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = eval(&probe);
        probe[i] = theta[i] - step;
        let down = eval(&probe);
        probe[i] = theta[i];
        let fd = (up - down) / (2.0 * step);
        let err = (analytic[i] - fd).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
