//! Relative error metrics over a test set.
//!
//! Both sums run over the same `N` points:
//! `rMAE = Σ|û−u| / Σ|u|` and `rRMSE = √(Σ(û−u)² / Σu²)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction has {pred} values, reference has {reference}")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("reference is empty")]
    Empty,
    #[error("reference is identically zero")]
    ZeroReference,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmae: f64,
    pub rrmse: f64,
    pub n_points: usize,
}

fn check(pred: &[f64], reference: &[f64]) -> Result<(), MetricsError> {
    if pred.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = pred
        .iter()
        .zip(reference)
        .position(|(p, r)| !p.is_finite() || !r.is_finite())
    {
        return Err(MetricsError::NonFinite(i));
    }
    Ok(())
}

/// Relative mean absolute error (relative ℓ₁).
pub fn rmae(pred: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check(pred, reference)?;
    let den: f64 = reference.iter().map(|u| u.abs()).sum();
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, u)| (p - u).abs()).sum();
    Ok(num / den)
}

/// Relative root mean squared error (relative ℓ₂).
pub fn rrmse(pred: &[f64], reference: &[f64]) -> Result<f64, MetricsError> {
    check(pred, reference)?;
    let den: f64 = reference.iter().map(|u| u * u).sum();
    if den == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let num: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, u)| (p - u).powi(2))
        .sum();
    Ok((num / den).sqrt())
}

pub fn evaluate(pred: &[f64], reference: &[f64]) -> Result<EvalResult, MetricsError> {
    Ok(EvalResult {
        rmae: rmae(pred, reference)?,
        rrmse: rrmse(pred, reference)?,
        n_points: reference.len(),
    })
}
