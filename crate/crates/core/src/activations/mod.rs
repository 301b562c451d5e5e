//! Adaptive wavelet-tanh activations.
//!
//! Each `Soft*` activation multiplies `tanh(βx)` by a wavelet or
//! wavelet-inspired factor. Its coefficients are stored as raw reals and
//! mapped through softplus, so the effective values are always positive:
//!
//! | kind            | ψ(x)                                   | coefficients |
//! |-----------------|----------------------------------------|--------------|
//! | `softmextanh`   | tanh(βx)(1 − γx²)exp(−αx²)             | α, β, γ      |
//! | `softmortanh`   | cos(ωx)exp(−x²/(2σ²))tanh(βx)          | ω, σ, β      |
//! | `softgausstanh` | tanh(βx)exp(−αx²)                      | α, β         |
//! | `softgabortanh` | tanh(βx)exp(−x²/(2σ²))cos(ωx)          | σ, ω, β      |
//! | `softherNtanh`  | tanh(βx)H_N(x)exp(−αx²), N ∈ 1..=4     | α, β         |
//!
//! A trailing `w` (e.g. `softgabortanhw`) freezes β at its initial value.
//!
//! The wavelet factors are admissible wavelets or Gaussian envelopes; the
//! admissibility integral is not checked numerically here.

pub mod catalog;
mod formula;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{softplus, softplus_inverse, Jet2, Scalar, Tape};

pub use formula::{hermite_poly, psi, ActArith, CoefArith};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivationError {
    #[error("unknown activation `{0}`")]
    UnknownName(String),
    #[error("unsupported Hermite order {0} (expected 1..=4)")]
    HermiteOrder(u8),
    #[error("invalid Gabor omega initialisation {0} (expected 3 or 5)")]
    GaborOmega(f64),
    #[error("expected {expected} trainable coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    Tanh,
    SoftMexTanh,
    SoftMorTanh,
    SoftGaussTanh,
    SoftGaborTanh,
    SoftHerTanh(u8),
}

/// Named activation coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coef {
    Alpha,
    Beta,
    Gamma,
    Omega,
    Sigma,
}

impl Coef {
    pub fn name(&self) -> &'static str {
        match self {
            Coef::Alpha => "alpha",
            Coef::Beta => "beta",
            Coef::Gamma => "gamma",
            Coef::Omega => "omega",
            Coef::Sigma => "sigma",
        }
    }
}

impl ActivationKind {
    /// Coefficients used by the formula, in evaluation order.
    pub fn coefficients(&self) -> &'static [Coef] {
        use Coef::*;
        match self {
            ActivationKind::Tanh => &[],
            ActivationKind::SoftMexTanh => &[Alpha, Beta, Gamma],
            ActivationKind::SoftMorTanh => &[Omega, Sigma, Beta],
            ActivationKind::SoftGaussTanh | ActivationKind::SoftHerTanh(_) => &[Alpha, Beta],
            ActivationKind::SoftGaborTanh => &[Sigma, Omega, Beta],
        }
    }

    pub fn is_gabor(&self) -> bool {
        matches!(self, ActivationKind::SoftGaborTanh)
    }

    fn stem(&self) -> String {
        match self {
            ActivationKind::Tanh => "tanh".into(),
            ActivationKind::SoftMexTanh => "softmextanh".into(),
            ActivationKind::SoftMorTanh => "softmortanh".into(),
            ActivationKind::SoftGaussTanh => "softgausstanh".into(),
            ActivationKind::SoftGaborTanh => "softgabortanh".into(),
            ActivationKind::SoftHerTanh(n) => format!("softher{n}tanh"),
        }
    }
}

/// An activation kind plus the fixed-β switch, addressed by lowercase name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationName {
    pub kind: ActivationKind,
    pub w_variant: bool,
}

impl ActivationName {
    pub const TANH: ActivationName = ActivationName {
        kind: ActivationKind::Tanh,
        w_variant: false,
    };

    pub fn new(kind: ActivationKind, w_variant: bool) -> Self {
        // tanh has no β to freeze
        let w_variant = w_variant && kind != ActivationKind::Tanh;
        ActivationName { kind, w_variant }
    }

    /// Every supported name, tanh first.
    pub fn all() -> Vec<ActivationName> {
        let mut out = vec![Self::TANH];
        let kinds = [
            ActivationKind::SoftMexTanh,
            ActivationKind::SoftMorTanh,
            ActivationKind::SoftGaussTanh,
            ActivationKind::SoftGaborTanh,
            ActivationKind::SoftHerTanh(1),
            ActivationKind::SoftHerTanh(2),
            ActivationKind::SoftHerTanh(3),
            ActivationKind::SoftHerTanh(4),
        ];
        for w in [false, true] {
            out.extend(kinds.iter().map(|&k| ActivationName::new(k, w)));
        }
        out
    }
}

impl fmt::Display for ActivationName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind.stem())?;
        if self.w_variant {
            write!(f, "w")?;
        }
        Ok(())
    }
}

impl FromStr for ActivationName {
    type Err = ActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ActivationError::UnknownName(s.to_string());
        if s == "tanh" {
            return Ok(Self::TANH);
        }
        let (stem, w_variant) = match s.strip_suffix('w') {
            Some(stem) if stem.ends_with("tanh") => (stem, true),
            _ => (s, false),
        };
        let kind = match stem {
            "softmextanh" => ActivationKind::SoftMexTanh,
            "softmortanh" => ActivationKind::SoftMorTanh,
            "softgausstanh" => ActivationKind::SoftGaussTanh,
            "softgabortanh" => ActivationKind::SoftGaborTanh,
            _ => {
                let order = stem
                    .strip_prefix("softher")
                    .and_then(|r| r.strip_suffix("tanh"))
                    .and_then(|n| n.parse::<u8>().ok())
                    .ok_or_else(unknown)?;
                if !(1..=4).contains(&order) {
                    return Err(unknown());
                }
                ActivationKind::SoftHerTanh(order)
            }
        };
        Ok(ActivationName { kind, w_variant })
    }
}

impl Serialize for ActivationName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActivationName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the stated initial coefficient values are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// The stated value is the raw (pre-softplus) coefficient.
    #[default]
    Raw,
    /// The stated value is the effective coefficient; raw = softplus⁻¹(value).
    Effective,
}

/// Activation kind with its raw coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub name: ActivationName,
    /// Raw values aligned with `name.kind.coefficients()`.
    pub raw: Vec<f64>,
    /// Whether each raw value is optimised; β is frozen in W-variants.
    pub trainable: Vec<bool>,
}

/// Builds the initial coefficients for `name`.
///
/// Every stated initial value is 1 except the Gabor ω, which is
/// `gabor_omega_init` (3 or 5).
pub fn init_activation(
    name: ActivationName,
    gabor_omega_init: f64,
    mode: InitMode,
) -> Result<ActivationSpec, ActivationError> {
    if name.kind.is_gabor() && gabor_omega_init != 3.0 && gabor_omega_init != 5.0 {
        return Err(ActivationError::GaborOmega(gabor_omega_init));
    }
    if let ActivationKind::SoftHerTanh(n) = name.kind {
        if !(1..=4).contains(&n) {
            return Err(ActivationError::HermiteOrder(n));
        }
    }
    let coefs = name.kind.coefficients();
    let raw = coefs
        .iter()
        .map(|c| {
            let stated = if name.kind.is_gabor() && *c == Coef::Omega {
                gabor_omega_init
            } else {
                1.0
            };
            match mode {
                InitMode::Raw => stated,
                InitMode::Effective => softplus_inverse(stated),
            }
        })
        .collect();
    let trainable = coefs
        .iter()
        .map(|c| !(name.w_variant && *c == Coef::Beta))
        .collect();
    Ok(ActivationSpec {
        name,
        raw,
        trainable,
    })
}

impl ActivationSpec {
    pub fn kind(&self) -> ActivationKind {
        self.name.kind
    }

    pub fn raw(&self, c: Coef) -> Option<f64> {
        self.position(c).map(|i| self.raw[i])
    }

    pub fn effective(&self, c: Coef) -> Option<f64> {
        self.raw(c).map(softplus)
    }

    pub fn effective_all(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| softplus(r)).collect()
    }

    pub fn is_trainable(&self, c: Coef) -> bool {
        self.position(c).is_some_and(|i| self.trainable[i])
    }

    fn position(&self, c: Coef) -> Option<usize> {
        self.kind().coefficients().iter().position(|&k| k == c)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable.iter().filter(|&&t| t).count()
    }

    /// Raw values of the trainable coefficients, in coefficient order.
    pub fn trainable_raw(&self) -> impl Iterator<Item = f64> + '_ {
        self.raw
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(&r, _)| r)
    }

    /// Overwrites the trainable raw values; frozen ones are untouched.
    pub fn set_trainable_raw(&mut self, values: &[f64]) -> Result<(), ActivationError> {
        let expected = self.trainable_count();
        if values.len() != expected {
            return Err(ActivationError::CoefficientCount {
                expected,
                got: values.len(),
            });
        }
        let mut it = values.iter();
        for (r, &t) in self.raw.iter_mut().zip(&self.trainable) {
            if t {
                *r = *it.next().unwrap();
            }
        }
        Ok(())
    }

    /// Registers the coefficients on `tape`: trainable ones as parameters
    /// (in coefficient order), frozen ones as constants.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundActivation<'t> {
        let leaves: Vec<Scalar<'t>> = self.trainable_raw().map(|r| tape.param(r)).collect();
        self.bind_with(tape, &leaves)
            .expect("leaf count equals trainable count")
    }

    /// Like [`Self::bind`] but takes the trainable raw coefficients as
    /// existing tape nodes.
    pub fn bind_with<'t>(
        &self,
        tape: &'t Tape,
        trainable: &[Scalar<'t>],
    ) -> Result<BoundActivation<'t>, ActivationError> {
        let expected = self.trainable_count();
        if trainable.len() != expected {
            return Err(ActivationError::CoefficientCount {
                expected,
                got: trainable.len(),
            });
        }
        let mut leaves = trainable.iter();
        let effective = self
            .raw
            .iter()
            .zip(&self.trainable)
            .map(|(&r, &t)| {
                let raw = if t {
                    *leaves.next().unwrap()
                } else {
                    tape.constant(r)
                };
                softplus_map(raw)
            })
            .collect();
        Ok(BoundActivation {
            kind: self.kind(),
            effective,
        })
    }
}

/// `softplus(raw)`, strictly positive.
pub fn softplus_map(raw: Scalar<'_>) -> Scalar<'_> {
    raw.softplus()
}

/// Activation whose effective coefficients are tape nodes.
#[derive(Debug, Clone)]
pub struct BoundActivation<'t> {
    pub kind: ActivationKind,
    pub effective: Vec<Scalar<'t>>,
}

impl<'t> BoundActivation<'t> {
    pub fn eval(&self, x: &Jet2<'t>) -> Jet2<'t> {
        psi(self.kind, &self.effective, x)
    }
}

/// Evaluates `spec` on a jet, registering its coefficients on the jet's tape.
pub fn eval_activation<'t>(spec: &ActivationSpec, x: &Jet2<'t>) -> Jet2<'t> {
    spec.bind(x.tape()).eval(x)
}
