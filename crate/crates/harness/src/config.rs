//! Run configuration and scale presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wavepinn_core::activations::ActivationName;
use wavepinn_core::loss::LossWeights;
use wavepinn_core::pde::{ProblemKind, ProblemSpec};

use crate::HarnessError;

/// Named size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// 4×512 network, 1000 iterations, 101×101 collocation grid.
    #[default]
    Paper,
    /// 4×64 network, 500 iterations, 51×51 collocation grid.
    Desk,
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            _ => Err(format!("unknown scale `{s}` (expected paper or desk)")),
        }
    }
}

/// What `iterations` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IterationUnit {
    /// Accepted L-BFGS steps.
    #[default]
    Steps,
    /// Objective evaluations, line-search trials included.
    Evaluations,
}

impl std::str::FromStr for IterationUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "steps" => Ok(IterationUnit::Steps),
            "evaluations" | "evals" => Ok(IterationUnit::Evaluations),
            _ => Err(format!(
                "unknown iteration unit `{s}` (expected steps or evaluations)"
            )),
        }
    }
}

fn d_layers() -> usize {
    4
}
fn d_width() -> usize {
    512
}
fn d_iterations() -> usize {
    1000
}
fn d_seed() -> u64 {
    5
}
fn d_grid() -> usize {
    101
}
fn d_random() -> usize {
    2500
}
fn d_omega() -> f64 {
    3.0
}
fn d_history() -> usize {
    10
}
fn d_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// Everything needed to reproduce one training run.
///
/// JSON keys are the field names. Only `problem` and `activation` are
/// required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// A `W` suffix selects the frozen-β variant.
    pub activation: ActivationName,
    #[serde(default = "d_layers")]
    pub hidden_layers: usize,
    #[serde(default = "d_width")]
    pub hidden_width: usize,
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub iteration_unit: IterationUnit,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default)]
    pub weights: LossWeights,
    /// Collocation grid for the one-dimensional problems: `nx` positions
    /// by `nt` times, plus `nx` initial and `nt` boundary points.
    #[serde(default = "d_grid")]
    pub nx: usize,
    #[serde(default = "d_grid")]
    pub nt: usize,
    /// Records drawn from the reference field (Navier–Stokes).
    #[serde(default = "d_random")]
    pub n_random: usize,
    /// Test grid for the one-dimensional problems.
    #[serde(default = "d_grid")]
    pub eval_nx: usize,
    #[serde(default = "d_grid")]
    pub eval_nt: usize,
    #[serde(default = "d_omega")]
    pub gabor_omega_init: f64,
    /// CSV with columns t,x,y,u,v,p; required for Navier–Stokes.
    #[serde(default)]
    pub reference_data: Option<PathBuf>,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
    /// Overrides the convection speed β′.
    #[serde(default)]
    pub convection_beta: Option<f64>,
    /// Adds the continuity residual for Navier–Stokes.
    #[serde(default)]
    pub ns_continuity: bool,
    #[serde(default = "d_history")]
    pub lbfgs_history: usize,
}

impl RunConfig {
    /// Paper-scale defaults.
    pub fn new(problem: ProblemKind, activation: ActivationName) -> Self {
        RunConfig {
            problem,
            activation,
            hidden_layers: d_layers(),
            hidden_width: d_width(),
            iterations: d_iterations(),
            iteration_unit: IterationUnit::Steps,
            seed: d_seed(),
            weights: LossWeights::default(),
            nx: d_grid(),
            nt: d_grid(),
            n_random: d_random(),
            eval_nx: d_grid(),
            eval_nt: d_grid(),
            gabor_omega_init: d_omega(),
            reference_data: None,
            output_dir: d_output(),
            convection_beta: None,
            ns_continuity: false,
            lbfgs_history: d_history(),
        }
    }

    pub fn preset(problem: ProblemKind, activation: ActivationName, scale: Scale) -> Self {
        let mut cfg = Self::new(problem, activation);
        cfg.apply_scale(scale);
        cfg
    }

    /// Resets the size fields to `scale`; the evaluation grid stays 101×101.
    pub fn apply_scale(&mut self, scale: Scale) {
        match scale {
            Scale::Paper => {
                self.hidden_width = 512;
                self.iterations = 1000;
                self.nx = 101;
                self.nt = 101;
                self.n_random = 2500;
            }
            Scale::Desk => {
                self.hidden_width = 64;
                self.iterations = 500;
                self.nx = 51;
                self.nt = 51;
                self.n_random = 1000;
            }
        }
        self.hidden_layers = 4;
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return bad("network needs at least one hidden layer of width ≥ 1".into());
        }
        if self.gabor_omega_init != 3.0 && self.gabor_omega_init != 5.0 {
            return bad(format!(
                "gabor_omega_init must be 3 or 5, got {}",
                self.gabor_omega_init
            ));
        }
        if self.lbfgs_history == 0 {
            return bad("lbfgs_history must be at least 1".into());
        }
        self.weights
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.problem == ProblemKind::NavierStokes {
            if self.reference_data.is_none() {
                return bad("navierstokes needs reference_data".into());
            }
            if self.n_random == 0 {
                return bad("n_random must be positive".into());
            }
        } else {
            if self.nx < 2 || self.nt < 2 || self.eval_nx < 2 || self.eval_nt < 2 {
                return bad("grids need at least 2 points per axis".into());
            }
            if self.problem != ProblemKind::Convection && self.convection_beta.is_some() {
                return bad("convection_beta only applies to convection".into());
            }
        }
        if let Some(b) = self.convection_beta {
            if !b.is_finite() {
                return bad("convection_beta must be finite".into());
            }
        }
        Ok(())
    }

    /// The one-dimensional problem with any overrides applied.
    pub fn problem_spec_1d(&self) -> Option<ProblemSpec> {
        let mut spec = ProblemSpec::default_1d(self.problem)?;
        if let (ProblemSpec::Convection { beta }, Some(b)) = (&mut spec, self.convection_beta) {
            *beta = b;
        }
        Some(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(s: &str) -> ActivationName {
        s.parse().unwrap()
    }

    #[test]
    fn json_round_trip() {
        let mut cfg =
            RunConfig::preset(ProblemKind::Convection, act("softgabortanhw"), Scale::Desk);
        cfg.convection_beta = Some(10.0);
        cfg.iteration_unit = IterationUnit::Evaluations;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn minimal_json_takes_defaults() {
        let cfg =
            RunConfig::from_json(r#"{"problem":"reaction","activation":"softgabortanh"}"#).unwrap();
        assert_eq!(
            cfg,
            RunConfig::new(ProblemKind::Reaction, act("softgabortanh"))
        );
        assert_eq!(
            (
                cfg.hidden_layers,
                cfg.hidden_width,
                cfg.iterations,
                cfg.seed
            ),
            (4, 512, 1000, 5)
        );
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"problem":"reaction"}"#,
            r#"{"problem":"reaction","activation":"relu"}"#,
            r#"{"problem":"reaction","activation":"tanh","bogus":1}"#,
            r#"{"problem":"navierstokes","activation":"tanh"}"#,
            r#"{"problem":"reaction","activation":"tanh","gabor_omega_init":4}"#,
            r#"{"problem":"wave","activation":"tanh","convection_beta":10}"#,
            r#"{"problem":"wave","activation":"tanh","weights":{"residual":-1,"boundary":1,"initial":1}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(text), Err(HarnessError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn desk_preset() {
        let cfg = RunConfig::preset(ProblemKind::Wave, act("tanh"), Scale::Desk);
        assert_eq!(
            (cfg.hidden_width, cfg.iterations, cfg.nx, cfg.nt),
            (64, 500, 51, 51)
        );
        assert_eq!((cfg.eval_nx, cfg.eval_nt), (101, 101));
        assert_eq!("DESK".parse::<Scale>().unwrap(), Scale::Desk);
    }
}
