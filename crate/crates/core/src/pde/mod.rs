//! Benchmark problems: residual operators, initial and boundary conditions,
//! analytic solutions and collocation sampling.
//!
//! | problem      | residual                                   | domain              |
//! |--------------|--------------------------------------------|---------------------|
//! | reaction     | `u_t − ρu(1−u)`                            | `[0,2π] × [0,1]`    |
//! | wave         | `u_tt − c²u_xx`                            | `[0,1] × [0,1]`     |
//! | convection   | `u_t + βu_x`                               | `[0,2π] × [0,1]`    |
//! | navierstokes | momentum in `x` and `y` with `λ₁`, `λ₂`    | reference data box  |
//!
//! One-dimensional problems take inputs `(x, t)`; Navier–Stokes takes
//! `(x, y, t)` and predicts `(u, v, p)`.

mod reference;

pub use reference::{
    load_reference_csv, parse_reference_csv, taylor_green, Bounds3, Record, ReferenceField,
};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Jet2, Scalar, Tape};
use crate::network::batch::Channels;
use crate::network::{Field, NetworkError};

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("grid needs at least 2 points per axis, got {nx}×{nt}")]
    InvalidGrid { nx: usize, nt: usize },
    #[error("{0} has no closed-form solution")]
    NoClosedForm(ProblemKind),
    #[error("{0} collocation must be drawn from reference data")]
    NeedsReference(ProblemKind),
    #[error("requested {requested} points but only {available} are available")]
    TooManyPoints { requested: usize, available: usize },
    #[error("field has {got} outputs/inputs, problem expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("io: {0}")]
    Io(String),
    #[error("reference data is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("row {row}: non-finite value in column `{column}`")]
    NonFinite { row: usize, column: &'static str },
    #[error("reference data is empty")]
    EmptyReference,
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: duplicate (t, x, y) key")]
    DuplicateKey { row: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Reaction,
    Wave,
    Convection,
    #[serde(alias = "ns", alias = "navier-stokes", alias = "navier_stokes")]
    NavierStokes,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::Reaction,
        ProblemKind::Wave,
        ProblemKind::Convection,
        ProblemKind::NavierStokes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Reaction => "reaction",
            ProblemKind::Wave => "wave",
            ProblemKind::Convection => "convection",
            ProblemKind::NavierStokes => "navierstokes",
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "reaction" => Ok(ProblemKind::Reaction),
            "wave" => Ok(ProblemKind::Wave),
            "convection" => Ok(ProblemKind::Convection),
            "navierstokes" | "navier-stokes" | "navier_stokes" | "ns" => {
                Ok(ProblemKind::NavierStokes)
            }
            _ => Err(format!("unknown problem `{s}`")),
        }
    }
}

/// A problem with its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec {
    Reaction {
        rho: f64,
    },
    Wave {
        beta: f64,
        speed_sq: f64,
    },
    Convection {
        beta: f64,
    },
    #[serde(rename = "navierstokes")]
    NavierStokes {
        lambda1: f64,
        lambda2: f64,
        /// Also penalise `u_x + v_y`.
        continuity: bool,
        bounds: Bounds3,
    },
}

pub const RHO: f64 = 5.0;
pub const WAVE_BETA: f64 = 3.0;
pub const WAVE_SPEED_SQ: f64 = 4.0;
pub const CONVECTION_BETA: f64 = 50.0;
pub const NS_LAMBDA1: f64 = 1.0;
pub const NS_LAMBDA2: f64 = 0.01;

/// Input direction indices.
pub const DIR_X: usize = 0;
pub const DIR_T_1D: usize = 1;
pub const DIR_Y: usize = 1;
pub const DIR_T_NS: usize = 2;

/// Width of the reaction initial bump, `π/4`.
const REACTION_WIDTH: f64 = PI / 4.0;

impl ProblemSpec {
    pub fn reaction() -> Self {
        ProblemSpec::Reaction { rho: RHO }
    }

    pub fn wave() -> Self {
        ProblemSpec::Wave {
            beta: WAVE_BETA,
            speed_sq: WAVE_SPEED_SQ,
        }
    }

    pub fn convection() -> Self {
        ProblemSpec::Convection {
            beta: CONVECTION_BETA,
        }
    }

    pub fn navier_stokes(bounds: Bounds3) -> Self {
        ProblemSpec::NavierStokes {
            lambda1: NS_LAMBDA1,
            lambda2: NS_LAMBDA2,
            continuity: false,
            bounds,
        }
    }

    /// Default constants for a one-dimensional problem.
    pub fn default_1d(kind: ProblemKind) -> Option<Self> {
        match kind {
            ProblemKind::Reaction => Some(Self::reaction()),
            ProblemKind::Wave => Some(Self::wave()),
            ProblemKind::Convection => Some(Self::convection()),
            ProblemKind::NavierStokes => None,
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            ProblemSpec::Reaction { .. } => ProblemKind::Reaction,
            ProblemSpec::Wave { .. } => ProblemKind::Wave,
            ProblemSpec::Convection { .. } => ProblemKind::Convection,
            ProblemSpec::NavierStokes { .. } => ProblemKind::NavierStokes,
        }
    }

    pub fn in_dim(&self) -> usize {
        if self.kind() == ProblemKind::NavierStokes {
            3
        } else {
            2
        }
    }

    pub fn out_dim(&self) -> usize {
        if self.kind() == ProblemKind::NavierStokes {
            3
        } else {
            1
        }
    }

    pub fn t_dir(&self) -> usize {
        if self.kind() == ProblemKind::NavierStokes {
            DIR_T_NS
        } else {
            DIR_T_1D
        }
    }

    pub fn bounds(&self) -> Bounds3 {
        let flat = |x: [f64; 2]| Bounds3 {
            x,
            y: [0.0, 0.0],
            t: [0.0, 1.0],
        };
        match self {
            ProblemSpec::Reaction { .. } | ProblemSpec::Convection { .. } => flat([0.0, 2.0 * PI]),
            ProblemSpec::Wave { .. } => flat([0.0, 1.0]),
            ProblemSpec::NavierStokes { bounds, .. } => *bounds,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(
            self,
            ProblemSpec::Reaction { .. } | ProblemSpec::Convection { .. }
        )
    }

    /// Derivative channels the residual and conditions read.
    pub fn channels(&self) -> Channels {
        let ch = match self.kind() {
            ProblemKind::Reaction => Channels::new(2, &[DIR_T_1D], &[]),
            ProblemKind::Convection => Channels::new(2, &[DIR_X, DIR_T_1D], &[]),
            ProblemKind::Wave => Channels::new(2, &[DIR_X, DIR_T_1D], &[DIR_X, DIR_T_1D]),
            ProblemKind::NavierStokes => {
                Channels::new(3, &[DIR_X, DIR_Y, DIR_T_NS], &[DIR_X, DIR_Y])
            }
        };
        ch.expect("static channel layout")
    }

    /// `u(x, 0)` for one-dimensional problems.
    pub fn initial_value(&self, x: f64) -> Result<f64, PdeError> {
        match *self {
            ProblemSpec::Reaction { .. } => Ok(reaction_bump(x)),
            ProblemSpec::Wave { beta, .. } => Ok((PI * x).sin() + 0.5 * (beta * PI * x).sin()),
            ProblemSpec::Convection { .. } => Ok(x.sin()),
            ProblemSpec::NavierStokes { .. } => Err(PdeError::NoClosedForm(self.kind())),
        }
    }
}

/// `h(x) = exp(−(x−π)² / (2(π/4)²))`
pub fn reaction_bump(x: f64) -> f64 {
    (-(x - PI).powi(2) / (2.0 * REACTION_WIDTH * REACTION_WIDTH)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    pub t: f64,
}

impl Point {
    pub fn xt(x: f64, t: f64) -> Self {
        Point { x, y: 0.0, t }
    }

    pub fn xyt(x: f64, y: f64, t: f64) -> Self {
        Point { x, y, t }
    }

    /// Network input order: `(x, t)` or `(x, y, t)`.
    pub fn coords(&self, dim: usize) -> Vec<f64> {
        if dim == 3 {
            vec![self.x, self.y, self.t]
        } else {
            vec![self.x, self.t]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryTerm {
    /// `u(left) = u(right)`
    Periodic { left: Point, right: Point },
    /// `u(at) = value`
    Dirichlet { at: Point, value: f64 },
}

/// A velocity observation used as a data-fit term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub at: Point,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CollocationSet {
    pub interior: Vec<Point>,
    pub initial: Vec<Point>,
    pub boundary: Vec<BoundaryTerm>,
    pub observations: Vec<Observation>,
}

impl CollocationSet {
    pub fn n_r(&self) -> usize {
        self.interior.len()
    }

    pub fn n_b(&self) -> usize {
        self.boundary.len()
    }

    /// Initial-condition points, or observations for Navier–Stokes.
    pub fn n_i(&self) -> usize {
        self.initial.len() + self.observations.len()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.interior
            .iter()
            .chain(&self.initial)
            .copied()
            .chain(self.boundary.iter().flat_map(|b| match *b {
                BoundaryTerm::Periodic { left, right } => vec![left, right],
                BoundaryTerm::Dirichlet { at, .. } => vec![at],
            }))
            .chain(self.observations.iter().map(|o| o.at))
    }
}

/// `n` evenly spaced values over `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// `nx × nt` tensor grid, `x` major.
pub fn uniform_grid(problem: &ProblemSpec, nx: usize, nt: usize) -> Vec<Point> {
    let b = problem.bounds();
    let ts = linspace(b.t[0], b.t[1], nt);
    linspace(b.x[0], b.x[1], nx)
        .into_iter()
        .flat_map(|x| ts.iter().map(move |&t| Point::xt(x, t)))
        .collect()
}

fn boundary_terms(problem: &ProblemSpec, ts: &[f64]) -> Vec<BoundaryTerm> {
    let [lo, hi] = problem.bounds().x;
    if problem.is_periodic() {
        ts.iter()
            .map(|&t| BoundaryTerm::Periodic {
                left: Point::xt(lo, t),
                right: Point::xt(hi, t),
            })
            .collect()
    } else {
        [lo, hi]
            .iter()
            .flat_map(|&x| {
                ts.iter().map(move |&t| BoundaryTerm::Dirichlet {
                    at: Point::xt(x, t),
                    value: 0.0,
                })
            })
            .collect()
    }
}

/// Tensor-grid collocation for a one-dimensional problem.
pub fn sample_uniform(
    problem: &ProblemSpec,
    nx: usize,
    nt: usize,
) -> Result<CollocationSet, PdeError> {
    if problem.kind() == ProblemKind::NavierStokes {
        return Err(PdeError::NeedsReference(problem.kind()));
    }
    if nx < 2 || nt < 2 {
        return Err(PdeError::InvalidGrid { nx, nt });
    }
    let b = problem.bounds();
    let ts = linspace(b.t[0], b.t[1], nt);
    Ok(CollocationSet {
        interior: uniform_grid(problem, nx, nt),
        initial: linspace(b.x[0], b.x[1], nx)
            .into_iter()
            .map(|x| Point::xt(x, b.t[0]))
            .collect(),
        boundary: boundary_terms(problem, &ts),
        observations: Vec::new(),
    })
}

/// Random collocation, deterministic in `seed`.
///
/// Navier–Stokes draws `n` records without replacement from the training
/// part of `reference` (everything before the final snapshot); each record
/// is both a residual point and a velocity observation. One-dimensional
/// problems draw `n` uniform points for each of the interior, initial and
/// boundary sets.
pub fn sample_random(
    problem: &ProblemSpec,
    n: usize,
    seed: u64,
    reference: Option<&ReferenceField>,
) -> Result<CollocationSet, PdeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if problem.kind() == ProblemKind::NavierStokes {
        let reference = reference.ok_or(PdeError::NeedsReference(problem.kind()))?;
        let (train, _) = reference.split_final_time();
        if n > train.len() {
            return Err(PdeError::TooManyPoints {
                requested: n,
                available: train.len(),
            });
        }
        let picks = rand::seq::index::sample(&mut rng, train.len(), n);
        let observations: Vec<Observation> = picks
            .iter()
            .map(|i| {
                let r = train[i];
                Observation {
                    at: Point::xyt(r.x, r.y, r.t),
                    u: r.u,
                    v: r.v,
                }
            })
            .collect();
        return Ok(CollocationSet {
            interior: observations.iter().map(|o| o.at).collect(),
            initial: Vec::new(),
            boundary: Vec::new(),
            observations,
        });
    }
    let b = problem.bounds();
    let draw = |rng: &mut ChaCha8Rng, r: [f64; 2]| rng.gen_range(r[0]..=r[1]);
    let interior = (0..n)
        .map(|_| {
            let x = draw(&mut rng, b.x);
            Point::xt(x, draw(&mut rng, b.t))
        })
        .collect();
    let initial = (0..n)
        .map(|_| Point::xt(draw(&mut rng, b.x), b.t[0]))
        .collect();
    let ts: Vec<f64> = (0..n).map(|_| draw(&mut rng, b.t)).collect();
    Ok(CollocationSet {
        interior,
        initial,
        boundary: boundary_terms(problem, &ts),
        observations: Vec::new(),
    })
}

fn input_jets<'t>(tape: &'t Tape, point: &Point, dim: usize) -> Result<Vec<Jet2<'t>>, PdeError> {
    point
        .coords(dim)
        .into_iter()
        .enumerate()
        .map(|(d, v)| Ok(Jet2::input(tape, v, d, dim).map_err(NetworkError::from)?))
        .collect()
}

fn check_field<'t, F: Field<'t>>(problem: &ProblemSpec, field: &F) -> Result<(), PdeError> {
    for (expected, got) in [
        (problem.in_dim(), field.in_dim()),
        (problem.out_dim(), field.out_dim()),
    ] {
        if expected != got {
            return Err(PdeError::DimMismatch { expected, got });
        }
    }
    Ok(())
}

/// Residual components at `point`: one for the 1D problems, two momentum
/// components (plus continuity when enabled) for Navier–Stokes.
pub fn residual<'t, F: Field<'t>>(
    problem: &ProblemSpec,
    field: &F,
    tape: &'t Tape,
    point: &Point,
) -> Result<Vec<Scalar<'t>>, PdeError> {
    check_field(problem, field)?;
    let out = field.eval(&input_jets(tape, point, problem.in_dim())?)?;
    let (x, t) = (DIR_X, DIR_T_1D);
    Ok(match *problem {
        ProblemSpec::Reaction { rho } => {
            let u = out[0].val();
            vec![out[0].grad(t) - (u - u.square()) * rho]
        }
        ProblemSpec::Wave { speed_sq, .. } => {
            vec![out[0].hess(t, t) - out[0].hess(x, x) * speed_sq]
        }
        ProblemSpec::Convection { beta } => vec![out[0].grad(t) + out[0].grad(x) * beta],
        ProblemSpec::NavierStokes {
            lambda1,
            lambda2,
            continuity,
            ..
        } => {
            let (y, t) = (DIR_Y, DIR_T_NS);
            let (u, v, p) = (&out[0], &out[1], &out[2]);
            let momentum = |w: &Jet2<'t>, p_dir: usize| {
                w.grad(t) + (u.val() * w.grad(x) + v.val() * w.grad(y)) * lambda1 + p.grad(p_dir)
                    - (w.hess(x, x) + w.hess(y, y)) * lambda2
            };
            let mut r = vec![momentum(u, x), momentum(v, y)];
            if continuity {
                r.push(u.grad(x) + v.grad(y));
            }
            r
        }
    })
}

/// Per-point squared discrepancies of the conditions.
#[derive(Debug, Clone)]
pub struct IcBcTerms<'t> {
    /// Initial-condition terms (velocity data terms for Navier–Stokes).
    pub initial: Vec<Scalar<'t>>,
    pub boundary: Vec<Scalar<'t>>,
}

pub fn ic_bc_terms<'t, F: Field<'t>>(
    problem: &ProblemSpec,
    field: &F,
    tape: &'t Tape,
    colloc: &CollocationSet,
) -> Result<IcBcTerms<'t>, PdeError> {
    check_field(problem, field)?;
    let dim = problem.in_dim();
    let eval = |p: &Point| -> Result<Vec<Jet2<'t>>, PdeError> {
        Ok(field.eval(&input_jets(tape, p, dim)?)?)
    };
    let mut initial = Vec::with_capacity(colloc.n_i());
    for p in &colloc.initial {
        let u = eval(p)?[0];
        let mut term = (u.val() - problem.initial_value(p.x)?).square();
        if let ProblemSpec::Wave { .. } = problem {
            term = term + u.grad(DIR_T_1D).square();
        }
        initial.push(term);
    }
    for o in &colloc.observations {
        let out = eval(&o.at)?;
        initial.push((out[0].val() - o.u).square() + (out[1].val() - o.v).square());
    }
    let mut boundary = Vec::with_capacity(colloc.n_b());
    for b in &colloc.boundary {
        boundary.push(match b {
            BoundaryTerm::Periodic { left, right } => {
                (eval(left)?[0].val() - eval(right)?[0].val()).square()
            }
            BoundaryTerm::Dirichlet { at, value } => (eval(at)?[0].val() - *value).square(),
        });
    }
    Ok(IcBcTerms { initial, boundary })
}

/// Closed-form solution value.
pub fn analytic(problem: &ProblemSpec, point: &Point) -> Result<f64, PdeError> {
    let (x, t) = (point.x, point.t);
    match *problem {
        ProblemSpec::Reaction { rho } => {
            // h e^{ρt} / (h e^{ρt} + 1 − h), rearranged to be exact at t = 0 and x = π
            let h = reaction_bump(x);
            Ok(h / (h + (1.0 - h) * (-rho * t).exp()))
        }
        ProblemSpec::Wave { beta, speed_sq } => {
            let c = speed_sq.sqrt();
            Ok((PI * x).sin() * (c * PI * t).cos()
                + 0.5 * (beta * PI * x).sin() * (c * beta * PI * t).cos())
        }
        ProblemSpec::Convection { beta } => Ok((x - beta * t).sin()),
        ProblemSpec::NavierStokes { .. } => Err(PdeError::NoClosedForm(problem.kind())),
    }
}

/// The analytic solution as a jet graph, usable anywhere a network is.
#[derive(Debug, Clone, Copy)]
pub struct AnalyticField {
    problem: ProblemSpec,
}

impl AnalyticField {
    pub fn new(problem: ProblemSpec) -> Result<Self, PdeError> {
        if problem.kind() == ProblemKind::NavierStokes {
            return Err(PdeError::NoClosedForm(problem.kind()));
        }
        Ok(AnalyticField { problem })
    }
}

impl<'t> Field<'t> for AnalyticField {
    fn in_dim(&self) -> usize {
        2
    }

    fn out_dim(&self) -> usize {
        1
    }

    fn eval(&self, inputs: &[Jet2<'t>]) -> Result<Vec<Jet2<'t>>, NetworkError> {
        crate::network::check_inputs(2, inputs)?;
        let (x, t) = (inputs[0], inputs[1]);
        let u = match self.problem {
            ProblemSpec::Reaction { rho } => {
                let k = -1.0 / (2.0 * REACTION_WIDTH * REACTION_WIDTH);
                let h = x.add_f64(-PI).square().scale_f64(k).exp();
                let decay = t.scale_f64(-rho).exp();
                h * (h + (-h).add_f64(1.0) * decay).recip()
            }
            ProblemSpec::Wave { beta, speed_sq } => {
                let c = speed_sq.sqrt();
                x.scale_f64(PI).sin() * t.scale_f64(c * PI).cos()
                    + (x.scale_f64(beta * PI).sin() * t.scale_f64(c * beta * PI).cos())
                        .scale_f64(0.5)
            }
            ProblemSpec::Convection { beta } => (x - t.scale_f64(beta)).sin(),
            ProblemSpec::NavierStokes { .. } => unreachable!("rejected in AnalyticField::new"),
        };
        Ok(vec![u])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ConstantField;

    #[test]
    fn reaction_grid_counts() {
        let c = sample_uniform(&ProblemSpec::reaction(), 101, 101).unwrap();
        assert_eq!((c.n_r(), c.n_i(), c.n_b()), (10_201, 101, 101));
        assert!(c
            .boundary
            .iter()
            .all(|b| matches!(b, BoundaryTerm::Periodic { .. })));
    }

    #[test]
    fn two_by_two_grid_is_the_corners() {
        let c = sample_uniform(&ProblemSpec::convection(), 2, 2).unwrap();
        let corners = [(0.0, 0.0), (0.0, 1.0), (2.0 * PI, 0.0), (2.0 * PI, 1.0)];
        let got: Vec<(f64, f64)> = c.interior.iter().map(|p| (p.x, p.t)).collect();
        assert_eq!(got, corners);
    }

    #[test]
    fn wave_initial_points_and_dirichlet_boundary() {
        let c = sample_uniform(&ProblemSpec::wave(), 3, 4).unwrap();
        let xs: Vec<f64> = c.initial.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
        assert_eq!(c.n_b(), 8);
        assert!(c
            .boundary
            .iter()
            .all(|b| matches!(b, BoundaryTerm::Dirichlet { value, .. } if *value == 0.0)));
    }

    #[test]
    fn uniform_sampling_preconditions() {
        assert!(matches!(
            sample_uniform(&ProblemSpec::reaction(), 1, 5),
            Err(PdeError::InvalidGrid { .. })
        ));
        let ns = ProblemSpec::navier_stokes(taylor_green(2, 2, 2, 1.0, 0.01).bounds());
        assert!(matches!(
            sample_uniform(&ns, 5, 5),
            Err(PdeError::NeedsReference(_))
        ));
    }

    #[test]
    fn random_sampling_is_deterministic_and_contained() {
        let p = ProblemSpec::convection();
        let a = sample_random(&p, 50, 5, None).unwrap();
        let b = sample_random(&p, 50, 5, None).unwrap();
        assert_eq!(a, b);
        let bounds = p.bounds();
        assert!(a.points().all(|q| bounds.contains(q.x, q.y, q.t)));
    }

    #[test]
    fn navier_stokes_sampling_without_replacement() {
        let field = taylor_green(5, 5, 3, 1.0, 0.01);
        let p = ProblemSpec::navier_stokes(field.bounds());
        let train_len = field.split_final_time().0.len();
        let a = sample_random(&p, 20, 5, Some(&field)).unwrap();
        assert_eq!(a, sample_random(&p, 20, 5, Some(&field)).unwrap());
        let mut keys: Vec<_> = a
            .interior
            .iter()
            .map(|q| (q.t.to_bits(), q.x.to_bits(), q.y.to_bits()))
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 20);
        assert!(a.interior.iter().all(|q| q.t < field.final_time()));
        let all = sample_random(&p, train_len, 5, Some(&field)).unwrap();
        assert_eq!(all.n_r(), train_len);
        assert!(matches!(
            sample_random(&p, train_len + 1, 5, Some(&field)),
            Err(PdeError::TooManyPoints { .. })
        ));
        assert!(matches!(
            sample_random(&p, 1, 5, None),
            Err(PdeError::NeedsReference(_))
        ));
    }

    #[test]
    fn constant_fields_annihilate_reaction() {
        let p = ProblemSpec::reaction();
        let tape = Tape::new();
        for c in [0.0, 1.0] {
            let f = ConstantField {
                in_dim: 2,
                values: vec![c],
            };
            for pt in [Point::xt(0.3, 0.2), Point::xt(5.0, 0.9)] {
                assert_eq!(residual(&p, &f, &tape, &pt).unwrap()[0].value(), 0.0);
            }
        }
    }

    #[test]
    fn condition_examples() {
        let tape = Tape::new();
        let zero = ConstantField {
            in_dim: 2,
            values: vec![0.0],
        };
        let conv = ProblemSpec::convection();
        let colloc = CollocationSet {
            initial: vec![Point::xt(PI / 2.0, 0.0)],
            ..Default::default()
        };
        let terms = ic_bc_terms(&conv, &zero, &tape, &colloc).unwrap();
        assert!((terms.initial[0].value() - 1.0).abs() < 1e-15);
        assert_eq!(ProblemSpec::reaction().initial_value(PI).unwrap(), 1.0);
    }

    #[test]
    fn analytic_examples() {
        let r = ProblemSpec::reaction();
        for x in [0.0, 1.0, 4.0] {
            assert_eq!(analytic(&r, &Point::xt(x, 0.0)).unwrap(), reaction_bump(x));
        }
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(analytic(&r, &Point::xt(PI, t)).unwrap(), 1.0);
        }
        let w = ProblemSpec::wave();
        let x = 0.3;
        assert_eq!(
            analytic(&w, &Point::xt(x, 0.0)).unwrap(),
            (PI * x).sin() + 0.5 * (3.0 * PI * x).sin()
        );
        let c = ProblemSpec::convection();
        assert_eq!(
            analytic(&c, &Point::xt(0.0, 0.4)).unwrap(),
            (-50.0f64 * 0.4).sin()
        );
        let ns = ProblemSpec::navier_stokes(taylor_green(2, 2, 2, 1.0, 0.01).bounds());
        assert!(matches!(
            analytic(&ns, &Point::default()),
            Err(PdeError::NoClosedForm(_))
        ));
    }

    #[test]
    fn initial_condition_matches_analytic_at_t0() {
        for p in [
            ProblemSpec::reaction(),
            ProblemSpec::wave(),
            ProblemSpec::convection(),
        ] {
            for x in linspace(p.bounds().x[0], p.bounds().x[1], 17) {
                assert_eq!(
                    analytic(&p, &Point::xt(x, 0.0)).unwrap(),
                    p.initial_value(x).unwrap()
                );
            }
        }
    }

    #[test]
    fn periodic_solutions() {
        for p in [ProblemSpec::reaction(), ProblemSpec::convection()] {
            for t in linspace(0.0, 1.0, 11) {
                let l = analytic(&p, &Point::xt(0.0, t)).unwrap();
                let r = analytic(&p, &Point::xt(2.0 * PI, t)).unwrap();
                assert!((l - r).abs() < 1e-12, "{p:?} {t}");
            }
        }
    }

    #[test]
    fn analytic_field_residuals_vanish() {
        for p in [
            ProblemSpec::reaction(),
            ProblemSpec::wave(),
            ProblemSpec::convection(),
        ] {
            let f = AnalyticField::new(p).unwrap();
            let tape = Tape::new();
            let mut worst = 0.0f64;
            for pt in uniform_grid(&p, 21, 21) {
                let r = residual(&p, &f, &tape, &pt).unwrap()[0].value();
                worst = worst.max(r.abs());
            }
            assert!(worst < 1e-9, "{p:?}: {worst}");
        }
    }

    #[test]
    fn problem_names_round_trip() {
        for k in ProblemKind::ALL {
            assert_eq!(k.to_string().parse::<ProblemKind>().unwrap(), k);
        }
        assert_eq!(
            "ns".parse::<ProblemKind>().unwrap(),
            ProblemKind::NavierStokes
        );
        let json = serde_json::to_string(&ProblemSpec::wave()).unwrap();
        assert_eq!(
            serde_json::from_str::<ProblemSpec>(&json).unwrap(),
            ProblemSpec::wave()
        );
    }
}
