//! Batched loss and gradient for an [`MlpModel`].
//!
//! Collocation points are packed into fixed chunks once; every evaluation
//! walks the chunks in the same order, so results are bit-reproducible.
//! Each residual or condition term is differentiated by hand with respect
//! to the output channels it reads, and the engine's backward pass turns
//! those adjoints into parameter gradients.

use crate::network::batch::BatchEngine;
use crate::network::MlpModel;
use crate::pde::{
    BoundaryTerm, CollocationSet, Point, ProblemSpec, DIR_T_1D, DIR_T_NS, DIR_X, DIR_Y,
};

use super::{counts, LossBreakdown, LossError, LossWeights};

/// Points per engine call.
pub const DEFAULT_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy)]
enum Term {
    Residual(usize),
    Initial { p: usize, target: f64 },
    Data { p: usize, u: f64, v: f64 },
    Periodic { left: usize, right: usize },
    Dirichlet { p: usize, value: f64 },
}

impl Term {
    fn shifted(self, by: usize) -> Term {
        match self {
            Term::Residual(p) => Term::Residual(p + by),
            Term::Initial { p, target } => Term::Initial { p: p + by, target },
            Term::Data { p, u, v } => Term::Data { p: p + by, u, v },
            Term::Periodic { left, right } => Term::Periodic {
                left: left + by,
                right: right + by,
            },
            Term::Dirichlet { p, value } => Term::Dirichlet { p: p + by, value },
        }
    }
}

#[derive(Debug, Default)]
struct Chunk {
    coords: Vec<f64>,
    points: usize,
    terms: Vec<Term>,
}

/// Output of one objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub breakdown: LossBreakdown,
}

/// Channel positions the term kernels read.
#[derive(Debug, Clone, Copy, Default)]
struct Slots {
    x: usize,
    y: usize,
    t: usize,
    xx: usize,
    yy: usize,
    tt: usize,
}

pub struct PinnObjective {
    problem: ProblemSpec,
    weights: LossWeights,
    model: MlpModel,
    engine: BatchEngine,
    chunks: Vec<Chunk>,
    n: (usize, usize, usize),
    slots: Slots,
    adjoint: Vec<f64>,
    evals: usize,
}

impl PinnObjective {
    pub fn new(
        model: MlpModel,
        problem: ProblemSpec,
        colloc: &CollocationSet,
        weights: LossWeights,
    ) -> Result<Self, LossError> {
        Self::with_chunk(model, problem, colloc, weights, DEFAULT_CHUNK)
    }

    pub fn with_chunk(
        model: MlpModel,
        problem: ProblemSpec,
        colloc: &CollocationSet,
        weights: LossWeights,
        chunk: usize,
    ) -> Result<Self, LossError> {
        weights.validate()?;
        let n = counts(&problem, colloc)?;
        if model.in_dim() != problem.in_dim() || model.out_dim() != problem.out_dim() {
            return Err(LossError::ModelShape {
                expected: (problem.in_dim(), problem.out_dim()),
                got: (model.in_dim(), model.out_dim()),
            });
        }
        let channels = problem.channels();
        let first = |d| channels.first_channel(d).unwrap_or(0);
        let second = |d| channels.second_channel(d).unwrap_or(0);
        let slots = if problem.in_dim() == 3 {
            Slots {
                x: first(DIR_X),
                y: first(DIR_Y),
                t: first(DIR_T_NS),
                xx: second(DIR_X),
                yy: second(DIR_Y),
                tt: 0,
            }
        } else {
            Slots {
                x: first(DIR_X),
                y: 0,
                t: first(DIR_T_1D),
                xx: second(DIR_X),
                yy: 0,
                tt: second(DIR_T_1D),
            }
        };
        let chunks = build_chunks(&problem, colloc, chunk.max(2))?;
        Ok(PinnObjective {
            problem,
            weights,
            model,
            engine: BatchEngine::new(channels),
            chunks,
            n,
            slots,
            adjoint: Vec::new(),
            evals: 0,
        })
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn into_model(self) -> MlpModel {
        self.model
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    /// Number of completed evaluations.
    pub fn evaluations(&self) -> usize {
        self.evals
    }

    /// Loss, gradient and breakdown at `theta`; the model keeps `theta`.
    pub fn evaluate(&mut self, theta: &[f64]) -> Result<Evaluation, LossError> {
        let mut grad = vec![0.0; theta.len()];
        let breakdown = self.evaluate_into(theta, &mut grad)?;
        Ok(Evaluation {
            loss: breakdown.total,
            grad,
            breakdown,
        })
    }

    /// Like [`Self::evaluate`] but writes the gradient into `grad`.
    pub fn evaluate_into(
        &mut self,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<LossBreakdown, LossError> {
        self.model.set_parameters(theta)?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (n_r, n_b, n_i) = self.n;
        let w = &self.weights;
        let scale = [
            w.residual / n_r as f64,
            if n_b > 0 {
                w.boundary / n_b as f64
            } else {
                0.0
            },
            w.initial / n_i as f64,
        ];
        let mut sums = [0.0f64; 3];
        let m = self.model.out_dim();
        for chunk in &self.chunks {
            let out = self
                .engine
                .forward(&self.model, &chunk.coords, chunk.points)?;
            self.adjoint.clear();
            self.adjoint.resize(out.len(), 0.0);
            let mut view = View {
                out,
                adj: &mut self.adjoint,
                points: chunk.points,
                m,
            };
            for term in &chunk.terms {
                accumulate(
                    &self.problem,
                    &self.slots,
                    *term,
                    &mut view,
                    &scale,
                    &mut sums,
                );
            }
            self.engine.backward(&self.model, &self.adjoint, grad)?;
        }
        self.evals += 1;
        Ok(LossBreakdown::from_components(
            &self.weights,
            sums[0] / n_r as f64,
            if n_b > 0 { sums[1] / n_b as f64 } else { 0.0 },
            sums[2] / n_i as f64,
        ))
    }
}

fn build_chunks(
    problem: &ProblemSpec,
    colloc: &CollocationSet,
    chunk: usize,
) -> Result<Vec<Chunk>, LossError> {
    let dim = problem.in_dim();
    let mut groups: Vec<(Vec<Point>, Vec<Term>)> = Vec::new();
    let mut used_obs = vec![false; colloc.observations.len()];
    for (i, p) in colloc.interior.iter().enumerate() {
        let mut terms = vec![Term::Residual(0)];
        if let Some(o) = colloc.observations.get(i) {
            if o.at == *p {
                terms.push(Term::Data {
                    p: 0,
                    u: o.u,
                    v: o.v,
                });
                used_obs[i] = true;
            }
        }
        groups.push((vec![*p], terms));
    }
    for p in &colloc.initial {
        let target = problem.initial_value(p.x)?;
        groups.push((vec![*p], vec![Term::Initial { p: 0, target }]));
    }
    for b in &colloc.boundary {
        groups.push(match *b {
            BoundaryTerm::Periodic { left, right } => (
                vec![left, right],
                vec![Term::Periodic { left: 0, right: 1 }],
            ),
            BoundaryTerm::Dirichlet { at, value } => {
                (vec![at], vec![Term::Dirichlet { p: 0, value }])
            }
        });
    }
    for (o, used) in colloc.observations.iter().zip(&used_obs) {
        if !used {
            groups.push((
                vec![o.at],
                vec![Term::Data {
                    p: 0,
                    u: o.u,
                    v: o.v,
                }],
            ));
        }
    }

    let mut chunks = vec![Chunk::default()];
    for (points, terms) in groups {
        if chunks.last().unwrap().points + points.len() > chunk {
            chunks.push(Chunk::default());
        }
        let c = chunks.last_mut().unwrap();
        let base = c.points;
        for p in &points {
            c.coords.extend(p.coords(dim));
        }
        c.points += points.len();
        c.terms.extend(terms.into_iter().map(|t| t.shifted(base)));
    }
    Ok(chunks)
}

struct View<'a> {
    out: &'a [f64],
    adj: &'a mut [f64],
    points: usize,
    m: usize,
}

impl View<'_> {
    #[inline]
    fn idx(&self, ch: usize, p: usize, k: usize) -> usize {
        (ch * self.points + p) * self.m + k
    }
    #[inline]
    fn get(&self, ch: usize, p: usize, k: usize) -> f64 {
        self.out[self.idx(ch, p, k)]
    }
    #[inline]
    fn add(&mut self, ch: usize, p: usize, k: usize, v: f64) {
        let i = self.idx(ch, p, k);
        self.adj[i] += v;
    }
}

/// Adds one term to `sums` (residual, boundary, initial) and its scaled
/// adjoint to `view`.
fn accumulate(
    problem: &ProblemSpec,
    s: &Slots,
    term: Term,
    view: &mut View<'_>,
    scale: &[f64; 3],
    sums: &mut [f64; 3],
) {
    match term {
        Term::Residual(p) => {
            let g = 2.0 * scale[0];
            match *problem {
                ProblemSpec::Reaction { rho } => {
                    let u = view.get(0, p, 0);
                    let r = view.get(s.t, p, 0) - rho * u * (1.0 - u);
                    sums[0] += r * r;
                    view.add(s.t, p, 0, g * r);
                    view.add(0, p, 0, -g * r * rho * (1.0 - 2.0 * u));
                }
                ProblemSpec::Convection { beta } => {
                    let r = view.get(s.t, p, 0) + beta * view.get(s.x, p, 0);
                    sums[0] += r * r;
                    view.add(s.t, p, 0, g * r);
                    view.add(s.x, p, 0, g * r * beta);
                }
                ProblemSpec::Wave { speed_sq, .. } => {
                    let r = view.get(s.tt, p, 0) - speed_sq * view.get(s.xx, p, 0);
                    sums[0] += r * r;
                    view.add(s.tt, p, 0, g * r);
                    view.add(s.xx, p, 0, -g * r * speed_sq);
                }
                ProblemSpec::NavierStokes {
                    lambda1: l1,
                    lambda2: l2,
                    continuity,
                    ..
                } => {
                    let (u, v) = (view.get(0, p, 0), view.get(0, p, 1));
                    // momentum component for velocity output k driven by pressure gradient slot
                    for (k, p_slot) in [(0usize, s.x), (1usize, s.y)] {
                        let (wx, wy) = (view.get(s.x, p, k), view.get(s.y, p, k));
                        let r =
                            view.get(s.t, p, k) + l1 * (u * wx + v * wy) + view.get(p_slot, p, 2)
                                - l2 * (view.get(s.xx, p, k) + view.get(s.yy, p, k));
                        sums[0] += r * r;
                        let gr = g * r;
                        view.add(s.t, p, k, gr);
                        view.add(0, p, 0, gr * l1 * wx);
                        view.add(0, p, 1, gr * l1 * wy);
                        view.add(s.x, p, k, gr * l1 * u);
                        view.add(s.y, p, k, gr * l1 * v);
                        view.add(p_slot, p, 2, gr);
                        view.add(s.xx, p, k, -gr * l2);
                        view.add(s.yy, p, k, -gr * l2);
                    }
                    if continuity {
                        let r = view.get(s.x, p, 0) + view.get(s.y, p, 1);
                        sums[0] += r * r;
                        view.add(s.x, p, 0, g * r);
                        view.add(s.y, p, 1, g * r);
                    }
                }
            }
        }
        Term::Initial { p, target } => {
            let g = 2.0 * scale[2];
            let d = view.get(0, p, 0) - target;
            sums[2] += d * d;
            view.add(0, p, 0, g * d);
            if let ProblemSpec::Wave { .. } = problem {
                let ut = view.get(s.t, p, 0);
                sums[2] += ut * ut;
                view.add(s.t, p, 0, g * ut);
            }
        }
        Term::Data { p, u, v } => {
            let g = 2.0 * scale[2];
            let du = view.get(0, p, 0) - u;
            let dv = view.get(0, p, 1) - v;
            sums[2] += du * du + dv * dv;
            view.add(0, p, 0, g * du);
            view.add(0, p, 1, g * dv);
        }
        Term::Periodic { left, right } => {
            let g = 2.0 * scale[1];
            let d = view.get(0, left, 0) - view.get(0, right, 0);
            sums[1] += d * d;
            view.add(0, left, 0, g * d);
            view.add(0, right, 0, -g * d);
        }
        Term::Dirichlet { p, value } => {
            let g = 2.0 * scale[1];
            let d = view.get(0, p, 0) - value;
            sums[1] += d * d;
            view.add(0, p, 0, g * d);
        }
    }
}
