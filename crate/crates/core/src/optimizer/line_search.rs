//! Bracketing line search for the strong Wolfe conditions.
//!
//! Follows the bracket/zoom scheme of Nocedal & Wright (Algorithms 3.5 and
//! 3.6) with safeguarded cubic interpolation. Non-finite trial values are
//! treated as a failed sufficient-decrease test, so the step shrinks.

use super::{dot, Objective, OptimError};

#[derive(Debug, Clone, Copy)]
pub(crate) struct WolfeParams {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
}

pub(crate) struct Accepted {
    pub step: f64,
    pub loss: f64,
    pub theta: Vec<f64>,
    pub grad: Vec<f64>,
    pub dir_deriv: f64,
}

pub(crate) struct Outcome {
    pub accepted: Option<Accepted>,
    pub evals: usize,
}

struct Trial {
    step: f64,
    loss: f64,
    dir_deriv: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
}

/// Minimiser of the cubic through `(x1, f1, g1)`, `(x2, f2, g2)`, clamped to
/// `[lo, hi]`; falls back to the midpoint when the cubic has no minimum.
pub(crate) fn cubic_interpolate(
    (x1, f1, g1): (f64, f64, f64),
    (x2, f2, g2): (f64, f64, f64),
    (lo, hi): (f64, f64),
) -> f64 {
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let x = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if x.is_finite() {
            return x.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn strong_wolfe<O: Objective + ?Sized>(
    objective: &mut O,
    theta: &[f64],
    loss0: f64,
    dir: &[f64],
    dir_deriv0: f64,
    step0: f64,
    params: WolfeParams,
) -> Result<Outcome, OptimError> {
    let mut evals = 0;
    let mut eval = |step: f64, evals: &mut usize| -> Result<Trial, OptimError> {
        let x: Vec<f64> = theta.iter().zip(dir).map(|(t, d)| t + step * d).collect();
        let mut g = vec![0.0; x.len()];
        let f = objective
            .evaluate(&x, &mut g)
            .map_err(|e| OptimError::Objective(e.to_string()))?;
        *evals += 1;
        let ok = f.is_finite() && g.iter().all(|v| v.is_finite());
        Ok(Trial {
            step,
            loss: if ok { f } else { f64::NAN },
            dir_deriv: if ok { dot(&g, dir) } else { f64::NAN },
            theta: x,
            grad: g,
        })
    };
    let armijo_fails =
        |t: &Trial| t.loss.is_nan() || t.loss > loss0 + params.c1 * t.step * dir_deriv0;
    let curvature_holds = |t: &Trial| t.dir_deriv.abs() <= -params.c2 * dir_deriv0;
    let accept = |t: Trial| Accepted {
        step: t.step,
        loss: t.loss,
        theta: t.theta,
        grad: t.grad,
        dir_deriv: t.dir_deriv,
    };

    let mut prev = Trial {
        step: 0.0,
        loss: loss0,
        dir_deriv: dir_deriv0,
        theta: theta.to_vec(),
        grad: Vec::new(),
    };
    let mut step = step0;
    let (mut lo, mut hi);
    loop {
        if evals >= params.max_evals {
            return Ok(Outcome {
                accepted: None,
                evals,
            });
        }
        let cur = eval(step, &mut evals)?;
        if armijo_fails(&cur) || (evals > 1 && cur.loss >= prev.loss) {
            lo = prev;
            hi = cur;
            break;
        }
        if curvature_holds(&cur) {
            return Ok(Outcome {
                accepted: Some(accept(cur)),
                evals,
            });
        }
        if cur.dir_deriv >= 0.0 {
            hi = prev;
            lo = cur;
            break;
        }
        let min_step = cur.step + 0.01 * (cur.step - prev.step);
        let max_step = cur.step * 10.0;
        step = cubic_interpolate(
            (prev.step, prev.loss, prev.dir_deriv),
            (cur.step, cur.loss, cur.dir_deriv),
            (min_step, max_step),
        );
        prev = cur;
    }

    // zoom: `lo` satisfies sufficient decrease and has the lower loss
    while evals < params.max_evals {
        let (a, b) = if lo.step <= hi.step {
            (lo.step, hi.step)
        } else {
            (hi.step, lo.step)
        };
        let width = b - a;
        if width <= f64::EPSILON * b.abs().max(1e-300) {
            break;
        }
        let mut t = if hi.loss.is_finite() {
            cubic_interpolate(
                (lo.step, lo.loss, lo.dir_deriv),
                (hi.step, hi.loss, hi.dir_deriv),
                (a, b),
            )
        } else {
            0.5 * (a + b)
        };
        // keep away from the bracket ends
        let margin = 0.1 * width;
        if t - a < margin || b - t < margin {
            t = 0.5 * (a + b);
        }
        let cur = eval(t, &mut evals)?;
        if armijo_fails(&cur) || cur.loss >= lo.loss {
            hi = cur;
        } else {
            if curvature_holds(&cur) {
                return Ok(Outcome {
                    accepted: Some(accept(cur)),
                    evals,
                });
            }
            if cur.dir_deriv * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(Outcome {
        accepted: None,
        evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_recovers_quadratic_minimum() {
        // f = (x - 2)^2
        let f = |x: f64| ((x - 2.0).powi(2), 2.0 * (x - 2.0));
        let (f0, g0) = f(0.0);
        let (f1, g1) = f(0.5);
        let x = cubic_interpolate((0.0, f0, g0), (0.5, f1, g1), (0.0, 10.0));
        assert!((x - 2.0).abs() < 1e-12);
        let x = cubic_interpolate((0.5, f1, g1), (0.0, f0, g0), (0.0, 10.0));
        assert!((x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_clamps_and_falls_back() {
        let x = cubic_interpolate((0.0, 0.0, -1.0), (1.0, -1.0, -1.0), (1.01, 10.0));
        assert!((1.01..=10.0).contains(&x));
        let nan = cubic_interpolate((0.0, 0.0, -1.0), (1.0, f64::NAN, f64::NAN), (0.0, 1.0));
        assert_eq!(nan, 0.5);
    }
}
