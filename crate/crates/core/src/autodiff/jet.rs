//! Second-order forward jets whose components live on a reverse tape.
//!
//! A [`Jet2`] carries the value, gradient and (upper-triangular) Hessian of a
//! quantity with respect to up to three input directions. Each component is a
//! [`Scalar`] node, so parameter gradients of any derivative are available
//! through [`Tape::backward`].

use std::ops::{Add, Mul, Neg, Sub};

use super::tape::{Scalar, Tape};
use super::AdError;

pub const MAX_DIM: usize = 3;
const MAX_HESS: usize = MAX_DIM * (MAX_DIM + 1) / 2;

/// Position of `(i, j)` in the packed upper triangle.
pub fn hess_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

#[derive(Clone, Copy, Debug)]
pub struct Jet2<'t> {
    dim: usize,
    val: Scalar<'t>,
    // entries past `dim` / `dim*(dim+1)/2` are padding and never read
    grad: [Scalar<'t>; MAX_DIM],
    hess: [Scalar<'t>; MAX_HESS],
}

fn check_dim(dim: usize) -> Result<(), AdError> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(AdError::InvalidDim(dim))
    }
}

impl<'t> Jet2<'t> {
    /// Seeds an independent variable: unit gradient along `direction`, zero Hessian.
    pub fn input(
        tape: &'t Tape,
        value: f64,
        direction: usize,
        dim: usize,
    ) -> Result<Jet2<'t>, AdError> {
        check_dim(dim)?;
        if direction >= dim {
            return Err(AdError::DirectionOutOfRange { direction, dim });
        }
        let val = tape.constant(value);
        let zero = tape.constant(0.0);
        let one = tape.constant(1.0);
        let mut grad = [zero; MAX_DIM];
        grad[direction] = one;
        Ok(Jet2 {
            dim,
            val,
            grad,
            hess: [zero; MAX_HESS],
        })
    }

    /// A quantity that does not depend on the inputs.
    pub fn constant(value: Scalar<'t>, dim: usize) -> Result<Jet2<'t>, AdError> {
        check_dim(dim)?;
        let zero = value.constant(0.0);
        Ok(Jet2 {
            dim,
            val: value,
            grad: [zero; MAX_DIM],
            hess: [zero; MAX_HESS],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tape(&self) -> &'t Tape {
        self.val.tape()
    }

    pub fn val(&self) -> Scalar<'t> {
        self.val
    }

    pub fn grad(&self, i: usize) -> Scalar<'t> {
        assert!(
            i < self.dim,
            "gradient index {i} out of range for dim {}",
            self.dim
        );
        self.grad[i]
    }

    /// `∂²/∂x_i∂x_j`; `hess(i, j)` and `hess(j, i)` are the same node.
    pub fn hess(&self, i: usize, j: usize) -> Scalar<'t> {
        assert!(i < self.dim && j < self.dim, "hessian index out of range");
        self.hess[hess_index(self.dim, i, j)]
    }

    fn hess_len(&self) -> usize {
        self.dim * (self.dim + 1) / 2
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize, usize)> {
        let d = self.dim;
        (0..d).flat_map(move |i| (i..d).map(move |j| (hess_index(d, i, j), i, j)))
    }

    fn same_dim(&self, other: &Jet2<'t>) -> Result<(), AdError> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(AdError::DimMismatch {
                left: self.dim,
                right: other.dim,
            })
        }
    }

    fn map(&self, f: impl Fn(Scalar<'t>) -> Scalar<'t>) -> Jet2<'t> {
        let mut out = *self;
        out.val = f(self.val);
        for i in 0..self.dim {
            out.grad[i] = f(self.grad[i]);
        }
        for k in 0..self.hess_len() {
            out.hess[k] = f(self.hess[k]);
        }
        out
    }

    fn zip(&self, other: &Jet2<'t>, f: impl Fn(Scalar<'t>, Scalar<'t>) -> Scalar<'t>) -> Jet2<'t> {
        let mut out = *self;
        out.val = f(self.val, other.val);
        for i in 0..self.dim {
            out.grad[i] = f(self.grad[i], other.grad[i]);
        }
        for k in 0..self.hess_len() {
            out.hess[k] = f(self.hess[k], other.hess[k]);
        }
        out
    }

    pub fn try_add(&self, other: &Jet2<'t>) -> Result<Jet2<'t>, AdError> {
        self.same_dim(other)?;
        Ok(self.zip(other, |a, b| a + b))
    }

    pub fn try_sub(&self, other: &Jet2<'t>) -> Result<Jet2<'t>, AdError> {
        self.same_dim(other)?;
        Ok(self.zip(other, |a, b| a - b))
    }

    /// Product rule: `(fg)_ij = f_ij g + f_i g_j + f_j g_i + f g_ij`.
    pub fn try_mul(&self, other: &Jet2<'t>) -> Result<Jet2<'t>, AdError> {
        self.same_dim(other)?;
        let (f, g) = (self, other);
        let mut out = *self;
        out.val = f.val * g.val;
        for i in 0..self.dim {
            out.grad[i] = f.grad[i] * g.val + f.val * g.grad[i];
        }
        for (k, i, j) in self.pairs() {
            let mut h = f.hess[k] * g.val + f.val * g.hess[k];
            h = h + f.grad[i] * g.grad[j];
            h = h + f.grad[j] * g.grad[i];
            out.hess[k] = h;
        }
        Ok(out)
    }

    /// Multiplies every component by an input-independent scalar.
    pub fn scale(&self, c: Scalar<'t>) -> Jet2<'t> {
        self.map(|a| a * c)
    }

    pub fn scale_f64(&self, c: f64) -> Jet2<'t> {
        self.map(|a| a * c)
    }

    pub fn add_scalar(&self, c: Scalar<'t>) -> Jet2<'t> {
        let mut out = *self;
        out.val = self.val + c;
        out
    }

    pub fn add_f64(&self, c: f64) -> Jet2<'t> {
        let mut out = *self;
        out.val = self.val + c;
        out
    }

    /// `Σ w_k f_k + b` for input-independent weights and bias.
    pub fn affine(
        weights: &[Scalar<'t>],
        inputs: &[Jet2<'t>],
        bias: Scalar<'t>,
    ) -> Result<Jet2<'t>, AdError> {
        assert_eq!(weights.len(), inputs.len(), "affine arity mismatch");
        let first = inputs.first().ok_or(AdError::InvalidDim(0))?;
        let dim = first.dim;
        let mut acc = first.scale(weights[0]).add_scalar(bias);
        for (w, x) in weights.iter().zip(inputs).skip(1) {
            if x.dim != dim {
                return Err(AdError::DimMismatch {
                    left: dim,
                    right: x.dim,
                });
            }
            acc = acc.zip(x, |a, b| a + b * *w);
        }
        Ok(acc)
    }

    /// Chain rule for `h(f)` given `h(f)`, `h'(f)`, `h''(f)` as tape scalars:
    /// `u_i = h' f_i`, `u_ij = h'' f_i f_j + h' f_ij`.
    pub fn chain(&self, h0: Scalar<'t>, h1: Scalar<'t>, h2: Scalar<'t>) -> Jet2<'t> {
        let mut out = *self;
        out.val = h0;
        for i in 0..self.dim {
            out.grad[i] = h1 * self.grad[i];
        }
        for (k, i, j) in self.pairs() {
            out.hess[k] = h2 * self.grad[i] * self.grad[j] + h1 * self.hess[k];
        }
        out
    }

    pub fn exp(&self) -> Jet2<'t> {
        let e = self.val.exp();
        self.chain(e, e, e)
    }

    pub fn sin(&self) -> Jet2<'t> {
        let s = self.val.sin();
        let c = self.val.cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet2<'t> {
        let s = self.val.sin();
        let c = self.val.cos();
        self.chain(c, -s, -c)
    }

    pub fn tanh(&self) -> Jet2<'t> {
        let t = self.val.tanh();
        let d1 = 1.0 - t.square();
        let d2 = t * d1 * -2.0;
        self.chain(t, d1, d2)
    }

    pub fn square(&self) -> Jet2<'t> {
        let two = self.val.constant(2.0);
        self.chain(self.val.square(), self.val * 2.0, two)
    }

    pub fn powi(&self, n: i32) -> Jet2<'t> {
        let v = self.val;
        let h0 = v.powi(n);
        let h1 = v.powi(n - 1) * n as f64;
        let h2 = v.powi(n - 2) * (n as f64 * (n - 1) as f64);
        self.chain(h0, h1, h2)
    }

    pub fn recip(&self) -> Jet2<'t> {
        let r = self.val.recip();
        let r2 = r.square();
        self.chain(r, -r2, r2 * r * 2.0)
    }
}

impl<'t> Add for Jet2<'t> {
    type Output = Jet2<'t>;
    fn add(self, rhs: Jet2<'t>) -> Jet2<'t> {
        self.try_add(&rhs).expect("jet dimension mismatch")
    }
}

impl<'t> Sub for Jet2<'t> {
    type Output = Jet2<'t>;
    fn sub(self, rhs: Jet2<'t>) -> Jet2<'t> {
        self.try_sub(&rhs).expect("jet dimension mismatch")
    }
}

impl<'t> Mul for Jet2<'t> {
    type Output = Jet2<'t>;
    fn mul(self, rhs: Jet2<'t>) -> Jet2<'t> {
        self.try_mul(&rhs).expect("jet dimension mismatch")
    }
}

impl<'t> Neg for Jet2<'t> {
    type Output = Jet2<'t>;
    fn neg(self) -> Jet2<'t> {
        self.map(|a| -a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn packed_hessian_layout() {
        assert_eq!(hess_index(1, 0, 0), 0);
        assert_eq!(
            [
                hess_index(2, 0, 0),
                hess_index(2, 0, 1),
                hess_index(2, 1, 1)
            ],
            [0, 1, 2]
        );
        let d3: Vec<usize> = (0..3)
            .flat_map(|i| (i..3).map(move |j| hess_index(3, i, j)))
            .collect();
        assert_eq!(d3, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(hess_index(3, 2, 1), hess_index(3, 1, 2));
    }

    #[test]
    fn seeding() {
        let t = Tape::new();
        let x = Jet2::input(&t, 2.0, 0, 2).unwrap();
        assert_eq!(x.val().value(), 2.0);
        assert_eq!((x.grad(0).value(), x.grad(1).value()), (1.0, 0.0));
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            assert_eq!(x.hess(i, j).value(), 0.0);
        }
        let y = Jet2::input(&t, -1.5, 1, 2).unwrap();
        assert_eq!((y.grad(0).value(), y.grad(1).value()), (0.0, 1.0));
        assert_eq!(Jet2::input(&t, 0.0, 2, 3).unwrap().dim(), 3);
    }

    #[test]
    fn seeding_errors() {
        let t = Tape::new();
        assert!(matches!(
            Jet2::input(&t, 0.0, 2, 2),
            Err(AdError::DirectionOutOfRange {
                direction: 2,
                dim: 2
            })
        ));
        assert!(matches!(
            Jet2::input(&t, 0.0, 0, 4),
            Err(AdError::InvalidDim(4))
        ));
    }

    #[test]
    fn dim_mismatch() {
        let t = Tape::new();
        let a = Jet2::input(&t, 1.0, 0, 1).unwrap();
        let b = Jet2::input(&t, 1.0, 0, 2).unwrap();
        assert!(matches!(
            a.try_mul(&b),
            Err(AdError::DimMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn polynomial_calculus() {
        let t = Tape::new();
        let x = Jet2::input(&t, 3.0, 0, 1).unwrap();
        let y = x * x;
        assert_eq!(y.val().value(), 9.0);
        assert_eq!(y.grad(0).value(), 6.0);
        assert_eq!(y.hess(0, 0).value(), 2.0);
        let z = x.powi(3);
        assert_eq!(z.grad(0).value(), 27.0);
        assert_eq!(z.hess(0, 0).value(), 18.0);
    }

    #[test]
    fn sine_at_origin() {
        let t = Tape::new();
        let s = Jet2::input(&t, 0.0, 0, 1).unwrap().sin();
        assert_eq!(
            (s.val().value(), s.grad(0).value(), s.hess(0, 0).value()),
            (0.0, 1.0, 0.0)
        );
    }

    #[test]
    fn tanh_gauss_matches_finite_difference() {
        let f = |x: f64| x.tanh() * (-x * x / 2.0).exp();
        let t = Tape::new();
        let x = Jet2::input(&t, 1.0, 0, 1).unwrap();
        let y = x.tanh() * x.square().scale_f64(-0.5).exp();
        let h = 1e-5;
        let fd = (f(1.0 + h) - f(1.0 - h)) / (2.0 * h);
        assert_relative_eq!(y.grad(0).value(), fd, max_relative = 1e-7);
        assert_relative_eq!(y.val().value(), f(1.0), max_relative = 1e-15);
    }

    #[test]
    fn separable_field_derivatives() {
        // f(x, t) = sin(x) e^{-t}
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let xv: f64 = rng.gen_range(-3.0..3.0);
            let tv: f64 = rng.gen_range(0.0..2.0);
            let tape = Tape::new();
            let x = Jet2::input(&tape, xv, 0, 2).unwrap();
            let tt = Jet2::input(&tape, tv, 1, 2).unwrap();
            let f = x.sin() * (-tt).exp();
            let e = (-tv).exp();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * b.abs().max(1e-300) || a == b;
            assert!(close(f.grad(0).value(), xv.cos() * e));
            assert!(close(f.hess(0, 0).value(), -xv.sin() * e));
            assert!(close(f.grad(1).value(), -xv.sin() * e));
            assert!(close(f.hess(1, 1).value(), xv.sin() * e));
            assert!(close(f.hess(0, 1).value(), -xv.cos() * e));
        }
    }

    #[test]
    fn symmetric_entries_share_a_node() {
        let t = Tape::new();
        let x = Jet2::input(&t, 0.4, 0, 3).unwrap();
        let y = Jet2::input(&t, 0.9, 1, 3).unwrap();
        let z = Jet2::input(&t, 0.1, 2, 3).unwrap();
        let f = x * y * z;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.hess(i, j).index(), f.hess(j, i).index());
            }
        }
        assert_relative_eq!(f.hess(0, 1).value(), 0.1, max_relative = 1e-15);
        assert_relative_eq!(f.hess(1, 2).value(), 0.4, max_relative = 1e-15);
    }

    #[test]
    fn parameter_gradient_of_second_derivative() {
        // u = tanh(a x), u_xx = -2 a^2 tanh(ax)(1 - tanh^2(ax))
        let tape = Tape::new();
        let a = tape.param(0.8);
        let x = Jet2::input(&tape, 0.6, 0, 1).unwrap();
        let u = x.scale(a).tanh();
        let g = tape.backward(u.hess(0, 0)).unwrap();
        let uxx = |a: f64| {
            let th = (a * 0.6f64).tanh();
            -2.0 * a * a * th * (1.0 - th * th)
        };
        let h = 1e-5;
        let fd = (uxx(0.8 + h) - uxx(0.8 - h)) / (2.0 * h);
        assert_relative_eq!(g[0], fd, max_relative = 1e-7);
    }

    #[test]
    fn recip_and_affine() {
        let t = Tape::new();
        let x = Jet2::input(&t, 2.0, 0, 1).unwrap();
        let r = x.recip();
        assert_relative_eq!(r.val().value(), 0.5);
        assert_relative_eq!(r.grad(0).value(), -0.25);
        assert_relative_eq!(r.hess(0, 0).value(), 0.25);
        let w = [t.constant(3.0), t.constant(-1.0)];
        let a = Jet2::affine(&w, &[x, x.square()], t.constant(1.0)).unwrap();
        assert_relative_eq!(a.val().value(), 3.0);
        assert_relative_eq!(a.grad(0).value(), -1.0);
        assert_relative_eq!(a.hess(0, 0).value(), -2.0);
    }
}
