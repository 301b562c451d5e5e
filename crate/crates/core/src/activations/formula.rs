//! Activation formulas written once over an abstract number type.
//!
//! The same code evaluates on tape jets ([`Jet2`]), on plain Taylor series
//! for the batched engine, and on `f64`.

use crate::autodiff::taylor::{Real, Taylor};
use crate::autodiff::{Jet2, Scalar};

use super::{ActivationError, ActivationKind};

/// Arithmetic on activation coefficients (input-independent quantities).
pub trait CoefArith: Clone {
    fn neg(&self) -> Self;
    fn square(&self) -> Self;
    fn recip(&self) -> Self;
    fn scale_f64(&self, c: f64) -> Self;
}

/// Arithmetic on the activation argument.
pub trait ActArith: Clone {
    type Coef: CoefArith;

    fn mul(&self, rhs: &Self) -> Self;
    fn scale(&self, c: &Self::Coef) -> Self;
    fn scale_f64(&self, c: f64) -> Self;
    fn add_f64(&self, c: f64) -> Self;
    fn square(&self) -> Self;
    fn exp(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tanh(&self) -> Self;
}

impl ActArith for f64 {
    type Coef = f64;
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn scale(&self, c: &f64) -> Self {
        self * c
    }
    fn scale_f64(&self, c: f64) -> Self {
        self * c
    }
    fn add_f64(&self, c: f64) -> Self {
        self + c
    }
    fn square(&self) -> Self {
        self * self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
}

impl<'t> CoefArith for Scalar<'t> {
    fn neg(&self) -> Self {
        -*self
    }
    fn square(&self) -> Self {
        Scalar::square(*self)
    }
    fn recip(&self) -> Self {
        Scalar::recip(*self)
    }
    fn scale_f64(&self, c: f64) -> Self {
        *self * c
    }
}

impl<'t> ActArith for Jet2<'t> {
    type Coef = Scalar<'t>;
    fn mul(&self, rhs: &Self) -> Self {
        *self * *rhs
    }
    fn scale(&self, c: &Scalar<'t>) -> Self {
        Jet2::scale(self, *c)
    }
    fn scale_f64(&self, c: f64) -> Self {
        Jet2::scale_f64(self, c)
    }
    fn add_f64(&self, c: f64) -> Self {
        Jet2::add_f64(self, c)
    }
    fn square(&self) -> Self {
        Jet2::square(self)
    }
    fn exp(&self) -> Self {
        Jet2::exp(self)
    }
    fn sin(&self) -> Self {
        Jet2::sin(self)
    }
    fn cos(&self) -> Self {
        Jet2::cos(self)
    }
    fn tanh(&self) -> Self {
        Jet2::tanh(self)
    }
}

impl<T: Real> CoefArith for T {
    fn neg(&self) -> Self {
        -*self
    }
    fn square(&self) -> Self {
        *self * *self
    }
    fn recip(&self) -> Self {
        Real::recip(*self)
    }
    fn scale_f64(&self, c: f64) -> Self {
        Real::scale(*self, c)
    }
}

impl<T: Real, const N: usize> ActArith for Taylor<T, N> {
    type Coef = T;
    fn mul(&self, rhs: &Self) -> Self {
        Taylor::mul(self, rhs)
    }
    fn scale(&self, c: &T) -> Self {
        Taylor::scale(self, *c)
    }
    fn scale_f64(&self, c: f64) -> Self {
        Taylor::scale_f64(self, c)
    }
    fn add_f64(&self, c: f64) -> Self {
        Taylor::add_f64(self, c)
    }
    fn square(&self) -> Self {
        Taylor::square(self)
    }
    fn exp(&self) -> Self {
        Taylor::exp(self)
    }
    fn sin(&self) -> Self {
        self.sin_cos().0
    }
    fn cos(&self) -> Self {
        self.sin_cos().1
    }
    fn tanh(&self) -> Self {
        Taylor::tanh(self)
    }
}

/// Physicists' Hermite polynomial `H_n`, `n ∈ 1..=4`.
pub fn hermite_poly<A: ActArith>(n: u8, x: &A) -> Result<A, ActivationError> {
    let x2 = || x.square();
    Ok(match n {
        1 => x.scale_f64(2.0),
        2 => x2().scale_f64(4.0).add_f64(-2.0),
        3 => x.mul(&x2().scale_f64(8.0).add_f64(-12.0)),
        4 => {
            let s = x2();
            s.mul(&s.scale_f64(16.0).add_f64(-48.0)).add_f64(12.0)
        }
        _ => return Err(ActivationError::HermiteOrder(n)),
    })
}

/// `exp(-x^2 / (2 σ^2))`
fn gauss_envelope<A: ActArith>(x: &A, sigma: &A::Coef) -> A {
    let k = sigma.square().recip().scale_f64(-0.5);
    x.square().scale(&k).exp()
}

/// `exp(-α x^2)`
fn alpha_envelope<A: ActArith>(x: &A, alpha: &A::Coef) -> A {
    x.square().scale(&alpha.neg()).exp()
}

/// Evaluates `ψ(x)` for `kind` with *effective* (post-softplus) coefficients
/// ordered as [`ActivationKind::coefficients`].
pub fn psi<A: ActArith>(kind: ActivationKind, coefs: &[A::Coef], x: &A) -> A {
    debug_assert_eq!(coefs.len(), kind.coefficients().len());
    match kind {
        ActivationKind::Tanh => x.tanh(),
        ActivationKind::SoftMexTanh => {
            let (alpha, beta, gamma) = (&coefs[0], &coefs[1], &coefs[2]);
            let hat = x.square().scale(&gamma.neg()).add_f64(1.0);
            x.scale(beta)
                .tanh()
                .mul(&hat)
                .mul(&alpha_envelope(x, alpha))
        }
        ActivationKind::SoftMorTanh => {
            let (omega, sigma, beta) = (&coefs[0], &coefs[1], &coefs[2]);
            x.scale(omega)
                .cos()
                .mul(&gauss_envelope(x, sigma))
                .mul(&x.scale(beta).tanh())
        }
        ActivationKind::SoftGaussTanh => {
            let (alpha, beta) = (&coefs[0], &coefs[1]);
            x.scale(beta).tanh().mul(&alpha_envelope(x, alpha))
        }
        ActivationKind::SoftGaborTanh => {
            let (sigma, omega, beta) = (&coefs[0], &coefs[1], &coefs[2]);
            x.scale(beta)
                .tanh()
                .mul(&gauss_envelope(x, sigma))
                .mul(&x.scale(omega).cos())
        }
        ActivationKind::SoftHerTanh(n) => {
            let (alpha, beta) = (&coefs[0], &coefs[1]);
            let h = hermite_poly(n, x).expect("hermite order validated at construction");
            x.scale(beta).tanh().mul(&h).mul(&alpha_envelope(x, alpha))
        }
    }
}
