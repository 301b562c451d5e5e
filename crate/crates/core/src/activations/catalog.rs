//! Reference wavelet and wavelet-inspired functions the activations are built from.

use crate::autodiff::Jet2;

use super::formula::{hermite_poly, ActArith};
use super::ActivationError;

fn half_gauss<A: ActArith>(x: &A) -> A {
    x.square().scale_f64(-0.5).exp()
}

/// `(1 − x²) exp(−x²/2)`
pub fn mexican_hat<A: ActArith>(x: &A) -> A {
    x.square().scale_f64(-1.0).add_f64(1.0).mul(&half_gauss(x))
}

/// `cos(ω₀x) exp(−x²/2)`
pub fn morlet<A: ActArith>(x: &A, omega0: f64) -> A {
    x.scale_f64(omega0).cos().mul(&half_gauss(x))
}

/// `H_n(x) exp(−x²/2)`
pub fn hermite_function<A: ActArith>(n: u8, x: &A) -> Result<A, ActivationError> {
    Ok(hermite_poly(n, x)?.mul(&half_gauss(x)))
}

/// `−x exp(−x²/2)`
pub fn gaussian_wavelet<A: ActArith>(x: &A) -> A {
    x.scale_f64(-1.0).mul(&half_gauss(x))
}

/// `exp(−x²/2)`
pub fn gaussian<A: ActArith>(x: &A) -> A {
    half_gauss(x)
}

/// Real part of the Gabor wavelet, `exp(−x²/(2σ²)) cos(ω₀x)`.
pub fn gabor_real<A: ActArith>(x: &A, sigma: f64, omega0: f64) -> A {
    x.square()
        .scale_f64(-0.5 / (sigma * sigma))
        .exp()
        .mul(&x.scale_f64(omega0).cos())
}

/// `ln(1 + eˣ)` on a jet.
pub fn softplus_jet<'t>(x: &Jet2<'t>) -> Jet2<'t> {
    let v = x.val();
    let s = v.softplus();
    // σ(v) = 1 / (1 + e^{-v}), σ' = σ(1 − σ)
    let sig = (1.0 + (-v).exp()).recip();
    let dsig = sig * (1.0 - sig);
    x.chain(s, sig, dsig)
}

/// `tanh(x)` on any supported number type.
pub fn tanh<A: ActArith>(x: &A) -> A {
    x.tanh()
}
