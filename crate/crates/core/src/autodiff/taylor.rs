//! Plain-value forward-mode number types used by the batched engine.
//!
//! [`Taylor`] is a truncated univariate Taylor series; [`Dual`] carries first
//! derivatives with respect to a small fixed set of coefficients. Nesting them
//! gives every derivative of an activation with respect to its input together
//! with the sensitivity of each derivative to the activation's coefficients.

use std::ops::{Add, Mul, Neg, Sub};

/// Scalar field operations shared by `f64` and [`Dual`].
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;
    fn scale(self, c: f64) -> Self;
    fn exp(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn tanh(self) -> Self;
    fn recip(self) -> Self;

    /// Number of tracked partials.
    const PARTIALS: usize;
    fn partial(&self, i: usize) -> f64;
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }

    const PARTIALS: usize = 0;
    fn partial(&self, _i: usize) -> f64 {
        0.0
    }
}

/// Value plus `K` first-order partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const K: usize> {
    pub v: f64,
    pub d: [f64; K],
}

impl<const K: usize> Dual<K> {
    pub fn constant(v: f64) -> Self {
        Dual { v, d: [0.0; K] }
    }

    /// Independent variable along slot `i`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut d = [0.0; K];
        d[i] = 1.0;
        Dual { v, d }
    }

    fn chain(self, v: f64, dv: f64) -> Self {
        let mut d = self.d;
        for x in d.iter_mut() {
            *x *= dv;
        }
        Dual { v, d }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..K {
            self.d[i] += rhs.d[i];
        }
        self
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..K {
            self.d[i] -= rhs.d[i];
        }
        self
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: Self) -> Self {
        let d = std::array::from_fn(|i| self.d[i] * rhs.v + self.v * rhs.d[i]);
        Dual {
            v: self.v * rhs.v,
            d,
        }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const K: usize> Real for Dual<K> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self.chain(self.v * c, c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.v.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, 1.0 - t * t)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }

    const PARTIALS: usize = K;
    #[inline]
    fn partial(&self, i: usize) -> f64 {
        self.d[i]
    }
}

/// Truncated Taylor series `Σ c_k h^k`, `k < N`, of a function of one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor<T, const N: usize>(pub [T; N]);

impl<T: Real, const N: usize> Taylor<T, N> {
    pub fn constant(c: T) -> Self {
        let mut a = [T::from_f64(0.0); N];
        a[0] = c;
        Taylor(a)
    }

    /// The identity function expanded at `x`.
    pub fn variable(x: f64) -> Self {
        let mut a = [T::from_f64(0.0); N];
        a[0] = T::from_f64(x);
        if N > 1 {
            a[1] = T::from_f64(1.0);
        }
        Taylor(a)
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> T {
        let mut fact = 1.0;
        for i in 2..=k {
            fact *= i as f64;
        }
        self.0[k].scale(fact)
    }

    pub fn scale(&self, c: T) -> Self {
        let mut out = self.0;
        for x in out.iter_mut() {
            *x = *x * c;
        }
        Taylor(out)
    }

    pub fn scale_f64(&self, c: f64) -> Self {
        let mut out = self.0;
        for x in out.iter_mut() {
            *x = x.scale(c);
        }
        Taylor(out)
    }

    pub fn add_f64(&self, c: f64) -> Self {
        let mut out = self.0;
        out[0] = out[0] + T::from_f64(c);
        Taylor(out)
    }

    pub fn square(&self) -> Self {
        self.mul(self)
    }

    #[inline]
    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [T::from_f64(0.0); N];
        for k in 0..N {
            let mut acc = a[0] * b[k];
            for j in 1..=k {
                acc = acc + a[j] * b[k - j];
            }
            out[k] = acc;
        }
        Taylor(out)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        Taylor(std::array::from_fn(|k| self.0[k] + rhs.0[k]))
    }

    pub fn exp(&self) -> Self {
        let a = &self.0;
        let mut e = [T::from_f64(0.0); N];
        e[0] = a[0].exp();
        for k in 1..N {
            let mut acc = a[1] * e[k - 1];
            for j in 2..=k {
                acc = acc + a[j].scale(j as f64) * e[k - j];
            }
            e[k] = acc.scale(1.0 / k as f64);
        }
        Taylor(e)
    }

    pub fn sin_cos(&self) -> (Self, Self) {
        let a = &self.0;
        let mut s = [T::from_f64(0.0); N];
        let mut c = [T::from_f64(0.0); N];
        (s[0], c[0]) = a[0].sin_cos();
        for k in 1..N {
            let mut sa = a[1] * c[k - 1];
            let mut ca = a[1] * s[k - 1];
            for j in 2..=k {
                let ja = a[j].scale(j as f64);
                sa = sa + ja * c[k - j];
                ca = ca + ja * s[k - j];
            }
            let inv = 1.0 / k as f64;
            s[k] = sa.scale(inv);
            c[k] = ca.scale(-inv);
        }
        (Taylor(s), Taylor(c))
    }

    pub fn tanh(&self) -> Self {
        // t' = (1 - t^2) a'; carry s = 1 - t^2 alongside
        let a = &self.0;
        let mut t = [T::from_f64(0.0); N];
        let mut s = [T::from_f64(0.0); N];
        t[0] = a[0].tanh();
        s[0] = T::from_f64(1.0) - t[0] * t[0];
        for k in 1..N {
            let mut acc = a[1] * s[k - 1];
            for j in 2..=k {
                acc = acc + a[j].scale(j as f64) * s[k - j];
            }
            t[k] = acc.scale(1.0 / k as f64);
            let mut sq = t[0] * t[k];
            for j in 1..=k {
                sq = sq + t[j] * t[k - j];
            }
            s[k] = -sq;
        }
        Taylor(t)
    }
}
