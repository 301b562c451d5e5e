//! Batched forward-over-reverse evaluation of an [`MlpModel`].
//!
//! A batch of `P` points is propagated as a stack of channel matrices: the
//! value, selected first derivatives `∂/∂x_d` and selected pure second
//! derivatives `∂²/∂x_d²`. Every matrix has `P` rows, so a dense layer is one
//! GEMM over `C·P` rows. Mixed second derivatives are never needed by the
//! supported residuals and are not carried.
//!
//! For an elementwise `a = ψ(z)` the channels transform as
//!
//! ```text
//! a     = ψ(z)
//! a_d   = ψ'(z) z_d
//! a_dd  = ψ''(z) z_d² + ψ'(z) z_dd
//! ```
//!
//! and the backward pass is the exact adjoint of that map, including the
//! sensitivities of `ψ, ψ', ψ''` to the activation coefficients. The results
//! agree with the tape path ([`super::BoundMlp`]) to rounding.

use crate::activations::psi;
use crate::activations::ActivationKind;
use crate::autodiff::sigmoid;
use crate::autodiff::taylor::{Dual, Real, Taylor};

use super::{MlpModel, NetworkError};

/// Max coefficient count of any activation.
const NC: usize = 3;

/// Which derivative channels travel with the value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Channels {
    dim: usize,
    first: Vec<usize>,
    second: Vec<usize>,
}

impl Channels {
    /// `first`: directions with a `∂/∂x_d` channel; `second`: directions
    /// with a `∂²/∂x_d²` channel (each must also appear in `first`).
    pub fn new(dim: usize, first: &[usize], second: &[usize]) -> Result<Self, NetworkError> {
        let bad = |msg: String| Err(NetworkError::Config(msg));
        if !(1..=3).contains(&dim) {
            return bad(format!("channel dim {dim} out of range"));
        }
        for (i, &d) in first.iter().enumerate() {
            if d >= dim || first[..i].contains(&d) {
                return bad(format!("invalid first-derivative direction {d}"));
            }
        }
        for (i, &d) in second.iter().enumerate() {
            if !first.contains(&d) || second[..i].contains(&d) {
                return bad(format!("invalid second-derivative direction {d}"));
            }
        }
        Ok(Channels {
            dim,
            first: first.to_vec(),
            second: second.to_vec(),
        })
    }

    pub fn value_only(dim: usize) -> Self {
        Channels {
            dim,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    /// Highest derivative order carried.
    pub fn order(&self) -> usize {
        if !self.second.is_empty() {
            2
        } else if !self.first.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn first_channel(&self, dir: usize) -> Option<usize> {
        self.first.iter().position(|&d| d == dir).map(|i| 1 + i)
    }

    pub fn second_channel(&self, dir: usize) -> Option<usize> {
        self.second
            .iter()
            .position(|&d| d == dir)
            .map(|i| 1 + self.first.len() + i)
    }

    /// `(second channel, matching first channel)` pairs.
    fn second_pairs(&self) -> Vec<(usize, usize)> {
        self.second
            .iter()
            .map(|&d| {
                (
                    self.second_channel(d).unwrap(),
                    self.first_channel(d).unwrap(),
                )
            })
            .collect()
    }
}

#[derive(Debug, Default)]
struct LayerCache {
    /// Pre-activation `Z`, `C·P × fan_out`.
    pre: Vec<f64>,
    /// `ψ^(1..=order+1)(z)` per value element.
    deriv: Vec<f64>,
    /// `∂ψ^(k)/∂c`, `k = 0..=order`, per value element, stride `NC`.
    coef: Vec<f64>,
}

/// Reusable buffers for batched evaluation.
#[derive(Debug)]
pub struct BatchEngine {
    channels: Channels,
    points: usize,
    /// `acts[l]` is the input of layer `l`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
    grad_a: Vec<f64>,
    grad_z: Vec<f64>,
}

impl BatchEngine {
    pub fn new(channels: Channels) -> Self {
        BatchEngine {
            channels,
            points: 0,
            acts: Vec::new(),
            caches: Vec::new(),
            grad_a: Vec::new(),
            grad_z: Vec::new(),
        }
    }

    pub fn channels(&self) -> &Channels {
        &self.channels
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Position of `(channel, point, output)` in [`Self::output`] and in
    /// the adjoint passed to [`Self::backward`].
    pub fn index(&self, channel: usize, point: usize, k: usize, out_dim: usize) -> usize {
        (channel * self.points + point) * out_dim + k
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Propagates `points` input rows (`coords`, row-major `points × dim`).
    pub fn forward(
        &mut self,
        model: &MlpModel,
        coords: &[f64],
        points: usize,
    ) -> Result<&[f64], NetworkError> {
        let dim = self.channels.dim;
        if model.in_dim() != dim {
            return Err(NetworkError::InputDim {
                expected: model.in_dim(),
                got: dim,
            });
        }
        if coords.len() != points * dim {
            return Err(NetworkError::InputDim {
                expected: points * dim,
                got: coords.len(),
            });
        }
        let c = self.channels.count();
        let layers = model.layers();
        self.points = points;
        self.acts.resize_with(layers.len() + 1, Vec::new);
        self.caches.resize_with(layers.len(), LayerCache::default);

        let input = &mut self.acts[0];
        input.clear();
        input.resize(c * points * dim, 0.0);
        input[..points * dim].copy_from_slice(coords);
        for (i, &d) in self.channels.first.iter().enumerate() {
            let base = (1 + i) * points * dim;
            for p in 0..points {
                input[base + p * dim + d] = 1.0;
            }
        }

        for (l, layer) in layers.iter().enumerate() {
            let rows = c * points;
            let (head, tail) = self.acts.split_at_mut(l + 1);
            let a_in = &head[l];
            let cache = &mut self.caches[l];
            cache.pre.clear();
            cache.pre.resize(rows * layer.fan_out, 0.0);
            // Z = A Wᵀ
            gemm(
                rows,
                layer.fan_in,
                layer.fan_out,
                a_in,
                (layer.fan_in, 1),
                &layer.weights,
                (1, layer.fan_in),
                &mut cache.pre,
                0.0,
            );
            for row in cache.pre[..points * layer.fan_out].chunks_exact_mut(layer.fan_out) {
                for (z, b) in row.iter_mut().zip(&layer.bias) {
                    *z += b;
                }
            }
            let a_out = &mut tail[0];
            a_out.clear();
            match layer.activation {
                None => a_out.extend_from_slice(&cache.pre),
                Some(idx) => {
                    a_out.resize(rows * layer.fan_out, 0.0);
                    let spec = &model.activations()[idx];
                    activate_forward(
                        spec.kind(),
                        &spec.effective_all(),
                        &self.channels,
                        points * layer.fan_out,
                        cache,
                        a_out,
                    );
                }
            }
        }
        Ok(self.output())
    }

    /// Accumulates `Σ d_out · ∂out/∂θ` into `grad` (registration order).
    ///
    /// Must follow a [`Self::forward`] with the same model.
    pub fn backward(
        &mut self,
        model: &MlpModel,
        d_out: &[f64],
        grad: &mut [f64],
    ) -> Result<(), NetworkError> {
        let expected = model.parameter_count();
        if grad.len() != expected {
            return Err(NetworkError::ParameterCount {
                expected,
                got: grad.len(),
            });
        }
        let c = self.channels.count();
        let points = self.points;
        let rows = c * points;
        let layers = model.layers();
        if self.acts.len() != layers.len() + 1 || d_out.len() != rows * model.out_dim() {
            return Err(NetworkError::Config(
                "backward called without a matching forward".into(),
            ));
        }

        let mut offsets = Vec::with_capacity(layers.len());
        let mut off = 0;
        for l in layers {
            offsets.push(off);
            off += l.parameter_count();
        }
        let mut coef_offsets = Vec::with_capacity(model.activations().len());
        for a in model.activations() {
            coef_offsets.push(off);
            off += a.trainable_count();
        }
        let mut coef_grad = vec![[0.0; NC]; model.activations().len()];

        self.grad_a.clear();
        self.grad_a.extend_from_slice(d_out);
        for (l, layer) in layers.iter().enumerate().rev() {
            let n_out = layer.fan_out;
            let cache = &self.caches[l];
            match layer.activation {
                None => std::mem::swap(&mut self.grad_z, &mut self.grad_a),
                Some(idx) => {
                    self.grad_z.clear();
                    self.grad_z.resize(rows * n_out, 0.0);
                    activate_backward(
                        &self.channels,
                        points * n_out,
                        cache,
                        &self.grad_a,
                        &mut self.grad_z,
                        &mut coef_grad[idx],
                    );
                }
            }
            let (gw, rest) = grad[offsets[l]..].split_at_mut(layer.weights.len());
            // dW += Z̄ᵀ A
            gemm(
                n_out,
                rows,
                layer.fan_in,
                &self.grad_z,
                (1, n_out),
                &self.acts[l],
                (layer.fan_in, 1),
                gw,
                1.0,
            );
            let gb = &mut rest[..n_out];
            for row in self.grad_z[..points * n_out].chunks_exact(n_out) {
                for (g, z) in gb.iter_mut().zip(row) {
                    *g += z;
                }
            }
            if l > 0 {
                self.grad_a.clear();
                self.grad_a.resize(rows * layer.fan_in, 0.0);
                // Ā = Z̄ W
                gemm(
                    rows,
                    n_out,
                    layer.fan_in,
                    &self.grad_z,
                    (n_out, 1),
                    &layer.weights,
                    (layer.fan_in, 1),
                    &mut self.grad_a,
                    0.0,
                );
            }
        }

        for ((spec, g), &start) in model
            .activations()
            .iter()
            .zip(&coef_grad)
            .zip(&coef_offsets)
        {
            let mut slot = start;
            for (k, (&raw, &trainable)) in spec.raw.iter().zip(&spec.trainable).enumerate() {
                if trainable {
                    grad[slot] += g[k] * sigmoid(raw);
                    slot += 1;
                }
            }
        }
        Ok(())
    }
}

/// Value-only predictions, row-major `points × out_dim`.
pub fn predict(model: &MlpModel, coords: &[f64]) -> Result<Vec<f64>, NetworkError> {
    let dim = model.in_dim();
    let points = coords.len() / dim.max(1);
    let mut engine = BatchEngine::new(Channels::value_only(dim));
    let mut out = Vec::with_capacity(points * model.out_dim());
    const CHUNK: usize = 1024;
    for chunk in coords.chunks(CHUNK * dim) {
        out.extend_from_slice(engine.forward(model, chunk, chunk.len() / dim)?);
    }
    Ok(out)
}

/// `C = A·B + beta·C` for row-major `C` (`m × n`); `a` and `b` are given with
/// (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |r: usize, cc: usize, rs: usize, cs: usize| (r - 1) * rs + (cc - 1) * cs + 1;
    assert!(c.len() >= m * n);
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    assert!(a.len() >= extent(m, k, rsa, csa));
    assert!(b.len() >= extent(k, n, rsb, csb));
    // SAFETY: the extents checked above cover every element dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn activate_forward(
    kind: ActivationKind,
    effective: &[f64],
    channels: &Channels,
    stride: usize,
    cache: &mut LayerCache,
    out: &mut [f64],
) {
    let order = channels.order();
    cache.deriv.clear();
    cache.deriv.resize(stride * (order + 1), 0.0);
    let soft = kind != ActivationKind::Tanh;
    cache.coef.clear();
    if soft {
        cache.coef.resize(stride * (order + 1) * NC, 0.0);
    }
    let duals: Vec<Dual<NC>> = effective
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i))
        .collect();
    match (soft, order) {
        (false, 0) => kernel::<f64, 2>(kind, effective, channels, stride, cache, out),
        (false, 1) => kernel::<f64, 3>(kind, effective, channels, stride, cache, out),
        (false, _) => kernel::<f64, 4>(kind, effective, channels, stride, cache, out),
        (true, 0) => kernel::<Dual<NC>, 2>(kind, &duals, channels, stride, cache, out),
        (true, 1) => kernel::<Dual<NC>, 3>(kind, &duals, channels, stride, cache, out),
        (true, _) => kernel::<Dual<NC>, 4>(kind, &duals, channels, stride, cache, out),
    }
}

/// `N = order + 2` Taylor terms give `ψ … ψ^(order+1)`.
fn kernel<T: Real, const N: usize>(
    kind: ActivationKind,
    coefs: &[T],
    channels: &Channels,
    stride: usize,
    cache: &mut LayerCache,
    out: &mut [f64],
) {
    let nd = N - 1;
    let z = &cache.pre;
    let firsts = channels.first.len();
    let pairs = channels.second_pairs();
    for e in 0..stride {
        let series = psi::<Taylor<T, N>>(kind, coefs, &Taylor::variable(z[e]));
        let mut d = [T::from_f64(0.0); N];
        for (k, dk) in d.iter_mut().enumerate() {
            *dk = series.derivative(k);
        }
        let d1 = d[1].value();
        out[e] = d[0].value();
        for ch in 1..=firsts {
            let i = ch * stride + e;
            out[i] = d1 * z[i];
        }
        if N > 3 {
            let d2 = d[2].value();
            for &(s, f) in &pairs {
                let (is, i_f) = (s * stride + e, f * stride + e);
                out[is] = d2 * z[i_f] * z[i_f] + d1 * z[is];
            }
        }
        let deriv = &mut cache.deriv[e * nd..(e + 1) * nd];
        for k in 1..N {
            deriv[k - 1] = d[k].value();
        }
        if T::PARTIALS > 0 {
            let coef = &mut cache.coef[e * nd * NC..(e + 1) * nd * NC];
            for k in 0..nd {
                for c in 0..NC.min(T::PARTIALS) {
                    coef[k * NC + c] = d[k].partial(c);
                }
            }
        }
    }
}

fn activate_backward(
    channels: &Channels,
    stride: usize,
    cache: &LayerCache,
    grad_a: &[f64],
    grad_z: &mut [f64],
    coef_grad: &mut [f64; NC],
) {
    let order = channels.order();
    let nd = order + 1;
    let z = &cache.pre;
    let firsts = channels.first.len();
    let pairs = channels.second_pairs();
    let with_coef = !cache.coef.is_empty();
    for e in 0..stride {
        let deriv = &cache.deriv[e * nd..(e + 1) * nd];
        let psi1 = deriv[0];
        let psi2 = if order >= 1 { deriv[1] } else { 0.0 };
        let psi3 = if order >= 2 { deriv[2] } else { 0.0 };
        let pb0 = grad_a[e];
        let mut pb1 = 0.0;
        let mut pb2 = 0.0;
        for ch in 1..=firsts {
            let i = ch * stride + e;
            pb1 += grad_a[i] * z[i];
            grad_z[i] = grad_a[i] * psi1;
        }
        for &(s, f) in &pairs {
            let (is, i_f) = (s * stride + e, f * stride + e);
            let gs = grad_a[is];
            pb1 += gs * z[is];
            pb2 += gs * z[i_f] * z[i_f];
            grad_z[i_f] += 2.0 * gs * psi2 * z[i_f];
            grad_z[is] = gs * psi1;
        }
        grad_z[e] = pb0 * psi1 + pb1 * psi2 + pb2 * psi3;
        if with_coef {
            let coef = &cache.coef[e * nd * NC..(e + 1) * nd * NC];
            let pb = [pb0, pb1, pb2];
            for (k, &w) in pb.iter().enumerate().take(nd) {
                for c in 0..NC {
                    coef_grad[c] += w * coef[k * NC + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationName;
    use crate::autodiff::{Jet2, Tape};
    use crate::network::{init_model, MlpConfig};

    fn model(name: &str, dim: usize, out: usize) -> MlpModel {
        let mut cfg =
            MlpConfig::new(dim, out, name.parse::<ActivationName>().unwrap()).with_shape(2, 5);
        cfg.seed = 11;
        let mut m = init_model(&cfg).unwrap();
        // move coefficients away from their symmetric start
        let mut theta = m.parameters();
        let n = theta.len();
        for (i, v) in theta[n - m.activations()[0].trainable_count()..]
            .iter_mut()
            .enumerate()
        {
            *v += 0.1 * (i as f64 + 1.0);
        }
        m.set_parameters(&theta).unwrap();
        m
    }

    #[test]
    fn channel_validation() {
        assert!(Channels::new(2, &[1], &[0]).is_err());
        assert!(Channels::new(2, &[0, 0], &[]).is_err());
        assert!(Channels::new(2, &[2], &[]).is_err());
        let ch = Channels::new(3, &[0, 1, 2], &[0, 1]).unwrap();
        assert_eq!(ch.count(), 6);
        assert_eq!(ch.second_channel(1), Some(5));
        assert_eq!(ch.first_channel(2), Some(3));
        assert_eq!(ch.order(), 2);
    }

    /// Batched channels and the gradient of a random linear functional of
    /// them agree with the tape path.
    fn compare_with_tape(name: &str, dim: usize, out: usize, first: &[usize], second: &[usize]) {
        let m = model(name, dim, out);
        let channels = Channels::new(dim, first, second).unwrap();
        let pts: Vec<Vec<f64>> = (0..3)
            .map(|p| {
                (0..dim)
                    .map(|d| 0.3 * p as f64 - 0.2 * d as f64 + 0.1)
                    .collect()
            })
            .collect();
        let coords: Vec<f64> = pts.iter().flatten().copied().collect();
        let mut engine = BatchEngine::new(channels.clone());
        let y = engine.forward(&m, &coords, pts.len()).unwrap().to_vec();
        let weights: Vec<f64> = (0..y.len())
            .map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3)
            .collect();
        let mut grad = vec![0.0; m.parameter_count()];
        engine.backward(&m, &weights, &mut grad).unwrap();

        let tape = Tape::new();
        let bound = m.bind(&tape);
        let mut loss = tape.constant(0.0);
        for (p, x) in pts.iter().enumerate() {
            let inputs: Vec<Jet2> = x
                .iter()
                .enumerate()
                .map(|(d, &v)| Jet2::input(&tape, v, d, dim).unwrap())
                .collect();
            let outs = bound.forward(&inputs).unwrap();
            for (k, o) in outs.iter().enumerate() {
                let mut pick = vec![(0usize, o.val())];
                for &d in first {
                    pick.push((channels.first_channel(d).unwrap(), o.grad(d)));
                }
                for &d in second {
                    pick.push((channels.second_channel(d).unwrap(), o.hess(d, d)));
                }
                for (ch, s) in pick {
                    let i = engine.index(ch, p, k, out);
                    assert!(
                        (y[i] - s.value()).abs() < 1e-12 * (1.0 + s.value().abs()),
                        "{name} ch {ch}"
                    );
                    loss = loss + s * weights[i];
                }
            }
        }
        let tape_grad = tape.backward(loss).unwrap();
        for (i, (a, b)) in grad.iter().zip(tape_grad.iter()).enumerate() {
            assert!(
                (a - b).abs() < 1e-10 * (1.0 + b.abs()),
                "{name} param {i}: {a} vs {b}"
            );
        }
    }

    #[test]
    fn matches_tape_for_every_activation() {
        for name in ActivationName::all() {
            let n = name.to_string();
            compare_with_tape(&n, 2, 1, &[0, 1], &[0, 1]);
            compare_with_tape(&n, 2, 1, &[1], &[]);
        }
    }

    #[test]
    fn matches_tape_in_three_dimensions() {
        compare_with_tape("softgabortanh", 3, 3, &[0, 1, 2], &[0, 1]);
        compare_with_tape("tanh", 3, 3, &[0, 1, 2], &[0, 1]);
        compare_with_tape("softmextanhw", 3, 2, &[], &[]);
    }

    #[test]
    fn predict_matches_forward_values() {
        let m = model("softher3tanh", 2, 1);
        let coords: Vec<f64> = (0..2100).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = predict(&m, &coords).unwrap();
        assert_eq!(y.len(), 1050);
        let tape = Tape::new();
        let bound = m.bind(&tape);
        for p in [0, 511, 1049] {
            let inputs = [
                Jet2::input(&tape, coords[2 * p], 0, 2).unwrap(),
                Jet2::input(&tape, coords[2 * p + 1], 1, 2).unwrap(),
            ];
            let v = bound.forward(&inputs).unwrap()[0].val().value();
            assert!((v - y[p]).abs() < 1e-13);
        }
    }
}
