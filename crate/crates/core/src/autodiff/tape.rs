//! Append-only scalar tape for reverse-mode gradients.
//!
//! Every primitive records its operands and the local partial derivatives at
//! creation time, so a single reverse sweep yields the gradient of any node
//! with respect to every registered parameter.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Deref, Div, Mul, Neg, Sub};

use super::AdError;

/// Primitive recorded on the tape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    Powi(i32),
    Exp,
    Ln,
    Sin,
    Cos,
    Tanh,
    Softplus,
    AddConst(f64),
    MulConst(f64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Square => "square",
            Op::Powi(_) => "powi",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Softplus => "softplus",
            Op::AddConst(_) => "add_const",
            Op::MulConst(_) => "mul_const",
        }
    }

    /// Primal value of the op. Shared by recording and replay so both agree bit for bit.
    fn eval(&self, a: f64, b: f64) -> f64 {
        match *self {
            Op::Leaf => unreachable!("leaves carry their own value"),
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
            Op::Neg => -a,
            Op::Square => a * a,
            Op::Powi(n) => a.powi(n),
            Op::Exp => a.exp(),
            Op::Ln => a.ln(),
            Op::Sin => a.sin(),
            Op::Cos => a.cos(),
            Op::Tanh => a.tanh(),
            Op::Softplus => softplus(a),
            Op::AddConst(c) => a + c,
            Op::MulConst(c) => a * c,
        }
    }
}

/// Threshold above which softplus switches to `x + ln(1 + e^-x)`.
pub const SOFTPLUS_BRANCH: f64 = 30.0;

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_BRANCH {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > SOFTPLUS_BRANCH {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    args: [u32; 2],
    partials: [f64; 2],
    value: f64,
}

/// Domain violation recorded by a checked primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainViolation {
    pub op: &'static str,
    pub node: usize,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<u32>>,
    domain: Cell<Option<DomainViolation>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.len())
            .field("parameters", &self.parameter_count())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parameter_count(&self) -> usize {
        self.params.borrow().len()
    }

    /// Node indices of the trainable leaves, in registration order.
    pub fn param_indices(&self) -> Vec<usize> {
        self.params.borrow().iter().map(|&i| i as usize).collect()
    }

    /// First domain violation recorded on this tape, if any.
    pub fn domain_error(&self) -> Option<DomainViolation> {
        self.domain.get()
    }

    /// Registers a trainable leaf.
    pub fn param(&self, value: f64) -> Scalar<'_> {
        let s = self.leaf(value);
        self.params.borrow_mut().push(s.index);
        s
    }

    /// Registers a frozen leaf. Backward never reports a gradient for it.
    pub fn constant(&self, value: f64) -> Scalar<'_> {
        self.leaf(value)
    }

    fn leaf(&self, value: f64) -> Scalar<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node {
            op: Op::Leaf,
            args: [index, index],
            partials: [0.0, 0.0],
            value,
        });
        Scalar {
            tape: self,
            index,
            value,
        }
    }

    fn push(&self, op: Op, args: [u32; 2], partials: [f64; 2], value: f64) -> Scalar<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let index = nodes.len() as u32;
        nodes.push(Node {
            op,
            args,
            partials,
            value,
        });
        Scalar {
            tape: self,
            index,
            value,
        }
    }

    fn flag_domain(&self, op: Op, node: u32) {
        if self.domain.get().is_none() {
            self.domain.set(Some(DomainViolation {
                op: op.name(),
                node: node as usize,
            }));
        }
    }

    /// Gradient of `loss` with respect to every registered parameter, in
    /// registration order.
    pub fn backward(&self, loss: Scalar<'_>) -> Result<GradientVector, AdError> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(AdError::ForeignNode);
        }
        if let Some(v) = self.domain.get() {
            return Err(AdError::Domain {
                op: v.op,
                node: v.node,
            });
        }
        let nodes = self.nodes.borrow();
        let root = loss.index as usize;
        let mut adjoint = vec![0.0; root + 1];
        adjoint[root] = 1.0;
        for i in (0..=root).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            if node.op == Op::Leaf {
                continue;
            }
            adjoint[node.args[0] as usize] += a * node.partials[0];
            adjoint[node.args[1] as usize] += a * node.partials[1];
        }
        let grads = self
            .params
            .borrow()
            .iter()
            .map(|&p| adjoint.get(p as usize).copied().unwrap_or(0.0))
            .collect();
        Ok(GradientVector(grads))
    }

    /// Recomputes every node from its operands. Leaves keep their stored value.
    pub fn replay(&self) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut values: Vec<f64> = Vec::with_capacity(nodes.len());
        for node in nodes.iter() {
            let v = match node.op {
                Op::Leaf => node.value,
                op => op.eval(values[node.args[0] as usize], values[node.args[1] as usize]),
            };
            values.push(v);
        }
        values
    }

    /// Stored primal values, in node order.
    pub fn values(&self) -> Vec<f64> {
        self.nodes.borrow().iter().map(|n| n.value).collect()
    }

    /// True when every node's operands precede it.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .all(|(i, n)| n.op == Op::Leaf || (n.args[0] as usize) < i && (n.args[1] as usize) < i)
    }
}

/// Per-parameter derivatives, aligned with registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradientVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Scalar<'t> {
    tape: &'t Tape,
    index: u32,
    value: f64,
}

impl fmt::Debug for Scalar<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(#{} = {})", self.index, self.value)
    }
}

impl<'t> Scalar<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index as usize
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Frozen constant on the same tape.
    pub fn constant(&self, value: f64) -> Scalar<'t> {
        self.tape.constant(value)
    }

    fn same_tape(&self, other: &Scalar<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "scalars from different tapes combined"
        );
    }

    fn unary(self, op: Op, partial: f64) -> Scalar<'t> {
        let v = op.eval(self.value, 0.0);
        self.tape
            .push(op, [self.index, self.index], [partial, 0.0], v)
    }

    fn binary(self, other: Scalar<'t>, op: Op, partials: [f64; 2]) -> Scalar<'t> {
        self.same_tape(&other);
        let v = op.eval(self.value, other.value);
        self.tape.push(op, [self.index, other.index], partials, v)
    }

    pub fn square(self) -> Scalar<'t> {
        self.unary(Op::Square, 2.0 * self.value)
    }

    pub fn powi(self, n: i32) -> Scalar<'t> {
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.value.powi(n - 1)
        };
        self.unary(Op::Powi(n), d)
    }

    pub fn exp(self) -> Scalar<'t> {
        let e = self.value.exp();
        self.unary(Op::Exp, e)
    }

    /// Natural log. A non-positive argument records a domain error on the tape.
    pub fn ln(self) -> Scalar<'t> {
        let out = self.unary(Op::Ln, 1.0 / self.value);
        if self.value <= 0.0 {
            self.tape.flag_domain(Op::Ln, out.index);
        }
        out
    }

    pub fn try_ln(self) -> Result<Scalar<'t>, AdError> {
        let out = self.ln();
        if self.value <= 0.0 {
            return Err(AdError::Domain {
                op: "ln",
                node: out.index(),
            });
        }
        Ok(out)
    }

    pub fn try_div(self, rhs: Scalar<'t>) -> Result<Scalar<'t>, AdError> {
        let out = self / rhs;
        if rhs.value == 0.0 {
            return Err(AdError::Domain {
                op: "div",
                node: out.index(),
            });
        }
        Ok(out)
    }

    pub fn recip(self) -> Scalar<'t> {
        self.constant(1.0) / self
    }

    pub fn sin(self) -> Scalar<'t> {
        self.unary(Op::Sin, self.value.cos())
    }

    pub fn cos(self) -> Scalar<'t> {
        self.unary(Op::Cos, -self.value.sin())
    }

    pub fn tanh(self) -> Scalar<'t> {
        let t = self.value.tanh();
        self.unary(Op::Tanh, 1.0 - t * t)
    }

    pub fn softplus(self) -> Scalar<'t> {
        self.unary(Op::Softplus, sigmoid(self.value))
    }

    pub fn add_const(self, c: f64) -> Scalar<'t> {
        self.unary(Op::AddConst(c), 1.0)
    }

    pub fn mul_const(self, c: f64) -> Scalar<'t> {
        self.unary(Op::MulConst(c), c)
    }
}

impl<'t> Add for Scalar<'t> {
    type Output = Scalar<'t>;
    fn add(self, rhs: Scalar<'t>) -> Scalar<'t> {
        self.binary(rhs, Op::Add, [1.0, 1.0])
    }
}

impl<'t> Sub for Scalar<'t> {
    type Output = Scalar<'t>;
    fn sub(self, rhs: Scalar<'t>) -> Scalar<'t> {
        self.binary(rhs, Op::Sub, [1.0, -1.0])
    }
}

impl<'t> Mul for Scalar<'t> {
    type Output = Scalar<'t>;
    fn mul(self, rhs: Scalar<'t>) -> Scalar<'t> {
        self.binary(rhs, Op::Mul, [rhs.value, self.value])
    }
}

impl<'t> Div for Scalar<'t> {
    type Output = Scalar<'t>;
    fn div(self, rhs: Scalar<'t>) -> Scalar<'t> {
        let inv = 1.0 / rhs.value;
        let out = self.binary(rhs, Op::Div, [inv, -self.value * inv * inv]);
        if rhs.value == 0.0 {
            self.tape.flag_domain(Op::Div, out.index);
        }
        out
    }
}

impl<'t> Neg for Scalar<'t> {
    type Output = Scalar<'t>;
    fn neg(self) -> Scalar<'t> {
        self.unary(Op::Neg, -1.0)
    }
}

impl<'t> Add<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn add(self, rhs: f64) -> Scalar<'t> {
        self.add_const(rhs)
    }
}

impl<'t> Sub<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn sub(self, rhs: f64) -> Scalar<'t> {
        self.add_const(-rhs)
    }
}

impl<'t> Mul<f64> for Scalar<'t> {
    type Output = Scalar<'t>;
    fn mul(self, rhs: f64) -> Scalar<'t> {
        self.mul_const(rhs)
    }
}

impl<'t> Add<Scalar<'t>> for f64 {
    type Output = Scalar<'t>;
    fn add(self, rhs: Scalar<'t>) -> Scalar<'t> {
        rhs.add_const(self)
    }
}

impl<'t> Sub<Scalar<'t>> for f64 {
    type Output = Scalar<'t>;
    fn sub(self, rhs: Scalar<'t>) -> Scalar<'t> {
        (-rhs).add_const(self)
    }
}

impl<'t> Mul<Scalar<'t>> for f64 {
    type Output = Scalar<'t>;
    fn mul(self, rhs: Scalar<'t>) -> Scalar<'t> {
        rhs.mul_const(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn param_registration() {
        let t = Tape::new();
        let a = t.param(0.3);
        assert_eq!(a.value(), 0.3);
        let b = t.param(1.0);
        assert_eq!(t.parameter_count(), 2);
        let g = t.backward(a + b).unwrap();
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn identity_gradient() {
        let t = Tape::new();
        let th = t.param(0.7);
        assert_eq!(t.backward(th).unwrap().0, vec![1.0]);
    }

    #[test]
    fn product_rule() {
        let t = Tape::new();
        let a = t.param(2.0);
        let b = t.param(3.0);
        assert_eq!(t.backward(a * b).unwrap().0, vec![3.0, 2.0]);
    }

    #[test]
    fn tanh_squared_stationary_at_zero() {
        let t = Tape::new();
        let th = t.param(0.0);
        let g = t.backward(th.tanh().square()).unwrap();
        assert_eq!(g.0, vec![0.0]);
    }

    #[test]
    fn primitive_values() {
        let t = Tape::new();
        assert_relative_eq!(
            t.constant(0.0).softplus().value(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(t.constant(0.0).tanh().value(), 0.0);
        assert_relative_eq!(
            t.constant(1.0).exp().value(),
            std::f64::consts::E,
            epsilon = 1e-15
        );
        assert_eq!(t.constant(3.0).powi(3).value(), 27.0);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        let t = Tape::new();
        let x = t.param(800.0);
        let y = x.softplus();
        assert_eq!(y.value(), 800.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.0, vec![1.0]);
        assert!(softplus(-40.0) > 0.0 && softplus(-40.0) < 1e-17);
    }

    #[test]
    fn softplus_inverse_round_trip() {
        for y in [1e-3, 0.5, 1.0, 3.0, 5.0, 40.0] {
            assert_relative_eq!(softplus(softplus_inverse(y)), y, max_relative = 1e-12);
        }
    }

    #[test]
    fn unreachable_parameter_gets_zero() {
        let t = Tape::new();
        let a = t.param(1.5);
        let _b = t.param(2.5);
        let g = t.backward(a.sin()).unwrap();
        assert_eq!(g.0, vec![1.5f64.cos(), 0.0]);
    }

    #[test]
    fn frozen_leaves_are_not_parameters() {
        let t = Tape::new();
        let a = t.param(2.0);
        let c = t.constant(5.0);
        let g = t.backward(a * c).unwrap();
        assert_eq!(g.0, vec![5.0]);
    }

    #[test]
    fn division_by_zero_is_a_domain_error() {
        let t = Tape::new();
        let a = t.param(1.0);
        let z = t.constant(0.0);
        let err = a.try_div(z).unwrap_err();
        assert!(matches!(err, AdError::Domain { op: "div", .. }));
        let q = a / z;
        let err = t.backward(q).unwrap_err();
        assert_eq!(err.to_string(), "domain error in div at node 2");
    }

    #[test]
    fn ln_of_nonpositive_is_a_domain_error() {
        let t = Tape::new();
        let a = t.param(-1.0);
        match a.try_ln() {
            Err(AdError::Domain { op, node }) => {
                assert_eq!(op, "ln");
                assert_eq!(node, 1);
            }
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn foreign_loss_rejected() {
        let t1 = Tape::new();
        let t2 = Tape::new();
        let a = t2.param(1.0);
        assert!(matches!(t1.backward(a), Err(AdError::ForeignNode)));
    }

    #[test]
    fn replay_is_bit_exact() {
        let t = Tape::new();
        let a = t.param(0.37);
        let b = t.param(-1.2);
        let c = (a * b).exp() + (a / b).tanh() - b.softplus() * a.sin().cos() + a.powi(3);
        let _ = (c - 2.0).square() * 0.5;
        assert!(t.is_topologically_ordered());
        let stored = t.values();
        let replayed = t.replay();
        assert_eq!(stored.len(), replayed.len());
        for (s, r) in stored.iter().zip(&replayed) {
            assert_eq!(s.to_bits(), r.to_bits());
        }
    }
}
