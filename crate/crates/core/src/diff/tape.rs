//! Scalar reverse-mode tape.
//!
//! Every node stores its value together with the local partial derivatives
//! with respect to its parents, computed eagerly during the forward pass.
//! The backward sweep is then a single pass over the node list in reverse
//! order, accumulating `adj[parent] += adj[node] * partial`.
//!
//! Fused nodes ([`Tape::dot`], [`Tape::lin`], [`Tape::custom`]) carry an
//! arbitrary number of parents, which keeps tapes for matrix-vector work short.
//!
//! ```
//! use deflearn_core::diff::Tape;
//!
//! let tape = Tape::new();
//! let x = tape.var(3.0);
//! let y = x * x;
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(y.value(), 9.0);
//! assert_eq!(grads.wrt(x), 6.0);
//! ```

use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{contract, Error, Result};

/// Operation tag recorded for every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Const,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    Offset,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Powi,
    Softplus,
    SmoothL1,
    Dot,
    Lin,
    Sum,
    Custom,
}

#[derive(Default)]
struct Nodes {
    value: Vec<f64>,
    op: Vec<Op>,
    // parents of node i live in parents[start[i]..start[i + 1]]
    start: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Nodes {
    fn push(&mut self, op: Op, value: f64, parents: &[(u32, f64)]) -> u32 {
        if self.start.is_empty() {
            self.start.push(0);
        }
        let id = self.value.len() as u32;
        self.value.push(value);
        self.op.push(op);
        for &(p, d) in parents {
            self.parents.push(p);
            self.partials.push(d);
        }
        self.start.push(self.parents.len() as u32);
        id
    }
}

/// A dynamic computation graph; rebuilt for every forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Nodes>,
}

/// Handle to a scalar node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
}

/// Read-only view of one recorded node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u32,
    pub payload: f64,
    pub op: Op,
    pub parents: Vec<u32>,
}

/// Adjoints of every node reachable from a backward root.
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.id as usize]
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let inner = Nodes {
            value: Vec::with_capacity(nodes),
            op: Vec::with_capacity(nodes),
            start: Vec::with_capacity(nodes + 1),
            parents: Vec::with_capacity(nodes * 2),
            partials: Vec::with_capacity(nodes * 2),
        };
        Self { nodes: RefCell::new(inner) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A differentiable leaf.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(Op::Leaf, value, &[])
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&x| self.var(x)).collect()
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.push(Op::Const, value, &[])
    }

    fn push(&self, op: Op, value: f64, parents: &[(u32, f64)]) -> Var<'_> {
        let id = self.nodes.borrow_mut().push(op, value, parents);
        Var { tape: self, id }
    }

    fn owns(&self, v: Var<'_>) -> bool {
        core::ptr::eq(self, v.tape)
    }

    /// `Σ xs[i] * ys[i]` as a single node.
    pub fn dot<'t>(&'t self, xs: &[Var<'t>], ys: &[Var<'t>]) -> Var<'t> {
        assert_eq!(xs.len(), ys.len(), "dot: length mismatch");
        let mut value = 0.0;
        let mut parents = Vec::with_capacity(xs.len() * 2);
        for (x, y) in xs.iter().zip(ys) {
            let (xv, yv) = (x.value(), y.value());
            value += xv * yv;
            parents.push((x.id, yv));
            parents.push((y.id, xv));
        }
        self.push(Op::Dot, value, &parents)
    }

    /// Affine combination `constant + Σ c_k * x_k` with fixed coefficients.
    pub fn lin<'t>(&'t self, terms: &[(Var<'t>, f64)], constant: f64) -> Var<'t> {
        let mut value = constant;
        let mut parents = Vec::with_capacity(terms.len());
        for &(x, c) in terms {
            value += c * x.value();
            parents.push((x.id, c));
        }
        self.push(Op::Lin, value, &parents)
    }

    pub fn sum<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let mut value = 0.0;
        let mut parents = Vec::with_capacity(xs.len());
        for x in xs {
            value += x.value();
            parents.push((x.id, 1.0));
        }
        self.push(Op::Sum, value, &parents)
    }

    pub fn mean<'t>(&'t self, xs: &[Var<'t>]) -> Var<'t> {
        let k = 1.0 / xs.len() as f64;
        let terms: Vec<_> = xs.iter().map(|&x| (x, k)).collect();
        self.lin(&terms, 0.0)
    }

    /// A node whose value and local partials are supplied by the caller.
    ///
    /// Used to splice externally differentiated blocks (network layers,
    /// closed-form Jacobians) into the graph.
    pub fn custom<'t>(&'t self, parents: &[Var<'t>], value: f64, partials: &[f64]) -> Var<'t> {
        assert_eq!(parents.len(), partials.len(), "custom: length mismatch");
        let ps: Vec<_> = parents.iter().zip(partials).map(|(p, &d)| (p.id, d)).collect();
        self.push(Op::Custom, value, &ps)
    }

    pub fn node(&self, v: Var<'_>) -> Node {
        let n = self.nodes.borrow();
        let i = v.id as usize;
        let (a, b) = (n.start[i] as usize, n.start[i + 1] as usize);
        Node { id: v.id, payload: n.value[i], op: n.op[i], parents: n.parents[a..b].to_vec() }
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        if !self.owns(root) {
            return Err(contract!("backward root belongs to a different tape"));
        }
        if !root.value().is_finite() {
            return Err(Error::NonFinite(alloc::format!("backward root payload {}", root.value())));
        }
        let n = self.nodes.borrow();
        let r = root.id as usize;
        let mut adj = alloc::vec![0.0; n.value.len()];
        adj[r] = 1.0;
        for i in (0..=r).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let (a, b) = (n.start[i] as usize, n.start[i + 1] as usize);
            for k in a..b {
                adj[n.parents[k] as usize] += g * n.partials[k];
            }
        }
        Ok(Gradients { adj })
    }
}

impl<'t> Var<'t> {
    pub fn value(self) -> f64 {
        self.tape.nodes.borrow().value[self.id as usize]
    }

    pub fn id(self) -> u32 {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn op(self) -> Op {
        self.tape.nodes.borrow().op[self.id as usize]
    }

    fn unary(self, op: Op, value: f64, d: f64) -> Self {
        self.tape.push(op, value, &[(self.id, d)])
    }

    pub fn exp(self) -> Self {
        let e = libm::exp(self.value());
        self.unary(Op::Exp, e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.value();
        self.unary(Op::Ln, libm::log(x), 1.0 / x)
    }

    pub fn sin(self) -> Self {
        let x = self.value();
        self.unary(Op::Sin, libm::sin(x), libm::cos(x))
    }

    pub fn cos(self) -> Self {
        let x = self.value();
        self.unary(Op::Cos, libm::cos(x), -libm::sin(x))
    }

    pub fn sqrt(self) -> Self {
        let r = libm::sqrt(self.value());
        self.unary(Op::Sqrt, r, 0.5 / r)
    }

    pub fn powi(self, k: i32) -> Self {
        let x = self.value();
        let d = if k == 0 { 0.0 } else { k as f64 * powi(x, k - 1) };
        self.unary(Op::Powi, powi(x, k), d)
    }

    pub fn square(self) -> Self {
        self.powi(2)
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(self) -> Self {
        let x = self.value();
        let v = if x > 0.0 { x + libm::log1p(libm::exp(-x)) } else { libm::log1p(libm::exp(x)) };
        self.unary(Op::Softplus, v, sigmoid(x))
    }

    /// `ln σ(x) = -softplus(-x)`.
    pub fn log_sigmoid(self) -> Self {
        -(-self).softplus()
    }

    /// Huber-style smooth L1 with knee at `delta`.
    pub fn smooth_l1(self, delta: f64) -> Self {
        let x = self.value();
        let (v, d) = if x.abs() <= delta {
            (0.5 * x * x / delta, x / delta)
        } else {
            (x.abs() - 0.5 * delta, x.signum())
        };
        self.unary(Op::SmoothL1, v, d)
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.id, self.value())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn powi(x: f64, k: i32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k.unsigned_abs() {
        acc *= x;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape.push(Op::Add, self.value() + rhs.value(), &[(self.id, 1.0), (rhs.id, 1.0)])
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape.push(Op::Sub, self.value() - rhs.value(), &[(self.id, 1.0), (rhs.id, -1.0)])
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.tape.push(Op::Mul, a * b, &[(self.id, b), (rhs.id, a)])
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.tape.push(Op::Div, a / b, &[(self.id, 1.0 / b), (rhs.id, -a / (b * b))])
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.unary(Op::Neg, -self.value(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.unary(Op::Offset, self.value() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.unary(Op::Offset, self.value() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.unary(Op::Scale, self.value() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        self.unary(Op::Scale, self.value() / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(Op::Offset, self - rhs.value(), -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let b = rhs.value();
        rhs.unary(Op::Div, self / b, -self / (b * b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = x * x;
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), 6.0);
    }

    #[test]
    fn exp_of_negation() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = (-x).exp();
        assert_eq!(tape.backward(y).unwrap().wrt(x), -1.0);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let y = x * 3.0;
        let z = y * y + y;
        // dz/dx = (2y + 1) * 3 = 39
        assert_eq!(tape.backward(z).unwrap().wrt(x), 39.0);
    }

    #[test]
    fn foreign_root_rejected() {
        let a = Tape::new();
        let b = Tape::new();
        let x = b.var(1.0);
        assert!(matches!(a.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_root_rejected() {
        let tape = Tape::new();
        let x = tape.var(-1.0);
        let y = x.ln();
        assert!(matches!(tape.backward(y), Err(Error::NonFinite(_))));
    }

    #[test]
    fn backward_twice_is_identical() {
        let tape = Tape::new();
        let x = tape.var(0.7);
        let y = tape.var(-1.3);
        let z = (x * y).sin() + x.exp() / (y * y + 1.0);
        let g1 = tape.backward(z).unwrap();
        let g2 = tape.backward(z).unwrap();
        assert_eq!(g1.wrt(x).to_bits(), g2.wrt(x).to_bits());
        assert_eq!(g1.wrt(y).to_bits(), g2.wrt(y).to_bits());
    }

    #[test]
    fn node_view_exposes_parents() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        let y = tape.var(2.0);
        let z = x + y;
        let node = tape.node(z);
        assert_eq!(node.op, Op::Add);
        assert_eq!(node.parents, [x.id(), y.id()]);
        assert_eq!(node.payload, 3.0);
    }

    #[test]
    fn smooth_l1_knee_is_c1() {
        let tape = Tape::new();
        let below = tape.var(1.0 - 1e-13).smooth_l1(1.0);
        let above = tape.var(1.0 + 1e-13).smooth_l1(1.0);
        assert!((below.value() - above.value()).abs() < 1e-12);
        let gb = tape.backward(below).unwrap();
        let ga = tape.backward(above).unwrap();
        let (xb, xa) = (Var { tape: &tape, id: 0 }, Var { tape: &tape, id: 2 });
        assert!((gb.wrt(xb) - ga.wrt(xa)).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        let tape = Tape::new();
        let big = tape.var(800.0).softplus();
        let small = tape.var(-800.0).softplus();
        assert_eq!(big.value(), 800.0);
        assert!(small.value() >= 0.0 && small.value() < 1e-300);
    }
}
