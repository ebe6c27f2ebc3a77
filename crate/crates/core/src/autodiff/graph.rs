//! A small scalar reverse-mode tape for closed-form expressions.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    parents: [(usize, f64); 2],
    arity: usize,
}

/// Records scalar operations in creation order, which is a topological order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

#[derive(Debug, Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    index: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, value: f64, parents: &[(usize, f64)]) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        let mut p = [(0, 0.0); 2];
        p[..parents.len()].copy_from_slice(parents);
        nodes.push(Node {
            value,
            parents: p,
            arity: parents.len(),
        });
        nodes.len() - 1
    }

    pub fn variable(&self, value: f64) -> Var<'_> {
        Var {
            graph: self,
            index: self.push(value, &[]),
        }
    }

    pub fn constant(&self, value: f64) -> Var<'_> {
        self.variable(value)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `output` with respect to every node, indexed by creation order.
    /// Each node is visited once, newest first.
    pub fn backward(&self, output: Var<'_>) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0; nodes.len()];
        adjoint[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for &(p, local) in &node.parents[..node.arity] {
                adjoint[p] += a * local;
            }
        }
        adjoint
    }
}

impl<'g> Var<'g> {
    pub fn value(&self) -> f64 {
        self.graph.nodes.borrow()[self.index].value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    fn unary(self, value: f64, local: f64) -> Var<'g> {
        Var {
            graph: self.graph,
            index: self.graph.push(value, &[(self.index, local)]),
        }
    }

    fn binary(self, other: Var<'g>, value: f64, d_self: f64, d_other: f64) -> Var<'g> {
        Var {
            graph: self.graph,
            index: self
                .graph
                .push(value, &[(self.index, d_self), (other.index, d_other)]),
        }
    }

    pub fn exp(self) -> Var<'g> {
        let e = self.value().exp();
        self.unary(e, e)
    }

    pub fn ln(self) -> Var<'g> {
        let v = self.value();
        self.unary(v.ln(), 1.0 / v)
    }

    pub fn sin(self) -> Var<'g> {
        let v = self.value();
        self.unary(v.sin(), v.cos())
    }

    pub fn cos(self) -> Var<'g> {
        let v = self.value();
        self.unary(v.cos(), -v.sin())
    }

    pub fn tanh(self) -> Var<'g> {
        let t = self.value().tanh();
        self.unary(t, 1.0 - t * t)
    }

    pub fn sigmoid(self) -> Var<'g> {
        let s = 1.0 / (1.0 + (-self.value()).exp());
        self.unary(s, s * (1.0 - s))
    }

    pub fn relu(self) -> Var<'g> {
        let v = self.value();
        self.unary(v.max(0.0), if v > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn powi(self, n: i32) -> Var<'g> {
        let v = self.value();
        self.unary(v.powi(n), n as f64 * v.powi(n - 1))
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        self.unary(c * self.value(), c)
    }
}

impl<'g> Add for Var<'g> {
    type Output = Var<'g>;
    fn add(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, self.value() + rhs.value(), 1.0, 1.0)
    }
}

impl<'g> Sub for Var<'g> {
    type Output = Var<'g>;
    fn sub(self, rhs: Var<'g>) -> Var<'g> {
        self.binary(rhs, self.value() - rhs.value(), 1.0, -1.0)
    }
}

impl<'g> Mul for Var<'g> {
    type Output = Var<'g>;
    fn mul(self, rhs: Var<'g>) -> Var<'g> {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, a * b, b, a)
    }
}

impl<'g> Neg for Var<'g> {
    type Output = Var<'g>;
    fn neg(self) -> Var<'g> {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = Graph::new();
        let t = g.variable(3.0);
        let y = t * t;
        assert_eq!(y.value(), 9.0);
        assert_eq!(g.backward(y)[t.index()], 6.0);
    }

    #[test]
    fn constant_output_zero_gradient() {
        let g = Graph::new();
        let x = g.variable(1.3);
        let c = g.constant(2.0);
        let y = c * c;
        assert_eq!(g.backward(y)[x.index()], 0.0);
    }

    #[test]
    fn composite_matches_closed_form() {
        let g = Graph::new();
        let x = g.variable(0.7);
        let y = g.variable(-1.1);
        let f = (x * y).sin() + x.exp() * y.tanh() - x.powi(3);
        let adj = g.backward(f);
        let (xv, yv) = (0.7f64, -1.1f64);
        let dx = yv * (xv * yv).cos() + xv.exp() * yv.tanh() - 3.0 * xv * xv;
        let dy = xv * (xv * yv).cos() + xv.exp() * (1.0 - yv.tanh().powi(2));
        assert!((adj[x.index()] - dx).abs() < 1e-14);
        assert!((adj[y.index()] - dy).abs() < 1e-14);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let g = Graph::new();
        let x = g.variable(2.0);
        let s = x.sigmoid();
        let y = s * s + s;
        let sv = 1.0 / (1.0 + (-2.0f64).exp());
        let expected = (2.0 * sv + 1.0) * sv * (1.0 - sv);
        assert!((g.backward(y)[x.index()] - expected).abs() < 1e-15);
    }
}
