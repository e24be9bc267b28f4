//! Eager reverse-mode tape over dense `f64` matrices.
//!
//! Every value is a 2-D array (row = sample, column = feature; scalars are
//! `1×1`). Operations evaluate immediately and append a node; parents always
//! precede children, so node index order is a topological order.
//!
//! [`Tape::grad`] builds the adjoint computation *on the same tape* out of
//! ordinary tape operations. The returned gradients are therefore themselves
//! differentiable, which is what the discriminator gradient penalty needs.

use std::cell::{Ref, RefCell};

use ndarray::{s, Array2, Axis, Zip};

use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    AddRow { x: Var, row: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Elu(Var),
    EluGrad(Var),
    EluCurv(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Sqrt(Var),
    Recip(Var),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    BroadcastRows(Var),
    BroadcastCols(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Pad { x: Var, start: usize },
    Clamp { x: Var, lo: f64, hi: f64 },
    Minimum(Var, Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn elu_curv(x: f64) -> f64 {
    if x > 0.0 {
        0.0
    } else {
        x.exp()
    }
}

pub(crate) fn elu_array(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(elu)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of a node.
    pub fn value(&self, v: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push(&self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    fn unary(&self, x: Var, op: Op, f: impl Fn(&Array2<f64>) -> Array2<f64>) -> Var {
        let value = f(&self.value(x));
        let rg = self.requires_grad(x);
        self.push(value, op, rg)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(&Array2<f64>, &Array2<f64>) -> Array2<f64>,
    ) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)
        };
        let rg = self.any_grad(&[a, b]);
        self.push(value, op, rg)
    }

    /// Leaf that gradients can be taken with respect to.
    pub fn variable(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// `op(a)·op(b)` where `op` optionally transposes.
    pub fn matmul_t(&self, a: Var, b: Var, ta: bool, tb: bool) -> Var {
        self.binary(a, b, Op::MatMul { a, b, ta, tb }, |x, y| {
            let xv = if ta { x.t() } else { x.view() };
            let yv = if tb { y.t() } else { y.view() };
            assert_eq!(
                xv.ncols(),
                yv.nrows(),
                "matmul shape mismatch {:?} x {:?}",
                xv.dim(),
                yv.dim()
            );
            xv.dot(&yv)
        })
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        self.matmul_t(a, b, false, false)
    }

    /// Adds a `1×n` row to every row of `x`.
    pub fn add_row(&self, x: Var, row: Var) -> Var {
        self.binary(x, row, Op::AddRow { x, row }, |x, r| {
            assert_eq!(r.nrows(), 1);
            assert_eq!(x.ncols(), r.ncols());
            x + r
        })
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| {
            assert_eq!(x.dim(), y.dim(), "add shape mismatch");
            x + y
        })
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| {
            assert_eq!(x.dim(), y.dim(), "sub shape mismatch");
            x - y
        })
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| {
            assert_eq!(x.dim(), y.dim(), "mul shape mismatch");
            x * y
        })
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| v * c)
    }

    pub fn offset(&self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Offset(x), |v| v + c)
    }

    pub fn neg(&self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn elu(&self, x: Var) -> Var {
        self.unary(x, Op::Elu(x), elu_array)
    }

    fn elu_grad(&self, x: Var) -> Var {
        self.unary(x, Op::EluGrad(x), |v| v.mapv(elu_grad))
    }

    fn elu_curv(&self, x: Var) -> Var {
        self.unary(x, Op::EluCurv(x), |v| v.mapv(elu_curv))
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), |v| v.mapv(f64::tanh))
    }

    pub fn exp(&self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), |v| v.mapv(f64::exp))
    }

    pub fn square(&self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v.mapv(|e| e * e))
    }

    pub fn sqrt(&self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x), |v| v.mapv(f64::sqrt))
    }

    pub fn recip(&self, x: Var) -> Var {
        self.unary(x, Op::Recip(x), |v| v.mapv(|e| 1.0 / e))
    }

    /// Sum of all entries, as `1×1`.
    pub fn sum(&self, x: Var) -> Var {
        self.unary(x, Op::SumAll(x), |v| Array2::from_elem((1, 1), v.sum()))
    }

    /// Mean of all entries, as `1×1`.
    pub fn mean(&self, x: Var) -> Var {
        let n = {
            let v = self.value(x);
            v.len() as f64
        };
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Column sums, `m×n → 1×n`.
    pub fn sum_rows(&self, x: Var) -> Var {
        self.unary(x, Op::SumRows(x), |v| v.sum_axis(Axis(0)).insert_axis(Axis(0)))
    }

    /// Row sums, `m×n → m×1`.
    pub fn sum_cols(&self, x: Var) -> Var {
        self.unary(x, Op::SumCols(x), |v| v.sum_axis(Axis(1)).insert_axis(Axis(1)))
    }

    /// Repeats a `1×n` row `m` times.
    pub fn broadcast_rows(&self, x: Var, m: usize) -> Var {
        self.unary(x, Op::BroadcastRows(x), |v| {
            assert_eq!(v.nrows(), 1);
            v.broadcast((m, v.ncols())).unwrap().to_owned()
        })
    }

    /// Repeats an `m×1` column `n` times.
    pub fn broadcast_cols(&self, x: Var, n: usize) -> Var {
        self.unary(x, Op::BroadcastCols(x), |v| {
            assert_eq!(v.ncols(), 1);
            v.broadcast((v.nrows(), n)).unwrap().to_owned()
        })
    }

    /// Horizontal concatenation.
    pub fn concat(&self, parts: &[Var]) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|p| nodes[p.0].value.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("concat: row counts differ")
        };
        let rg = self.any_grad(parts);
        self.push(value, Op::Concat(parts.to_vec()), rg)
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&self, x: Var, start: usize, len: usize) -> Var {
        self.unary(x, Op::Slice { x, start }, |v| {
            v.slice(s![.., start..start + len]).to_owned()
        })
    }

    /// Places `x` at column `start` of a zero matrix with `total` columns.
    fn pad_cols(&self, x: Var, start: usize, total: usize) -> Var {
        self.unary(x, Op::Pad { x, start }, |v| {
            let mut out = Array2::zeros((v.nrows(), total));
            out.slice_mut(s![.., start..start + v.ncols()]).assign(v);
            out
        })
    }

    pub fn clamp(&self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp { x, lo, hi }, |v| v.mapv(|e| e.clamp(lo, hi)))
    }

    pub fn minimum(&self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Minimum(a, b), |x, y| {
            assert_eq!(x.dim(), y.dim());
            Zip::from(x).and(y).map_collect(|&p, &q| p.min(q))
        })
    }

    fn accumulate(&self, adj: &mut [Option<Var>], target: Var, contrib: Var) {
        if !self.requires_grad(target) {
            return;
        }
        adj[target.0] = Some(match adj[target.0] {
            Some(existing) => self.add(existing, contrib),
            None => contrib,
        });
    }

    fn mask_constant(&self, x: Var, pred: impl Fn(f64) -> bool) -> Var {
        let mask = self.value(x).mapv(|e| if pred(e) { 1.0 } else { 0.0 });
        self.constant(mask)
    }

    /// Gradients of the scalar `output` with respect to each of `wrt`, as new
    /// nodes on this tape.
    ///
    /// Nodes in `wrt` must require gradients; a node that does not influence
    /// `output` gets a zero gradient.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Var>, AutodiffError> {
        let shape = self.shape(output);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        for &w in wrt {
            if !self.requires_grad(w) {
                return Err(AutodiffError::Detached(w.0));
            }
        }
        let n = output.0 + 1;
        let mut adj: Vec<Option<Var>> = vec![None; n];
        if self.requires_grad(output) {
            adj[output.0] = Some(self.scalar_constant(1.0));
        }
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            let (op, requires) = {
                let nodes = self.nodes.borrow();
                (nodes[i].op.clone(), nodes[i].requires_grad)
            };
            if !requires {
                continue;
            }
            let me = Var(i);
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b, ta, tb } => {
                    if self.requires_grad(a) {
                        let ga = if ta {
                            self.matmul_t(b, g, tb, true)
                        } else {
                            self.matmul_t(g, b, false, !tb)
                        };
                        self.accumulate(&mut adj, a, ga);
                    }
                    if self.requires_grad(b) {
                        let gb = if tb {
                            self.matmul_t(g, a, true, ta)
                        } else {
                            self.matmul_t(a, g, !ta, false)
                        };
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::AddRow { x, row } => {
                    self.accumulate(&mut adj, x, g);
                    if self.requires_grad(row) {
                        let gr = self.sum_rows(g);
                        self.accumulate(&mut adj, row, gr);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    self.accumulate(&mut adj, b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, g);
                    if self.requires_grad(b) {
                        let gb = self.neg(g);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(a) {
                        let ga = self.mul(g, b);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if self.requires_grad(b) {
                        let gb = self.mul(g, a);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
                Op::Scale(x, c) => {
                    let gx = self.scale(g, c);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Offset(x) => self.accumulate(&mut adj, x, g),
                Op::Elu(x) => {
                    let d = self.elu_grad(x);
                    let gx = self.mul(g, d);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::EluGrad(x) | Op::EluCurv(x) => {
                    let d = self.elu_curv(x);
                    let gx = self.mul(g, d);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Tanh(x) => {
                    let y2 = self.square(me);
                    let d = self.offset(self.neg(y2), 1.0);
                    let gx = self.mul(g, d);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Exp(x) => {
                    let gx = self.mul(g, me);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Square(x) => {
                    let gx = self.scale(self.mul(g, x), 2.0);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Sqrt(x) => {
                    let d = self.scale(self.recip(me), 0.5);
                    let gx = self.mul(g, d);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Recip(x) => {
                    let d = self.neg(self.square(me));
                    let gx = self.mul(g, d);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::SumAll(x) => {
                    let (m, k) = self.shape(x);
                    let gx = self.broadcast_rows(self.broadcast_cols(g, k), m);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::SumRows(x) => {
                    let m = self.shape(x).0;
                    let gx = self.broadcast_rows(g, m);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::SumCols(x) => {
                    let k = self.shape(x).1;
                    let gx = self.broadcast_cols(g, k);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::BroadcastRows(x) => {
                    let gx = self.sum_rows(g);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::BroadcastCols(x) => {
                    let gx = self.sum_cols(g);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let width = self.shape(p).1;
                        if self.requires_grad(p) {
                            let gp = self.slice_cols(g, start, width);
                            self.accumulate(&mut adj, p, gp);
                        }
                        start += width;
                    }
                }
                Op::Slice { x, start } => {
                    let total = self.shape(x).1;
                    let gx = self.pad_cols(g, start, total);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Pad { x, start } => {
                    let width = self.shape(x).1;
                    let gx = self.slice_cols(g, start, width);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Clamp { x, lo, hi } => {
                    let mask = self.mask_constant(x, |e| e > lo && e < hi);
                    let gx = self.mul(g, mask);
                    self.accumulate(&mut adj, x, gx);
                }
                Op::Minimum(a, b) => {
                    let (ma, mb) = {
                        let nodes = self.nodes.borrow();
                        let av = &nodes[a.0].value;
                        let bv = &nodes[b.0].value;
                        let ma = Zip::from(av)
                            .and(bv)
                            .map_collect(|&p, &q| if p <= q { 1.0 } else { 0.0 });
                        let mb = ma.mapv(|e| 1.0 - e);
                        (ma, mb)
                    };
                    if self.requires_grad(a) {
                        let m = self.constant(ma);
                        let ga = self.mul(g, m);
                        self.accumulate(&mut adj, a, ga);
                    }
                    if self.requires_grad(b) {
                        let m = self.constant(mb);
                        let gb = self.mul(g, m);
                        self.accumulate(&mut adj, b, gb);
                    }
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let shape = self.shape(w);
                    self.constant(Array2::zeros(shape))
                }
            })
            .collect())
    }

    /// Numeric gradients of `output` with respect to `wrt`.
    pub fn backward(&self, output: Var, wrt: &[Var]) -> Result<Vec<Array2<f64>>, AutodiffError> {
        let grads = self.grad(output, wrt)?;
        Ok(grads.iter().map(|&g| self.value(g).clone()).collect())
    }
}
