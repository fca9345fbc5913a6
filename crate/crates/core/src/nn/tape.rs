//! Reverse-mode automatic differentiation over a linear tape.
//!
//! A [`Tape`] records every operation in creation order; [`Tape::backward`]
//! walks it in reverse. Tapes are built fresh for each training step and
//! dropped afterwards. Handles ([`Var`]) carry the id of the tape that minted
//! them, and mixing handles across tapes is a contract violation.

use std::sync::atomic::{AtomicU64, Ordering};

use super::tensor::{gemm, linear_forward};
use super::{NnError, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Linear { x: usize, w: usize, b: usize },
    MatMulNt { a: usize, b: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Softplus(usize),
    Square(usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    ConcatCols(usize, usize),
    Minimum(usize, usize),
    Clamp { a: usize, lo: f64, hi: f64 },
    NormalizeRows(usize),
    RowDot(usize, usize),
    Diag(usize),
    LogSumExp(usize),
    LogSumExpRows(usize),
    Reshape(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradient record produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` is not
    /// connected to the loss or does not require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        assert_eq!(v.tape, self.tape, "gradient lookup with a handle from another tape");
        self.grads[v.index].as_ref()
    }

    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.index
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    /// Records a trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.push(t.clone(), Op::Leaf, true)
    }

    /// Records a leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[self.idx(v)].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[self.idx(v)].requires_grad
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Var {
        let ai = self.idx(a);
        let value = self.nodes[ai].value.map(f);
        let rg = self.rg(ai);
        self.push(value, op(ai), rg)
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(
            va.shape(),
            vb.shape(),
            "{name}: shape mismatch {:?} vs {:?}",
            va.shape(),
            vb.shape()
        );
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(ai) || self.rg(bi);
        self.push(value, op, rg)
    }

    /// Dense layer `x · wᵀ + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xi, wi, bi) = (self.idx(x), self.idx(w), self.idx(b));
        let value = linear_forward(&self.nodes[xi].value, &self.nodes[wi].value, &self.nodes[bi].value)?;
        let rg = self.rg(xi) || self.rg(wi) || self.rg(bi);
        Ok(self.push(value, Op::Linear { x: xi, w: wi, b: bi }, rg))
    }

    /// `a[m×k] · b[n×k]ᵀ → [m×n]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(va.cols(), vb.cols(), "matmul_nt: inner dimension mismatch");
        let (m, k, n) = (va.rows(), va.cols(), vb.rows());
        let mut data = vec![0.0; m * n];
        gemm(va.data(), false, vb.data(), true, &mut data, m, k, n, false);
        let value = Tensor::new(vec![m, n], data).expect("shape");
        let rg = self.rg(ai) || self.rg(bi);
        self.push(value, Op::MatMulNt { a: ai, b: bi }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let op = Op::Add(self.idx(a), self.idx(b));
        self.binary_same_shape("add", a, b, |x, y| x + y, op)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let op = Op::Sub(self.idx(a), self.idx(b));
        self.binary_same_shape("sub", a, b, |x, y| x - y, op)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let op = Op::Mul(self.idx(a), self.idx(b));
        self.binary_same_shape("mul", a, b, |x, y| x * y, op)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let op = Op::Minimum(self.idx(a), self.idx(b));
        self.binary_same_shape("minimum", a, b, f64::min, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, |i| Op::Scale(i, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square)
    }

    /// Hard clamp; gradient is zero where the input lies outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), |i| Op::Clamp { a: i, lo, hi })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let value = Tensor::scalar(self.nodes[ai].value.sum());
        let rg = self.rg(ai);
        self.push(value, Op::Sum(ai), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let t = &self.nodes[ai].value;
        let value = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(ai);
        self.push(value, Op::Mean(ai), rg)
    }

    /// Row-wise sum `[B×K] → [B]`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let t = &self.nodes[ai].value;
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let value = Tensor::vector(data);
        let rg = self.rg(ai);
        self.push(value, Op::SumCols(ai), rg)
    }

    /// `[B×m] ⊕ [B×n] → [B×(m+n)]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let value = concat_cols(&self.nodes[ai].value, &self.nodes[bi].value);
        let rg = self.rg(ai) || self.rg(bi);
        self.push(value, Op::ConcatCols(ai, bi), rg)
    }

    /// Divides every row by its Euclidean norm. Rows must be non-zero.
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let t = &self.nodes[ai].value;
        let c = t.cols();
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(c) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter_mut().for_each(|v| *v /= norm);
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape");
        let rg = self.rg(ai);
        self.push(value, Op::NormalizeRows(ai), rg)
    }

    /// Row-wise inner product `[B×K]·[B×K] → [B]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.idx(a), self.idx(b));
        let (va, vb) = (&self.nodes[ai].value, &self.nodes[bi].value);
        assert_eq!(va.shape(), vb.shape(), "row_dot: shape mismatch");
        let data = (0..va.rows())
            .map(|r| va.row(r).iter().zip(vb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let rg = self.rg(ai) || self.rg(bi);
        self.push(Tensor::vector(data), Op::RowDot(ai, bi), rg)
    }

    /// Main diagonal of a square matrix.
    pub fn diag(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let t = &self.nodes[ai].value;
        assert_eq!(t.rows(), t.cols(), "diag: matrix must be square");
        let data = (0..t.rows()).map(|i| t.at(i, i)).collect();
        let rg = self.rg(ai);
        self.push(Tensor::vector(data), Op::Diag(ai), rg)
    }

    /// `ln Σ exp(x)` over every element.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let value = Tensor::scalar(logsumexp(self.nodes[ai].value.data()));
        let rg = self.rg(ai);
        self.push(value, Op::LogSumExp(ai), rg)
    }

    /// Row-wise `ln Σ exp`, `[B×K] → [B]`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let ai = self.idx(a);
        let t = &self.nodes[ai].value;
        let data = (0..t.rows()).map(|r| logsumexp(t.row(r))).collect();
        let rg = self.rg(ai);
        self.push(Tensor::vector(data), Op::LogSumExpRows(ai), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let ai = self.idx(a);
        let value = self.nodes[ai]
            .value
            .clone()
            .reshape(shape)
            .expect("reshape: element count must be preserved");
        let rg = self.rg(ai);
        self.push(value, Op::Reshape(ai), rg)
    }

    /// Populates gradients of the scalar `loss` with respect to every
    /// reachable node that requires gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let li = self.idx(loss);
        let lv = &self.nodes[li].value;
        if lv.len() != 1 {
            return Err(NnError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[li].requires_grad {
            grads[li] = Some(Tensor::full(lv.shape(), 1.0));
        }
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        // only requires-grad nodes keep a gradient
        for (g, n) in grads.iter_mut().zip(&self.nodes) {
            if !n.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let gd = g.data();
        let val = |j: usize| &self.nodes[j].value;
        let mut acc = |j: usize, f: &dyn Fn() -> Tensor| {
            if self.nodes[j].requires_grad {
                let contrib = f();
                match &mut grads[j] {
                    Some(existing) => existing
                        .data_mut()
                        .iter_mut()
                        .zip(contrib.data())
                        .for_each(|(e, c)| *e += c),
                    slot @ None => *slot = Some(contrib),
                }
            }
        };
        let elementwise = |j: usize, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            // f(input, output, upstream)
            let x = &self.nodes[j].value;
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(gd)
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            Tensor::new(x.shape().to_vec(), data).expect("shape")
        };
        match node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(x), val(w));
                let (batch, inp, outd) = (xv.rows(), xv.cols(), wv.rows());
                acc(x, &|| {
                    let mut d = vec![0.0; batch * inp];
                    gemm(gd, false, wv.data(), false, &mut d, batch, outd, inp, false);
                    Tensor::new(xv.shape().to_vec(), d).expect("shape")
                });
                acc(w, &|| {
                    let mut d = vec![0.0; outd * inp];
                    gemm(gd, true, xv.data(), false, &mut d, outd, batch, inp, false);
                    Tensor::new(wv.shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let mut d = vec![0.0; outd];
                    for row in gd.chunks(outd) {
                        d.iter_mut().zip(row).for_each(|(s, v)| *s += v);
                    }
                    Tensor::new(val(b).shape().to_vec(), d).expect("shape")
                });
            }
            Op::MatMulNt { a, b } => {
                let (av, bv) = (val(a), val(b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                // out = a·bᵀ: da = g·b, db = gᵀ·a
                acc(a, &|| {
                    let mut d = vec![0.0; m * k];
                    gemm(gd, false, bv.data(), false, &mut d, m, n, k, false);
                    Tensor::new(av.shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let mut d = vec![0.0; n * k];
                    gemm(gd, true, av.data(), false, &mut d, n, m, k, false);
                    Tensor::new(bv.shape().to_vec(), d).expect("shape")
                });
            }
            Op::Add(a, b) => {
                acc(a, &|| g.clone());
                acc(b, &|| g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, &|| g.clone());
                acc(b, &|| g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                acc(a, &|| {
                    let d = gd.iter().zip(val(b).data()).map(|(x, y)| x * y).collect();
                    Tensor::new(g.shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let d = gd.iter().zip(val(a).data()).map(|(x, y)| x * y).collect();
                    Tensor::new(g.shape().to_vec(), d).expect("shape")
                });
            }
            Op::Minimum(a, b) => {
                // ties route the gradient to the first operand
                let (av, bv) = (val(a), val(b));
                acc(a, &|| {
                    let d = (0..gd.len())
                        .map(|k| if av.data()[k] <= bv.data()[k] { gd[k] } else { 0.0 })
                        .collect();
                    Tensor::new(g.shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let d = (0..gd.len())
                        .map(|k| if av.data()[k] <= bv.data()[k] { 0.0 } else { gd[k] })
                        .collect();
                    Tensor::new(g.shape().to_vec(), d).expect("shape")
                });
            }
            Op::Scale(a, c) => acc(a, &|| g.map(|v| v * c)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(a, &|| {
                Tensor::new(val(a).shape().to_vec(), gd.to_vec()).expect("shape")
            }),
            Op::Relu(a) => acc(a, &|| elementwise(a, &|x, _, gi| if x > 0.0 { gi } else { 0.0 })),
            Op::Tanh(a) => acc(a, &|| elementwise(a, &|_, y, gi| gi * (1.0 - y * y))),
            Op::Exp(a) => acc(a, &|| elementwise(a, &|_, y, gi| gi * y)),
            Op::Log(a) => acc(a, &|| elementwise(a, &|x, _, gi| gi / x)),
            Op::Softplus(a) => acc(a, &|| elementwise(a, &|x, _, gi| gi * sigmoid(x))),
            Op::Square(a) => acc(a, &|| elementwise(a, &|x, _, gi| 2.0 * x * gi)),
            Op::Clamp { a, lo, hi } => acc(a, &|| {
                elementwise(a, &|x, _, gi| if x >= lo && x <= hi { gi } else { 0.0 })
            }),
            Op::Sum(a) => acc(a, &|| Tensor::full(val(a).shape(), gd[0])),
            Op::Mean(a) => acc(a, &|| {
                let n = val(a).len() as f64;
                Tensor::full(val(a).shape(), gd[0] / n)
            }),
            Op::SumCols(a) => acc(a, &|| {
                let av = val(a);
                let c = av.cols();
                let d = (0..av.len()).map(|k| gd[k / c]).collect();
                Tensor::new(av.shape().to_vec(), d).expect("shape")
            }),
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (val(a).cols(), val(b).cols());
                let w = ca + cb;
                acc(a, &|| {
                    let d = gd.chunks(w).flat_map(|r| r[..ca].iter().copied()).collect();
                    Tensor::new(val(a).shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let d = gd.chunks(w).flat_map(|r| r[ca..].iter().copied()).collect();
                    Tensor::new(val(b).shape().to_vec(), d).expect("shape")
                });
            }
            Op::NormalizeRows(a) => acc(a, &|| {
                let av = val(a);
                let c = av.cols();
                let mut d = vec![0.0; av.len()];
                for r in 0..av.rows() {
                    let x = av.row(r);
                    let y = out.row(r);
                    let gr = &gd[r * c..(r + 1) * c];
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let ydotg: f64 = y.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for k in 0..c {
                        d[r * c + k] = (gr[k] - y[k] * ydotg) / norm;
                    }
                }
                Tensor::new(av.shape().to_vec(), d).expect("shape")
            }),
            Op::RowDot(a, b) => {
                let (av, bv) = (val(a), val(b));
                let c = av.cols();
                acc(a, &|| {
                    let d = (0..av.len()).map(|k| gd[k / c] * bv.data()[k]).collect();
                    Tensor::new(av.shape().to_vec(), d).expect("shape")
                });
                acc(b, &|| {
                    let d = (0..bv.len()).map(|k| gd[k / c] * av.data()[k]).collect();
                    Tensor::new(bv.shape().to_vec(), d).expect("shape")
                });
            }
            Op::Diag(a) => acc(a, &|| {
                let av = val(a);
                let n = av.rows();
                let mut d = vec![0.0; n * n];
                for k in 0..n {
                    d[k * n + k] = gd[k];
                }
                Tensor::new(av.shape().to_vec(), d).expect("shape")
            }),
            Op::LogSumExp(a) => acc(a, &|| {
                let av = val(a);
                let lse = out.item();
                av.map(|x| gd[0] * (x - lse).exp())
            }),
            Op::LogSumExpRows(a) => acc(a, &|| {
                let av = val(a);
                let c = av.cols();
                let d = (0..av.len())
                    .map(|k| gd[k / c] * (av.data()[k] - out.data()[k / c]).exp())
                    .collect();
                Tensor::new(av.shape().to_vec(), d).expect("shape")
            }),
        }
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows(), b.rows(), "concat_cols: row count mismatch");
    let (ca, cb) = (a.cols(), b.cols());
    let mut data = Vec::with_capacity(a.rows() * (ca + cb));
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Tensor::new(vec![a.rows(), ca + cb], data).expect("shape")
}
