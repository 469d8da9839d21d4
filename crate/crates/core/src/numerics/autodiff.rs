//! Tape-based reverse-mode differentiation over batched matrices.
//!
//! Every node holds a matrix whose rows are batch samples. The op set is the
//! one the CSVAE needs: affine maps, elementwise nonlinearities, reductions,
//! and a row functional whose per-row gradient is supplied by the caller
//! (used for the Gaussian observation evidence, whose gradient is analytic).

use super::matrix::{gemm, Matrix};
use super::NumericsError;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    ColSlice(Var, usize),
    SumRows(Var),
    Sum(Var),
    RowFunctional(Var, Matrix),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input (no gradient is reported for it).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Registered parameter; gradients are returned in registration order.
    pub fn param(&mut self, value: Matrix) -> Var {
        let v = self.push(Op::Param, value);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// Adds the 1×m row `bias` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, NumericsError> {
        let xv = self.value(x);
        let bv = self.value(bias);
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(NumericsError::DimensionMismatch {
                expected: (1, xv.cols()),
                found: bv.shape(),
            });
        }
        let mut out = xv.clone();
        let b = bv.row(0).to_vec();
        for i in 0..out.rows() {
            for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        Ok(self.push(Op::AddRowBias(x, bias), out))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
        let xw = self.matmul(x, w)?;
        self.add_row_bias(xw, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NumericsError::DimensionMismatch {
                expected: av.shape(),
                found: bv.shape(),
            });
        }
        let data = av.as_slice().iter().zip(bv.as_slice()).map(|(x, y)| x * y).collect();
        let out = Matrix::from_vec(av.rows(), av.cols(), data)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).scale(c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.map(a, |x| x + c);
        self.push(Op::AddScalar(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.map(a, softplus);
        self.push(Op::Softplus(a), out)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::exp);
        self.push(Op::Exp(a), out)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.map(a, f64::ln);
        self.push(Op::Log(a), out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x * x);
        self.push(Op::Square(a), out)
    }

    /// Columns `start..end` of `a`.
    pub fn col_slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).col_range(start, end);
        self.push(Op::ColSlice(a, start), out)
    }

    /// Per-row sums, B×m → B×1.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = (0..av.rows()).map(|i| av.row(i).iter().sum()).collect();
        let out = Matrix::from_vec(av.rows(), 1, data).expect("shape");
        self.push(Op::SumRows(a), out)
    }

    /// Sum of all entries, → 1×1.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Op::Sum(a), Matrix::from_rows(&[[s]]))
    }

    /// Row functional `out_i = f_i(a_i)` with caller-supplied values and
    /// per-row gradients `∂f_i/∂a_i` (same shape as `a`).
    pub fn row_functional(&mut self, a: Var, values: Vec<f64>, jacobian: Matrix) -> Result<Var, NumericsError> {
        let av = self.value(a);
        if jacobian.shape() != av.shape() || values.len() != av.rows() {
            return Err(NumericsError::DimensionMismatch {
                expected: av.shape(),
                found: jacobian.shape(),
            });
        }
        let out = Matrix::from_vec(values.len(), 1, values)?;
        Ok(self.push(Op::RowFunctional(a, jacobian), out))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Matrix {
        let av = self.value(a);
        Matrix::from_vec(av.rows(), av.cols(), av.as_slice().iter().map(|&x| f(x)).collect())
            .expect("shape preserved")
    }

    /// Reverse sweep from the scalar `output`; returns one gradient per
    /// registered parameter, in registration order.
    pub fn backward(&self, output: Var) -> Result<Vec<Matrix>, NumericsError> {
        if self.value(output).shape() != (1, 1) {
            return Err(NumericsError::NoScalarOutput(self.value(output).shape()));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Matrix::from_rows(&[[1.0]]));
        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf | Op::Param => {
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(1.0, &g, false, bv, true, 0.0, &mut ga);
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(1.0, av, true, &g, false, 0.0, &mut gb);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRowBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj, *b, gb);
                    accumulate(&mut adj, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.scale(-1.0));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = hadamard(&g, self.value(*b));
                    let gb = hadamard(&g, self.value(*a));
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(*c)),
                Op::AddScalar(a) => accumulate(&mut adj, *a, g),
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                    accumulate(&mut adj, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = zip_map(&g, self.value(*a), |gi, x| gi * sigmoid(x));
                    accumulate(&mut adj, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = hadamard(&g, &node.value);
                    accumulate(&mut adj, *a, ga);
                }
                Op::Log(a) => {
                    let ga = zip_map(&g, self.value(*a), |gi, x| gi / x);
                    accumulate(&mut adj, *a, ga);
                }
                Op::Square(a) => {
                    let ga = zip_map(&g, self.value(*a), |gi, x| 2.0 * gi * x);
                    accumulate(&mut adj, *a, ga);
                }
                Op::ColSlice(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    for i in 0..g.rows() {
                        ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SumRows(a) => {
                    let av = self.value(*a);
                    let ga = Matrix::from_fn(av.rows(), av.cols(), |i, _| g[(i, 0)]);
                    accumulate(&mut adj, *a, ga);
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    let s = g[(0, 0)];
                    accumulate(&mut adj, *a, Matrix::from_fn(av.rows(), av.cols(), |_, _| s));
                }
                Op::RowFunctional(a, jac) => {
                    let ga = Matrix::from_fn(jac.rows(), jac.cols(), |i, j| g[(i, 0)] * jac[(i, j)]);
                    accumulate(&mut adj, *a, ga);
                }
            }
        }
        Ok(self
            .params
            .iter()
            .map(|p| {
                adj.get(p.0)
                    .and_then(|g| g.clone())
                    .unwrap_or_else(|| {
                        let (r, c) = self.value(*p).shape();
                        Matrix::zeros(r, c)
                    })
            })
            .collect())
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (e, x) in existing.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("shape")
}

/// Overflow-safe `ln(1 + eˣ)`.
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
