use super::matrix::{gemm_nn, gemm_nt, gemm_tn};
use super::{Matrix, ParamSet};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    AvgPool {
        x: Var,
        kernel: usize,
    },
    Add(Var, Var),
    Scale(Var, f64),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
        // Row softmax, kept for the backward rule.
        probs: Matrix,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a computation for reverse-mode differentiation.
///
/// Values are pushed in evaluation order, so every operation's inputs have
/// smaller ids than its output and the backward sweep is a plain reverse
/// iteration. Only values reachable from a parameter carry gradients.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Records a leaf whose gradient is reported by [`backward`](Self::backward)
    /// under `name`. Registering the same name twice accumulates into one entry.
    pub fn param(&mut self, name: impl Into<String>, value: Matrix) -> Var {
        self.push(value, Op::Param(name.into()), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(Error::shape(
                "matmul",
                format!(
                    "left {}x{} does not fit right {}x{}",
                    av.rows(),
                    av.cols(),
                    bv.rows(),
                    bv.cols()
                ),
            ));
        }
        let mut out = Matrix::zeros(av.rows(), bv.cols());
        gemm_nn(av, bv, &mut out);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for v in out.as_mut_slice() {
            *v = sigmoid(*v);
        }
        let ng = self.needs(x);
        self.push(out, Op::Sigmoid(x), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_cols needs at least one part"));
        };
        let rows = self.value(first).rows();
        let mut width = 0;
        for (i, &p) in parts.iter().enumerate() {
            let m = self.value(p);
            if m.rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("part {i} has {} rows, expected {rows}", m.rows()),
                ));
            }
            width += m.cols();
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Matrix::from_vec(rows, width, data)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), ng))
    }

    /// Averages non-overlapping windows of `kernel` columns; a trailing
    /// partial window is averaged over its own width.
    pub fn avgpool_cols(&mut self, x: Var, kernel: usize) -> Result<Var> {
        if kernel < 1 {
            return Err(Error::invalid("avgpool kernel must be at least 1"));
        }
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let out_cols = cols.div_ceil(kernel);
        let mut out = Matrix::zeros(rows, out_cols);
        for r in 0..rows {
            let row = xv.row(r);
            for (w, chunk) in row.chunks(kernel).enumerate() {
                out.set(r, w, chunk.iter().sum::<f64>() / chunk.len() as f64);
            }
        }
        let ng = self.needs(x);
        Ok(self.push(out, Op::AvgPool { x, kernel }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_in_place(c);
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    /// Mean over unmasked rows of `-log softmax(logits)[target]`, as a 1x1 value.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, classes) = lv.shape();
        if targets.len() != rows || mask.len() != rows {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!(
                    "{rows} logit rows but {} targets and {} mask entries",
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::invalid("softmax_cross_entropy: every row is masked"));
        }
        let mut probs = Matrix::zeros(rows, classes);
        let mut total = 0.0;
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= classes {
                return Err(Error::invalid(format!(
                    "target {t} in row {r} outside 0..{classes}"
                )));
            }
            let row = lv.row(r);
            let (arg_max, max) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, v)| {
                    if v > acc.1 {
                        (j, v)
                    } else {
                        acc
                    }
                });
            // Sum of exp(z - max) over every class but the maximal one, so the
            // log term can use ln_1p and stay accurate when one class dominates.
            let mut rest = 0.0;
            for (j, &z) in row.iter().enumerate() {
                let e = (z - max).exp();
                probs.set(r, j, e);
                if j != arg_max {
                    rest += e;
                }
            }
            let denom = 1.0 + rest;
            for j in 0..classes {
                probs.set(r, j, probs.get(r, j) / denom);
            }
            total += (max - row[t]) + rest.ln_1p();
        }
        let loss = Matrix::scalar(total / count as f64);
        let ng = self.needs(logits);
        Ok(self.push(
            loss,
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            ng,
        ))
    }

    /// Gradients of a scalar output with respect to every registered parameter.
    pub fn backward(&self, loss: Var) -> Result<ParamSet> {
        let value = self.value(loss);
        if value.shape() != (1, 1) {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got {}x{}",
                value.rows(),
                value.cols()
            )));
        }
        self.backward_from(loss, Matrix::scalar(1.0))
    }

    /// Reverse sweep seeded with an arbitrary upstream gradient for `output`.
    pub fn backward_from(&self, output: Var, seed: Matrix) -> Result<ParamSet> {
        if seed.shape() != self.value(output).shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed {:?} vs output {:?}",
                    seed.shape(),
                    self.value(output).shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(seed);

        let mut result = ParamSet::new();

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => match result.get_mut(name) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        result.insert(name.clone(), g);
                    }
                },
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let ga = grads[a.0].get_or_insert_with(|| Matrix::zeros(av.rows(), av.cols()));
                        gemm_nt(&g, bv, ga);
                    }
                    if self.needs(*b) {
                        let gb = grads[b.0].get_or_insert_with(|| Matrix::zeros(bv.rows(), bv.cols()));
                        gemm_tn(av, &g, gb);
                    }
                }
                Op::Sigmoid(x) => {
                    let mut gx = g;
                    for (gv, y) in gx.as_mut_slice().iter_mut().zip(node.value.as_slice()) {
                        *gv *= y * (1.0 - y);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.slice_cols(start, start + width));
                        }
                        start += width;
                    }
                }
                Op::AvgPool { x, kernel } => {
                    let (rows, cols) = self.value(*x).shape();
                    let mut gx = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            let w = c / kernel;
                            let width = (cols - w * kernel).min(*kernel);
                            gx.set(r, c, g.get(r, w) / width as f64);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Scale(a, c) => {
                    let mut ga = g;
                    ga.scale_in_place(*c);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    mask,
                    probs,
                    count,
                } => {
                    let upstream = g.as_slice()[0] / *count as f64;
                    let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                    for r in 0..probs.rows() {
                        if !mask[r] {
                            continue;
                        }
                        for c in 0..probs.cols() {
                            let onehot = if c == targets[r] { 1.0 } else { 0.0 };
                            gl.set(r, c, (probs.get(r, c) - onehot) * upstream);
                        }
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        for node in &self.nodes {
            if let Op::Param(name) = &node.op {
                if !result.contains(name) {
                    result.insert(name.clone(), Matrix::zeros(node.value.rows(), node.value.cols()));
                }
            }
        }
        Ok(result)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

/// Logistic function in a form that never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
