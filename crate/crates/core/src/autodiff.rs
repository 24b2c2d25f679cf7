//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! then propagates the gradient of a scalar output back to every recorded
//! node that depends on a parameter.

use ndarray::{s, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    RowSum(Var),
    PowConst(Var, f64),
    ScaleRows(Var, Var),
    ColMax(Var, Vec<usize>),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    WeightedSoftmaxRows(Var, Var),
    OuterSum(Var, Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    SymFromUpper(Var),
    Sum(Var),
    MulConst(Var, Mat),
    LinComb(Vec<Var>, Var),
    SliceCols(Var, usize),
    BceWithLogits(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    /// Gradient for `v`, or zeros of the right shape when nothing flowed.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Mat {
        self.grads[v.0].clone().unwrap_or_else(|| Mat::zeros(tape.value(v).raw_dim()))
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn upper_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Side of the square matrix whose strict upper triangle has `p` entries.
fn side_for_upper(p: usize) -> usize {
    let mut n = 1;
    while upper_len(n) < p {
        n += 1;
    }
    assert_eq!(upper_len(n), p, "{p} is not a triangular number");
    n
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Trainable input: gradients flow into it.
    pub fn param(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Constant input: no gradient is tracked.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    /// `a + row` with the 1×k `row` broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a), &[a])
    }

    /// n×k → n×1 row sums.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowSum(a), &[a])
    }

    pub fn pow_const(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).mapv(|x| x.powf(p));
        self.push(v, Op::PowConst(a, p), &[a])
    }

    /// Row `i` of `a` multiplied by `s[i]` (`s` is n×1).
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        assert_eq!(self.value(s).ncols(), 1);
        let v = self.value(a) * self.value(s);
        self.push(v, Op::ScaleRows(a, s), &[a, s])
    }

    /// Column-wise maximum (1×k). Gradient goes to the first maximal row.
    pub fn col_max(&mut self, a: Var) -> Var {
        let m = self.value(a);
        assert!(m.nrows() > 0, "max over zero rows");
        let mut arg = vec![0; m.ncols()];
        let mut out = Mat::zeros((1, m.ncols()));
        for j in 0..m.ncols() {
            let mut best = m[[0, j]];
            for i in 1..m.nrows() {
                if m[[i, j]] > best {
                    best = m[[i, j]];
                    arg[j] = i;
                }
            }
            out[[0, j]] = best;
        }
        self.push(out, Op::ColMax(a, arg), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - mx).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(v, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let mx = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
            row -= lse;
        }
        self.push(v, Op::LogSoftmaxRows(a), &[a])
    }

    /// `out[i][j] = w[i][j]·exp(e[i][j]) / Σ_k w[i][k]·exp(e[i][k])`; rows
    /// with zero total weight become zero.
    pub fn weighted_softmax_rows(&mut self, e: Var, w: Var) -> Var {
        let (ev, wv) = (self.value(e), self.value(w));
        assert_eq!(ev.dim(), wv.dim());
        let mut v = Mat::zeros(ev.raw_dim());
        for i in 0..ev.nrows() {
            let mx = ev.row(i).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let mut z = 0.0;
            for j in 0..ev.ncols() {
                let t = wv[[i, j]] * (ev[[i, j]] - mx).exp();
                v[[i, j]] = t;
                z += t;
            }
            if z > 0.0 {
                v.row_mut(i).mapv_inplace(|t| t / z);
            }
        }
        self.push(v, Op::WeightedSoftmaxRows(e, w), &[e, w])
    }

    /// `out[i][j] = u[i] + v[j]` for column vectors `u` (n×1) and `v` (k×1).
    pub fn outer_sum(&mut self, u: Var, v: Var) -> Var {
        let (uv, vv) = (self.value(u), self.value(v));
        assert_eq!(uv.ncols(), 1);
        assert_eq!(vv.ncols(), 1);
        let out = uv + &vv.t();
        self.push(out, Op::OuterSum(u, v), &[u, v])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let flat: Vec<f64> = self.value(a).iter().copied().collect();
        let v = Mat::from_shape_vec((rows, cols), flat).expect("element count preserved");
        self.push(v, Op::Reshape(a), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(v, Op::Transpose(a), &[a])
    }

    /// 1×p row of strict-upper-triangle entries (row-major) → symmetric n×n
    /// matrix with zero diagonal.
    pub fn sym_from_upper(&mut self, a: Var) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), 1);
        let n = side_for_upper(av.ncols());
        let mut v = Mat::zeros((n, n));
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                v[[i, j]] = av[[0, k]];
                v[[j, i]] = av[[0, k]];
                k += 1;
            }
        }
        self.push(v, Op::SymFromUpper(a), &[a])
    }

    /// Sum of all entries (1×1).
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a), &[a])
    }

    /// Elementwise product with a constant matrix (dropout masks, selections).
    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let v = self.value(a) * &c;
        self.push(v, Op::MulConst(a, c), &[a])
    }

    /// `Σ_k coeffs[k]·parts[k]` for a 1×m coefficient row.
    pub fn lin_comb(&mut self, parts: &[Var], coeffs: Var) -> Var {
        let c = self.value(coeffs);
        assert_eq!(c.dim(), (1, parts.len()));
        let mut v = Mat::zeros(self.value(parts[0]).raw_dim());
        for (k, p) in parts.iter().enumerate() {
            v.scaled_add(c[[0, k]], self.value(*p));
        }
        let mut inputs = parts.to_vec();
        inputs.push(coeffs);
        self.push(v, Op::LinComb(parts.to_vec(), coeffs), &inputs)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start), &[a])
    }

    /// Summed binary cross-entropy between `sigmoid(logits)` and `target`.
    pub fn bce_with_logits(&mut self, logits: Var, target: Mat) -> Var {
        let x = self.value(logits);
        assert_eq!(x.dim(), target.dim());
        let total: f64 = Zip::from(x).and(&target).fold(0.0, |acc, &x, &t| {
            acc + x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
        });
        self.push(Mat::from_elem((1, 1), total), Op::BceWithLogits(logits, target), &[logits])
    }

    /// Gradients of the scalar `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Grads {
        assert_eq!(self.value(out).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Mat::ones((1, 1)));
        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Mat>], v: Var, g: Mat) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Mat, grads: &mut [Option<Mat>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, g.dot(&val(*b).t()));
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, val(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                self.accumulate(grads, *a, g * val(*b));
                self.accumulate(grads, *b, g * val(*a));
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g * *c),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::LeakyRelu(a, slope) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d *= slope;
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(out).for_each(|d, &y| *d *= y * (1.0 - y));
                self.accumulate(grads, *a, d);
            }
            Op::Exp(a) => self.accumulate(grads, *a, g * out),
            Op::RowSum(a) => {
                let d = Mat::from_shape_fn(val(*a).raw_dim(), |(i, _)| g[[i, 0]]);
                self.accumulate(grads, *a, d);
            }
            Op::PowConst(a, p) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| *d *= p * x.powf(p - 1.0));
                self.accumulate(grads, *a, d);
            }
            Op::ScaleRows(a, s) => {
                self.accumulate(grads, *a, g * val(*s));
                if self.nodes[s.0].needs_grad {
                    let d = (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    self.accumulate(grads, *s, d);
                }
            }
            Op::ColMax(a, arg) => {
                let mut d = Mat::zeros(val(*a).raw_dim());
                for (j, &i) in arg.iter().enumerate() {
                    d[[i, j]] = g[[0, j]];
                }
                self.accumulate(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let mut d = Mat::zeros(out.raw_dim());
                for i in 0..out.nrows() {
                    let dot: f64 = out.row(i).dot(&g.row(i));
                    for j in 0..out.ncols() {
                        d[[i, j]] = out[[i, j]] * (g[[i, j]] - dot);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = g.clone();
                for i in 0..out.nrows() {
                    let gs = g.row(i).sum();
                    for j in 0..out.ncols() {
                        d[[i, j]] -= out[[i, j]].exp() * gs;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::WeightedSoftmaxRows(e, w) => {
                // with p = softmax weights, dp/de = p(δ − p), dp/dw = (δ − p)·p/w
                let wv = val(*w);
                let mut de = Mat::zeros(out.raw_dim());
                let mut dw = Mat::zeros(out.raw_dim());
                let ev = val(*e);
                for i in 0..out.nrows() {
                    let dot: f64 = out.row(i).dot(&g.row(i));
                    let mx = ev.row(i).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                    let z: f64 = (0..ev.ncols()).map(|j| wv[[i, j]] * (ev[[i, j]] - mx).exp()).sum();
                    if z <= 0.0 {
                        continue;
                    }
                    for j in 0..out.ncols() {
                        de[[i, j]] = out[[i, j]] * (g[[i, j]] - dot);
                        dw[[i, j]] = (ev[[i, j]] - mx).exp() / z * (g[[i, j]] - dot);
                    }
                }
                self.accumulate(grads, *e, de);
                self.accumulate(grads, *w, dw);
            }
            Op::OuterSum(u, v) => {
                self.accumulate(grads, *u, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                self.accumulate(grads, *v, g.sum_axis(Axis(0)).insert_axis(Axis(1)));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = val(*p).ncols();
                    self.accumulate(grads, *p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let h = val(*p).nrows();
                    self.accumulate(grads, *p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::Reshape(a) => {
                let flat: Vec<f64> = g.iter().copied().collect();
                let d = Mat::from_shape_vec(val(*a).raw_dim(), flat).expect("element count preserved");
                self.accumulate(grads, *a, d);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.t().to_owned()),
            Op::SymFromUpper(a) => {
                let n = out.nrows();
                let mut d = Mat::zeros(val(*a).raw_dim());
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        d[[0, k]] = g[[i, j]] + g[[j, i]];
                        k += 1;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => self.accumulate(grads, *a, Mat::from_elem(val(*a).raw_dim(), g[[0, 0]])),
            Op::MulConst(a, c) => self.accumulate(grads, *a, g * c),
            Op::LinComb(parts, coeffs) => {
                let c = val(*coeffs);
                let mut dc = Mat::zeros(c.raw_dim());
                for (k, p) in parts.iter().enumerate() {
                    self.accumulate(grads, *p, g * c[[0, k]]);
                    dc[[0, k]] = (g * val(*p)).sum();
                }
                self.accumulate(grads, *coeffs, dc);
            }
            Op::SliceCols(a, start) => {
                let mut d = Mat::zeros(val(*a).raw_dim());
                d.slice_mut(s![.., *start..*start + out.ncols()]).assign(g);
                self.accumulate(grads, *a, d);
            }
            Op::BceWithLogits(logits, target) => {
                let mut d = val(*logits).mapv(sigmoid);
                d -= target;
                d *= g[[0, 0]];
                self.accumulate(grads, *logits, d);
            }
        }
    }
}

/// Adam with optional L2 weight decay folded into the gradient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(params: &[Mat], lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
            v: params.iter().map(|p| Mat::zeros(p.raw_dim())).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (b1, b2, wd) = (self.beta1, self.beta2, self.weight_decay);
            let (lr, eps) = (self.lr, self.eps);
            Zip::from(p).and(g).and(&mut self.m[k]).and(&mut self.v[k]).for_each(|p, &g, m, v| {
                let g = g + wd * *p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            });
        }
    }
}

/// Plain gradient descent with L2 weight decay.
pub fn sgd_step(params: &mut [Mat], grads: &[Mat], lr: f64, weight_decay: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        Zip::from(p).and(g).for_each(|p, &g| *p -= lr * (g + weight_decay * *p));
    }
}

/// Uniform initialization in `±1/sqrt(fan_in)`.
pub fn uniform_init<R: rand::Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Mat {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Mat::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

/// Relative error with the denominator floored at `1e-6`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}
