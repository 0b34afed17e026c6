//! Reverse-mode differentiation over 2-D `f64` matrices.
//!
//! A [`Tape`] records operations in execution order; [`Tape::backward`]
//! walks it in reverse and returns gradients for every parameter. The op
//! set is exactly what the transformer needs: attention and layer norm are
//! fused so their backward passes stay local.

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Named parameter matrices in declaration order. Vectors are stored as
/// `1 x n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Mat) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: usize) -> &Mat {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Mat {
        &mut self.values[id]
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Mat] {
        &mut self.values
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Mat> {
        self.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// One attention problem inside a packed batch: query rows
/// `q_start..q_start+q_len` attend to key rows `k_start..k_start+k_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub q_start: usize,
    pub q_len: usize,
    pub k_start: usize,
    pub k_len: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionSpec {
    pub heads: usize,
    pub segments: Vec<Segment>,
    /// Per key row; invalid keys (padding) receive zero weight.
    pub key_valid: Vec<bool>,
    /// Query `i` of a segment may only see keys `0..=i` of that segment.
    pub causal: bool,
}

enum Op {
    Param(usize),
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Gelu(Var),
    Dropout(Var, Mat),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        probs: Vec<Mat>,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Mat,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-wise layer normalization returning `(y, xhat, inv_std)`.
pub fn layer_norm(x: ArrayView2<f64>, gamma: &Mat, beta: &Mat) -> (Mat, Mat, Vec<f64>) {
    let cols = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / cols;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / cols;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        inv_std.push(inv);
    }
    let y = &xhat * gamma + beta;
    (y, xhat, inv_std)
}

/// Numerically stable softmax of one row, in place. Entries equal to
/// `-inf` get probability 0; an all-masked row becomes all zeros.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

fn accumulate(slot: &mut Option<Mat>, delta: Mat) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.push(Mat::zeros((0, 0)), Op::Param(id))
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let value = self.value(x) + self.value(row);
        self.push(value, Op::AddRow(x, row))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let xw = self.matmul(x, weight);
        self.add_row(xw, bias)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(gelu);
        self.push(value, Op::Gelu(x))
    }

    /// Multiplies elementwise by a fixed mask (already scaled by 1/keep).
    pub fn dropout(&mut self, x: Var, mask: Mat) -> Var {
        let value = self.value(x) * &mask;
        self.push(value, Op::Dropout(x, mask))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (y, xhat, inv_std) = layer_norm(self.value(x).view(), self.value(gamma), self.value(beta));
        self.push(
            y,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Rows of `table` selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Var {
        let t = self.value(table);
        let mut value = Mat::zeros((ids.len(), t.ncols()));
        for (i, &id) in ids.iter().enumerate() {
            value.row_mut(i).assign(&t.row(id));
        }
        self.push(value, Op::Gather { table, ids })
    }

    /// Multi-head scaled dot-product attention over packed segments.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Var {
        let (qm, km, vm) = (self.value(q), self.value(k), self.value(v));
        let d = qm.ncols();
        assert_eq!(d % spec.heads, 0, "model width must divide into heads");
        assert_eq!(spec.key_valid.len(), km.nrows(), "key mask length");
        let dh = d / spec.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Mat::zeros((qm.nrows(), d));
        let mut probs = Vec::with_capacity(spec.segments.len() * spec.heads);
        for seg in &spec.segments {
            for h in 0..spec.heads {
                let cols = h * dh..(h + 1) * dh;
                let qh = qm.slice(s![seg.q_start..seg.q_start + seg.q_len, cols.clone()]);
                let kh = km.slice(s![seg.k_start..seg.k_start + seg.k_len, cols.clone()]);
                let vh = vm.slice(s![seg.k_start..seg.k_start + seg.k_len, cols.clone()]);
                let mut p = qh.dot(&kh.t());
                for (i, mut row) in p.rows_mut().into_iter().enumerate() {
                    for (j, x) in row.iter_mut().enumerate() {
                        let visible = spec.key_valid[seg.k_start + j] && (!spec.causal || j <= i);
                        *x = if visible { *x * scale } else { f64::NEG_INFINITY };
                    }
                    softmax_in_place(row.as_slice_mut().expect("contiguous row"));
                }
                out.slice_mut(s![seg.q_start..seg.q_start + seg.q_len, cols])
                    .assign(&p.dot(&vh));
                probs.push(p);
            }
        }
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                spec,
                probs,
            },
        )
    }

    /// Sum over rows of `-log softmax(logits)[target]`; rows with `None`
    /// targets are ignored. Produces a `1 x 1` value.
    pub fn cross_entropy_sum(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let mut probs = self.value(logits).clone();
        let mut total = 0.0;
        for (mut row, target) in probs.rows_mut().into_iter().zip(&targets) {
            let slice = row.as_slice_mut().expect("contiguous row");
            softmax_in_place(slice);
            if let Some(t) = *target {
                total -= slice[t].ln();
            }
        }
        let value = Mat::from_elem((1, 1), total);
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            },
        )
    }

    /// Backpropagates from `output` (whose gradient is `seed`) and returns
    /// one gradient matrix per parameter, zero where unused.
    pub fn backward(&self, output: Var, seed: Mat) -> Vec<Mat> {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads = self.params.zeros_like();
        grads[output.0] = Some(seed);
        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Param(id) => param_grads[*id] += &g,
                Op::Constant => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], da);
                    accumulate(&mut grads[b.0], db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(x, row) => {
                    let db = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], db);
                    accumulate(&mut grads[x.0], g);
                }
                Op::Gelu(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(self.value(*x))
                        .for_each(|d, &xv| *d *= gelu_grad(xv));
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Dropout(x, mask) => {
                    accumulate(&mut grads[x.0], g * mask);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let dgamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let mut dxhat = g * self.value(*gamma);
                    let n = dxhat.ncols() as f64;
                    for ((mut drow, xrow), &inv) in dxhat
                        .rows_mut()
                        .into_iter()
                        .zip(xhat.rows())
                        .zip(inv_std.iter())
                    {
                        let sum_d = drow.sum();
                        let sum_dx = drow.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum::<f64>();
                        Zip::from(&mut drow).and(&xrow).for_each(|d, &xh| {
                            *d = inv / n * (n * *d - sum_d - xh * sum_dx);
                        });
                    }
                    accumulate(&mut grads[gamma.0], dgamma);
                    accumulate(&mut grads[beta.0], dbeta);
                    accumulate(&mut grads[x.0], dxhat);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Mat::zeros(self.value(*table).raw_dim());
                    for (i, &id) in ids.iter().enumerate() {
                        let mut row = dt.row_mut(id);
                        row += &g.row(i);
                    }
                    accumulate(&mut grads[table.0], dt);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    spec,
                    probs,
                } => {
                    let (qm, km, vm) = (self.value(*q), self.value(*k), self.value(*v));
                    let d = qm.ncols();
                    let dh = d / spec.heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Mat::zeros(qm.raw_dim());
                    let mut dk = Mat::zeros(km.raw_dim());
                    let mut dv = Mat::zeros(vm.raw_dim());
                    let mut p_iter = probs.iter();
                    for seg in &spec.segments {
                        let qr = seg.q_start..seg.q_start + seg.q_len;
                        let kr = seg.k_start..seg.k_start + seg.k_len;
                        for h in 0..spec.heads {
                            let p = p_iter.next().expect("one prob matrix per head");
                            let cols = h * dh..(h + 1) * dh;
                            let go = g.slice(s![qr.clone(), cols.clone()]);
                            let qh = qm.slice(s![qr.clone(), cols.clone()]);
                            let kh = km.slice(s![kr.clone(), cols.clone()]);
                            let vh = vm.slice(s![kr.clone(), cols.clone()]);
                            let mut dvh = dv.slice_mut(s![kr.clone(), cols.clone()]);
                            dvh += &p.t().dot(&go);
                            let mut ds = go.dot(&vh.t());
                            for (mut drow, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                                let dot: f64 = drow.iter().zip(prow.iter()).map(|(a, b)| a * b).sum();
                                Zip::from(&mut drow)
                                    .and(&prow)
                                    .for_each(|dsv, &pv| *dsv = pv * (*dsv - dot) * scale);
                            }
                            let mut dqh = dq.slice_mut(s![qr.clone(), cols.clone()]);
                            dqh += &ds.dot(&kh);
                            let mut dkh = dk.slice_mut(s![kr.clone(), cols]);
                            dkh += &ds.t().dot(&qh);
                        }
                    }
                    accumulate(&mut grads[q.0], dq);
                    accumulate(&mut grads[k.0], dk);
                    accumulate(&mut grads[v.0], dv);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let scale = g[[0, 0]];
                    let mut dl = probs.clone();
                    for (mut row, target) in dl.rows_mut().into_iter().zip(targets) {
                        match *target {
                            Some(t) => {
                                row[t] -= 1.0;
                                row.mapv_inplace(|x| x * scale);
                            }
                            None => row.fill(0.0),
                        }
                    }
                    accumulate(&mut grads[logits.0], dl);
                }
            }
        }
        param_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of every parameter entry of a scalar
    /// function built on a tape.
    fn check<F>(params: &mut ParamSet, build: F)
    where
        F: Fn(&mut Tape) -> Var,
    {
        let analytic = {
            let mut tape = Tape::new(params);
            let out = build(&mut tape);
            tape.backward(out, Mat::from_elem((1, 1), 1.0))
        };
        let eps = 1e-6;
        for p in 0..params.len() {
            for idx in 0..params.get(p).len() {
                let (r, c) = (idx / params.get(p).ncols(), idx % params.get(p).ncols());
                let orig = params.get(p)[[r, c]];
                params.get_mut(p)[[r, c]] = orig + eps;
                let plus = {
                    let mut t = Tape::new(params);
                    let o = build(&mut t);
                    t.value(o)[[0, 0]]
                };
                params.get_mut(p)[[r, c]] = orig - eps;
                let minus = {
                    let mut t = Tape::new(params);
                    let o = build(&mut t);
                    t.value(o)[[0, 0]]
                };
                params.get_mut(p)[[r, c]] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic[p][[r, c]];
                assert!(
                    (a - numeric).abs() <= 1e-6 * (1.0 + a.abs().max(numeric.abs())),
                    "param {} [{r},{c}]: analytic {a} numeric {numeric}",
                    params.name(p)
                );
            }
        }
    }

    #[test]
    fn linear_gelu_layer_norm_gradients() {
        let mut params = ParamSet::new();
        let w = params.push("w", array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]]);
        let b = params.push("b", array![[0.05, -0.1, 0.2]]);
        let g = params.push("g", array![[1.1, 0.9, 1.3]]);
        let beta = params.push("beta", array![[0.0, 0.1, -0.2]]);
        let table = params.push("table", array![[0.2, -0.4], [0.7, 0.1], [-0.3, 0.5]]);
        check(&mut params, |t| {
            let wv = t.param(w);
            let bv = t.param(b);
            let gv = t.param(g);
            let betav = t.param(beta);
            let tv = t.param(table);
            let x = t.gather(tv, vec![2, 0, 2, 1]);
            let h = t.linear(x, wv, bv);
            let h = t.gelu(h);
            let h = t.layer_norm(h, gv, betav);
            let mask = array![[1.0, 0.0, 1.25], [1.25, 1.25, 1.25], [0.0, 1.25, 1.25], [1.25, 1.25, 0.0]];
            let h = t.dropout(h, mask);
            let c = x_like(t, h);
            let h2 = t.add(h, c);
            t.cross_entropy_sum(h2, vec![Some(0), None, Some(2), Some(1)])
        });
    }

    fn x_like(t: &mut Tape, v: Var) -> Var {
        let shape = t.value(v).raw_dim();
        t.constant(Mat::from_shape_fn(shape, |(i, j)| 0.1 * (i as f64) - 0.05 * j as f64))
    }

    #[test]
    fn attention_gradients_with_masks() {
        let mut params = ParamSet::new();
        let q = params.push("q", Mat::from_shape_fn((5, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.2 - 0.4));
        let k = params.push("k", Mat::from_shape_fn((6, 4), |(i, j)| ((i * 5 + j) % 7) as f64 * 0.15 - 0.45));
        let v = params.push("v", Mat::from_shape_fn((6, 4), |(i, j)| ((i + 2 * j) % 3) as f64 * 0.3 - 0.3));
        let spec = AttentionSpec {
            heads: 2,
            segments: vec![
                Segment { q_start: 0, q_len: 3, k_start: 0, k_len: 3 },
                Segment { q_start: 3, q_len: 2, k_start: 3, k_len: 3 },
            ],
            key_valid: vec![true, true, true, true, true, false],
            causal: true,
        };
        check(&mut params, |t| {
            let (qv, kv, vv) = (t.param(q), t.param(k), t.param(v));
            let a = t.attention(qv, kv, vv, spec.clone());
            t.cross_entropy_sum(a, vec![Some(1), Some(0), Some(3), Some(2), Some(1)])
        });
    }

    #[test]
    fn softmax_masks_and_normalizes() {
        let mut row = [1.0, f64::NEG_INFINITY, 3.0];
        softmax_in_place(&mut row);
        assert_eq!(row[1], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut dead = [f64::NEG_INFINITY; 2];
        softmax_in_place(&mut dead);
        assert_eq!(dead, [0.0, 0.0]);
    }
}
