//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! A [`Graph`] records every operation applied during a forward pass. Node
//! handles ([`Var`]) are plain indices into the tape, so the tape order is a
//! valid topological order and [`Graph::backward`] simply walks it in
//! reverse.

use std::collections::HashMap;

use super::tensor::{self, gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Tensor),
    Relu(Var),
    Sigmoid(Var),
    MaskedSoftmax(Var, Vec<bool>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Tensor,
        inv_std: Vec<f64>,
    },
    Gather(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Sum(Var),
    SmoothedNll {
        logits: Var,
        targets: Vec<Option<usize>>,
        epsilon: f64,
        log_probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The recording tape.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<usize, Var>,
    grads: Vec<Option<Tensor>>,
    track: bool,
    masked_rows: usize,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: HashMap::new(),
            grads: Vec::new(),
            track: true,
            masked_rows: 0,
        }
    }

    /// A graph that never records gradients; parameters become constants.
    pub fn inference() -> Self {
        Graph {
            track: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of attention rows that were fully masked so far.
    pub fn fully_masked_rows(&self) -> usize {
        self.masked_rows
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad: needs_grad && self.track,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable input whose gradient can be read after `backward`.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds parameter `id` once per graph; later calls return the same node.
    pub fn param(&mut self, id: usize, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shape");
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_t(self.value(b)).expect("matmul_t shape");
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMulT(a, b), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Sub(a, b), ng)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let ng = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), ng)
    }

    /// `x + bias`, `bias` being `1 × cols` and broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let value = tensor::add_row(self.value(x), self.value(bias));
        let ng = self.needs(x) || self.needs(bias);
        self.push(value, Op::AddRow(x, bias), ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        let ng = self.needs(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    /// Element-wise product with a constant tensor (dropout masks).
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let value = self.value(a).zip_map(&c, |x, y| x * y);
        let ng = self.needs(a);
        self.push(value, Op::MulConst(a, c), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(tensor::relu);
        let ng = self.needs(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(tensor::sigmoid);
        let ng = self.needs(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    /// Row-wise softmax of `scores + mask`; fully masked rows become uniform
    /// and are counted in [`Graph::fully_masked_rows`].
    pub fn masked_softmax(&mut self, scores: Var, mask: Option<&Tensor>, gamma: f64) -> Var {
        let (value, flags) = tensor::masked_softmax(self.value(scores), mask, gamma);
        let flagged = flags.iter().filter(|&&f| f).count();
        self.masked_rows += flagged;
        let ng = self.needs(scores);
        self.push(value, Op::MaskedSoftmax(scores, flags), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let (normalized, inv_std) = tensor::normalize_rows(self.value(x));
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut value = normalized.clone();
        for r in 0..value.rows() {
            for (c, v) in value.row_mut(r).iter_mut().enumerate() {
                *v = *v * g[c] + b[c];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            ng,
        )
    }

    /// Selects rows of `table` (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut value = Tensor::zeros(ids.len(), t.cols());
        for (r, &id) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(t.row(id));
        }
        let ng = self.needs(table);
        self.push(value, Op::Gather(table, ids.to_vec()), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat_cols(&tensors).expect("concat_cols shape");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let value = self.value(a).slice_cols(start, width);
        let ng = self.needs(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::full(1, 1, self.value(a).sum());
        let ng = self.needs(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Summed label-smoothed negative log-likelihood over rows of `logits`.
    ///
    /// Row `i` contributes `(1-ε)·(-log p[t_i]) + ε·mean_j(-log p[j])`;
    /// rows whose target is `None` are skipped.
    pub fn smoothed_nll(&mut self, logits: Var, targets: &[Option<usize>], epsilon: f64) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target per logit row");
        let log_probs = tensor::log_softmax_rows(lv);
        let vocab = lv.cols() as f64;
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                let row = log_probs.row(r);
                let mean = row.iter().sum::<f64>() / vocab;
                loss += -(1.0 - epsilon) * row[t] - epsilon * mean;
            }
        }
        let ng = self.needs(logits);
        self.push(
            Tensor::full(1, 1, loss),
            Op::SmoothedNll {
                logits,
                targets: targets.to_vec(),
                epsilon,
                log_probs,
            },
            ng,
        )
    }

    /// Back-propagates from the scalar node `root`.
    pub fn backward(&mut self, root: Var) {
        assert_eq!(self.value(root).shape(), [1, 1], "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(1, 1, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl FnOnce(&mut Tensor),
    ) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            let [r, c] = self.nodes[v.0].value.shape();
            *slot = Some(Tensor::zeros(r, c));
        }
        f(slot.as_mut().expect("initialised above"));
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate_with(grads, *a, |ga| gemm(g, false, bv, true, ga, 1.0));
                self.accumulate_with(grads, *b, |gb| gemm(av, true, g, false, gb, 1.0));
            }
            Op::MatMulT(a, b) => {
                // c = a·bᵀ ⇒ da = g·b, db = gᵀ·a
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate_with(grads, *a, |ga| gemm(g, false, bv, false, ga, 1.0));
                self.accumulate_with(grads, *b, |gb| gemm(g, true, av, false, gb, 1.0));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, g.zip_map(bv, |x, y| x * y));
                self.accumulate(grads, *b, g.zip_map(av, |x, y| x * y));
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                self.accumulate_with(grads, *bias, |gb| {
                    let out = gb.data_mut();
                    for r in 0..g.rows() {
                        for (o, v) in out.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::AddScalar(a) => self.accumulate(grads, *a, g.clone()),
            Op::MulConst(a, c) => self.accumulate(grads, *a, g.zip_map(c, |x, y| x * y)),
            Op::Relu(a) => {
                let av = self.value(*a);
                self.accumulate(grads, *a, g.zip_map(av, |x, y| if y > 0.0 { x } else { 0.0 }));
            }
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, g.zip_map(&node.value, |x, s| x * s * (1.0 - s)));
            }
            Op::MaskedSoftmax(scores, flags) => {
                let p = &node.value;
                let mut d = Tensor::zeros(p.rows(), p.cols());
                for (r, &masked) in flags.iter().enumerate() {
                    if masked {
                        continue;
                    }
                    let (pr, gr) = (p.row(r), g.row(r));
                    let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, out) in d.row_mut(r).iter_mut().enumerate() {
                        *out = pr[c] * (gr[c] - dot);
                    }
                }
                self.accumulate(grads, *scores, d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let gv = self.value(*gain).data();
                let n = normalized.cols() as f64;
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(g.rows(), g.cols());
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let (gr, xr) = (g.row(r), normalized.row(r));
                        let dxhat: Vec<f64> = gr.iter().zip(gv).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx: f64 =
                            dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                            *out = inv * (dxhat[c] - mean_d - xr[c] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate_with(grads, *gain, |gg| {
                    let out = gg.data_mut();
                    for r in 0..g.rows() {
                        for (c, o) in out.iter_mut().enumerate() {
                            *o += g.get(r, c) * normalized.get(r, c);
                        }
                    }
                });
                self.accumulate_with(grads, *bias, |gb| {
                    let out = gb.data_mut();
                    for r in 0..g.rows() {
                        for (o, v) in out.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Gather(table, ids) => {
                self.accumulate_with(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, v) in gt.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accumulate(grads, p, g.slice_cols(off, w));
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let w = g.cols();
                self.accumulate_with(grads, *a, |ga| {
                    for r in 0..g.rows() {
                        for (o, v) in ga.row_mut(r)[*start..*start + w].iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let [r, c] = self.value(*a).shape();
                self.accumulate(grads, *a, Tensor::full(r, c, g.get(0, 0)));
            }
            Op::SmoothedNll {
                logits,
                targets,
                epsilon,
                log_probs,
            } => {
                let scale = g.get(0, 0);
                let vocab = log_probs.cols() as f64;
                let mut d = Tensor::zeros(log_probs.rows(), log_probs.cols());
                for (r, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    let row = d.row_mut(r);
                    for (c, out) in row.iter_mut().enumerate() {
                        // d/dz of -(1-ε)·log p_t - ε·mean log p  =  p - (1-ε)·onehot - ε/V
                        *out = scale * (log_probs.get(r, c).exp() - epsilon / vocab);
                    }
                    row[t] -= scale * (1.0 - epsilon);
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of all bound parameters, keyed by parameter id.
    pub fn param_grads(&self) -> Vec<(usize, &Tensor)> {
        let mut out: Vec<(usize, &Tensor)> = self
            .params
            .iter()
            .filter_map(|(&id, &v)| self.grad(v).map(|g| (id, g)))
            .collect();
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
