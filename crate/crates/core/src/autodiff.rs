//! Tape-based reverse-mode differentiation over [`Tensor`].
//!
//! Nodes are appended in forward order, so the node vector is already a
//! topological order and the backward sweep is a single reverse pass. The op
//! set is exactly what the Pre-LN encoder, the MLM head and the classifier
//! head need; there is no general broadcasting.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Sentinel for fields assigned later during graph construction.
    pub(crate) fn placeholder() -> NodeId {
        NodeId(usize::MAX)
    }
}

enum Op {
    Leaf,
    /// C = A B for rank-2 A, B.
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    /// Elementwise sum of two same-shape tensors.
    Add(NodeId, NodeId),
    /// a[m,n] + b[n], b added to every row.
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    Gelu(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    LayerNormRows { x: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    /// out[i, :] = x[ids[i], :]; doubles as embedding lookup and row selection.
    GatherRows { x: NodeId, ids: Vec<usize> },
    SliceCols { x: NodeId, start: usize, len: usize },
    ConcatCols(Vec<NodeId>),
    /// Mean of the given rows, shape [1, n].
    MeanRows { x: NodeId, rows: Vec<usize> },
    /// -(1/k) sum_i logp[i, labels[i]].
    NllMean { logp: NodeId, labels: Vec<usize> },
    /// Elementwise product with a fixed mask of 0 or 1/(1-p) entries.
    Dropout { x: NodeId, mask: Vec<f64> },
    SumAll(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(v, Op::Matmul(a, b))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).transpose();
        self.push(v, Op::Transpose(x))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shapes");
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let v = Tensor::new(ta.shape().to_vec(), data).unwrap();
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rank(), 2);
        let n = ta.cols();
        assert_eq!(tb.numel(), n, "row broadcast length");
        let mut data = ta.data().to_vec();
        for r in 0..ta.rows() {
            for j in 0..n {
                data[r * n + j] += tb.data()[j];
            }
        }
        let v = Tensor::new(ta.shape().to_vec(), data).unwrap();
        self.push(v, Op::AddRowBroadcast(a, b))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * c).collect();
        let v = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(v, Op::Scale(x, c))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| gelu(v)).collect();
        let v = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(v, Op::Gelu(x))
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let axis = t.rank() - 1;
        let v = t.softmax(axis);
        self.push(v, Op::SoftmaxRows(x))
    }

    pub fn log_softmax_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let n = t.shape()[t.rank() - 1];
        let rows = t.numel() / n;
        let mut data = t.data().to_vec();
        for r in 0..rows {
            let row = &mut data[r * n..(r + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let v = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(v, Op::LogSoftmaxRows(x))
    }

    pub fn layer_norm_rows(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let v = self.value(x).layer_norm(self.value(gain), self.value(bias), eps);
        self.push(v, Op::LayerNormRows { x, gain, bias, eps })
    }

    pub fn gather_rows(&mut self, x: NodeId, ids: Vec<usize>) -> NodeId {
        let t = self.value(x);
        assert_eq!(t.rank(), 2);
        let n = t.cols();
        let mut data = Vec::with_capacity(ids.len() * n);
        for &i in &ids {
            assert!(i < t.rows(), "gather id {i} out of range {}", t.rows());
            data.extend_from_slice(t.row(i));
        }
        let v = Tensor::new(vec![ids.len(), n], data).unwrap();
        self.push(v, Op::GatherRows { x, ids })
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let t = self.value(x);
        let (m, n) = (t.rows(), t.cols());
        assert!(start + len <= n, "column slice out of range");
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let v = Tensor::new(vec![m, len], data).unwrap();
        self.push(v, Op::SliceCols { x, start, len })
    }

    pub fn concat_cols(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty());
        let m = self.value(parts[0]).rows();
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &p in &parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let v = Tensor::new(vec![m, total], data).unwrap();
        self.push(v, Op::ConcatCols(parts))
    }

    pub fn mean_rows(&mut self, x: NodeId, rows: Vec<usize>) -> NodeId {
        let t = self.value(x);
        assert!(!rows.is_empty(), "mean over empty row set");
        let n = t.cols();
        let mut data = vec![0.0; n];
        for &r in &rows {
            for j in 0..n {
                data[j] += t.at2(r, j);
            }
        }
        let k = rows.len() as f64;
        for v in data.iter_mut() {
            *v /= k;
        }
        let v = Tensor::new(vec![1, n], data).unwrap();
        self.push(v, Op::MeanRows { x, rows })
    }

    pub fn nll_mean(&mut self, logp: NodeId, labels: Vec<usize>) -> NodeId {
        let t = self.value(logp);
        assert!(!labels.is_empty(), "nll over empty label set");
        assert_eq!(t.rows(), labels.len(), "one label per row");
        let mut sum = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            assert!(l < t.cols(), "label {l} out of range {}", t.cols());
            sum += t.at2(i, l);
        }
        let v = Tensor::scalar(-sum / labels.len() as f64);
        self.push(v, Op::NllMean { logp, labels })
    }

    /// Inverted-scaling dropout with a caller-supplied rng; identity when rate is 0.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut impl rand::Rng) -> NodeId {
        if rate == 0.0 {
            return x;
        }
        assert!((0.0..1.0).contains(&rate));
        let t = self.value(x);
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let v = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(v, Op::Dropout { x, mask })
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    /// Reverse sweep from a scalar root; returns one gradient slot per node.
    pub fn backward(&self, root: NodeId) -> Gradients {
        assert_eq!(self.value(root).numel(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = g.matmul(&tb.transpose()).unwrap();
                let db = ta.transpose().matmul(g).unwrap();
                add_grad(grads, *a, &da);
                add_grad(grads, *b, &db);
            }
            Op::Transpose(x) => add_grad(grads, *x, &g.transpose()),
            Op::Add(a, b) => {
                add_grad(grads, *a, g);
                add_grad(grads, *b, g);
            }
            Op::AddRowBroadcast(a, b) => {
                add_grad(grads, *a, g);
                let n = g.cols();
                let mut db = vec![0.0; n];
                for r in 0..g.rows() {
                    for j in 0..n {
                        db[j] += g.at2(r, j);
                    }
                }
                let shape = self.value(*b).shape().to_vec();
                add_grad(grads, *b, &Tensor::new(shape, db).unwrap());
            }
            Op::Scale(x, c) => {
                let data = g.data().iter().map(|v| v * c).collect();
                add_grad(grads, *x, &Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::Gelu(x) => {
                let tx = self.value(*x);
                let data = tx
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&v, &dg)| gelu_derivative(v) * dg)
                    .collect();
                add_grad(grads, *x, &Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let n = y.shape()[y.rank() - 1];
                let rows = y.numel() / n;
                let mut dx = vec![0.0; y.numel()];
                for r in 0..rows {
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_grad(grads, *x, &Tensor::new(y.shape().to_vec(), dx).unwrap());
            }
            Op::LogSoftmaxRows(x) => {
                let y = &node.value;
                let n = y.shape()[y.rank() - 1];
                let rows = y.numel() / n;
                let mut dx = vec![0.0; y.numel()];
                for r in 0..rows {
                    let yr = &y.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..n {
                        dx[r * n + j] = gr[j] - yr[j].exp() * gsum;
                    }
                }
                add_grad(grads, *x, &Tensor::new(y.shape().to_vec(), dx).unwrap());
            }
            Op::LayerNormRows { x, gain, bias, eps } => {
                let tx = self.value(*x);
                let tg = self.value(*gain);
                let n = tx.shape()[tx.rank() - 1];
                let rows = tx.numel() / n;
                let mut dx = vec![0.0; tx.numel()];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for r in 0..rows {
                    let xr = &tx.data()[r * n..(r + 1) * n];
                    let gr = &g.data()[r * n..(r + 1) * n];
                    let mean = xr.iter().sum::<f64>() / n as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                    for j in 0..n {
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                    }
                    let gw: Vec<f64> = (0..n).map(|j| gr[j] * tg.data()[j]).collect();
                    let m1 = gw.iter().sum::<f64>() / n as f64;
                    let m2 = gw.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        dx[r * n + j] = (gw[j] - m1 - xhat[j] * m2) * inv;
                    }
                }
                add_grad(grads, *x, &Tensor::new(tx.shape().to_vec(), dx).unwrap());
                let gshape = tg.shape().to_vec();
                add_grad(grads, *gain, &Tensor::new(gshape, dgain).unwrap());
                let bshape = self.value(*bias).shape().to_vec();
                add_grad(grads, *bias, &Tensor::new(bshape, dbias).unwrap());
            }
            Op::GatherRows { x, ids } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut dx = Tensor::zeros(tx.shape());
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        dx.data_mut()[id * n + j] += g.at2(i, j);
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::SliceCols { x, start, len } => {
                let tx = self.value(*x);
                let mut dx = Tensor::zeros(tx.shape());
                let n = tx.cols();
                for r in 0..g.rows() {
                    for j in 0..*len {
                        dx.data_mut()[r * n + start + j] += g.at2(r, j);
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let mut dp = Tensor::zeros(self.value(p).shape());
                    for r in 0..g.rows() {
                        for j in 0..pc {
                            dp.data_mut()[r * pc + j] = g.at2(r, offset + j);
                        }
                    }
                    add_grad(grads, p, &dp);
                    offset += pc;
                }
            }
            Op::MeanRows { x, rows } => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut dx = Tensor::zeros(tx.shape());
                let k = rows.len() as f64;
                for &r in rows {
                    for j in 0..n {
                        dx.data_mut()[r * n + j] += g.data()[j] / k;
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::NllMean { logp, labels } => {
                let tl = self.value(*logp);
                let mut dl = Tensor::zeros(tl.shape());
                let scale = -g.data()[0] / labels.len() as f64;
                for (i, &l) in labels.iter().enumerate() {
                    dl.data_mut()[i * tl.cols() + l] += scale;
                }
                add_grad(grads, *logp, &dl);
            }
            Op::Dropout { x, mask } => {
                let data = g.data().iter().zip(mask).map(|(v, m)| v * m).collect();
                add_grad(grads, *x, &Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::SumAll(x) => {
                let tx = self.value(*x);
                add_grad(grads, *x, &Tensor::full(tx.shape(), g.data()[0]));
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root w.r.t. the given node; zeros if the node did not
    /// influence the root.
    pub fn get(&self, id: NodeId, graph: &Graph) -> Tensor {
        match &self.grads[id.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(graph.value(id).shape()),
        }
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

fn add_grad(grads: &mut [Option<Tensor>], id: NodeId, delta: &Tensor) {
    match &mut grads[id.0] {
        Some(g) => {
            for (a, b) in g.data_mut().iter_mut().zip(delta.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(delta.clone()),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// tanh-form GELU; the backward differentiates this exact expression.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Central finite difference of `f` w.r.t. every coordinate of every
    /// input, compared against the tape's gradient.
    fn check_op<F>(inputs: &[Tensor], build: F, tol: f64)
    where
        F: Fn(&mut Graph, &[NodeId]) -> NodeId,
    {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &ids);
        let grads = g.backward(out);
        let analytic: Vec<Tensor> = ids.iter().map(|&id| grads.get(id, &g)).collect();

        let h = 1e-6;
        for (which, input) in inputs.iter().enumerate() {
            for coord in 0..input.numel() {
                let eval = |delta: f64| -> f64 {
                    let mut graph = Graph::new();
                    let ids: Vec<NodeId> = inputs
                        .iter()
                        .enumerate()
                        .map(|(i, t)| {
                            let mut t = t.clone();
                            if i == which {
                                t.data_mut()[coord] += delta;
                            }
                            graph.leaf(t)
                        })
                        .collect();
                    let out = build(&mut graph, &ids);
                    graph.value(out).data()[0]
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[which].data()[coord];
                let denom = a.abs().max(fd.abs()).max(1e-6);
                assert!(
                    (a - fd).abs() / denom < tol,
                    "input {which} coord {coord}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn matmul_gradients() {
        // 5 draws x (42 + 35) coordinates = 385 checked
        for seed in 0..5 {
            let mut rng = stream(10 + seed, "ad");
            let a = Tensor::randn(&[6, 7], 0.5, &mut rng);
            let b = Tensor::randn(&[7, 5], 0.5, &mut rng);
            check_op(&[a, b], |g, ids| {
                let c = g.matmul(ids[0], ids[1]);
                g.sum_all(c)
            }, 1e-5);
        }
    }

    #[test]
    fn softmax_and_log_softmax_gradients() {
        // 4 draws x 2 inputs x 42 coordinates = 336 checked per op
        for seed in 0..4 {
            let mut rng = stream(11 + seed, "ad");
            let x = Tensor::randn(&[6, 7], 1.0, &mut rng);
            let w = Tensor::randn(&[6, 7], 1.0, &mut rng);
            check_op(&[x.clone(), w.clone()], |g, ids| {
                // weighted sum so the gradient is not the degenerate all-ones
                let s = g.softmax_rows(ids[0]);
                let wt = g.transpose(ids[1]);
                let total = g.matmul(s, wt);
                g.sum_all(total)
            }, 1e-4);
            check_op(&[x, w], |g, ids| {
                let s = g.log_softmax_rows(ids[0]);
                let wt = g.transpose(ids[1]);
                let p = g.matmul(s, wt);
                g.sum_all(p)
            }, 1e-4);
        }
    }

    #[test]
    fn layer_norm_gradients() {
        // 4 draws x (48 + 8 + 8 + 48) coordinates = 448 checked
        for seed in 0..4 {
            let mut rng = stream(12 + seed, "ad");
            let x = Tensor::randn(&[6, 8], 1.0, &mut rng);
            let gain = Tensor::randn(&[8], 0.3, &mut rng);
            let bias = Tensor::randn(&[8], 0.3, &mut rng);
            let w = Tensor::randn(&[6, 8], 1.0, &mut rng);
            check_op(&[x, gain, bias, w], |g, ids| {
                let y = g.layer_norm_rows(ids[0], ids[1], ids[2], 1e-5);
                let yt = g.transpose(ids[3]);
                let p = g.matmul(y, yt);
                g.sum_all(p)
            }, 1e-4);
        }
    }

    #[test]
    fn gelu_gather_slice_concat_gradients() {
        // 5 draws x 48 coordinates = 240 checked across the chained ops
        for seed in 0..5 {
            let mut rng = stream(13 + seed, "ad");
            let x = Tensor::randn(&[8, 6], 1.0, &mut rng);
            check_op(&[x], |g, ids| {
                let ge = g.gelu(ids[0]);
                let picked = g.gather_rows(ge, vec![1, 1, 3, 6, 0]);
                let left = g.slice_cols(picked, 0, 3);
                let right = g.slice_cols(picked, 3, 3);
                let cat = g.concat_cols(vec![right, left]);
                g.sum_all(cat)
            }, 1e-4);
        }
    }

    #[test]
    fn mean_rows_and_nll_gradients() {
        // 7 draws x 32 coordinates = 224 checked
        for seed in 0..7 {
            let mut rng = stream(14 + seed, "ad");
            let x = Tensor::randn(&[8, 4], 1.0, &mut rng);
            check_op(&[x], |g, ids| {
                let pooled = g.mean_rows(ids[0], vec![0, 2, 4, 7]);
                let lp = g.log_softmax_rows(pooled);
                g.nll_mean(lp, vec![2])
            }, 1e-4);
        }
    }

    #[test]
    fn add_broadcast_scale_gradients() {
        // 4 draws x (48 + 8) coordinates = 224 checked
        for seed in 0..4 {
            let mut rng = stream(15 + seed, "ad");
            let a = Tensor::randn(&[6, 8], 1.0, &mut rng);
            let b = Tensor::randn(&[8], 1.0, &mut rng);
            check_op(&[a, b], |g, ids| {
                let s = g.add_row_broadcast(ids[0], ids[1]);
                let sc = g.scale(s, 0.37);
                let sq = g.gelu(sc);
                g.sum_all(sq)
            }, 1e-4);
        }
    }

    #[test]
    fn grad_accumulates_over_shared_subexpression() {
        // y = sum(x) + sum(x) => dy/dx = 2
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 2], 3.0));
        let s1 = g.sum_all(x);
        let s2 = g.sum_all(x);
        let y = g.add(s1, s2);
        let grads = g.backward(y);
        assert_eq!(grads.get(x, &g), Tensor::full(&[2, 2], 2.0));
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2], 1.0));
        let unused = g.leaf(Tensor::full(&[3], 1.0));
        let y = g.sum_all(x);
        let grads = g.backward(y);
        assert_eq!(grads.get(unused, &g), Tensor::zeros(&[3]));
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut g = Graph::new();
        let mut rng = stream(16, "ad");
        let x = g.leaf(Tensor::full(&[2, 2], 5.0));
        let y = g.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_mask_scales_backward() {
        let mut g = Graph::new();
        let mut rng = stream(17, "ad");
        let x = g.leaf(Tensor::full(&[1, 100], 1.0));
        let d = g.dropout(x, 0.5, &mut rng);
        let y = g.sum_all(d);
        let grads = g.backward(y);
        let gx = grads.get(x, &g);
        for (&v, &o) in gx.data().iter().zip(g.value(d).data()) {
            assert_eq!(v, o); // gradient equals the applied mask scaling
        }
    }
}
