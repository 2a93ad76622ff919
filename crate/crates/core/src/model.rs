//! Pre-LN transformer encoder with summed token / entity-type / 2D-position
//! embeddings, an MLM head, mean pooling and a linear classifier head.
//!
//! Each block computes `x <- x + Attn(LN(x))` then `x <- x + FFN(LN(x))`,
//! with a final LN before any head. All forward passes go through the
//! autodiff graph; evaluation just skips the backward sweep.

use crate::autodiff::{Graph, NodeId};
use crate::encoding::{InputSample, NUM_ENTITY_TYPES};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::{Parameter, Tensor};
use crate::vocab;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;
const ATTN_MASK_BIAS: f64 = -1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub num_entity_types: usize,
    pub max_pos1: usize,
    pub max_pos2: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// Desk-scale default; the paper-scale 12-layer/768-dim setting is just
    /// different numbers in the same fields.
    pub fn desk_default(vocab_size: usize) -> Self {
        ModelConfig {
            num_layers: 2,
            num_heads: 4,
            hidden_dim: 64,
            ffn_dim: 256,
            vocab_size,
            num_entity_types: NUM_ENTITY_TYPES,
            max_pos1: 32,
            max_pos2: 128,
            dropout: 0.1,
            seed: 0,
        }
    }

    /// Tiny configuration used by gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig {
            num_layers: 2,
            num_heads: 2,
            hidden_dim: 16,
            ffn_dim: 32,
            vocab_size,
            num_entity_types: NUM_ENTITY_TYPES,
            max_pos1: 8,
            max_pos2: 32,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if self.num_entity_types != NUM_ENTITY_TYPES {
            return Err(Error::Config(format!(
                "num_entity_types must be {NUM_ENTITY_TYPES}"
            )));
        }
        if self.vocab_size <= vocab::NUM_SPECIALS as usize {
            return Err(Error::Config("vocab_size smaller than the special block".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// All named parameters. Names are unique; rank-1 parameters (biases and LN
/// gains) are exempt from weight decay.
#[derive(Clone)]
pub struct ModelWeights {
    pub config: ModelConfig,
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
    pub num_classes: Option<usize>,
}

impl ModelWeights {
    pub fn init(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut w = ModelWeights {
            config: config.clone(),
            params: Vec::new(),
            index: HashMap::new(),
            num_classes: None,
        };
        let mut rng = stream(config.seed, "init");
        let d = config.hidden_dim;
        w.matrix(&mut rng, "emb.token", &[config.vocab_size, d]);
        w.matrix(&mut rng, "emb.type", &[config.num_entity_types, d]);
        w.matrix(&mut rng, "emb.pos1", &[config.max_pos1, d]);
        w.matrix(&mut rng, "emb.pos2", &[config.max_pos2, d]);
        for i in 0..config.num_layers {
            w.ln(&format!("layer{i}.ln1"), d);
            for proj in ["wq", "wk", "wv", "wo"] {
                w.matrix(&mut rng, &format!("layer{i}.attn.{proj}"), &[d, d]);
            }
            for bias in ["bq", "bk", "bv", "bo"] {
                w.vector(&format!("layer{i}.attn.{bias}"), d, 0.0);
            }
            w.ln(&format!("layer{i}.ln2"), d);
            w.matrix(&mut rng, &format!("layer{i}.ffn.w1"), &[d, config.ffn_dim]);
            w.vector(&format!("layer{i}.ffn.b1"), config.ffn_dim, 0.0);
            w.matrix(&mut rng, &format!("layer{i}.ffn.w2"), &[config.ffn_dim, d]);
            w.vector(&format!("layer{i}.ffn.b2"), d, 0.0);
        }
        w.ln("final_ln", d);
        w.matrix(&mut rng, "mlm.w", &[d, config.vocab_size]);
        w.vector("mlm.b", config.vocab_size, 0.0);
        Ok(w)
    }

    /// Attach (or replace) the classification head.
    pub fn add_classifier(&mut self, num_classes: usize) {
        assert!(num_classes >= 1);
        let d = self.config.hidden_dim;
        let mut rng = stream(self.config.seed, "init.cls");
        let w = Tensor::randn(&[d, num_classes], INIT_STD, &mut rng);
        self.upsert("cls.w", w, true);
        self.upsert("cls.b", Tensor::zeros(&[num_classes]), false);
        self.num_classes = Some(num_classes);
    }

    fn matrix(&mut self, rng: &mut Rng, name: &str, shape: &[usize]) {
        let t = Tensor::randn(shape, INIT_STD, rng);
        self.upsert(name, t, true);
    }

    fn vector(&mut self, name: &str, n: usize, value: f64) {
        self.upsert(name, Tensor::full(&[n], value), false);
    }

    fn ln(&mut self, prefix: &str, d: usize) {
        self.vector(&format!("{prefix}.gain"), d, 1.0);
        self.vector(&format!("{prefix}.bias"), d, 0.0);
    }

    fn upsert(&mut self, name: &str, value: Tensor, decay: bool) {
        match self.index.get(name) {
            Some(&i) => {
                self.params[i] = Parameter::new(name, value, decay);
            }
            None => {
                self.index.insert(name.to_string(), self.params.len());
                self.params.push(Parameter::new(name, value, decay));
            }
        }
    }

    pub fn idx(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &Parameter {
        &self.params[self.idx(name)]
    }

    pub fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.zero_grad();
        }
    }

    /// Accumulate a per-parameter gradient vector (aligned with `params()`)
    /// scaled by `scale` into the stored grads.
    pub fn accumulate_grads(&mut self, grads: &[Option<Tensor>], scale: f64) {
        assert_eq!(grads.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let Some(g) = g {
                for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b * scale;
                }
            }
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn is_head_param(name: &str) -> bool {
        name.starts_with("cls.")
    }

    /// FNV-1a over the little-endian bytes of every value tensor, in
    /// parameter order. Used by freeze contracts and reproducibility checks.
    pub fn value_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.params {
            for v in p.value.data() {
                for b in v.to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Per-token hidden states after the final LN.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub hidden: Tensor,
}

/// A forward pass recorded on the tape, ready for head attachment and
/// backward.
pub struct TapedEncoder<'w> {
    weights: &'w ModelWeights,
    pub graph: Graph,
    param_nodes: Vec<(usize, NodeId)>,
    seen: HashMap<usize, NodeId>,
    pub hidden: NodeId,
}

impl<'w> TapedEncoder<'w> {
    fn param(&mut self, name: &str) -> NodeId {
        let idx = self.weights.idx(name);
        if let Some(&n) = self.seen.get(&idx) {
            return n;
        }
        let node = self.graph.leaf(self.weights.params()[idx].value.clone());
        self.seen.insert(idx, node);
        self.param_nodes.push((idx, node));
        node
    }

    /// `x W + b` with `b` broadcast over rows.
    fn linear(&mut self, x: NodeId, w: &str, b: &str) -> NodeId {
        let wn = self.param(w);
        let bn = self.param(b);
        let prod = self.graph.matmul(x, wn);
        self.graph.add_row_broadcast(prod, bn)
    }

    fn layer_norm(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let gain = self.param(&format!("{prefix}.gain"));
        let bias = self.param(&format!("{prefix}.bias"));
        self.graph.layer_norm_rows(x, gain, bias, LN_EPS)
    }

    /// Log-softmax rows of the MLM head at the given token positions.
    pub fn mlm_log_probs_node(&mut self, positions: &[usize]) -> NodeId {
        assert!(!positions.is_empty(), "no positions requested");
        let sel = self.graph.gather_rows(self.hidden, positions.to_vec());
        let logits = self.linear(sel, "mlm.w", "mlm.b");
        self.graph.log_softmax_rows(logits)
    }

    /// Mean of hidden states over non-pad rows, shape [1 x d].
    pub fn pooled_node(&mut self, attention_mask: &[u8]) -> NodeId {
        let rows: Vec<usize> = attention_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m == 1)
            .map(|(i, _)| i)
            .collect();
        assert!(!rows.is_empty(), "pooling over an all-pad sample");
        self.graph.mean_rows(self.hidden, rows)
    }

    /// Classifier log-probabilities, shape [1 x num_classes].
    pub fn classifier_log_probs_node(&mut self, attention_mask: &[u8]) -> Result<NodeId> {
        if !self.weights.has("cls.w") {
            return Err(Error::Config("classifier head missing".into()));
        }
        let pooled = self.pooled_node(attention_mask);
        let logits = self.linear(pooled, "cls.w", "cls.b");
        Ok(self.graph.log_softmax_rows(logits))
    }

    pub fn nll(&mut self, log_probs: NodeId, labels: Vec<usize>) -> NodeId {
        self.graph.nll_mean(log_probs, labels)
    }

    /// Backward from a scalar root; returns (root value, per-parameter grads
    /// aligned with `weights.params()`).
    pub fn backward(&self, root: NodeId) -> (f64, Vec<Option<Tensor>>) {
        let loss = self.graph.value(root).data()[0];
        let mut grads = self.graph.backward(root);
        let mut out: Vec<Option<Tensor>> = vec![None; self.weights.params().len()];
        for &(idx, node) in &self.param_nodes {
            out[idx] = grads.take(node);
        }
        (loss, out)
    }
}

/// Record the full encoder forward pass. Dropout is applied only when
/// `train` is set and `config.dropout > 0`, drawing masks from `rng`.
pub fn encode<'w>(
    weights: &'w ModelWeights,
    sample: &InputSample,
    train: bool,
    mut rng: Option<&mut Rng>,
) -> TapedEncoder<'w> {
    let cfg = &weights.config;
    let len = sample.len();
    assert!(len > 0, "empty sample");

    let mut te = TapedEncoder {
        weights,
        graph: Graph::new(),
        param_nodes: Vec::new(),
        seen: HashMap::new(),
        hidden: NodeId::placeholder(),
    };

    let token_ids: Vec<usize> = sample
        .token_ids
        .iter()
        .map(|&t| {
            assert!((t as usize) < cfg.vocab_size, "token id {t} out of range");
            t as usize
        })
        .collect();
    let type_ids: Vec<usize> = sample.type_ids.iter().map(|t| t.index()).collect();
    let pos1: Vec<usize> = sample
        .pos1
        .iter()
        .map(|&p| {
            assert!((p as usize) < cfg.max_pos1, "pos1 {p} out of range");
            p as usize
        })
        .collect();
    let pos2: Vec<usize> = sample
        .pos2
        .iter()
        .map(|&p| {
            assert!((p as usize) < cfg.max_pos2, "pos2 {p} out of range");
            p as usize
        })
        .collect();

    let dropout = if train { cfg.dropout } else { 0.0 };
    let mut drop = |te: &mut TapedEncoder<'w>, x: NodeId| -> NodeId {
        if dropout > 0.0 {
            let r = rng.as_deref_mut().expect("dropout requires an rng in train mode");
            te.graph.dropout(x, dropout, r)
        } else {
            x
        }
    };

    // summed embeddings
    let tok_table = te.param("emb.token");
    let type_table = te.param("emb.type");
    let pos1_table = te.param("emb.pos1");
    let pos2_table = te.param("emb.pos2");
    let e_tok = te.graph.gather_rows(tok_table, token_ids);
    let e_type = te.graph.gather_rows(type_table, type_ids);
    let e_p1 = te.graph.gather_rows(pos1_table, pos1);
    let e_p2 = te.graph.gather_rows(pos2_table, pos2);
    let s1 = te.graph.add(e_tok, e_type);
    let s2 = te.graph.add(s1, e_p1);
    let mut x = te.graph.add(s2, e_p2);
    x = drop(&mut te, x);

    // additive key mask for pad positions
    let mask_bias = if sample.attention_mask.iter().any(|&m| m == 0) {
        let bias: Vec<f64> = sample
            .attention_mask
            .iter()
            .map(|&m| if m == 1 { 0.0 } else { ATTN_MASK_BIAS })
            .collect();
        Some(te.graph.leaf(Tensor::new(vec![len], bias).unwrap()))
    } else {
        None
    };

    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for i in 0..cfg.num_layers {
        // attention sublayer
        let ln1 = te.layer_norm(x, &format!("layer{i}.ln1"));
        let q = te.linear(ln1, &format!("layer{i}.attn.wq"), &format!("layer{i}.attn.bq"));
        let k = te.linear(ln1, &format!("layer{i}.attn.wk"), &format!("layer{i}.attn.bk"));
        let v = te.linear(ln1, &format!("layer{i}.attn.wv"), &format!("layer{i}.attn.bv"));
        let mut heads = Vec::with_capacity(cfg.num_heads);
        for h in 0..cfg.num_heads {
            let qh = te.graph.slice_cols(q, h * dh, dh);
            let kh = te.graph.slice_cols(k, h * dh, dh);
            let vh = te.graph.slice_cols(v, h * dh, dh);
            let kt = te.graph.transpose(kh);
            let scores = te.graph.matmul(qh, kt);
            let mut scores = te.graph.scale(scores, scale);
            if let Some(mb) = mask_bias {
                scores = te.graph.add_row_broadcast(scores, mb);
            }
            let probs = te.graph.softmax_rows(scores);
            heads.push(te.graph.matmul(probs, vh));
        }
        let ctx = te.graph.concat_cols(heads);
        let attn = te.linear(ctx, &format!("layer{i}.attn.wo"), &format!("layer{i}.attn.bo"));
        let attn = drop(&mut te, attn);
        x = te.graph.add(x, attn);

        // feed-forward sublayer
        let ln2 = te.layer_norm(x, &format!("layer{i}.ln2"));
        let h1 = te.linear(ln2, &format!("layer{i}.ffn.w1"), &format!("layer{i}.ffn.b1"));
        let act = te.graph.gelu(h1);
        let h2 = te.linear(act, &format!("layer{i}.ffn.w2"), &format!("layer{i}.ffn.b2"));
        let h2 = drop(&mut te, h2);
        x = te.graph.add(x, h2);
    }

    te.hidden = te.layer_norm(x, "final_ln");
    te
}

/// Sum of the four embedding tables for each token.
pub fn embed(sample: &InputSample, weights: &ModelWeights) -> Tensor {
    let cfg = &weights.config;
    let d = cfg.hidden_dim;
    let tok = &weights.get("emb.token").value;
    let ty = &weights.get("emb.type").value;
    let p1 = &weights.get("emb.pos1").value;
    let p2 = &weights.get("emb.pos2").value;
    let mut out = Tensor::zeros(&[sample.len(), d]);
    for t in 0..sample.len() {
        let id = sample.token_ids[t] as usize;
        assert!(id < cfg.vocab_size, "token id {id} out of range");
        assert!((sample.pos1[t] as usize) < cfg.max_pos1, "pos1 out of range");
        assert!((sample.pos2[t] as usize) < cfg.max_pos2, "pos2 out of range");
        for j in 0..d {
            out.data_mut()[t * d + j] = tok.at2(id, j)
                + ty.at2(sample.type_ids[t].index(), j)
                + p1.at2(sample.pos1[t] as usize, j)
                + p2.at2(sample.pos2[t] as usize, j);
        }
    }
    out
}

/// Evaluation-mode forward unless `train_mode` is set, in which case dropout
/// masks come from the weights' seed (training proper drives `encode`
/// directly with its own streams).
pub fn encoder_forward(sample: &InputSample, weights: &ModelWeights, train_mode: bool) -> EncoderOutput {
    let mut rng = stream(weights.config.seed, "dropout");
    let te = encode(weights, sample, train_mode, Some(&mut rng));
    EncoderOutput { hidden: te.graph.value(te.hidden).clone() }
}

/// Log-softmax over the vocabulary of the MLM head at `positions`.
pub fn mlm_log_probs(weights: &ModelWeights, output: &EncoderOutput, positions: &[usize]) -> Tensor {
    assert!(!positions.is_empty());
    for &p in positions {
        assert!(p < output.hidden.rows(), "position {p} out of range");
    }
    let mut g = Graph::new();
    let hidden = g.leaf(output.hidden.clone());
    let sel = g.gather_rows(hidden, positions.to_vec());
    let w = g.leaf(weights.get("mlm.w").value.clone());
    let b = g.leaf(weights.get("mlm.b").value.clone());
    let prod = g.matmul(sel, w);
    let logits = g.add_row_broadcast(prod, b);
    let logp = g.log_softmax_rows(logits);
    g.value(logp).clone()
}

/// Arithmetic mean of hidden states where the attention mask is 1.
pub fn pooled_embedding(output: &EncoderOutput, attention_mask: &[u8]) -> Tensor {
    let d = output.hidden.cols();
    let rows: Vec<usize> = attention_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| i)
        .collect();
    assert!(!rows.is_empty(), "pooling over an all-pad sample");
    let mut out = Tensor::zeros(&[d]);
    for &r in &rows {
        for j in 0..d {
            out.data_mut()[j] += output.hidden.at2(r, j);
        }
    }
    for v in out.data_mut() {
        *v /= rows.len() as f64;
    }
    out
}

/// Class log-probabilities of the pooled sequence embedding. The input must
/// not contain `[MASK]` tokens.
pub fn classify_forward(sample: &InputSample, weights: &ModelWeights) -> Result<Tensor> {
    assert!(
        sample.token_ids.iter().all(|&t| t != vocab::MASK),
        "classification input contains masked tokens"
    );
    let mut te = encode(weights, sample, false, None);
    let logp = te.classifier_log_probs_node(&sample.attention_mask)?;
    let v = te.graph.value(logp);
    Ok(Tensor::new(vec![v.cols()], v.data().to_vec()).unwrap())
}
