//! Two-stage MLM pretraining, AdamW, the slanted-triangular schedule and
//! classifier fine-tuning.
//!
//! Stage 1 trains on text-only samples (title + author sentence + abstract
//! as one text entity) with BERT-style masking. Stage 2 continues from the
//! stage-1 weights on full entity-augmented samples with both masking
//! planners. Per-sample randomness is keyed by (seed, step, slot) so batch
//! assembly can run in parallel while training stays bit-reproducible.

use crate::corpus::PaperRecord;
use crate::encoding::{
    apply_masking, build_sample, build_text_sample, plan_entity_masking, plan_text_masking,
    InputSample, MaskingConfig,
};
use crate::error::{Error, Result};
use crate::model::{classify_forward, encode, ModelWeights};
use crate::rng::{derive_seed, substream};
use crate::tensor::{Parameter, Tensor};
use crate::vocab::Vocabulary;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

/// Mean negative log-probability of the labels under per-position
/// log-distributions.
pub fn mlm_loss(log_probs: &Tensor, labels: &[u32]) -> f64 {
    assert!(!labels.is_empty(), "mlm_loss over zero masked tokens");
    assert_eq!(log_probs.rows(), labels.len(), "one label per row");
    let mut sum = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        sum += log_probs.at2(i, l as usize);
    }
    -sum / labels.len() as f64
}

/// Slanted-triangular schedule: linear 0 -> peak over the warmup steps, then
/// linear peak -> 0 over the remainder.
pub fn lr_at(step: usize, total_steps: usize, peak: f64, warmup_fraction: f64) -> f64 {
    assert!(step <= total_steps, "step {step} past total {total_steps}");
    assert!((0.0..1.0).contains(&warmup_fraction));
    let warmup = warmup_fraction * total_steps as f64;
    let s = step as f64;
    if s < warmup {
        peak * s / warmup
    } else if total_steps as f64 > warmup {
        peak * (total_steps as f64 - s) / (total_steps as f64 - warmup)
    } else {
        0.0
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// AdamW moments, aligned with a parameter slice.
pub struct AdamW {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl AdamW {
    pub fn new(params: &[Parameter]) -> Self {
        AdamW {
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            t: 0,
        }
    }

    /// One optimizer step over all parameters using the gradients stored in
    /// `Parameter::grad`. Decoupled weight decay skips parameters flagged
    /// `decay = false` (LN gains, biases).
    pub fn step(&mut self, params: &mut [Parameter], lr: f64, weight_decay: f64) -> Result<()> {
        let all: Vec<usize> = (0..params.len()).collect();
        self.step_subset(params, &all, lr, weight_decay)
    }

    /// Step restricted to the given parameter indices; everything else is
    /// untouched (used by frozen-encoder fine-tuning).
    pub fn step_subset(
        &mut self,
        params: &mut [Parameter],
        indices: &[usize],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        for &i in indices {
            if !params[i].grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "non-finite gradient in {}",
                    params[i].name
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for &i in indices {
            let p = &mut params[i];
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let decay = if p.decay { weight_decay } else { 0.0 };
            let value = p.value.data_mut();
            for ((x, g), (mi, vi)) in value
                .iter_mut()
                .zip(p.grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= lr * (mhat / (vhat.sqrt() + ADAM_EPS) + decay * *x);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PretrainConfig {
    /// 1 = text only, 2 = entity augmented (expects stage-1 weights).
    pub stage: u8,
    pub max_len: usize,
    pub batch_size: usize,
    pub total_steps: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    /// Micro-batches accumulated per optimizer step.
    pub grad_accum: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl PretrainConfig {
    pub fn stage1(max_len: usize, steps: usize, seed: u64) -> Self {
        PretrainConfig {
            stage: 1,
            max_len,
            batch_size: 8,
            total_steps: steps,
            peak_lr: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            grad_accum: 1,
            log_every: 50,
            seed,
        }
    }

    pub fn stage2(max_len: usize, steps: usize, seed: u64) -> Self {
        PretrainConfig { stage: 2, ..Self::stage1(max_len, steps, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stage == 1 || self.stage == 2) {
            return Err(Error::Config(format!("stage {} not in {{1, 2}}", self.stage)));
        }
        if self.total_steps == 0 || self.batch_size == 0 || self.grad_accum == 0 {
            return Err(Error::Config("steps, batch size and grad_accum must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup fraction {} outside [0,1)",
                self.warmup_fraction
            )));
        }
        if self.max_len < 8 {
            return Err(Error::Config("max_len below 8".into()));
        }
        Ok(())
    }
}

/// Build one masked training pair for a batch slot.
fn training_pair(
    record: &PaperRecord,
    vocab: &Vocabulary,
    cfg: &PretrainConfig,
    mask_cfg: &MaskingConfig,
    step: u64,
    slot: u64,
) -> Result<(InputSample, Vec<usize>, Vec<usize>)> {
    let sample = if cfg.stage == 1 {
        build_text_sample(record, vocab, cfg.max_len)?
    } else {
        let shuffle_seed = derive_seed(cfg.seed, "shuffle", &[step, slot]);
        build_sample(record, vocab, cfg.max_len, shuffle_seed, true)?
    };
    let mut mask_rng = substream(mask_cfg.seed ^ cfg.seed, "mask", &[step, slot]);
    let mut plan = plan_text_masking(&sample, mask_cfg, &mut mask_rng);
    if cfg.stage == 2 {
        plan = plan.merge(plan_entity_masking(&sample, mask_cfg, &mut mask_rng));
    }
    let masked = apply_masking(&sample, &plan, vocab, &mut mask_rng);
    let labels: Vec<usize> = plan.labels.iter().map(|&l| l as usize).collect();
    Ok((masked, plan.masked_positions.clone(), labels))
}

/// MLM pretraining over one stage. Returns the (step, loss) curve sampled
/// every `log_every` steps plus the first and last step.
pub fn pretrain(
    corpus: &[PaperRecord],
    weights: &mut ModelWeights,
    vocab: &Vocabulary,
    cfg: &PretrainConfig,
    mask_cfg: &MaskingConfig,
) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    mask_cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()));
    }
    let mut opt = AdamW::new(weights.params());
    let mut curve = Vec::new();
    let micro = cfg.batch_size;

    for step in 0..cfg.total_steps {
        weights.zero_grads();
        let mut step_loss = 0.0;
        for acc in 0..cfg.grad_accum {
            let key = (step * cfg.grad_accum + acc) as u64;
            let mut pick = substream(cfg.seed, "batch", &[key]);
            let records: Vec<&PaperRecord> = (0..micro)
                .map(|_| &corpus[pick.gen_range(0..corpus.len())])
                .collect();

            let results: Vec<Result<(f64, Vec<Option<Tensor>>)>> = records
                .par_iter()
                .enumerate()
                .map(|(slot, rec)| {
                    let (masked, positions, labels) =
                        training_pair(rec, vocab, cfg, mask_cfg, key, slot as u64)?;
                    let mut drop_rng = substream(cfg.seed, "dropout", &[key, slot as u64]);
                    let mut te = encode(weights, &masked, true, Some(&mut drop_rng));
                    let lp = te.mlm_log_probs_node(&positions);
                    let loss_node = te.nll(lp, labels);
                    Ok(te.backward(loss_node))
                })
                .collect();

            // fixed-order reduction keeps runs bit-identical
            let denom = (micro * cfg.grad_accum) as f64;
            for r in results {
                let (loss, grads) = r?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss diverged at step {step}")));
                }
                step_loss += loss / denom;
                weights.accumulate_grads(&grads, 1.0 / denom);
            }
        }
        let lr = lr_at(step, cfg.total_steps, cfg.peak_lr, cfg.warmup_fraction);
        opt.step(weights.params_mut(), lr, cfg.weight_decay)?;

        if step % cfg.log_every == 0 || step + 1 == cfg.total_steps {
            curve.push((step, step_loss));
        }
    }
    Ok(curve)
}

#[derive(Clone, Debug)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub freeze_encoder: bool,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 5,
            peak_lr: 2e-5,
            warmup_fraction: 0.1,
            freeze_encoder: false,
            batch_size: 8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup fraction outside [0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct FinetuneReport {
    /// Mean training loss per optimizer step.
    pub step_losses: Vec<f64>,
    /// Validation accuracy after each epoch.
    pub val_accuracy: Vec<f64>,
}

fn check_labels(samples: &[(InputSample, usize)], num_classes: usize) -> Result<()> {
    for (_, label) in samples {
        if *label >= num_classes {
            return Err(Error::Config(format!(
                "label {label} outside class range {num_classes}"
            )));
        }
    }
    Ok(())
}

/// Cross-entropy training of the classification head (and the encoder unless
/// frozen). With `freeze_encoder` the encoder is run once in evaluation mode
/// per sample and only `cls.*` parameters are updated.
pub fn finetune_classifier(
    weights: &mut ModelWeights,
    train: &[(InputSample, usize)],
    val: &[(InputSample, usize)],
    cfg: &FinetuneConfig,
) -> Result<FinetuneReport> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let num_classes = weights
        .num_classes
        .ok_or_else(|| Error::Config("classifier head missing".into()))?;
    check_labels(train, num_classes)?;
    check_labels(val, num_classes)?;

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut opt = AdamW::new(weights.params());
    let mut report = FinetuneReport::default();

    // frozen path: pooled embeddings are fixed, compute them once
    let frozen_train: Option<Vec<Tensor>> = if cfg.freeze_encoder {
        Some(
            train
                .par_iter()
                .map(|(s, _)| {
                    let te = encode(weights, s, false, None);
                    let hidden = te.graph.value(te.hidden);
                    pooled_rows(hidden, &s.attention_mask)
                })
                .collect(),
        )
    } else {
        None
    };
    let head_indices = [weights.idx("cls.w"), weights.idx("cls.b")];

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(cfg.seed, "finetune.shuffle", &[epoch as u64]));

        for chunk in order.chunks(cfg.batch_size) {
            weights.zero_grads();
            let denom = chunk.len() as f64;
            let mut batch_loss = 0.0;

            if let Some(embs) = &frozen_train {
                for &i in chunk {
                    let (loss, grads) = head_loss_and_grads(weights, &embs[i], train[i].1);
                    batch_loss += loss / denom;
                    weights.accumulate_grads(&grads, 1.0 / denom);
                }
            } else {
                let results: Vec<(f64, Vec<Option<Tensor>>)> = chunk
                    .par_iter()
                    .map(|&i| {
                        let (sample, label) = &train[i];
                        let mut drop_rng =
                            substream(cfg.seed, "finetune.dropout", &[step as u64, i as u64]);
                        let mut te = encode(weights, sample, true, Some(&mut drop_rng));
                        let lp = te
                            .classifier_log_probs_node(&sample.attention_mask)
                            .expect("head checked above");
                        let loss_node = te.nll(lp, vec![*label]);
                        te.backward(loss_node)
                    })
                    .collect();
                for (loss, grads) in results {
                    batch_loss += loss / denom;
                    weights.accumulate_grads(&grads, 1.0 / denom);
                }
            }

            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("fine-tune loss diverged at step {step}")));
            }
            let lr = lr_at(step, total_steps, cfg.peak_lr, cfg.warmup_fraction);
            if cfg.freeze_encoder {
                opt.step_subset(weights.params_mut(), &head_indices, lr, cfg.weight_decay)?;
            } else {
                opt.step(weights.params_mut(), lr, cfg.weight_decay)?;
            }
            report.step_losses.push(batch_loss);
            step += 1;
        }

        report.val_accuracy.push(if val.is_empty() {
            f64::NAN
        } else {
            classification_accuracy(weights, val)?
        });
    }
    Ok(report)
}

/// Fraction of samples whose argmax class equals the label (evaluation mode).
pub fn classification_accuracy(
    weights: &ModelWeights,
    samples: &[(InputSample, usize)],
) -> Result<f64> {
    let hits: Result<Vec<bool>> = samples
        .par_iter()
        .map(|(s, label)| {
            let lp = classify_forward(s, weights)?;
            Ok(argmax(lp.data()) == *label)
        })
        .collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / samples.len().max(1) as f64)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn pooled_rows(hidden: &Tensor, mask: &[u8]) -> Tensor {
    let d = hidden.cols();
    let rows: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m == 1)
        .map(|(i, _)| i)
        .collect();
    let mut out = Tensor::zeros(&[1, d]);
    for &r in &rows {
        for j in 0..d {
            out.data_mut()[j] += hidden.at2(r, j);
        }
    }
    for v in out.data_mut() {
        *v /= rows.len() as f64;
    }
    out
}

/// Head-only loss/gradients on a fixed pooled embedding.
fn head_loss_and_grads(
    weights: &ModelWeights,
    pooled: &Tensor,
    label: usize,
) -> (f64, Vec<Option<Tensor>>) {
    let mut g = crate::autodiff::Graph::new();
    let emb = g.leaf(pooled.clone());
    let w_idx = weights.idx("cls.w");
    let b_idx = weights.idx("cls.b");
    let w = g.leaf(weights.params()[w_idx].value.clone());
    let b = g.leaf(weights.params()[b_idx].value.clone());
    let prod = g.matmul(emb, w);
    let logits = g.add_row_broadcast(prod, b);
    let lp = g.log_softmax_rows(logits);
    let loss_node = g.nll_mean(lp, vec![label]);
    let loss = g.value(loss_node).data()[0];
    let mut grads = g.backward(loss_node);
    let mut out: Vec<Option<Tensor>> = vec![None; weights.params().len()];
    out[w_idx] = grads.take(w);
    out[b_idx] = grads.take(b);
    (loss, out)
}

/// Loss curve as a two-column TSV.
pub fn loss_curve_tsv(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("step\tloss\n");
    for (s, l) in curve {
        out.push_str(&format!("{s}\t{l:.10}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorSpec};
    use crate::model::{encoder_forward, pooled_embedding, ModelConfig};
    use crate::rng::stream;
    use crate::vocab::build_vocab;

    #[test]
    fn mlm_loss_uniform_is_log_vocab() {
        let v = 30usize;
        let row = vec![-(v as f64).ln(); v];
        let lp = Tensor::new(vec![2, v], [row.clone(), row].concat()).unwrap();
        let loss = mlm_loss(&lp, &[3, 7]);
        assert!((loss - (v as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn mlm_loss_certain_prediction_is_zero() {
        let mut lp = Tensor::full(&[1, 5], -1e6);
        lp.data_mut()[2] = 0.0;
        assert!(mlm_loss(&lp, &[2]).abs() < 1e-12);
    }

    #[test]
    fn mlm_loss_matches_cross_entropy_oracle() {
        let mut rng = stream(50, "tr");
        let logits = Tensor::randn(&[4, 9], 2.0, &mut rng);
        // independent oracle: direct -log(exp(x_l)/sum exp(x))
        let labels = [1u32, 0, 8, 4];
        let mut expect = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let row = logits.row(i);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            expect += -((row[l as usize].exp() / z).ln());
        }
        expect /= labels.len() as f64;
        // pass logits through log-softmax with the graph
        let mut g = crate::autodiff::Graph::new();
        let x = g.leaf(logits);
        let lp = g.log_softmax_rows(x);
        let loss = mlm_loss(g.value(lp), &labels);
        assert!((loss - expect).abs() < 1e-10, "{loss} vs {expect}");
    }

    #[test]
    fn lr_schedule_shape() {
        assert_eq!(lr_at(0, 100, 1.0, 0.1), 0.0);
        assert!((lr_at(10, 100, 1.0, 0.1) - 1.0).abs() < 1e-12);
        assert_eq!(lr_at(100, 100, 1.0, 0.1), 0.0);
        assert!((lr_at(55, 100, 1.0, 0.1) - 0.5).abs() < 1e-12);
    }

    fn scalar_param(v: f64) -> Parameter {
        Parameter::new("theta", Tensor::scalar(v), true)
    }

    #[test]
    fn adam_zero_gradient_no_decay_is_identity() {
        let mut params = vec![scalar_param(1.5)];
        let mut opt = AdamW::new(&params);
        opt.step(&mut params, 0.1, 0.0).unwrap();
        assert_eq!(params[0].value.data()[0], 1.5);
    }

    #[test]
    fn adam_decayed_zero_gradient_shrinks_by_factor() {
        let mut params = vec![scalar_param(2.0)];
        let mut opt = AdamW::new(&params);
        let (lr, wd) = (0.1, 0.5);
        opt.step(&mut params, lr, wd).unwrap();
        assert!((params[0].value.data()[0] - 2.0 * (1.0 - lr * wd)).abs() < 1e-15);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize (theta - 3)^2 under the decaying schedule
        let mut params = vec![scalar_param(-4.0)];
        let mut opt = AdamW::new(&params);
        let steps = 200;
        for step in 0..steps {
            let x = params[0].value.data()[0];
            params[0].grad = Tensor::scalar(2.0 * (x - 3.0));
            let lr = lr_at(step, steps, 0.3, 0.0);
            opt.step(&mut params, lr, 0.0).unwrap();
        }
        assert!(
            (params[0].value.data()[0] - 3.0).abs() < 1e-3,
            "ended at {}",
            params[0].value.data()[0]
        );
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut params = vec![scalar_param(0.0)];
        params[0].grad = Tensor::scalar(f64::NAN);
        let mut opt = AdamW::new(&params);
        assert!(matches!(opt.step(&mut params, 0.1, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn no_decay_on_rank_one_parameters() {
        let mut params = vec![Parameter::new("ln.gain", Tensor::full(&[3], 1.0), false)];
        let mut opt = AdamW::new(&params);
        opt.step(&mut params, 0.1, 0.9).unwrap();
        assert_eq!(params[0].value.data(), &[1.0, 1.0, 1.0]);
    }

    fn tiny_setup(seed: u64) -> (Vec<PaperRecord>, Vocabulary, ModelWeights) {
        let spec = GeneratorSpec::synthetic(3, 6, 0.0, seed, 0);
        let corpus = generate_corpus(&spec).unwrap();
        let vocab = build_vocab(&corpus, 1);
        let mut cfg = ModelConfig::tiny(vocab.len());
        cfg.seed = seed;
        (corpus, vocab, ModelWeights::init(cfg).unwrap())
    }

    #[test]
    fn pretrain_same_seed_is_bit_identical() {
        let (corpus, vocab, _) = tiny_setup(60);
        let cfg = PretrainConfig { total_steps: 8, batch_size: 2, ..PretrainConfig::stage2(32, 8, 7) };
        let mask = MaskingConfig::default();
        let run = || {
            let mut cfgm = ModelConfig::tiny(vocab.len());
            cfgm.seed = 60;
            let mut w = ModelWeights::init(cfgm).unwrap();
            let curve = pretrain(&corpus, &mut w, &vocab, &cfg, &mask).unwrap();
            (curve, w.value_hash())
        };
        let (c1, h1) = run();
        let (c2, h2) = run();
        assert_eq!(c1, c2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn pretrain_stage1_and_stage2_reduce_loss() {
        let (corpus, vocab, mut w) = tiny_setup(61);
        let mask = MaskingConfig::default();
        let s1 = PretrainConfig { batch_size: 4, peak_lr: 3e-3, ..PretrainConfig::stage1(24, 60, 1) };
        let curve = pretrain(&corpus, &mut w, &vocab, &s1, &mask).unwrap();
        assert!(curve.last().unwrap().1 < curve[0].1, "stage-1 loss did not drop: {curve:?}");
        let s2 = PretrainConfig { batch_size: 4, peak_lr: 3e-3, ..PretrainConfig::stage2(48, 60, 2) };
        let curve2 = pretrain(&corpus, &mut w, &vocab, &s2, &mask).unwrap();
        assert!(curve2.last().unwrap().1 < curve2[0].1, "stage-2 loss did not drop: {curve2:?}");
    }

    fn labeled_samples(
        corpus: &[PaperRecord],
        vocab: &Vocabulary,
    ) -> Vec<(InputSample, usize)> {
        corpus
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = build_sample(r, vocab, 32, i as u64, false).unwrap();
                (s, r.topic_id.unwrap())
            })
            .collect()
    }

    #[test]
    fn frozen_finetune_keeps_encoder_hash() {
        let (corpus, vocab, mut w) = tiny_setup(62);
        w.add_classifier(3);
        let data = labeled_samples(&corpus, &vocab);
        let before: Vec<(String, u64)> = w
            .params()
            .iter()
            .filter(|p| !ModelWeights::is_head_param(&p.name))
            .map(|p| (p.name.clone(), param_hash(p)))
            .collect();
        let cfg = FinetuneConfig {
            epochs: 2,
            peak_lr: 0.05,
            freeze_encoder: true,
            seed: 3,
            ..FinetuneConfig::default()
        };
        finetune_classifier(&mut w, &data, &data, &cfg).unwrap();
        for (name, h) in before {
            let p = w.get(&name);
            assert_eq!(param_hash(p), h, "{name} changed under freeze");
        }
    }

    fn param_hash(p: &Parameter) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in p.value.data() {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    #[test]
    fn finetune_loss_decreases_on_single_sample() {
        let (corpus, vocab, mut w) = tiny_setup(63);
        w.add_classifier(3);
        let data = labeled_samples(&corpus[..1], &vocab);
        let cfg = FinetuneConfig {
            epochs: 6,
            peak_lr: 0.02,
            warmup_fraction: 0.0,
            freeze_encoder: true,
            batch_size: 1,
            weight_decay: 0.0,
            seed: 4,
        };
        let report = finetune_classifier(&mut w, &data, &[], &cfg).unwrap();
        for pair in report.step_losses.windows(2) {
            assert!(pair[1] < pair[0], "loss not strictly decreasing: {:?}", report.step_losses);
        }
    }

    /// Direct linear fit (multinomial logistic regression, plain gradient
    /// descent); reaching 1.0 certifies the embeddings as linearly separable.
    fn logistic_fit_accuracy(embs: &[(Tensor, usize)], classes: usize, iters: usize) -> f64 {
        let d = embs[0].0.numel();
        let mut w = vec![0.0; d * classes];
        let mut b = vec![0.0; classes];
        let n = embs.len() as f64;
        for _ in 0..iters {
            let mut gw = vec![0.0; d * classes];
            let mut gb = vec![0.0; classes];
            for (e, label) in embs {
                let mut logits: Vec<f64> = (0..classes)
                    .map(|c| {
                        b[c] + e.data().iter().enumerate().map(|(j, x)| x * w[j * classes + c]).sum::<f64>()
                    })
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
                for (c, logit) in logits.iter_mut().enumerate() {
                    let p = (*logit - m).exp() / z;
                    let err = p - f64::from(c == *label);
                    gb[c] += err / n;
                    for (j, x) in e.data().iter().enumerate() {
                        gw[j * classes + c] += err * x / n;
                    }
                }
            }
            for (x, g) in w.iter_mut().zip(&gw) {
                *x -= 2.0 * g;
            }
            for (x, g) in b.iter_mut().zip(&gb) {
                *x -= 2.0 * g;
            }
        }
        embs.iter()
            .filter(|(e, label)| {
                let logits: Vec<f64> = (0..classes)
                    .map(|c| {
                        b[c] + e.data().iter().enumerate().map(|(j, x)| x * w[j * classes + c]).sum::<f64>()
                    })
                    .collect();
                argmax(&logits) == *label
            })
            .count() as f64
            / embs.len() as f64
    }

    #[test]
    fn frozen_head_fits_separable_embeddings() {
        // pooled embeddings of distinct topics over disjoint vocab; the
        // logistic oracle certifies linear separability, then the frozen head
        // must also reach 1.0 training accuracy
        let (corpus, vocab, mut w) = tiny_setup(64);
        w.add_classifier(3);
        let data: Vec<(InputSample, usize)> = corpus
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = build_sample(r, &vocab, 48, i as u64, true).unwrap();
                (s, r.topic_id.unwrap())
            })
            .collect();
        let embs: Vec<(Tensor, usize)> = data
            .iter()
            .map(|(s, l)| {
                let out = encoder_forward(s, &w, false);
                (pooled_embedding(&out, &s.attention_mask), *l)
            })
            .collect();
        let oracle_acc = logistic_fit_accuracy(&embs, 3, 3000);
        assert!(oracle_acc == 1.0, "fixture not linearly separable (oracle {oracle_acc})");

        let cfg = FinetuneConfig {
            epochs: 200,
            peak_lr: 0.1,
            warmup_fraction: 0.0,
            freeze_encoder: true,
            batch_size: 4,
            weight_decay: 0.0,
            seed: 5,
        };
        finetune_classifier(&mut w, &data, &[], &cfg).unwrap();
        let acc = classification_accuracy(&w, &data).unwrap();
        assert!(acc == 1.0, "training accuracy {acc}");
    }

    #[test]
    fn empty_training_set_is_config_error() {
        let (_, _, mut w) = tiny_setup(65);
        w.add_classifier(2);
        let r = finetune_classifier(&mut w, &[], &[], &FinetuneConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn out_of_range_label_is_config_error() {
        let (corpus, vocab, mut w) = tiny_setup(66);
        w.add_classifier(2);
        let mut data = labeled_samples(&corpus[..2], &vocab);
        data[0].1 = 9;
        let r = finetune_classifier(&mut w, &data, &[], &FinetuneConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
