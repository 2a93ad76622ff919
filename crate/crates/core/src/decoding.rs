//! Zero-shot entity scoring and generation on top of the MLM.
//!
//! A decode query appends a fresh all-`[MASK]` entity (with the target
//! entity's type id and reset 2D positions) after the text entity. Scoring
//! fills the candidate's tokens one per encoder pass — out-of-order picks
//! the still-masked position where the candidate's own token is most
//! probable, left-to-right takes the lowest index — and sums the conditional
//! log-probabilities. Generation runs beam search per entity length to find
//! sequences, then scores every completed sequence through the same
//! canonical path before ranking, so beam output is directly comparable with
//! exhaustive enumeration.

use crate::encoding::{assemble_sample, EntityType, InputSample};
use crate::model::{encoder_forward, mlm_log_probs, ModelWeights};
use crate::vocab::{self, tokenize, Vocabulary};
use rayon::prelude::*;
use std::cmp::Ordering;
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeOrder {
    OutOfOrder,
    LeftToRight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    ScoreCandidate,
    Generate,
}

/// The paper context plus decode settings for one query.
#[derive(Clone, Debug)]
pub struct DecodeQuery {
    pub title: String,
    pub abstract_text: Option<String>,
    /// Cue text appended to the text entity, e.g. "Field of study:".
    pub prompt: String,
    pub entity_type: EntityType,
    pub mode: DecodeMode,
    pub order: DecodeOrder,
    /// Entity lengths traversed in GENERATE mode.
    pub length_range: (usize, usize),
    pub beam_width: usize,
    /// Length-normalization exponent; 0 scores by plain summation.
    pub alpha: f64,
}

impl DecodeQuery {
    pub fn scoring(title: &str, entity_type: EntityType) -> Self {
        DecodeQuery {
            title: title.to_string(),
            abstract_text: None,
            prompt: String::new(),
            entity_type,
            mode: DecodeMode::ScoreCandidate,
            order: DecodeOrder::OutOfOrder,
            length_range: default_length_range(entity_type),
            beam_width: 16,
            alpha: 0.0,
        }
    }
}

/// Prompt words used by the zero-shot tasks.
pub fn default_prompt(ty: EntityType) -> &'static str {
    match ty {
        EntityType::Fos => "Field of study:",
        EntityType::Venue => "Journal or Venue:",
        EntityType::Affiliation => "Affiliations:",
        _ => "",
    }
}

/// Default entity lengths traversed when generating from scratch.
pub fn default_length_range(ty: EntityType) -> (usize, usize) {
    match ty {
        EntityType::Venue | EntityType::Affiliation => (1, 8),
        _ => (1, 4),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    /// Intra-entity position filled at this round.
    pub position: usize,
    pub token: u32,
    pub log_prob: f64,
}

#[derive(Clone, Debug)]
pub struct DecodeCandidate {
    pub token_ids: Vec<u32>,
    pub total_log_prob: f64,
    /// total / len^alpha.
    pub normalized_score: f64,
    pub trace: Vec<TraceStep>,
}

impl DecodeCandidate {
    /// Ranking order: normalized score descending, token ids ascending.
    fn ranking_cmp(&self, other: &Self) -> Ordering {
        other
            .normalized_score
            .total_cmp(&self.normalized_score)
            .then_with(|| self.token_ids.cmp(&other.token_ids))
    }
}

/// The query sample for a mask entity of length `l`, plus that entity's
/// token range.
pub fn build_masked_query(
    query: &DecodeQuery,
    l: usize,
    vocab: &Vocabulary,
    weights_config_max_len: usize,
) -> (InputSample, Range<usize>) {
    assert!(l >= 1, "mask entity must have at least one token");
    assert!(
        l + 3 <= weights_config_max_len,
        "entity length {l} leaves no room for text within {weights_config_max_len}"
    );
    let mut text = vec![vocab::CLS];
    text.extend(tokenize(&query.title, vocab));
    if let Some(a) = &query.abstract_text {
        text.extend(tokenize(a, vocab));
    }
    text.extend(tokenize(&query.prompt, vocab));
    text.push(vocab::SEP);

    // over-long text loses its tail (the abstract end), never the mask entity
    let budget = weights_config_max_len - l;
    if text.len() > budget {
        text.truncate(budget - 1);
        text.push(vocab::SEP);
    }
    let text_len = text.len();
    let sample = assemble_sample(&[
        (EntityType::Text, text),
        (query.entity_type, vec![vocab::MASK; l]),
    ]);
    (sample, text_len..text_len + l)
}

fn assert_content_tokens(tokens: &[u32], vocab: &Vocabulary) {
    for &t in tokens {
        assert!(
            (t as usize) < vocab.len() && !Vocabulary::is_special(t),
            "candidate token {t} outside the content vocabulary"
        );
    }
}

/// Score one candidate token sequence under the query (Eq. of the entity
/// log-probability: one encoder pass per filled token, conditioning on the
/// tokens already placed).
pub fn score_candidate(
    query: &DecodeQuery,
    candidate: &[u32],
    weights: &ModelWeights,
    vocab: &Vocabulary,
) -> DecodeCandidate {
    assert!(!candidate.is_empty(), "empty candidate");
    assert_content_tokens(candidate, vocab);
    let l = candidate.len();
    let (mut sample, entity) = build_masked_query(query, l, vocab, weights.config.max_pos2);

    let mut remaining: Vec<usize> = (0..l).collect();
    let mut trace = Vec::with_capacity(l);
    while !remaining.is_empty() {
        let out = encoder_forward(&sample, weights, false);
        let abs: Vec<usize> = remaining.iter().map(|&p| entity.start + p).collect();
        let lp = mlm_log_probs(weights, &out, &abs);
        let scored: Vec<(usize, f64)> = remaining
            .iter()
            .enumerate()
            .map(|(row, &p)| (p, lp.at2(row, candidate[p] as usize)))
            .collect();
        let (pos, log_prob) = match query.order {
            DecodeOrder::LeftToRight => scored[0],
            DecodeOrder::OutOfOrder => scored
                .iter()
                .copied()
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .unwrap(),
        };
        trace.push(TraceStep { position: pos, token: candidate[pos], log_prob });
        sample.token_ids[entity.start + pos] = candidate[pos];
        remaining.retain(|&p| p != pos);
    }

    let total: f64 = trace.iter().map(|s| s.log_prob).sum();
    DecodeCandidate {
        token_ids: candidate.to_vec(),
        total_log_prob: total,
        normalized_score: total / (l as f64).powf(query.alpha),
        trace,
    }
}

/// Score every candidate and sort by normalized score (ties by ascending
/// token sequence).
pub fn rank_candidates(
    query: &DecodeQuery,
    candidates: &[Vec<u32>],
    weights: &ModelWeights,
    vocab: &Vocabulary,
) -> Vec<DecodeCandidate> {
    assert!(!candidates.is_empty(), "no candidates to rank");
    let mut scored: Vec<DecodeCandidate> = candidates
        .par_iter()
        .map(|c| score_candidate(query, c, weights, vocab))
        .collect();
    scored.sort_by(|a, b| a.ranking_cmp(b));
    scored
}

#[derive(Clone)]
struct Beam {
    filled: Vec<Option<u32>>,
    /// (intra position, token) in fill order; the search trace.
    steps: Vec<(usize, u32)>,
    total: f64,
}

/// Beam-search expansion for one entity length; returns completed token
/// sequences (search scores are discarded, candidates are re-scored through
/// `score_candidate`).
fn beam_sequences(
    query: &DecodeQuery,
    l: usize,
    weights: &ModelWeights,
    vocab: &Vocabulary,
) -> Vec<Vec<u32>> {
    let (base, entity) = build_masked_query(query, l, vocab, weights.config.max_pos2);
    let content: Vec<u32> = vocab.content_ids().collect();
    let branch = query.beam_width.min(content.len());

    let mut beams = vec![Beam { filled: vec![None; l], steps: Vec::new(), total: 0.0 }];
    for _ in 0..l {
        let expansions: Vec<Vec<Beam>> = beams
            .par_iter()
            .map(|beam| {
                let mut sample = base.clone();
                for (p, t) in &beam.steps {
                    sample.token_ids[entity.start + p] = *t;
                }
                let remaining: Vec<usize> =
                    (0..l).filter(|p| beam.filled[*p].is_none()).collect();
                let abs: Vec<usize> = remaining.iter().map(|&p| entity.start + p).collect();
                let out = encoder_forward(&sample, weights, false);
                let lp = mlm_log_probs(weights, &out, &abs);

                // pick the expansion position for this beam
                let row_of = |pos: usize| remaining.iter().position(|&p| p == pos).unwrap();
                let pos = match query.order {
                    DecodeOrder::LeftToRight => remaining[0],
                    DecodeOrder::OutOfOrder => remaining
                        .iter()
                        .copied()
                        .max_by(|&a, &b| {
                            let best = |pos: usize| {
                                content
                                    .iter()
                                    .map(|&w| lp.at2(row_of(pos), w as usize))
                                    .fold(f64::NEG_INFINITY, f64::max)
                            };
                            best(a).total_cmp(&best(b)).then(b.cmp(&a))
                        })
                        .unwrap(),
                };
                let row = row_of(pos);
                let mut toks: Vec<(u32, f64)> = content
                    .iter()
                    .map(|&w| (w, lp.at2(row, w as usize)))
                    .collect();
                toks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                toks.truncate(branch);
                toks.into_iter()
                    .map(|(w, logp)| {
                        let mut next = beam.clone();
                        next.filled[pos] = Some(w);
                        next.steps.push((pos, w));
                        next.total += logp;
                        next
                    })
                    .collect()
            })
            .collect();
        let mut pool: Vec<Beam> = expansions.into_iter().flatten().collect();
        pool.sort_by(|a, b| b.total.total_cmp(&a.total).then_with(|| a.steps.cmp(&b.steps)));
        pool.truncate(query.beam_width);
        beams = pool;
    }
    beams
        .into_iter()
        .map(|b| b.filled.into_iter().map(|t| t.expect("beam complete")).collect())
        .collect()
}

/// Free-form entity generation: beam search over every length in the query's
/// range, canonical re-scoring, global ranking, top-k.
pub fn generate(
    query: &DecodeQuery,
    weights: &ModelWeights,
    vocab: &Vocabulary,
    top_k: usize,
) -> Vec<DecodeCandidate> {
    assert_eq!(query.mode, DecodeMode::Generate, "generate needs a GENERATE query");
    let (lo, hi) = query.length_range;
    assert!(lo >= 1 && lo <= hi, "bad length range");
    assert!(query.beam_width >= 1);
    let mut sequences = Vec::new();
    for l in lo..=hi {
        sequences.extend(beam_sequences(query, l, weights, vocab));
    }
    let mut scored: Vec<DecodeCandidate> = sequences
        .par_iter()
        .map(|c| score_candidate(query, c, weights, vocab))
        .collect();
    scored.sort_by(|a, b| a.ranking_cmp(b));
    scored.truncate(top_k);
    scored
}

/// Render candidate tokens back to words.
pub fn candidate_text(candidate: &DecodeCandidate, vocab: &Vocabulary) -> String {
    candidate
        .token_ids
        .iter()
        .map(|&t| vocab.token(t))
        .collect::<Vec<_>>()
        .join(" ")
}
