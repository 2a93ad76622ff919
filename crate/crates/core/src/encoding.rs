//! Input construction and masking.
//!
//! A sample is a concatenation of entities: entity 0 is the text entity
//! (`[CLS] title [abstract] [SEP]`), followed by the paper's other entities
//! in a seeded-random order. Every token carries the entity's type id and a
//! 2D position: `pos1` = which entity (inter-entity order), `pos2` = offset
//! inside the entity (intra-entity order).
//!
//! Text tokens are masked BERT-style. Entity tokens are masked span-wise:
//! entities shorter than 4 tokens are masked whole, longer ones get a
//! contiguous span whose length follows a renormalized truncated geometric
//! distribution on [4, 10].

use crate::corpus::PaperRecord;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::vocab::{self, tokenize, Vocabulary};
use rand::seq::SliceRandom;
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntityType {
    Text = 0,
    Author = 1,
    Fos = 2,
    Venue = 3,
    Affiliation = 4,
}

pub const NUM_ENTITY_TYPES: usize = 5;

impl EntityType {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> EntityType {
        match i {
            0 => EntityType::Text,
            1 => EntityType::Author,
            2 => EntityType::Fos,
            3 => EntityType::Venue,
            4 => EntityType::Affiliation,
            _ => panic!("entity type index {i} out of range"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntityType::Text => "text",
            EntityType::Author => "author",
            EntityType::Fos => "fos",
            EntityType::Venue => "venue",
            EntityType::Affiliation => "affiliation",
        }
    }
}

/// One entity's tokens before assembly into a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EntitySpan {
    pub entity_type: EntityType,
    pub token_ids: Vec<u32>,
    pub entity_index: usize,
}

/// Assembled model input. The five arrays are index-aligned per token.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSample {
    pub token_ids: Vec<u32>,
    pub type_ids: Vec<EntityType>,
    pub pos1: Vec<u32>,
    pub pos2: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl InputSample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Contiguous token ranges of each entity, recovered from pos1.
    pub fn entity_ranges(&self) -> Vec<(Range<usize>, EntityType)> {
        let mut out: Vec<(Range<usize>, EntityType)> = Vec::new();
        for (i, &p1) in self.pos1.iter().enumerate() {
            match out.last_mut() {
                Some((range, _)) if self.pos1[range.start] == p1 => range.end = i + 1,
                _ => out.push((i..i + 1, self.type_ids[i])),
            }
        }
        out
    }

    /// Panics if any structural invariant is broken.
    pub fn validate(&self) {
        let n = self.len();
        assert!(n > 0, "empty sample");
        assert_eq!(self.type_ids.len(), n);
        assert_eq!(self.pos1.len(), n);
        assert_eq!(self.pos2.len(), n);
        assert_eq!(self.attention_mask.len(), n);
        let ranges = self.entity_ranges();
        for (k, (range, ty)) in ranges.iter().enumerate() {
            assert_eq!(self.pos1[range.start] as usize, k, "pos1 not consecutive over entities");
            for (offset, i) in range.clone().enumerate() {
                assert_eq!(self.pos1[i], k as u32, "pos1 constant within entity");
                assert_eq!(self.pos2[i] as usize, offset, "pos2 consecutive within entity");
                assert_eq!(self.type_ids[i], *ty, "type constant within entity");
            }
        }
        for (i, &t) in self.token_ids.iter().enumerate() {
            let expect = u8::from(t != vocab::PAD);
            assert_eq!(self.attention_mask[i], expect, "attention mask at {i}");
        }
    }
}

/// Lay out entities in the given order, assigning type ids and 2D positions.
pub fn assemble_sample(spans: &[(EntityType, Vec<u32>)]) -> InputSample {
    let total: usize = spans.iter().map(|(_, t)| t.len()).sum();
    let mut sample = InputSample {
        token_ids: Vec::with_capacity(total),
        type_ids: Vec::with_capacity(total),
        pos1: Vec::with_capacity(total),
        pos2: Vec::with_capacity(total),
        attention_mask: Vec::with_capacity(total),
    };
    for (k, (ty, tokens)) in spans.iter().enumerate() {
        assert!(!tokens.is_empty(), "entity {k} has no tokens");
        for (offset, &t) in tokens.iter().enumerate() {
            sample.token_ids.push(t);
            sample.type_ids.push(*ty);
            sample.pos1.push(k as u32);
            sample.pos2.push(offset as u32);
            sample.attention_mask.push(u8::from(t != vocab::PAD));
        }
    }
    sample
}

fn non_text_spans(record: &PaperRecord, vocab: &Vocabulary) -> Vec<(EntityType, Vec<u32>)> {
    let mut spans = Vec::new();
    let mut push = |ty: EntityType, name: &str| {
        let toks = tokenize(name, vocab);
        if !toks.is_empty() {
            spans.push((ty, toks));
        }
    };
    for a in &record.authors {
        push(EntityType::Author, a);
    }
    for f in &record.fos {
        push(EntityType::Fos, f);
    }
    push(EntityType::Venue, &record.venue);
    for a in &record.affiliations {
        push(EntityType::Affiliation, a);
    }
    spans
}

/// Truncate to `max_len`: drop whole trailing entities first, then cut the
/// text entity's tail while keeping `[SEP]` as its final token.
fn truncate_spans(spans: &mut Vec<(EntityType, Vec<u32>)>, max_len: usize) {
    let mut total: usize = spans.iter().map(|(_, t)| t.len()).sum();
    while total > max_len && spans.len() > 1 {
        total -= spans.pop().unwrap().1.len();
    }
    if total > max_len {
        let text = &mut spans[0].1;
        // [CLS] w.. [SEP]; keep the separator as the last token
        text.truncate(max_len - 1);
        text.push(vocab::SEP);
    }
}

/// Entity-augmented sample: text entity plus the record's shuffled entities.
pub fn build_sample(
    record: &PaperRecord,
    vocab: &Vocabulary,
    max_len: usize,
    shuffle_seed: u64,
    include_abstract: bool,
) -> Result<InputSample> {
    assert!(max_len >= 8, "max_len {max_len} too small");
    let title = tokenize(&record.title, vocab);
    if title.is_empty() {
        return Err(Error::Config(format!(
            "record {} has an empty title",
            record.paper_id
        )));
    }
    let mut text = vec![vocab::CLS];
    text.extend(title);
    if include_abstract {
        text.extend(tokenize(&record.abstract_text, vocab));
    }
    text.push(vocab::SEP);

    let mut rest = non_text_spans(record, vocab);
    let mut rng = stream(shuffle_seed, "shuffle");
    rest.shuffle(&mut rng);

    let mut spans = Vec::with_capacity(1 + rest.len());
    spans.push((EntityType::Text, text));
    spans.extend(rest);
    truncate_spans(&mut spans, max_len);
    Ok(assemble_sample(&spans))
}

/// Stage-1 sample: a single text entity of title, the author list rendered
/// as a sentence, then the abstract.
pub fn build_text_sample(
    record: &PaperRecord,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<InputSample> {
    assert!(max_len >= 8, "max_len {max_len} too small");
    let title = tokenize(&record.title, vocab);
    if title.is_empty() {
        return Err(Error::Config(format!(
            "record {} has an empty title",
            record.paper_id
        )));
    }
    let mut text = vec![vocab::CLS];
    text.extend(title);
    text.extend(tokenize(&record.authors.join(" "), vocab));
    text.extend(tokenize(&record.abstract_text, vocab));
    text.push(vocab::SEP);
    let mut spans = vec![(EntityType::Text, text)];
    truncate_spans(&mut spans, max_len);
    Ok(assemble_sample(&spans))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

/// Positions to mask with their original ids and replacement actions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaskingPlan {
    pub masked_positions: Vec<usize>,
    pub labels: Vec<u32>,
    pub actions: Vec<MaskAction>,
}

impl MaskingPlan {
    pub fn is_empty(&self) -> bool {
        self.masked_positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.masked_positions.len()
    }

    fn sort_by_position(&mut self) {
        let mut idx: Vec<usize> = (0..self.masked_positions.len()).collect();
        idx.sort_by_key(|&i| self.masked_positions[i]);
        self.masked_positions = idx.iter().map(|&i| self.masked_positions[i]).collect();
        self.labels = idx.iter().map(|&i| self.labels[i]).collect();
        self.actions = idx.iter().map(|&i| self.actions[i]).collect();
    }

    /// Union of two plans over disjoint position sets.
    pub fn merge(mut self, other: MaskingPlan) -> MaskingPlan {
        self.masked_positions.extend(other.masked_positions);
        self.labels.extend(other.labels);
        self.actions.extend(other.actions);
        self.sort_by_position();
        for w in self.masked_positions.windows(2) {
            assert!(w[0] < w[1], "overlapping masking plans");
        }
        self
    }
}

#[derive(Clone, Debug)]
pub struct MaskingConfig {
    pub text_mask_rate: f64,
    pub entity_mask_rate: f64,
    pub geometric_p: f64,
    pub span_min: usize,
    pub span_max: usize,
    /// Entities shorter than this are always masked whole.
    pub whole_entity_threshold: usize,
    pub mask_prob: f64,
    pub random_prob: f64,
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            text_mask_rate: 0.15,
            entity_mask_rate: 0.15,
            geometric_p: 0.2,
            span_min: 4,
            span_max: 10,
            whole_entity_threshold: 4,
            mask_prob: 0.8,
            random_prob: 0.1,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("text_mask_rate", self.text_mask_rate),
            ("entity_mask_rate", self.entity_mask_rate),
            ("geometric_p", self.geometric_p),
        ] {
            if !(0.0..1.0).contains(&r) || r == 0.0 {
                return Err(Error::Config(format!("{name} {r} outside (0, 1)")));
            }
        }
        if !(4 <= self.span_min && self.span_min <= self.span_max) {
            return Err(Error::Config(format!(
                "span bounds [{}, {}] must satisfy 4 <= low <= high",
                self.span_min, self.span_max
            )));
        }
        if self.mask_prob + self.random_prob > 1.0 {
            return Err(Error::Config("replacement mix exceeds 1".into()));
        }
        Ok(())
    }
}

/// Analytic pmf of the renormalized truncated geometric on
/// [span_min, span_max]: P(l) = p (1-p)^(l-min) / Z.
pub fn span_length_pmf(cfg: &MaskingConfig, l: usize) -> f64 {
    if l < cfg.span_min || l > cfg.span_max {
        return 0.0;
    }
    let p = cfg.geometric_p;
    let q = 1.0 - p;
    let z = 1.0 - q.powi((cfg.span_max - cfg.span_min + 1) as i32);
    p * q.powi((l - cfg.span_min) as i32) / z
}

/// Inverse-CDF draw from the renormalized truncated geometric.
pub fn sample_span_length(cfg: &MaskingConfig, rng: &mut impl rand::Rng) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for l in cfg.span_min..=cfg.span_max {
        cum += span_length_pmf(cfg, l);
        if u < cum {
            return l;
        }
    }
    cfg.span_max
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn draw_action(cfg: &MaskingConfig, rng: &mut impl rand::Rng) -> MaskAction {
    let u: f64 = rng.gen();
    if u < cfg.mask_prob {
        MaskAction::Mask
    } else if u < cfg.mask_prob + cfg.random_prob {
        MaskAction::Random
    } else {
        MaskAction::Keep
    }
}

/// BERT-style masking over the text entity. Budget is
/// round(rate * maskable-token count) with a minimum of one; `[CLS]` and
/// `[SEP]` are never masked. Replacement action drawn per token.
pub fn plan_text_masking(
    sample: &InputSample,
    cfg: &MaskingConfig,
    rng: &mut impl rand::Rng,
) -> MaskingPlan {
    let ranges = sample.entity_ranges();
    let (text_range, ty) = &ranges[0];
    assert_eq!(*ty, EntityType::Text, "entity 0 must be the text entity");
    let maskable: Vec<usize> = text_range
        .clone()
        .filter(|&i| {
            let t = sample.token_ids[i];
            t != vocab::CLS && t != vocab::SEP && t != vocab::PAD
        })
        .collect();
    if maskable.is_empty() {
        return MaskingPlan::default();
    }
    let budget = round_half_up(cfg.text_mask_rate * maskable.len() as f64).max(1);
    let budget = budget.min(maskable.len());
    let mut shuffled = maskable;
    shuffled.shuffle(rng);
    let mut plan = MaskingPlan::default();
    for &pos in shuffled.iter().take(budget) {
        plan.masked_positions.push(pos);
        plan.labels.push(sample.token_ids[pos]);
        plan.actions.push(draw_action(cfg, rng));
    }
    plan.sort_by_position();
    plan
}

/// Span-aware masking over non-text entities. Walks entities in a
/// seeded-random order accumulating masked tokens until the budget
/// round(rate * non-text tokens), minimum one, is reached. Entities shorter
/// than the whole-entity threshold are masked whole; otherwise a truncated
/// geometric span is placed uniformly inside the entity (the whole entity if
/// the drawn length reaches its end anyway). One replacement action per span.
pub fn plan_entity_masking(
    sample: &InputSample,
    cfg: &MaskingConfig,
    rng: &mut impl rand::Rng,
) -> MaskingPlan {
    let ranges = sample.entity_ranges();
    let entities: Vec<Range<usize>> = ranges
        .iter()
        .filter(|(_, ty)| *ty != EntityType::Text)
        .map(|(r, _)| r.clone())
        .collect();
    if entities.is_empty() {
        return MaskingPlan::default();
    }
    let total: usize = entities.iter().map(|r| r.len()).sum();
    let budget = round_half_up(cfg.entity_mask_rate * total as f64).max(1);

    let mut order: Vec<usize> = (0..entities.len()).collect();
    order.shuffle(rng);

    let mut plan = MaskingPlan::default();
    let mut masked = 0usize;
    for &e in &order {
        if masked >= budget {
            break;
        }
        let range = &entities[e];
        let len = range.len();
        let span: Range<usize> = if len < cfg.whole_entity_threshold {
            0..len
        } else {
            let l = sample_span_length(cfg, rng);
            if l < len {
                let start = rng.gen_range(0..=len - l);
                start..start + l
            } else {
                0..len
            }
        };
        let action = draw_action(cfg, rng);
        for offset in span {
            let pos = range.start + offset;
            plan.masked_positions.push(pos);
            plan.labels.push(sample.token_ids[pos]);
            plan.actions.push(action);
            masked += 1;
        }
    }
    plan.sort_by_position();
    plan
}

/// Apply a plan: MASK positions get `[MASK]`, RANDOM positions a uniform
/// non-special vocabulary id, KEEP positions stay. Everything else is
/// untouched.
pub fn apply_masking(
    sample: &InputSample,
    plan: &MaskingPlan,
    vocab: &Vocabulary,
    rng: &mut impl rand::Rng,
) -> InputSample {
    let mut out = sample.clone();
    let content = vocab.content_ids();
    assert!(content.start < content.end, "vocabulary has no content tokens");
    for ((&pos, &label), &action) in plan
        .masked_positions
        .iter()
        .zip(&plan.labels)
        .zip(&plan.actions)
    {
        assert!(pos < out.len(), "masked position {pos} out of range");
        assert_eq!(out.token_ids[pos], label, "plan label mismatch at {pos}");
        out.token_ids[pos] = match action {
            MaskAction::Mask => vocab::MASK,
            MaskAction::Random => rng.gen_range(content.clone()),
            MaskAction::Keep => label,
        };
    }
    out
}
