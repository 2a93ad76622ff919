//! Task harnesses: zero-shot candidate inference (Hit@1 / MRR), supervised
//! classification accuracy, and author name disambiguation via
//! cosine-threshold graph clustering scored by macro pairwise F1.

use crate::corpus::PaperRecord;
use crate::decoding::{rank_candidates, DecodeOrder, DecodeQuery};
use crate::encoding::{build_sample, EntityType, InputSample};
use crate::error::{Error, Result};
use crate::model::{encoder_forward, pooled_embedding, ModelWeights};
use crate::tensor::Tensor;
use crate::vocab::{tokenize, Vocabulary, UNK};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;

// ── zero-shot inference ─────────────────────────────────────────────

/// One zero-shot item: a paper, the candidate entity names, and which
/// candidate is gold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InferenceItem {
    pub record: PaperRecord,
    pub candidates: Vec<String>,
    pub gold_index: usize,
}

#[derive(Clone, Debug)]
pub struct InferenceTask {
    pub entity_type: EntityType,
    pub items: Vec<InferenceItem>,
}

impl InferenceTask {
    pub fn validate(&self) -> Result<()> {
        for (i, item) in self.items.iter().enumerate() {
            if item.candidates.len() < 2 {
                return Err(Error::Config(format!("item {i} has fewer than 2 candidates")));
            }
            if item.gold_index >= item.candidates.len() {
                return Err(Error::Config(format!("item {i} gold index out of range")));
            }
        }
        Ok(())
    }
}

/// Which query features a zero-shot run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuerySetting {
    pub use_prompt: bool,
    pub use_abstract: bool,
}

impl QuerySetting {
    pub fn name(self) -> &'static str {
        match (self.use_prompt, self.use_abstract) {
            (false, false) => "plain",
            (true, false) => "+prompt",
            (false, true) => "+abstract",
            (true, true) => "+both",
        }
    }

    pub fn all_four() -> [QuerySetting; 4] {
        [
            QuerySetting { use_prompt: false, use_abstract: false },
            QuerySetting { use_prompt: true, use_abstract: false },
            QuerySetting { use_prompt: false, use_abstract: true },
            QuerySetting { use_prompt: true, use_abstract: true },
        ]
    }
}

#[derive(Clone, Debug)]
pub struct DecodeSettings {
    pub order: DecodeOrder,
    pub alpha: f64,
    pub setting: QuerySetting,
    /// Prompt text; None uses the per-type default.
    pub prompt: Option<String>,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            order: DecodeOrder::OutOfOrder,
            alpha: 0.0,
            setting: QuerySetting { use_prompt: false, use_abstract: false },
            prompt: None,
        }
    }
}

/// Per-item outcome kept around so reports can be recomputed or dumped.
#[derive(Clone, Debug, Serialize)]
pub struct ItemRanking {
    /// 1-based rank of the gold candidate; None if the item was skipped.
    pub gold_rank: Option<usize>,
    /// (candidate text, normalized score) in rank order; empty if skipped.
    pub ranking: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct ZeroShotOutcome {
    pub hit_at_1: f64,
    pub mrr: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub per_item: Vec<ItemRanking>,
}

fn item_query(
    item: &InferenceItem,
    task_type: EntityType,
    settings: &DecodeSettings,
) -> DecodeQuery {
    let mut q = DecodeQuery::scoring(&item.record.title, task_type);
    q.order = settings.order;
    q.alpha = settings.alpha;
    if settings.setting.use_abstract && !item.record.abstract_text.is_empty() {
        q.abstract_text = Some(item.record.abstract_text.clone());
    }
    if settings.setting.use_prompt {
        q.prompt = settings
            .prompt
            .clone()
            .unwrap_or_else(|| crate::decoding::default_prompt(task_type).to_string());
    }
    q
}

/// Rank every item's candidates. Items with out-of-vocabulary candidate
/// tokens are skipped and counted.
pub fn evaluate_zero_shot(
    task: &InferenceTask,
    weights: &ModelWeights,
    vocab: &Vocabulary,
    settings: &DecodeSettings,
) -> Result<ZeroShotOutcome> {
    task.validate()?;
    let per_item: Vec<ItemRanking> = task
        .items
        .par_iter()
        .map(|item| {
            let cand_tokens: Vec<Vec<u32>> =
                item.candidates.iter().map(|c| tokenize(c, vocab)).collect();
            if cand_tokens.iter().any(|t| t.is_empty() || t.contains(&UNK)) {
                return ItemRanking { gold_rank: None, ranking: Vec::new() };
            }
            let q = item_query(item, task.entity_type, settings);
            let ranked = rank_candidates(&q, &cand_tokens, weights, vocab);
            let gold = &cand_tokens[item.gold_index];
            let gold_rank = ranked.iter().position(|c| &c.token_ids == gold).map(|p| p + 1);
            let ranking = ranked
                .iter()
                .map(|c| (crate::decoding::candidate_text(c, vocab), c.normalized_score))
                .collect();
            ItemRanking { gold_rank, ranking }
        })
        .collect();

    Ok(summarize_rankings(per_item))
}

/// Hit@1 / MRR over already-computed per-item rankings.
pub fn summarize_rankings(per_item: Vec<ItemRanking>) -> ZeroShotOutcome {
    let mut hits = 0usize;
    let mut rr = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for item in &per_item {
        match item.gold_rank {
            Some(rank) => {
                evaluated += 1;
                hits += usize::from(rank == 1);
                rr += 1.0 / rank as f64;
            }
            None => skipped += 1,
        }
    }
    let denom = evaluated.max(1) as f64;
    ZeroShotOutcome {
        hit_at_1: hits as f64 / denom,
        mrr: rr / denom,
        evaluated,
        skipped,
        per_item,
    }
}

// ── feature selection ───────────────────────────────────────────────

/// Which entity groups a classification / embedding input includes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureFlags {
    pub abstract_text: bool,
    pub authors: bool,
    pub fos: bool,
    pub venue: bool,
    pub affiliations: bool,
}

impl FeatureFlags {
    pub fn title_only() -> Self {
        FeatureFlags {
            abstract_text: false,
            authors: false,
            fos: false,
            venue: false,
            affiliations: false,
        }
    }

    pub fn all() -> Self {
        FeatureFlags {
            abstract_text: true,
            authors: true,
            fos: true,
            venue: true,
            affiliations: true,
        }
    }

    /// Parse a subset name: `title`, `author`, `venue`, `aff`, `fos`, `abstract`
    /// or `all`; `exclude` removes the task's own target entity from `all`.
    pub fn from_subset(name: &str, exclude: Option<EntityType>) -> Result<Self> {
        let mut f = FeatureFlags::title_only();
        match name {
            "title" => {}
            "author" => f.authors = true,
            "venue" => f.venue = true,
            "aff" => f.affiliations = true,
            "fos" => f.fos = true,
            "abstract" => f.abstract_text = true,
            "all" => {
                f = FeatureFlags::all();
                f.abstract_text = false;
            }
            other => return Err(Error::Config(format!("unknown feature subset {other}"))),
        }
        if let Some(ex) = exclude {
            match ex {
                EntityType::Author => f.authors = false,
                EntityType::Fos => f.fos = false,
                EntityType::Venue => f.venue = false,
                EntityType::Affiliation => f.affiliations = false,
                EntityType::Text => {}
            }
        }
        Ok(f)
    }
}

/// Copy of the record with deselected entity groups emptied.
pub fn apply_features(record: &PaperRecord, flags: FeatureFlags) -> PaperRecord {
    let mut r = record.clone();
    if !flags.abstract_text {
        r.abstract_text = String::new();
    }
    if !flags.authors {
        r.authors.clear();
    }
    if !flags.fos {
        r.fos.clear();
    }
    if !flags.venue {
        r.venue = String::new();
    }
    if !flags.affiliations {
        r.affiliations.clear();
    }
    r
}

/// Unmasked classification samples from records, one per record, with the
/// selected feature subset.
pub fn classification_samples(
    records: &[(PaperRecord, usize)],
    vocab: &Vocabulary,
    flags: FeatureFlags,
    max_len: usize,
    shuffle_seed: u64,
) -> Result<Vec<(InputSample, usize)>> {
    records
        .iter()
        .enumerate()
        .map(|(i, (rec, label))| {
            let filtered = apply_features(rec, flags);
            let s = build_sample(
                &filtered,
                vocab,
                max_len,
                crate::rng::derive_seed(shuffle_seed, "cls.shuffle", &[i as u64]),
                flags.abstract_text,
            )?;
            Ok((s, *label))
        })
        .collect()
}

// ── name disambiguation ─────────────────────────────────────────────

/// Papers sharing one ambiguous author name, with the gold identity
/// partition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DisambigBlock {
    #[serde(rename = "block")]
    pub name: String,
    pub papers: Vec<PaperRecord>,
    #[serde(rename = "gold_clusters")]
    pub gold: Vec<Vec<String>>,
}

impl DisambigBlock {
    pub fn validate(&self) -> Result<()> {
        let ids: HashSet<&str> = self.papers.iter().map(|p| p.paper_id.as_str()).collect();
        let mut seen = HashSet::new();
        for cluster in &self.gold {
            if cluster.is_empty() {
                return Err(Error::Config(format!("block {}: empty gold cluster", self.name)));
            }
            for id in cluster {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Config(format!(
                        "block {}: gold id {id} not among papers",
                        self.name
                    )));
                }
                if !seen.insert(id.clone()) {
                    return Err(Error::Config(format!(
                        "block {}: paper {id} in two gold clusters",
                        self.name
                    )));
                }
            }
        }
        if seen.len() != ids.len() {
            return Err(Error::Config(format!(
                "block {}: gold partition does not cover all papers",
                self.name
            )));
        }
        Ok(())
    }
}

/// Pooled embedding per paper under the feature subset; untokenizable papers
/// are skipped and reported.
pub fn embed_papers(
    papers: &[PaperRecord],
    weights: &ModelWeights,
    vocab: &Vocabulary,
    flags: FeatureFlags,
    max_len: usize,
) -> (Vec<(String, Tensor)>, Vec<String>) {
    let results: Vec<(String, Option<Tensor>)> = papers
        .par_iter()
        .map(|rec| {
            let filtered = apply_features(rec, flags);
            let emb = build_sample(&filtered, vocab, max_len, 0, flags.abstract_text)
                .ok()
                .map(|s| {
                    let out = encoder_forward(&s, weights, false);
                    pooled_embedding(&out, &s.attention_mask)
                });
            (rec.paper_id.clone(), emb)
        })
        .collect();
    let mut embedded = Vec::new();
    let mut skipped = Vec::new();
    for (id, emb) in results {
        match emb {
            Some(e) => embedded.push((id, e)),
            None => skipped.push(id),
        }
    }
    (embedded, skipped)
}

pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> f64 {
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    let na: f64 = a.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0; // zero-norm embeddings stay isolated
    }
    dot / (na * nb)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the graph with an edge wherever cosine similarity
/// strictly exceeds the threshold. Zero-norm embeddings never gain edges.
pub fn cluster_by_threshold(
    embeddings: &[(String, Tensor)],
    threshold: f64,
) -> Vec<Vec<String>> {
    assert!((-1.0..=1.0).contains(&threshold), "threshold outside [-1, 1]");
    let n = embeddings.len();
    let nonzero: Vec<bool> = embeddings
        .iter()
        .map(|(_, e)| e.data().iter().any(|&v| v != 0.0))
        .collect();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if nonzero[i]
                && nonzero[j]
                && cosine_similarity(&embeddings[i].1, &embeddings[j].1) > threshold
            {
                uf.union(i, j);
            }
        }
    }
    let mut clusters: HashMap<usize, Vec<String>> = HashMap::new();
    for i in 0..n {
        let root = uf.find(i);
        clusters.entry(root).or_default().push(embeddings[i].0.clone());
    }
    let mut out: Vec<Vec<String>> = clusters.into_values().collect();
    for c in &mut out {
        c.sort();
    }
    out.sort();
    out
}

fn same_cluster_pairs(partition: &[Vec<String>]) -> HashSet<(String, String)> {
    let mut pairs = HashSet::new();
    for cluster in partition {
        for i in 0..cluster.len() {
            for j in i + 1..cluster.len() {
                let (a, b) = (&cluster[i], &cluster[j]);
                let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
                pairs.insert(key);
            }
        }
    }
    pairs
}

/// Pairwise precision/recall/F1 over unordered same-cluster pairs. Zero-pair
/// degenerate cases score 0.
pub fn pairwise_f1(predicted: &[Vec<String>], gold: &[Vec<String>]) -> (f64, f64, f64) {
    let pred_ids: HashSet<&String> = predicted.iter().flatten().collect();
    let gold_ids: HashSet<&String> = gold.iter().flatten().collect();
    assert_eq!(pred_ids, gold_ids, "partitions cover different paper sets");

    let pred_pairs = same_cluster_pairs(predicted);
    let gold_pairs = same_cluster_pairs(gold);
    let hit = pred_pairs.intersection(&gold_pairs).count() as f64;
    let precision = if pred_pairs.is_empty() { 0.0 } else { hit / pred_pairs.len() as f64 };
    let recall = if gold_pairs.is_empty() { 0.0 } else { hit / gold_pairs.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub const THRESHOLD_SWEEP: [f64; 7] = [0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Clone, Debug)]
pub struct BlockScore {
    pub block: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug)]
pub struct DisambigReport {
    pub threshold: f64,
    pub validation_macro_f1: f64,
    pub per_block: Vec<BlockScore>,
    pub macro_f1: f64,
    pub skipped_papers: usize,
}

fn block_f1_at(
    block: &DisambigBlock,
    embeddings: &[(String, Tensor)],
    threshold: f64,
) -> BlockScore {
    let embedded: HashSet<&String> = embeddings.iter().map(|(id, _)| id).collect();
    let predicted = cluster_by_threshold(embeddings, threshold);
    // restrict gold to papers that produced embeddings
    let gold: Vec<Vec<String>> = block
        .gold
        .iter()
        .map(|c| c.iter().filter(|id| embedded.contains(id)).cloned().collect())
        .filter(|c: &Vec<String>| !c.is_empty())
        .collect();
    let (precision, recall, f1) = pairwise_f1(&predicted, &gold);
    BlockScore { block: block.name.clone(), precision, recall, f1 }
}

fn macro_f1(scores: &[BlockScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64
}

/// Sweep thresholds on validation blocks, pick the macro-F1 maximizer
/// (lowest threshold on ties), report test blocks at that threshold.
pub fn run_disambiguation(
    validation: &[DisambigBlock],
    test: &[DisambigBlock],
    weights: &ModelWeights,
    vocab: &Vocabulary,
    flags: FeatureFlags,
    max_len: usize,
    thresholds: &[f64],
) -> Result<DisambigReport> {
    if validation.is_empty() || test.is_empty() {
        return Err(Error::Config("need at least one validation and one test block".into()));
    }
    if thresholds.is_empty() {
        return Err(Error::Config("empty threshold sweep".into()));
    }
    for b in validation.iter().chain(test) {
        b.validate()?;
    }

    let mut skipped_papers = 0usize;
    let embed_all = |blocks: &[DisambigBlock]| -> Vec<Vec<(String, Tensor)>> {
        blocks
            .iter()
            .map(|b| embed_papers(&b.papers, weights, vocab, flags, max_len))
            .map(|(e, _s)| e)
            .collect()
    };
    let val_embs: Vec<Vec<(String, Tensor)>> = validation
        .iter()
        .map(|b| {
            let (e, s) = embed_papers(&b.papers, weights, vocab, flags, max_len);
            skipped_papers += s.len();
            e
        })
        .collect();

    let mut best = (thresholds[0], f64::NEG_INFINITY);
    for &t in thresholds {
        let scores: Vec<BlockScore> = validation
            .iter()
            .zip(&val_embs)
            .map(|(b, e)| block_f1_at(b, e, t))
            .collect();
        let m = macro_f1(&scores);
        if m > best.1 {
            best = (t, m);
        }
    }

    let test_embs = embed_all(test);
    let per_block: Vec<BlockScore> = test
        .iter()
        .zip(&test_embs)
        .map(|(b, e)| block_f1_at(b, e, best.0))
        .collect();
    let m = macro_f1(&per_block);
    Ok(DisambigReport {
        threshold: best.0,
        validation_macro_f1: best.1,
        per_block,
        macro_f1: m,
        skipped_papers,
    })
}

// ── task construction and file formats ──────────────────────────────

/// Zero-shot FOS task from generator records: candidates are the per-topic
/// FOS names, gold is the record's topic. Records whose topic has no
/// candidate are dropped.
pub fn fos_task_from_records(
    records: &[PaperRecord],
    fos_by_topic: &[String],
) -> InferenceTask {
    let items = records
        .iter()
        .filter_map(|rec| {
            let t = rec.topic_id?;
            if t >= fos_by_topic.len() {
                return None;
            }
            Some(InferenceItem {
                record: rec.clone(),
                candidates: fos_by_topic.to_vec(),
                gold_index: t,
            })
        })
        .collect();
    InferenceTask { entity_type: EntityType::Fos, items }
}

/// Ambiguous-author blocks: every author name appearing in two or more
/// topics becomes a block, partitioned by (name, topic) identity.
pub fn blocks_from_corpus(corpus: &[PaperRecord]) -> Vec<DisambigBlock> {
    let mut by_author: HashMap<&str, Vec<&PaperRecord>> = HashMap::new();
    for rec in corpus {
        for a in &rec.authors {
            by_author.entry(a).or_default().push(rec);
        }
    }
    let mut names: Vec<&str> = by_author.keys().copied().collect();
    names.sort();
    let mut blocks = Vec::new();
    for name in names {
        let papers = &by_author[name];
        let topics: HashSet<usize> = papers.iter().filter_map(|p| p.topic_id).collect();
        if topics.len() < 2 {
            continue;
        }
        let mut gold: HashMap<usize, Vec<String>> = HashMap::new();
        for p in papers {
            gold.entry(p.topic_id.unwrap_or(usize::MAX))
                .or_default()
                .push(p.paper_id.clone());
        }
        let mut gold: Vec<Vec<String>> = gold.into_values().collect();
        for g in &mut gold {
            g.sort();
        }
        gold.sort();
        blocks.push(DisambigBlock {
            name: name.to_string(),
            papers: papers.iter().map(|&p| p.clone()).collect(),
            gold,
        });
    }
    blocks
}

pub fn save_task(items: &[InferenceItem], path: &Path) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    crate::corpus::write_atomic(path, out.as_bytes())
}

pub fn load_task(path: &Path, entity_type: EntityType) -> Result<InferenceTask> {
    let text = std::fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: InferenceItem = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        items.push(item);
    }
    let task = InferenceTask { entity_type, items };
    task.validate()?;
    Ok(task)
}

pub fn save_blocks(blocks: &[DisambigBlock], path: &Path) -> Result<()> {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&serde_json::to_string(b).expect("block serializes"));
        out.push('\n');
    }
    crate::corpus::write_atomic(path, out.as_bytes())
}

pub fn load_blocks(path: &Path) -> Result<Vec<DisambigBlock>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let block: DisambigBlock = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        block.validate()?;
        out.push(block);
    }
    Ok(out)
}
