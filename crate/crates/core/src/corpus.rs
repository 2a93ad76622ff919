//! Synthetic academic corpus with planted text/entity correlations.
//!
//! Each topic owns disjoint word pools for titles, abstracts and entity
//! names. A paper drawn from topic `t` takes its text from `t`'s pools and
//! each of its FOS/venue/affiliation entities from `t`'s pools with
//! probability `1 - noise_rate`, otherwise from a uniformly random other
//! topic. Generation is a pure function of the [`GeneratorSpec`].

use crate::error::{Error, Result};
use crate::rng::stream;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

/// One paper and its ego-network of entity names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub authors: Vec<String>,
    pub fos: Vec<String>,
    pub venue: String,
    pub affiliations: Vec<String>,
    /// Generator ground truth; absent for external data.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub topic_id: Option<usize>,
}

/// Word pools owned by one topic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicPools {
    pub title_words: Vec<String>,
    pub abstract_words: Vec<String>,
    pub fos: Vec<String>,
    pub venues: Vec<String>,
    pub affiliations: Vec<String>,
    pub authors: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub papers_per_topic: usize,
    pub topics: Vec<TopicPools>,
    /// Filler words any title or abstract may use.
    pub shared_words: Vec<String>,
    /// Probability that a FOS/venue/affiliation draw comes from another topic.
    pub noise_rate: f64,
    pub seed: u64,
    pub title_len: (usize, usize),
    pub abstract_len: (usize, usize),
    pub authors_per_paper: (usize, usize),
    pub affiliations_per_paper: (usize, usize),
    /// Probability that a text word is a shared filler instead of topical.
    pub shared_word_rate: f64,
}

impl GeneratorSpec {
    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.topics.is_empty() {
            return Err(Error::Config("generator needs at least one topic".into()));
        }
        if self.papers_per_topic == 0 {
            return Err(Error::Config("papers_per_topic must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.noise_rate) {
            return Err(Error::Config(format!(
                "noise rate {} outside [0, 0.5)",
                self.noise_rate
            )));
        }
        for (t, pools) in self.topics.iter().enumerate() {
            for (name, pool) in [
                ("title_words", &pools.title_words),
                ("abstract_words", &pools.abstract_words),
                ("fos", &pools.fos),
                ("venues", &pools.venues),
                ("affiliations", &pools.affiliations),
                ("authors", &pools.authors),
            ] {
                if pool.is_empty() {
                    return Err(Error::Config(format!("topic {t} has empty {name} pool")));
                }
            }
        }
        if self.title_len.0 == 0 || self.title_len.0 > self.title_len.1 {
            return Err(Error::Config("bad title length range".into()));
        }
        Ok(())
    }

    /// Deterministic desk-scale spec: disjoint pseudo-word pools per topic,
    /// FOS names of 1–3 tokens (cycling by topic), and optionally author
    /// names planted into two topics each to create ambiguous name blocks.
    pub fn synthetic(
        num_topics: usize,
        papers_per_topic: usize,
        noise_rate: f64,
        seed: u64,
        ambiguous_authors: usize,
    ) -> Self {
        let mut rng = stream(seed, "pools");
        let mut maker = WordMaker::new();
        let shared_words = (0..12).map(|_| maker.word(&mut rng)).collect();
        let mut topics: Vec<TopicPools> = (0..num_topics)
            .map(|t| {
                let fos_len = 1 + t % 3;
                let fos_name = (0..fos_len)
                    .map(|_| maker.word(&mut rng))
                    .collect::<Vec<_>>()
                    .join(" ");
                TopicPools {
                    title_words: (0..12).map(|_| maker.word(&mut rng)).collect(),
                    abstract_words: (0..14).map(|_| maker.word(&mut rng)).collect(),
                    fos: vec![fos_name],
                    venues: (0..2).map(|_| maker.name(&mut rng, 2)).collect(),
                    affiliations: (0..3).map(|_| maker.name(&mut rng, 2)).collect(),
                    authors: (0..8).map(|_| maker.name(&mut rng, 2)).collect(),
                }
            })
            .collect();
        for k in 0..ambiguous_authors {
            let name = maker.name(&mut rng, 2);
            let a = (2 * k) % num_topics;
            let b = (2 * k + 1) % num_topics;
            topics[a].authors.push(name.clone());
            if b != a {
                topics[b].authors.push(name);
            }
        }
        GeneratorSpec {
            papers_per_topic,
            topics,
            shared_words,
            noise_rate,
            seed,
            title_len: (4, 8),
            abstract_len: (10, 18),
            authors_per_paper: (1, 3),
            affiliations_per_paper: (0, 2),
            shared_word_rate: 0.3,
        }
    }
}

/// Pseudo-word factory: syllable chains, globally deduplicated.
struct WordMaker {
    seen: HashSet<String>,
}

const SYLLABLES: [&str; 20] = [
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu", "na", "pe", "ri", "so", "tu",
    "va", "we", "xi", "yo", "zu",
];

impl WordMaker {
    fn new() -> Self {
        WordMaker { seen: HashSet::new() }
    }

    fn word(&mut self, rng: &mut impl rand::Rng) -> String {
        loop {
            let n = rng.gen_range(2..=4);
            let w: String = (0..n)
                .map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())])
                .collect();
            if self.seen.insert(w.clone()) {
                return w;
            }
        }
    }

    fn name(&mut self, rng: &mut impl rand::Rng, words: usize) -> String {
        (0..words).map(|_| self.word(rng)).collect::<Vec<_>>().join(" ")
    }
}

fn pick<'a>(pool: &'a [String], rng: &mut impl rand::Rng) -> &'a str {
    &pool[rng.gen_range(0..pool.len())]
}

/// Own-topic pool with probability 1 - noise, otherwise a uniformly random
/// other topic's pool.
fn noisy_pick<'a>(
    spec: &'a GeneratorSpec,
    topic: usize,
    pool_of: impl Fn(&'a TopicPools) -> &'a [String],
    rng: &mut impl rand::Rng,
) -> &'a str {
    let topics = spec.num_topics();
    let source = if topics > 1 && rng.gen::<f64>() < spec.noise_rate {
        let mut other = rng.gen_range(0..topics - 1);
        if other >= topic {
            other += 1;
        }
        other
    } else {
        topic
    };
    pick(pool_of(&spec.topics[source]), rng)
}

fn text_from(
    topical: &[String],
    shared: &[String],
    len: (usize, usize),
    shared_rate: f64,
    rng: &mut impl rand::Rng,
) -> String {
    let n = rng.gen_range(len.0..=len.1);
    (0..n)
        .map(|_| {
            if !shared.is_empty() && rng.gen::<f64>() < shared_rate {
                pick(shared, rng)
            } else {
                pick(topical, rng)
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate_corpus(spec: &GeneratorSpec) -> Result<Vec<PaperRecord>> {
    spec.validate()?;
    let mut rng = stream(spec.seed, "corpus");
    let mut out = Vec::with_capacity(spec.num_topics() * spec.papers_per_topic);
    for t in 0..spec.num_topics() {
        let pools = &spec.topics[t];
        for i in 0..spec.papers_per_topic {
            let title = text_from(
                &pools.title_words,
                &spec.shared_words,
                spec.title_len,
                spec.shared_word_rate,
                &mut rng,
            );
            let abstract_text = if spec.abstract_len.1 == 0 {
                String::new()
            } else {
                text_from(
                    &pools.abstract_words,
                    &spec.shared_words,
                    spec.abstract_len,
                    spec.shared_word_rate,
                    &mut rng,
                )
            };
            let n_auth = rng.gen_range(spec.authors_per_paper.0..=spec.authors_per_paper.1);
            let authors: Vec<String> = pools
                .authors
                .choose_multiple(&mut rng, n_auth.min(pools.authors.len()))
                .cloned()
                .collect();
            let fos = vec![noisy_pick(spec, t, |p| &p.fos, &mut rng).to_string()];
            let venue = noisy_pick(spec, t, |p| &p.venues, &mut rng).to_string();
            let n_aff =
                rng.gen_range(spec.affiliations_per_paper.0..=spec.affiliations_per_paper.1);
            let affiliations: Vec<String> = (0..n_aff)
                .map(|_| noisy_pick(spec, t, |p| &p.affiliations, &mut rng).to_string())
                .collect();
            out.push(PaperRecord {
                paper_id: format!("p{t:03}-{i:05}"),
                title,
                abstract_text,
                authors,
                fos,
                venue,
                affiliations,
                topic_id: Some(t),
            });
        }
    }
    Ok(out)
}

/// Write bytes to `path` via a temp file in the same directory plus rename,
/// so readers never observe a truncated file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// One JSON object per line, struct field order.
pub fn save_corpus(corpus: &[PaperRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for rec in corpus {
        out.push_str(&serde_json::to_string(rec).expect("record serializes"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn load_corpus(path: &Path) -> Result<Vec<PaperRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PaperRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_keeps_every_entity_on_topic() {
        let spec = GeneratorSpec::synthetic(4, 50, 0.0, 11, 0);
        let corpus = generate_corpus(&spec).unwrap();
        for rec in &corpus {
            let pools = &spec.topics[rec.topic_id.unwrap()];
            assert!(pools.fos.contains(&rec.fos[0]));
            assert!(pools.venues.contains(&rec.venue));
            for a in &rec.affiliations {
                assert!(pools.affiliations.contains(a));
            }
        }
    }

    #[test]
    fn same_seed_reproduces_corpus() {
        let spec = GeneratorSpec::synthetic(3, 20, 0.2, 5, 2);
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_fraction_matches_counting_oracle() {
        // 10 topics x 1000 papers, noise 0.2: off-topic fraction of all
        // noisy draws (fos + venue + affiliations) within 0.2 +- 0.02
        let spec = GeneratorSpec::synthetic(10, 1000, 0.2, 13, 0);
        let corpus = generate_corpus(&spec).unwrap();
        let mut off = 0usize;
        let mut total = 0usize;
        for rec in &corpus {
            let pools = &spec.topics[rec.topic_id.unwrap()];
            total += 1;
            off += usize::from(!pools.fos.contains(&rec.fos[0]));
            total += 1;
            off += usize::from(!pools.venues.contains(&rec.venue));
            for a in &rec.affiliations {
                total += 1;
                off += usize::from(!pools.affiliations.contains(a));
            }
        }
        let frac = off as f64 / total as f64;
        assert!((frac - 0.2).abs() < 0.02, "off-topic fraction {frac}");
    }

    #[test]
    fn fos_off_topic_rate_within_three_sigma() {
        let n = 10_000usize;
        let r = 0.2;
        let spec = GeneratorSpec::synthetic(10, n / 10, r, 17, 0);
        let corpus = generate_corpus(&spec).unwrap();
        let off = corpus
            .iter()
            .filter(|rec| !spec.topics[rec.topic_id.unwrap()].fos.contains(&rec.fos[0]))
            .count();
        let frac = off as f64 / n as f64;
        let sigma = (r * (1.0 - r) / n as f64).sqrt();
        assert!((frac - r).abs() < 3.0 * sigma, "frac {frac}, 3 sigma {}", 3.0 * sigma);
    }

    #[test]
    fn empty_pool_is_config_error() {
        let mut spec = GeneratorSpec::synthetic(2, 5, 0.1, 3, 0);
        spec.topics[1].venues.clear();
        assert!(matches!(generate_corpus(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn noise_rate_half_rejected() {
        let mut spec = GeneratorSpec::synthetic(2, 5, 0.1, 3, 0);
        spec.noise_rate = 0.5;
        assert!(generate_corpus(&spec).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let spec = GeneratorSpec::synthetic(3, 10, 0.1, 7, 1);
        let corpus = generate_corpus(&spec).unwrap();
        let dir = std::env::temp_dir().join(format!("entlm-corpus-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("corpus.jsonl");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(loaded, corpus);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_abstract_round_trips_empty() {
        let rec = PaperRecord {
            paper_id: "x1".into(),
            title: "a title".into(),
            abstract_text: String::new(),
            authors: vec!["some one".into()],
            fos: vec!["field".into()],
            venue: String::new(),
            affiliations: vec![],
            topic_id: None,
        };
        let json = serde_json::to_string(&rec).unwrap();
        let back: PaperRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.abstract_text, "");
        assert_eq!(back, rec);
    }

    #[test]
    fn resave_is_byte_identical() {
        let spec = GeneratorSpec::synthetic(5, 200, 0.15, 23, 0);
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.len(), 1000);
        let dir = std::env::temp_dir().join(format!("entlm-resave-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("c1.jsonl");
        let p2 = dir.join("c2.jsonl");
        save_corpus(&corpus, &p1).unwrap();
        let loaded = load_corpus(&p1).unwrap();
        save_corpus(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = std::env::temp_dir().join(format!("entlm-badline-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        let spec = GeneratorSpec::synthetic(1, 2, 0.0, 1, 0);
        let corpus = generate_corpus(&spec).unwrap();
        let mut text = serde_json::to_string(&corpus[0]).unwrap();
        text.push('\n');
        text.push_str("{not json\n");
        std::fs::write(&path, text).unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn ambiguous_authors_planted_in_two_topics() {
        let spec = GeneratorSpec::synthetic(4, 5, 0.0, 9, 2);
        for k in 0..2usize {
            let name = spec.topics[2 * k].authors.last().unwrap();
            assert!(spec.topics[2 * k + 1].authors.contains(name));
        }
    }
}
