use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::corpus::{generate_corpus, save_corpus, GeneratorSpec};
use entlm_core::evaluation::{blocks_from_corpus, fos_task_from_records, save_blocks, save_task};
use entlm_core::vocab::build_vocab;

/// Generate a synthetic corpus (plus vocabulary and task files on request)
/// and print its statistics.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let num_topics: usize = cfg.require_parse("corpus.num_topics")?;
    let papers_per_topic: usize = cfg.require_parse("corpus.papers_per_topic")?;
    let noise_rate: f64 = cfg.parse_or("corpus.noise_rate", 0.1)?;
    let ambiguous: usize = cfg.parse_or("corpus.ambiguous_authors", 0)?;

    let spec = GeneratorSpec::synthetic(num_topics, papers_per_topic, noise_rate, seed, ambiguous);
    let corpus = generate_corpus(&spec)?;

    let corpus_path = cfg.out_path("out.corpus")?;
    save_corpus(&corpus, &corpus_path)?;

    if let Some(vocab_path) = cfg.out_path_opt("out.vocab") {
        let min_freq: usize = cfg.parse_or("vocab.min_frequency", 1)?;
        let vocab = build_vocab(&corpus, min_freq);
        vocab.save(&vocab_path)?;
        println!("vocabulary\t{}\t{}", vocab.len(), vocab_path.display());
    }

    // held-out items over the same pools for zero-shot / classification runs
    if let Some(task_path) = cfg.out_path_opt("out.fos_task") {
        let held_out: usize = cfg.parse_or("task.papers_per_topic", 20)?;
        let eval_spec = GeneratorSpec {
            papers_per_topic: held_out,
            seed: seed.wrapping_add(1),
            ..spec.clone()
        };
        let eval_records = generate_corpus(&eval_spec)?;
        let fos_by_topic: Vec<String> =
            spec.topics.iter().map(|t| t.fos[0].clone()).collect();
        let task = fos_task_from_records(&eval_records, &fos_by_topic);
        save_task(&task.items, &task_path)?;
        println!("fos_task\t{}\t{}", task.items.len(), task_path.display());
    }

    if let (Some(val_path), Some(test_path)) =
        (cfg.out_path_opt("out.blocks_val"), cfg.out_path_opt("out.blocks_test"))
    {
        let blocks = blocks_from_corpus(&corpus);
        let (val, test): (Vec<_>, Vec<_>) =
            blocks.into_iter().enumerate().partition(|(i, _)| i % 2 == 0);
        let val: Vec<_> = val.into_iter().map(|(_, b)| b).collect();
        let test: Vec<_> = test.into_iter().map(|(_, b)| b).collect();
        save_blocks(&val, &val_path)?;
        save_blocks(&test, &test_path)?;
        println!("blocks\t{} val / {} test", val.len(), test.len());
    }

    cfg.reject_unknown()?;

    // statistics: papers plus entity counts per type
    let mut authors = 0usize;
    let mut fos = 0usize;
    let mut venues = 0usize;
    let mut affiliations = 0usize;
    for r in &corpus {
        authors += r.authors.len();
        fos += r.fos.len();
        venues += usize::from(!r.venue.is_empty());
        affiliations += r.affiliations.len();
    }
    println!("papers\t{}", corpus.len());
    println!("entities.author\t{authors}");
    println!("entities.fos\t{fos}");
    println!("entities.venue\t{venues}");
    println!("entities.affiliation\t{affiliations}");
    println!("corpus\t{}", corpus_path.display());
    Ok(())
}
