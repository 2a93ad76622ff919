pub mod classify;
pub mod disambiguate;
pub mod finetune;
pub mod gen_corpus;
pub mod generate;
pub mod gradcheck;
pub mod infer;
pub mod pretrain;

use crate::config::RunConfig;
use anyhow::{Context, Result};
use entlm_core::checkpoint::load_checkpoint;
use entlm_core::corpus::write_atomic;
use entlm_core::encoding::{EntityType, MaskingConfig};
use entlm_core::evaluation::FeatureFlags;
use entlm_core::model::{ModelConfig, ModelWeights};
use entlm_core::vocab::Vocabulary;
use std::path::Path;

/// Model hyper-parameters from `model.*` keys over desk-scale defaults.
pub fn model_config_from(cfg: &RunConfig, vocab_size: usize, seed: u64) -> Result<ModelConfig> {
    let mut m = ModelConfig::desk_default(vocab_size);
    m.seed = seed;
    m.num_layers = cfg.parse_or("model.num_layers", m.num_layers)?;
    m.num_heads = cfg.parse_or("model.num_heads", m.num_heads)?;
    m.hidden_dim = cfg.parse_or("model.hidden_dim", m.hidden_dim)?;
    m.ffn_dim = cfg.parse_or("model.ffn_dim", m.ffn_dim)?;
    m.max_pos1 = cfg.parse_or("model.max_pos1", m.max_pos1)?;
    m.max_pos2 = cfg.parse_or("model.max_pos2", m.max_pos2)?;
    m.dropout = cfg.parse_or("model.dropout", m.dropout)?;
    Ok(m)
}

/// Masking hyper-parameters from `mask.*` keys over the defaults.
pub fn masking_config_from(cfg: &RunConfig, seed: u64) -> Result<MaskingConfig> {
    let mut m = MaskingConfig { seed, ..MaskingConfig::default() };
    m.text_mask_rate = cfg.parse_or("mask.text_rate", m.text_mask_rate)?;
    m.entity_mask_rate = cfg.parse_or("mask.entity_rate", m.entity_mask_rate)?;
    m.geometric_p = cfg.parse_or("mask.geometric_p", m.geometric_p)?;
    m.span_min = cfg.parse_or("mask.span_min", m.span_min)?;
    m.span_max = cfg.parse_or("mask.span_max", m.span_max)?;
    Ok(m)
}

pub fn load_model_and_vocab(cfg: &RunConfig) -> Result<(ModelWeights, Vocabulary)> {
    let ckpt = cfg.path("checkpoint")?;
    let weights = load_checkpoint(&ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let vocab_path = cfg.path("vocab")?;
    let vocab = Vocabulary::load(&vocab_path)
        .with_context(|| format!("loading vocabulary {}", vocab_path.display()))?;
    if vocab.len() != weights.config.vocab_size {
        anyhow::bail!(
            "vocabulary has {} tokens but the checkpoint was trained with {}",
            vocab.len(),
            weights.config.vocab_size
        );
    }
    Ok((weights, vocab))
}

pub fn entity_type_from(name: &str) -> Result<EntityType> {
    Ok(match name {
        "author" => EntityType::Author,
        "fos" => EntityType::Fos,
        "venue" => EntityType::Venue,
        "affiliation" | "aff" => EntityType::Affiliation,
        other => anyhow::bail!("unknown entity type `{other}`"),
    })
}

/// Additive feature spec: `title` alone or comma-joined additions, e.g.
/// `fos,venue` means title plus FOS plus venue.
pub fn features_from(spec: &str) -> Result<FeatureFlags> {
    let mut f = FeatureFlags::title_only();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part {
            "title" => {}
            "abstract" => f.abstract_text = true,
            "author" | "authors" => f.authors = true,
            "fos" => f.fos = true,
            "venue" => f.venue = true,
            "aff" | "affiliation" | "affiliations" => f.affiliations = true,
            "all" => {
                let keep_abstract = f.abstract_text;
                f = FeatureFlags::all();
                f.abstract_text = keep_abstract;
            }
            other => anyhow::bail!("unknown feature `{other}`"),
        }
    }
    Ok(f)
}

pub fn write_tsv(path: &Path, content: &str) -> Result<()> {
    write_atomic(path, content.as_bytes())?;
    Ok(())
}

/// Deterministic train/val/test index split.
pub fn split_indices(
    n: usize,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom as _;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut entlm_core::rng::stream(seed, "split"));
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let val = idx[..n_val].to_vec();
    let test = idx[n_val..n_val + n_test].to_vec();
    let train = idx[n_val + n_test..].to_vec();
    (train, val, test)
}
