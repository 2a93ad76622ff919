use crate::commands::{entity_type_from, features_from, load_model_and_vocab, split_indices};
use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::checkpoint::save_checkpoint;
use entlm_core::corpus::PaperRecord;
use entlm_core::encoding::EntityType;
use entlm_core::evaluation::{classification_samples, load_task, FeatureFlags};
use entlm_core::training::{classification_accuracy, finetune_classifier, FinetuneConfig};

pub struct PreparedTask {
    pub train: Vec<(entlm_core::encoding::InputSample, usize)>,
    pub val: Vec<(entlm_core::encoding::InputSample, usize)>,
    pub test: Vec<(entlm_core::encoding::InputSample, usize)>,
    pub num_classes: usize,
}

/// Load a classification task file (candidates = class names, gold index =
/// label) and split it into sample sets under the given feature subset.
pub fn prepare_task(
    cfg: &RunConfig,
    vocab: &entlm_core::vocab::Vocabulary,
    flags: FeatureFlags,
    max_len: usize,
    seed: u64,
) -> Result<PreparedTask> {
    let task = load_task(&cfg.path("task")?, EntityType::Fos)?;
    let num_classes = task.items.first().map(|i| i.candidates.len()).unwrap_or(0);
    anyhow::ensure!(num_classes >= 2, "classification task needs at least 2 classes");
    let labeled: Vec<(PaperRecord, usize)> = task
        .items
        .iter()
        .map(|i| (i.record.clone(), i.gold_index))
        .collect();
    let val_fraction: f64 = cfg.parse_or("split.val_fraction", 0.1)?;
    let test_fraction: f64 = cfg.parse_or("split.test_fraction", 0.1)?;
    let (train_idx, val_idx, test_idx) =
        split_indices(labeled.len(), val_fraction, test_fraction, seed);
    let subset = |idx: &[usize]| -> Vec<(PaperRecord, usize)> {
        idx.iter().map(|&i| labeled[i].clone()).collect()
    };
    Ok(PreparedTask {
        train: classification_samples(&subset(&train_idx), vocab, flags, max_len, seed)?,
        val: classification_samples(&subset(&val_idx), vocab, flags, max_len, seed)?,
        test: classification_samples(&subset(&test_idx), vocab, flags, max_len, seed)?,
        num_classes,
    })
}

pub fn finetune_config_from(cfg: &RunConfig, seed: u64, freeze: bool) -> Result<FinetuneConfig> {
    let mut fc = FinetuneConfig { freeze_encoder: freeze, seed, ..FinetuneConfig::default() };
    fc.epochs = cfg.parse_or("finetune.epochs", fc.epochs)?;
    fc.peak_lr = cfg.parse_or("finetune.peak_lr", fc.peak_lr)?;
    fc.warmup_fraction = cfg.parse_or("finetune.warmup", fc.warmup_fraction)?;
    fc.batch_size = cfg.parse_or("finetune.batch_size", fc.batch_size)?;
    fc.weight_decay = cfg.parse_or("finetune.weight_decay", fc.weight_decay)?;
    Ok(fc)
}

/// One fine-tuning run: a feature subset, a freeze setting, one seed.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let (mut weights, vocab) = load_model_and_vocab(cfg)?;
    let exclude = match cfg.get("exclude") {
        Some(name) => Some(entity_type_from(name)?),
        None => None,
    };
    let subset = cfg.parse_or("subset", "all".to_string())?;
    let mut flags = features_from(&subset)?;
    if let Some(ex) = exclude {
        match ex {
            EntityType::Author => flags.authors = false,
            EntityType::Fos => flags.fos = false,
            EntityType::Venue => flags.venue = false,
            EntityType::Affiliation => flags.affiliations = false,
            EntityType::Text => {}
        }
    }
    let max_len: usize = cfg.parse_or("max_len", weights.config.max_pos2)?;
    let freeze = cfg.bool_or("freeze", false)?;
    let data = prepare_task(cfg, &vocab, flags, max_len, seed)?;
    let fc = finetune_config_from(cfg, seed, freeze)?;
    let ckpt_path = cfg.out_path_opt("out.checkpoint");
    let trace_path = cfg.out_path_opt("out.trace");
    cfg.reject_unknown()?;

    weights.add_classifier(data.num_classes);
    let encoder_hash_before = encoder_hash(&weights);
    let report = finetune_classifier(&mut weights, &data.train, &data.val, &fc)?;
    let test_acc = if data.test.is_empty() {
        f64::NAN
    } else {
        classification_accuracy(&weights, &data.test)?
    };

    for (e, acc) in report.val_accuracy.iter().enumerate() {
        println!("epoch {}\tval_accuracy {:.4}", e + 1, acc);
    }
    println!("test_accuracy\t{test_acc:.4}");
    if freeze {
        let after = encoder_hash(&weights);
        println!(
            "encoder_hash\t{:016x}\t{}",
            after,
            if after == encoder_hash_before { "unchanged" } else { "CHANGED" }
        );
    }
    if let Some(p) = ckpt_path {
        save_checkpoint(&weights, &p)?;
        println!("checkpoint\t{}", p.display());
    }
    if let Some(p) = trace_path {
        let mut tsv = String::from("epoch\tval_accuracy\n");
        for (e, acc) in report.val_accuracy.iter().enumerate() {
            tsv.push_str(&format!("{}\t{acc:.6}\n", e + 1));
        }
        crate::commands::write_tsv(&p, &tsv)?;
        println!("trace\t{}", p.display());
    }
    Ok(())
}

/// Hash over every non-head parameter.
pub fn encoder_hash(weights: &entlm_core::model::ModelWeights) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in weights.params() {
        if entlm_core::model::ModelWeights::is_head_param(&p.name) {
            continue;
        }
        for v in p.value.data() {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}
