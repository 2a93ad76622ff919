use crate::commands::{masking_config_from, model_config_from};
use crate::config::RunConfig;
use anyhow::{bail, Context, Result};
use entlm_core::checkpoint::{load_checkpoint, save_checkpoint};
use entlm_core::corpus::load_corpus;
use entlm_core::model::ModelWeights;
use entlm_core::training::{loss_curve_tsv, pretrain, PretrainConfig};
use entlm_core::vocab::Vocabulary;

/// One pretraining stage: stage 1 from fresh weights, stage 2 from a stage-1
/// checkpoint. Writes the trained checkpoint and the loss curve.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let stage: u8 = cfg.require_parse("stage")?;
    let corpus = load_corpus(&cfg.path("corpus")?)?;
    let vocab = Vocabulary::load(&cfg.path("vocab")?)?;

    let default_len = if stage == 1 { 32 } else { 128 };
    let mut pc = if stage == 1 {
        PretrainConfig::stage1(default_len, 1, seed)
    } else {
        PretrainConfig::stage2(default_len, 1, seed)
    };
    pc.max_len = cfg.parse_or("pretrain.max_len", pc.max_len)?;
    pc.batch_size = cfg.parse_or("pretrain.batch_size", pc.batch_size)?;
    pc.total_steps = cfg.require_parse("pretrain.steps")?;
    pc.peak_lr = cfg.parse_or("pretrain.peak_lr", pc.peak_lr)?;
    pc.warmup_fraction = cfg.parse_or("pretrain.warmup", pc.warmup_fraction)?;
    pc.weight_decay = cfg.parse_or("pretrain.weight_decay", pc.weight_decay)?;
    pc.grad_accum = cfg.parse_or("pretrain.grad_accum", pc.grad_accum)?;
    pc.log_every = cfg.parse_or("pretrain.log_every", pc.log_every)?;
    let mask_cfg = masking_config_from(cfg, seed)?;

    let mut weights = match stage {
        1 => {
            let mc = model_config_from(cfg, vocab.len(), seed)?;
            ModelWeights::init(mc)?
        }
        2 => {
            let Some(init) = cfg.get("init_checkpoint") else {
                bail!("stage 2 requires init_checkpoint (the stage-1 output)");
            };
            let path = std::path::PathBuf::from(init);
            load_checkpoint(&path)
                .with_context(|| format!("loading stage-1 checkpoint {}", path.display()))?
        }
        other => bail!("stage {other} not in {{1, 2}}"),
    };
    if weights.config.vocab_size != vocab.len() {
        bail!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            weights.config.vocab_size
        );
    }

    let ckpt_path = cfg.out_path("out.checkpoint")?;
    let loss_path = cfg.out_path("out.loss")?;
    cfg.reject_unknown()?;

    let init_hash = weights.value_hash();
    let curve = pretrain(&corpus, &mut weights, &vocab, &pc, &mask_cfg)?;
    save_checkpoint(&weights, &ckpt_path)?;
    crate::commands::write_tsv(&loss_path, &loss_curve_tsv(&curve))?;

    println!("stage\t{stage}");
    println!("init_hash\t{init_hash:016x}");
    println!("final_hash\t{:016x}", weights.value_hash());
    println!("initial_loss\t{:.6}", curve.first().map(|c| c.1).unwrap_or(f64::NAN));
    println!("final_loss\t{:.6}", curve.last().map(|c| c.1).unwrap_or(f64::NAN));
    println!("checkpoint\t{}", ckpt_path.display());
    println!("loss_curve\t{}", loss_path.display());
    Ok(())
}
