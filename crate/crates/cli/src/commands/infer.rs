use crate::commands::{entity_type_from, load_model_and_vocab};
use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::decoding::DecodeOrder;
use entlm_core::evaluation::{
    evaluate_zero_shot, load_task, DecodeSettings, QuerySetting, ZeroShotOutcome,
};

fn settings_named(name: &str) -> Result<QuerySetting> {
    for s in QuerySetting::all_four() {
        if s.name() == name {
            return Ok(s);
        }
    }
    anyhow::bail!("unknown setting `{name}` (plain, +prompt, +abstract, +both)")
}

/// Zero-shot inference over a task file; one metrics row per requested
/// query setting, optional per-item ranking dump.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let (weights, vocab) = load_model_and_vocab(cfg)?;
    let entity = entity_type_from(cfg.parse_or("entity_type", "fos".to_string())?.as_str())?;
    let task = load_task(&cfg.path("task")?, entity)?;
    let alpha: f64 = cfg.parse_or("alpha", 0.0)?;
    let order = match cfg.parse_or("order", "out-of-order".to_string())?.as_str() {
        "out-of-order" | "ooo" => DecodeOrder::OutOfOrder,
        "left-to-right" | "l2r" => DecodeOrder::LeftToRight,
        other => anyhow::bail!("unknown decode order `{other}`"),
    };
    let prompt = cfg.get("prompt").map(|s| s.to_string());
    let requested = cfg.parse_or("settings", "plain".to_string())?;
    let settings: Vec<QuerySetting> = if requested == "all" {
        QuerySetting::all_four().to_vec()
    } else {
        requested
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(settings_named)
            .collect::<Result<_>>()?
    };
    let metrics_path = cfg.out_path("out.metrics")?;
    let dump_path = cfg.out_path_opt("out.dump");
    let task_name = cfg.parse_or("task_name", entity.name().to_string())?;
    cfg.reject_unknown()?;

    let mut rows = String::from("task\tsetting\thit_at_1\tmrr\n");
    let mut dump = String::new();
    for setting in settings {
        let ds = DecodeSettings { order, alpha, setting, prompt: prompt.clone() };
        let outcome: ZeroShotOutcome = evaluate_zero_shot(&task, &weights, &vocab, &ds)?;
        rows.push_str(&format!(
            "{task_name}\t{}\t{:.4}\t{:.4}\n",
            setting.name(),
            outcome.hit_at_1,
            outcome.mrr
        ));
        println!(
            "{}\thit@1 {:.4}\tmrr {:.4}\tevaluated {}\tskipped {}",
            setting.name(),
            outcome.hit_at_1,
            outcome.mrr,
            outcome.evaluated,
            outcome.skipped
        );
        if dump_path.is_some() {
            for (i, item) in outcome.per_item.iter().enumerate() {
                let line = serde_json::json!({
                    "setting": setting.name(),
                    "item": i,
                    "gold_rank": item.gold_rank,
                    "ranking": item.ranking,
                });
                dump.push_str(&line.to_string());
                dump.push('\n');
            }
        }
    }
    crate::commands::write_tsv(&metrics_path, &rows)?;
    if let Some(p) = dump_path {
        entlm_core::corpus::write_atomic(&p, dump.as_bytes())?;
        println!("dump\t{}", p.display());
    }
    println!("metrics\t{}", metrics_path.display());
    Ok(())
}
