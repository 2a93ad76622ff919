use crate::commands::{entity_type_from, load_model_and_vocab};
use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::decoding::{
    candidate_text, default_prompt, generate, DecodeMode, DecodeOrder, DecodeQuery,
};

/// Free-form entity generation for one paper context: beam search over the
/// configured length range, ranked candidates printed (and dumped as JSONL
/// with traces when requested).
pub fn run(cfg: &RunConfig) -> Result<()> {
    let (weights, vocab) = load_model_and_vocab(cfg)?;
    let entity = entity_type_from(cfg.parse_or("entity_type", "fos".to_string())?.as_str())?;
    let title = cfg.require("title")?.to_string();
    let abstract_text = cfg.get("abstract").map(|s| s.to_string());
    let use_prompt = cfg.bool_or("use_prompt", false)?;
    let prompt = match (cfg.get("prompt"), use_prompt) {
        (Some(p), _) => p.to_string(),
        (None, true) => default_prompt(entity).to_string(),
        (None, false) => String::new(),
    };
    let lengths = cfg.parse_or("lengths", "1-4".to_string())?;
    let (lo, hi) = match lengths.split_once('-') {
        Some((a, b)) => (a.trim().parse()?, b.trim().parse()?),
        None => {
            let l: usize = lengths.trim().parse()?;
            (l, l)
        }
    };
    let order = match cfg.parse_or("order", "out-of-order".to_string())?.as_str() {
        "out-of-order" | "ooo" => DecodeOrder::OutOfOrder,
        "left-to-right" | "l2r" => DecodeOrder::LeftToRight,
        other => anyhow::bail!("unknown decode order `{other}`"),
    };
    let query = DecodeQuery {
        title,
        abstract_text,
        prompt,
        entity_type: entity,
        mode: DecodeMode::Generate,
        order,
        length_range: (lo, hi),
        beam_width: cfg.parse_or("beam_width", 16)?,
        alpha: cfg.parse_or("alpha", 0.0)?,
    };
    let top_k: usize = cfg.parse_or("top_k", 10)?;
    let dump_path = cfg.out_path_opt("out.results");
    cfg.reject_unknown()?;

    let candidates = generate(&query, &weights, &vocab, top_k);
    let mut dump = String::new();
    println!("rank\tentity\ttotal_log_prob\tnormalized");
    for (i, c) in candidates.iter().enumerate() {
        println!(
            "{}\t{}\t{:.4}\t{:.4}",
            i + 1,
            candidate_text(c, &vocab),
            c.total_log_prob,
            c.normalized_score
        );
        let trace: Vec<_> = c
            .trace
            .iter()
            .map(|s| {
                serde_json::json!({
                    "position": s.position,
                    "token": vocab.token(s.token),
                    "log_prob": s.log_prob,
                })
            })
            .collect();
        let line = serde_json::json!({
            "rank": i + 1,
            "tokens": candidate_text(c, &vocab),
            "total_log_prob": c.total_log_prob,
            "normalized_score": c.normalized_score,
            "trace": trace,
        });
        dump.push_str(&line.to_string());
        dump.push('\n');
    }
    if let Some(p) = dump_path {
        entlm_core::corpus::write_atomic(&p, dump.as_bytes())?;
        println!("results\t{}", p.display());
    }
    Ok(())
}
