use crate::commands::{features_from, load_model_and_vocab};
use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::evaluation::{load_blocks, run_disambiguation, THRESHOLD_SWEEP};

/// Name disambiguation: sweep the similarity threshold on validation blocks,
/// report per-block and macro pairwise F1 on test blocks.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let (weights, vocab) = load_model_and_vocab(cfg)?;
    let validation = load_blocks(&cfg.path("blocks_val")?)?;
    let test = load_blocks(&cfg.path("blocks_test")?)?;
    let flags = features_from(&cfg.parse_or("features", "title".to_string())?)?;
    let max_len: usize = cfg.parse_or("max_len", weights.config.max_pos2)?;
    let thresholds: Vec<f64> = match cfg.get("thresholds") {
        None => THRESHOLD_SWEEP.to_vec(),
        Some(raw) => raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()?,
    };
    let report_path = cfg.out_path("out.report")?;
    cfg.reject_unknown()?;

    let report =
        run_disambiguation(&validation, &test, &weights, &vocab, flags, max_len, &thresholds)?;

    let mut tsv = String::from("block\tprecision\trecall\tf1\n");
    for b in &report.per_block {
        tsv.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\n",
            b.block, b.precision, b.recall, b.f1
        ));
    }
    tsv.push_str(&format!("MACRO\t\t\t{:.6}\n", report.macro_f1));
    crate::commands::write_tsv(&report_path, &tsv)?;

    println!("threshold\t{:.2}", report.threshold);
    println!("validation_macro_f1\t{:.4}", report.validation_macro_f1);
    println!("test_macro_f1\t{:.4}", report.macro_f1);
    if report.skipped_papers > 0 {
        println!("skipped_papers\t{}", report.skipped_papers);
    }
    println!("report\t{}", report_path.display());
    Ok(())
}
