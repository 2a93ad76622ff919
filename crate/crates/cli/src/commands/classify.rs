use crate::commands::finetune::{finetune_config_from, prepare_task};
use crate::commands::{entity_type_from, features_from, load_model_and_vocab};
use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::encoding::EntityType;
use entlm_core::training::{classification_accuracy, finetune_classifier};

/// Classification protocol: every requested feature subset crossed with the
/// requested freeze settings, repeated over `seeds` runs; mean and standard
/// deviation of test accuracy per cell.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let base_seed: u64 = cfg.parse_or("seed", 0)?;
    let (weights, vocab) = load_model_and_vocab(cfg)?;
    let exclude = match cfg.get("exclude") {
        Some(name) => Some(entity_type_from(name)?),
        None => None,
    };
    let subsets: Vec<String> = cfg
        .parse_or("subsets", "title,all".to_string())?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let freeze_settings: Vec<bool> = cfg
        .parse_or("freeze_settings", "true,false".to_string())?
        .split(',')
        .map(|s| match s.trim() {
            "true" | "freeze" => Ok(true),
            "false" | "finetune" => Ok(false),
            other => anyhow::bail!("freeze setting `{other}` not true/false"),
        })
        .collect::<Result<_>>()?;
    let num_seeds: usize = cfg.parse_or("seeds", 1)?;
    let max_len: usize = cfg.parse_or("max_len", weights.config.max_pos2)?;
    let report_path = cfg.out_path("out.report")?;
    let per_seed_path = cfg.out_path_opt("out.per_seed");

    let mut report = String::from("subset\tfreeze\tmean_accuracy\tstd\n");
    let mut per_seed_dump = String::from("subset\tfreeze\tseed\taccuracy\n");
    for subset in &subsets {
        let mut flags = features_from(subset)?;
        if let Some(ex) = exclude {
            match ex {
                EntityType::Author => flags.authors = false,
                EntityType::Fos => flags.fos = false,
                EntityType::Venue => flags.venue = false,
                EntityType::Affiliation => flags.affiliations = false,
                EntityType::Text => {}
            }
        }
        for &freeze in &freeze_settings {
            let mut accs = Vec::with_capacity(num_seeds);
            for s in 0..num_seeds {
                let seed = base_seed.wrapping_add(s as u64);
                let data = prepare_task(cfg, &vocab, flags, max_len, seed)?;
                let fc = finetune_config_from(cfg, seed, freeze)?;
                let mut w = weights.clone();
                w.add_classifier(data.num_classes);
                finetune_classifier(&mut w, &data.train, &data.val, &fc)?;
                let eval_set = if data.test.is_empty() { &data.val } else { &data.test };
                let acc = classification_accuracy(&w, eval_set)?;
                per_seed_dump.push_str(&format!("{subset}\t{freeze}\t{seed}\t{acc:.6}\n"));
                accs.push(acc);
            }
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let std = if accs.len() > 1 {
                (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
                    / (accs.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            println!("{subset}\tfreeze={freeze}\tmean {mean:.4}\tstd {std:.4}");
            report.push_str(&format!("{subset}\t{freeze}\t{mean:.6}\t{std:.6}\n"));
        }
    }
    cfg.reject_unknown()?;
    crate::commands::write_tsv(&report_path, &report)?;
    if let Some(p) = per_seed_path {
        crate::commands::write_tsv(&p, &per_seed_dump)?;
        println!("per_seed\t{}", p.display());
    }
    println!("report\t{}", report_path.display());
    Ok(())
}
