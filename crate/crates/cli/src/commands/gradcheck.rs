use crate::config::RunConfig;
use anyhow::Result;
use entlm_core::encoding::{assemble_sample, EntityType};
use entlm_core::gradcheck::{check_gradients, sample_coords};
use entlm_core::model::{encode, ModelConfig, ModelWeights};
use entlm_core::rng::stream;
use entlm_core::vocab;

/// Finite-difference verification of the full-model MLM gradient on a tiny
/// configuration. Non-zero exit when any coordinate misses the tolerance.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let seed: u64 = cfg.parse_or("seed", 0)?;
    let vocab_size: usize = cfg.parse_or("model.vocab_size", 50)?;
    let mut mc = ModelConfig::tiny(vocab_size);
    mc.seed = seed;
    mc.num_layers = cfg.parse_or("model.num_layers", mc.num_layers)?;
    mc.num_heads = cfg.parse_or("model.num_heads", mc.num_heads)?;
    mc.hidden_dim = cfg.parse_or("model.hidden_dim", mc.hidden_dim)?;
    mc.ffn_dim = cfg.parse_or("model.ffn_dim", mc.ffn_dim)?;
    let coords: usize = cfg.parse_or("coords", 250)?;
    let h: f64 = cfg.parse_or("h", 1e-5)?;
    let tolerance: f64 = cfg.parse_or("tolerance", 1e-4)?;
    cfg.reject_unknown()?;

    let mut weights = ModelWeights::init(mc.clone())?;

    // synthetic sample: a short text entity plus two typed entities
    let first = vocab::NUM_SPECIALS;
    let tok = |i: u32| first + i % (vocab_size as u32 - first);
    let mut text = vec![vocab::CLS];
    text.extend((0..6).map(tok));
    text.push(vocab::SEP);
    let sample = assemble_sample(&[
        (EntityType::Text, text),
        (EntityType::Fos, vec![tok(7), tok(8)]),
        (EntityType::Author, vec![tok(9)]),
    ]);
    let positions = vec![2usize, 4, 9];
    let labels: Vec<usize> = positions.iter().map(|&p| tok(p as u32) as usize).collect();

    let mut te = encode(&weights, &sample, false, None);
    let lp = te.mlm_log_probs_node(&positions);
    let loss_node = te.nll(lp, labels.clone());
    let (loss, grads) = te.backward(loss_node);
    drop(te);
    weights.zero_grads();
    weights.accumulate_grads(&grads, 1.0);
    println!("loss\t{loss:.6}");

    let mut params = weights.params().to_vec();
    let template = weights;
    let loss_fn = move |params: &[entlm_core::tensor::Parameter]| {
        let mut view = template.clone();
        for (dst, src) in view.params_mut().iter_mut().zip(params) {
            dst.value = src.value.clone();
        }
        let mut te = encode(&view, &sample, false, None);
        let lp = te.mlm_log_probs_node(&positions);
        let node = te.nll(lp, labels.clone());
        te.graph.value(node).data()[0]
    };

    let mut rng = stream(seed, "gradcheck.coords");
    let picked = sample_coords(&params, coords, &mut rng);
    let report = check_gradients(loss_fn, &mut params, &picked, h, tolerance);

    println!("coords\t{}", report.coords_checked);
    println!("max_rel_error\t{:.3e}", report.max_rel_error);
    if let Some(w) = &report.worst {
        println!(
            "worst\t{}[{}]\tanalytic {:.6e}\tfd {:.6e}",
            w.param, w.coord, w.analytic, w.finite_diff
        );
    }
    println!("result\t{}", if report.pass() { "PASS" } else { "FAIL" });
    if !report.pass() {
        return Err(entlm_core::Error::NonFinite(format!(
            "gradient check failed: max relative error {:.3e} over {} coords",
            report.max_rel_error, report.coords_checked
        ))
        .into());
    }
    Ok(())
}
