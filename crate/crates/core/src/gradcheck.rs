//! Central finite-difference verification of analytic gradients.
//!
//! The caller computes analytic gradients into each [`Parameter::grad`] by
//! whatever path is under test, then hands the parameters and a deterministic
//! scalar loss here. Each sampled coordinate is perturbed by ±h and the
//! centered difference is compared against the stored gradient.

use crate::tensor::Parameter;

/// Floor for the relative-error denominator; coordinates whose analytic and
/// finite-difference values are both below this scale compare as equal.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct CoordReport {
    pub param: String,
    pub coord: usize,
    pub analytic: f64,
    pub finite_diff: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub coords_checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<CoordReport>,
    pub failures: usize,
    /// Loss evaluated non-finite somewhere; the check is void.
    pub non_finite: bool,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        !self.non_finite && self.failures == 0
    }
}

/// Uniformly sample `count` (parameter, flat coordinate) pairs.
pub fn sample_coords(
    params: &[Parameter],
    count: usize,
    rng: &mut impl rand::Rng,
) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = params.iter().map(|p| p.value.numel()).collect();
    let total: usize = sizes.iter().sum();
    (0..count)
        .map(|_| {
            let mut flat = rng.gen_range(0..total);
            for (i, &s) in sizes.iter().enumerate() {
                if flat < s {
                    return (i, flat);
                }
                flat -= s;
            }
            unreachable!()
        })
        .collect()
}

pub fn check_gradients<F>(
    mut loss_fn: F,
    params: &mut [Parameter],
    coords: &[(usize, usize)],
    h: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: FnMut(&[Parameter]) -> f64,
{
    let base = loss_fn(params);
    if !base.is_finite() {
        return GradCheckReport {
            coords_checked: 0,
            max_rel_error: f64::INFINITY,
            worst: None,
            failures: 0,
            non_finite: true,
            tolerance,
        };
    }

    let mut max_rel = 0.0_f64;
    let mut worst = None;
    let mut failures = 0;
    let mut non_finite = false;

    for &(pi, ci) in coords {
        let original = params[pi].value.data()[ci];
        params[pi].value.data_mut()[ci] = original + h;
        let plus = loss_fn(params);
        params[pi].value.data_mut()[ci] = original - h;
        let minus = loss_fn(params);
        params[pi].value.data_mut()[ci] = original;

        if !plus.is_finite() || !minus.is_finite() {
            non_finite = true;
            continue;
        }

        let fd = (plus - minus) / (2.0 * h);
        let analytic = params[pi].grad.data()[ci];
        let rel = (analytic - fd).abs() / (analytic.abs() + fd.abs()).max(REL_ERROR_FLOOR);
        if rel >= tolerance {
            failures += 1;
        }
        if rel > max_rel {
            max_rel = rel;
            worst = Some(CoordReport {
                param: params[pi].name.clone(),
                coord: ci,
                analytic,
                finite_diff: fd,
                rel_error: rel,
            });
        }
    }

    GradCheckReport {
        coords_checked: coords.len(),
        max_rel_error: max_rel,
        worst,
        failures,
        non_finite,
        tolerance,
    }
}
