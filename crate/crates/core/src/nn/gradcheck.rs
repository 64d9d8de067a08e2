use rand::seq::index::sample;

use crate::seed;

/// Gradients below this absolute disagreement count as agreeing.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the loss has a kink within `±h`
    /// (rectifier switching or a probability clamp engaging).
    pub skipped: usize,
}

/// Compare analytic gradients with central differences
/// `(L(θ + h e_i) - L(θ - h e_i)) / 2h` on up to `n_coords` sampled coordinates.
///
/// Relative error is `|g - n| / max(|g|, |n|)`, reported as 0 when the absolute
/// difference is below [`ABS_FLOOR`]. A coordinate is skipped when its forward
/// and backward one-sided differences disagree by more than a smooth function
/// could at this step size.
pub fn finite_diff_check<F>(
    params: &[f64],
    analytic: &[f64],
    mut loss: F,
    h: f64,
    n_coords: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "perturbation must be positive");
    assert_eq!(params.len(), analytic.len());
    let n = params.len();
    let coords: Vec<usize> = if n_coords >= n {
        (0..n).collect()
    } else {
        let mut rng = seed::rng(seed::derive_str(seed, "gradcheck"));
        let mut v = sample(&mut rng, n, n_coords).into_vec();
        v.sort_unstable();
        v
    };
    let base = loss(params);
    let mut theta = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in coords {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = loss(&theta);
        theta[i] = orig - h;
        let minus = loss(&theta);
        theta[i] = orig;

        let central = (plus - minus) / (2.0 * h);
        let forward = (plus - base) / h;
        let backward = (base - minus) / h;
        if (forward - backward).abs() > 1e3 * h * central.abs().max(1.0) {
            report.skipped += 1;
            continue;
        }
        let g = analytic[i];
        let diff = (g - central).abs();
        let rel = if diff < ABS_FLOOR {
            0.0
        } else {
            diff / g.abs().max(central.abs())
        };
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    report
}
