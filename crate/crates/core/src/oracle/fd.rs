//! Central finite-difference verification of analytic gradients.

use super::OracleError;
use crate::policy::PolicyParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Compares an analytic gradient against central differences of `loss` on
/// a random subset of at least `min_coords` coordinates (all of them when
/// the parameter vector is smaller). Returns the worst relative error,
/// measured against `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<F>(
    params: &PolicyParams,
    analytic: &[f64],
    step: f64,
    min_coords: usize,
    seed: u64,
    loss: F,
) -> Result<f64, OracleError>
where
    F: Fn(&PolicyParams) -> f64,
{
    if !(step > 0.0) {
        return Err(OracleError::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    if analytic.len() != params.weights.len() {
        return Err(OracleError::InvalidParameter(format!(
            "gradient has {} entries, parameters have {}",
            analytic.len(),
            params.weights.len()
        )));
    }
    let n = params.weights.len();
    let picked = min_coords.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords = rand::seq::index::sample(&mut rng, n, picked);
    let mut max_rel = 0.0f64;
    for idx in coords {
        let mut hi = params.clone();
        hi.weights[idx] += step;
        let mut lo = params.clone();
        lo.weights[idx] -= step;
        let loss_hi = loss(&hi);
        let loss_lo = loss(&lo);
        if !loss_hi.is_finite() || !loss_lo.is_finite() {
            return Err(OracleError::NonFiniteLoss { coord: idx });
        }
        let numeric = (loss_hi - loss_lo) / (2.0 * step);
        let denom = analytic[idx].abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(((analytic[idx] - numeric) / denom).abs());
    }
    Ok(max_rel)
}
