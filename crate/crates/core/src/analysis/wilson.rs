use super::AnalysisError;
use crate::stats::z_for_confidence;

/// Wilson score interval for `x` successes in `n` trials, clamped to [0, 1].
///
/// `center = (p + z²/2n) / (1 + z²/n)`,
/// `half = z / (1 + z²/n) · sqrt(p(1−p)/n + z²/4n²)`.
pub fn wilson_interval(x: u64, n: u64, conf: f64) -> Result<(f64, f64), AnalysisError> {
    if n == 0 {
        return Err(AnalysisError::Domain("n must be at least 1".into()));
    }
    if x > n {
        return Err(AnalysisError::Domain(format!("x = {x} exceeds n = {n}")));
    }
    if !(conf > 0.0 && conf < 1.0) {
        return Err(AnalysisError::Domain(format!(
            "confidence {conf} outside (0, 1)"
        )));
    }
    let z = z_for_confidence(conf);
    let n_f = n as f64;
    let p = x as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    // The bounds equal p exactly at x = 0 or x = n; keep rounding from
    // pushing them past it.
    let low = (center - half).max(0.0).min(p);
    let high = (center + half).min(1.0).max(p);
    Ok((low, high))
}
