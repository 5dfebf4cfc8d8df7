use super::tensor::Real;
use crate::error::{Error, Result};

/// Soft target for voxels of the object of interest.
pub const TARGET_ON: f32 = 0.95;
/// Soft target for every other voxel.
pub const TARGET_OFF: f32 = 0.05;

/// Predictions are clamped into `[CLAMP, 1 - CLAMP]` before taking logs.
pub const CLAMP: f64 = 1e-7;

/// Per-voxel entropy of the soft target, `H(0.95) = H(0.05)`: the lowest
/// value a voxel can contribute to the loss.
pub fn soft_target_entropy() -> f64 {
    let p = f64::from(TARGET_ON);
    -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
}

/// Clamped voxelwise log-loss; no validation. Returns the summed loss and
/// `d loss / d pred` at the clamped prediction.
pub(crate) fn log_loss_unchecked<T: Real>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    let mut total = 0.0f64;
    let mut grad = Vec::with_capacity(pred.len());
    for (&v, &m) in pred.iter().zip(target) {
        let v = v.to_f64().unwrap_or(f64::NAN).clamp(CLAMP, 1.0 - CLAMP);
        let m = m.to_f64().unwrap_or(f64::NAN);
        total += -v.ln() * m - (1.0 - v).ln() * (1.0 - m);
        grad.push(T::lit(-m / v + (1.0 - m) / (1.0 - v)));
    }
    (T::lit(total), grad)
}

/// Accepts 0.05 / 0.95 at either precision.
pub(crate) fn is_soft_target<T: Real>(m: T) -> bool {
    matches!(m.to_f32(), Some(v) if v == TARGET_ON || v == TARGET_OFF)
}

/// Voxelwise log-loss `sum_i -ln(v_i) m_i - ln(1 - v_i)(1 - m_i)` and its
/// gradient with respect to the predictions.
///
/// Predictions must lie strictly inside (0, 1); exact 0 or 1 is rejected.
/// Targets must be the soft values 0.05 / 0.95.
pub fn log_loss<T: Real>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction has {} voxels, target {}",
            pred.len(),
            target.len()
        )));
    }
    if let Some(v) = pred.iter().find(|&&v| !(v > T::zero() && v < T::one())) {
        return Err(Error::NumericGuard(format!(
            "prediction {v:?} not strictly inside (0, 1)"
        )));
    }
    if let Some(m) = target.iter().find(|&&m| !is_soft_target(m)) {
        return Err(Error::InvalidValue(format!(
            "target value {m:?} is not a soft target (0.05 or 0.95)"
        )));
    }
    Ok(log_loss_unchecked(pred, target))
}
