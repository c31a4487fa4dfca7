//! Small order-statistic helpers shared across modules.

/// Median of a slice. Averages the two middle order statistics for even
/// lengths. Returns `None` on empty input.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in median"));
    let n = v.len();
    if n % 2 == 1 {
        Some(v[n / 2])
    } else {
        Some(0.5 * (v[n / 2 - 1] + v[n / 2]))
    }
}

/// Type-7 quantile (linear interpolation between order statistics), the
/// convention fixed for every quantile in this crate.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    let n = v.len();
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        Some(v[lo])
    } else {
        Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
    }
}

/// Median absolute deviation scaled to be consistent with the standard
/// deviation under normality (factor 1.4826).
pub fn mad_scale(residuals: &[f64]) -> Option<f64> {
    let med = median(residuals)?;
    let abs_dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    median(&abs_dev).map(|m| 1.4826 * m)
}
