//! Scoring realized demand-response events against a reference-group
//! baseline.
//!
//! The reference group is scaled by closed-form least squares over the hours
//! preceding the event, smoothed with a Whittaker second-difference smoother
//! (same null space as a smoothing spline: constants and lines pass through
//! untouched), and the controlled group's deviation from that baseline gives
//! the realized load reduction and rebound.

use crate::ingest::PowerSeries;
use crate::sim::DREventPlan;
use crate::stats;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("reference power is identically zero over the scaling window")]
    ZeroReference,
    #[error("series do not cover the required window: {0}")]
    Coverage(String),
    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("controlled and reference series are on different grids")]
    GridMismatch,
}

/// Least-squares scale that matches the reference to the controlled group
/// over the `window_h` hours immediately before `event_start_h`:
/// `α = Σ p_ctrl·p_ref / Σ p_ref²`.
pub fn scale_reference(
    p_ctrl: &PowerSeries,
    p_ref: &PowerSeries,
    event_start_h: f64,
    window_h: f64,
) -> Result<f64, BaselineError> {
    let a = event_start_h - window_h;
    let ctrl = p_ctrl
        .dense_window(a, event_start_h)
        .map_err(|e| BaselineError::Coverage(e.to_string()))?;
    let refv = p_ref
        .dense_window(a, event_start_h)
        .map_err(|e| BaselineError::Coverage(e.to_string()))?;
    if ctrl.len() != refv.len() {
        return Err(BaselineError::GridMismatch);
    }
    let denom: f64 = refv.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(BaselineError::ZeroReference);
    }
    let num: f64 = ctrl.iter().zip(&refv).map(|(c, r)| c * r).sum();
    Ok(num / denom)
}

/// Whittaker smoother: minimize `Σ (z_k − y_k)² + λ Σ (Δ² z_k)²`, solved via
/// the pentadiagonal normal equations `(I + λ DᵀD) z = y`.
pub fn whittaker_smooth(y: &[f64], lambda: f64) -> Result<Vec<f64>, BaselineError> {
    let n = y.len();
    if n < 5 {
        return Err(BaselineError::TooShort { len: n, min: 5 });
    }
    // Bands of I + λ DᵀD for the (n-2) × n second-difference matrix D.
    let mut diag = vec![0.0f64; n];
    let mut off1 = vec![0.0f64; n - 1];
    let mut off2 = vec![0.0f64; n - 2];
    for i in 0..n - 2 {
        // Row i of D: [1, -2, 1] at columns i, i+1, i+2.
        diag[i] += lambda;
        diag[i + 1] += 4.0 * lambda;
        diag[i + 2] += lambda;
        off1[i] += -2.0 * lambda;
        off1[i + 1] += -2.0 * lambda;
        off2[i] += lambda;
    }
    for d in diag.iter_mut() {
        *d += 1.0;
    }

    // Banded Cholesky (bandwidth 2): A = L Lᵀ with l0 = diag(L),
    // l1[i] = L[i][i-1], l2[i] = L[i][i-2].
    let mut l0 = vec![0.0f64; n];
    let mut l1 = vec![0.0f64; n];
    let mut l2 = vec![0.0f64; n];
    for i in 0..n {
        if i >= 2 {
            l2[i] = off2[i - 2] / l0[i - 2];
        }
        if i >= 1 {
            let cross = if i >= 2 { l2[i] * l1[i - 1] } else { 0.0 };
            l1[i] = (off1[i - 1] - cross) / l0[i - 1];
        }
        let d = diag[i] - l1[i] * l1[i] - l2[i] * l2[i];
        l0[i] = d.sqrt();
    }
    // Forward solve L w = y, then back solve Lᵀ z = w.
    let mut w = vec![0.0f64; n];
    for i in 0..n {
        let mut s = y[i];
        if i >= 1 {
            s -= l1[i] * w[i - 1];
        }
        if i >= 2 {
            s -= l2[i] * w[i - 2];
        }
        w[i] = s / l0[i];
    }
    let mut z = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = w[i];
        if i + 1 < n {
            s -= l1[i + 1] * z[i + 1];
        }
        if i + 2 < n {
            s -= l2[i + 2] * z[i + 2];
        }
        z[i] = s / l0[i];
    }
    Ok(z)
}

/// Smooth a dense power series into a baseline, kW. Default λ is 100 on the
/// 5-min grid.
pub fn smooth_baseline(p: &[f64], lambda: f64) -> Result<Vec<f64>, BaselineError> {
    whittaker_smooth(p, lambda)
}

/// Scoring options.
#[derive(Debug, Clone)]
pub struct ScoreConfig {
    /// Scaling window before the event start, hours.
    pub pre_window_h: f64,
    /// Horizon after the first release searched for the rebound peak, hours.
    pub post_release_h: f64,
    pub lambda: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { pre_window_h: 8.0, post_release_h: 3.0, lambda: 100.0 }
    }
}

/// Scaled reference, fitted baseline, and the controlled group's deviation.
#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub alpha: f64,
    /// Hours since series start of the first displayed sample.
    pub window_start_h: f64,
    pub baseline_kw: Vec<f64>,
    /// Controlled power minus baseline, elementwise.
    pub deviation_kw: Vec<f64>,
}

/// Analytic predictions to score against.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Predictions {
    pub reduction_kw: f64,
    pub peak_rebound_kw: f64,
}

/// Prediction-versus-realized comparison for one event. APEs are `None` with
/// a warning when the realized quantity is non-positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionReport {
    pub predicted_reduction_kw: f64,
    pub realized_avg_reduction_kw: f64,
    pub predicted_peak_rebound_kw: f64,
    pub realized_peak_rebound_kw: f64,
    pub ape_reduction: Option<f64>,
    pub ape_rebound: Option<f64>,
    pub warnings: Vec<String>,
}

/// Score one event: fit the baseline over the full displayed window
/// (pre-event through post-rebound), average the deviation over the hold for
/// the realized reduction, and take the post-release deviation peak for the
/// realized rebound. Plan times are hours on the series' own time axis.
pub fn score_event(
    p_ctrl: &PowerSeries,
    p_ref: &PowerSeries,
    event: &DREventPlan,
    predictions: &Predictions,
    cfg: &ScoreConfig,
) -> Result<(PredictionReport, BaselineResult), BaselineError> {
    if p_ctrl.t0 != p_ref.t0 || p_ctrl.step_s != p_ref.step_s {
        return Err(BaselineError::GridMismatch);
    }
    let t_start = event.t_start_h;
    let t_end = event.t_start_h + event.t_hold_h;
    let first_release = event
        .release_times_h
        .values()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .min(t_end.max(0.0));
    let window_start = t_start - cfg.pre_window_h;
    let window_end = first_release + cfg.post_release_h;

    let alpha = scale_reference(p_ctrl, p_ref, t_start, cfg.pre_window_h)?;
    let ctrl = p_ctrl
        .dense_window(window_start, window_end)
        .map_err(|e| BaselineError::Coverage(e.to_string()))?;
    let refv = p_ref
        .dense_window(window_start, window_end)
        .map_err(|e| BaselineError::Coverage(e.to_string()))?;
    let scaled: Vec<f64> = refv.iter().map(|v| alpha * v).collect();
    let baseline_kw = whittaker_smooth(&scaled, cfg.lambda)?;
    let deviation_kw: Vec<f64> =
        ctrl.iter().zip(&baseline_kw).map(|(c, b)| c - b).collect();

    let step_h = p_ctrl.step_h();
    let idx = |h: f64| (((h - window_start) / step_h).round() as usize).min(deviation_kw.len());
    let hold = &deviation_kw[idx(t_start)..idx(t_end)];
    let realized_avg_reduction_kw =
        -(hold.iter().sum::<f64>() / hold.len().max(1) as f64);
    let post = &deviation_kw[idx(first_release)..];
    let realized_peak_rebound_kw = post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut warnings = Vec::new();
    let ape = |pred: f64, real: f64, what: &str, warnings: &mut Vec<String>| {
        if real > 0.0 {
            Some((pred - real).abs() / real)
        } else {
            warnings.push(format!("realized {what} is {real:.3} kW; APE undefined"));
            None
        }
    };
    let ape_reduction = ape(
        predictions.reduction_kw,
        realized_avg_reduction_kw,
        "reduction",
        &mut warnings,
    );
    let ape_rebound = ape(
        predictions.peak_rebound_kw,
        realized_peak_rebound_kw,
        "peak rebound",
        &mut warnings,
    );

    Ok((
        PredictionReport {
            predicted_reduction_kw: predictions.reduction_kw,
            realized_avg_reduction_kw,
            predicted_peak_rebound_kw: predictions.peak_rebound_kw,
            realized_peak_rebound_kw,
            ape_reduction,
            ape_rebound,
            warnings,
        },
        BaselineResult { alpha, window_start_h: window_start, baseline_kw, deviation_kw },
    ))
}

/// Quartile summary of APEs over a batch of events.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApeStatistics {
    pub n_events: usize,
    pub reduction_q25: Option<f64>,
    pub reduction_median: Option<f64>,
    pub reduction_q75: Option<f64>,
    pub rebound_q25: Option<f64>,
    pub rebound_median: Option<f64>,
    pub rebound_q75: Option<f64>,
}

/// 0.25/0.5/0.75 quantiles (type-7) of the reduction and rebound APEs,
/// skipping events whose APE is undefined.
pub fn ape_statistics(reports: &[PredictionReport]) -> ApeStatistics {
    let red: Vec<f64> = reports.iter().filter_map(|r| r.ape_reduction).collect();
    let reb: Vec<f64> = reports.iter().filter_map(|r| r.ape_rebound).collect();
    ApeStatistics {
        n_events: reports.len(),
        reduction_q25: stats::quantile(&red, 0.25),
        reduction_median: stats::quantile(&red, 0.5),
        reduction_q75: stats::quantile(&red, 0.75),
        rebound_q25: stats::quantile(&reb, 0.25),
        rebound_median: stats::quantile(&reb, 0.5),
        rebound_q75: stats::quantile(&reb, 0.75),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{DateTime, Utc};
    use std::collections::BTreeMap;

    fn t0() -> DateTime<Utc> {
        "2017-02-01T00:00:00Z".parse().unwrap()
    }

    fn series(values: Vec<f64>) -> PowerSeries {
        PowerSeries::from_values(t0(), 300.0, values)
    }

    #[test]
    fn alpha_exact_proportionality() {
        let p_ref = series(vec![1.0, 2.0, 1.5, 1.0, 2.5, 2.0, 1.0, 1.5, 2.0, 1.0, 1.5, 2.0]);
        let ctrl: Vec<f64> = p_ref.p.iter().map(|v| 2.0 * v.unwrap()).collect();
        let p_ctrl = series(ctrl);
        let alpha = scale_reference(&p_ctrl, &p_ref, 1.0, 1.0).unwrap();
        assert!((alpha - 2.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_closed_form() {
        // p_ref = [1, 1], p_ctrl = [1, 3]: α = (1 + 3) / (1 + 1) = 2.
        let p_ref = series(vec![1.0, 1.0]);
        let p_ctrl = series(vec![1.0, 3.0]);
        let alpha = scale_reference(&p_ctrl, &p_ref, 1.0 / 6.0, 1.0 / 6.0).unwrap();
        assert!((alpha - 2.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_reference() {
        let p_ref = series(vec![0.0, 0.0, 0.0]);
        let p_ctrl = series(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            scale_reference(&p_ctrl, &p_ref, 0.25, 0.25),
            Err(BaselineError::ZeroReference)
        ));
    }

    #[test]
    fn alpha_minimizes_least_squares() {
        let p_ref = series(vec![1.0, 2.0, 0.5, 1.2, 0.8, 1.9, 1.1, 0.7]);
        let p_ctrl = series(vec![2.0, 3.5, 1.4, 2.2, 2.0, 3.6, 2.4, 1.2]);
        let window = 8.0 * 300.0 / 3600.0;
        let alpha = scale_reference(&p_ctrl, &p_ref, window, window).unwrap();
        let sse = |a: f64| -> f64 {
            p_ctrl
                .p
                .iter()
                .zip(&p_ref.p)
                .map(|(c, r)| (c.unwrap() - a * r.unwrap()).powi(2))
                .sum()
        };
        let base = sse(alpha);
        assert!(sse(alpha + 1e-3) >= base);
        assert!(sse(alpha - 1e-3) >= base);
    }

    #[test]
    fn smoother_null_space() {
        // Constants and lines pass through unchanged for any λ.
        let constant = vec![3.7; 50];
        let z = whittaker_smooth(&constant, 1e4).unwrap();
        assert!(z.iter().all(|v| (v - 3.7).abs() < 1e-9));

        let line: Vec<f64> = (0..50).map(|i| 0.5 + 0.25 * i as f64).collect();
        let z = whittaker_smooth(&line, 1e4).unwrap();
        for (a, b) in z.iter().zip(&line) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn smoother_lambda_zero_is_identity() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 7919) % 13) as f64 * 0.3).collect();
        let z = whittaker_smooth(&y, 1e-12).unwrap();
        for (a, b) in z.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn smoother_shift_invariances() {
        let y: Vec<f64> = (0..60).map(|i| (i as f64 * 0.3).sin()).collect();
        let z = whittaker_smooth(&y, 50.0).unwrap();
        let shifted: Vec<f64> = y.iter().map(|v| v + 5.0).collect();
        let zs = whittaker_smooth(&shifted, 50.0).unwrap();
        for (a, b) in zs.iter().zip(&z) {
            assert!((a - (b + 5.0)).abs() < 1e-9);
        }
        let ramped: Vec<f64> = y.iter().enumerate().map(|(i, v)| v + 0.1 * i as f64).collect();
        let zr = whittaker_smooth(&ramped, 50.0).unwrap();
        for (i, (a, b)) in zr.iter().zip(&z).enumerate() {
            assert!((a - (b + 0.1 * i as f64)).abs() < 1e-7);
        }
    }

    #[test]
    fn smoother_requires_five_samples() {
        assert!(matches!(
            whittaker_smooth(&[1.0, 2.0, 3.0, 4.0], 1.0),
            Err(BaselineError::TooShort { .. })
        ));
    }

    fn paper_event() -> (PowerSeries, PowerSeries, DREventPlan) {
        // Constant reference C; controlled dips by exactly 159.1 kW during the
        // hold and peaks 128.1 kW above after release. The smoother passes a
        // constant through untouched, so realized quantities are exact.
        let c = 400.0;
        let step_h = 300.0 / 3600.0;
        let t_start = 9.0;
        let t_end = 10.0;
        let total_h = 14.0;
        let n = (total_h / step_h) as usize;
        let mut ctrl = Vec::with_capacity(n);
        let mut refv = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * step_h;
            refv.push(c);
            let v = if t >= t_start && t < t_end {
                c - 159.1
            } else if t >= t_end && t < t_end + 0.25 {
                c + 128.1
            } else if t >= t_end + 0.25 && t < t_end + 1.0 {
                c + 40.0
            } else {
                c
            };
            ctrl.push(v);
        }
        let plan = DREventPlan {
            group: vec!["g".into()],
            t_start_h: t_start,
            t_hold_h: 1.0,
            delta_t_h: 0.0,
            release_times_h: BTreeMap::from([("g".to_string(), t_end)]),
        };
        (series(ctrl), series(refv), plan)
    }

    #[test]
    fn score_event_reproduces_reported_apes() {
        let (ctrl, refv, plan) = paper_event();
        let predictions = Predictions { reduction_kw: 177.5, peak_rebound_kw: 105.6 };
        let (report, base) =
            score_event(&ctrl, &refv, &plan, &predictions, &ScoreConfig::default()).unwrap();
        assert!((base.alpha - 1.0).abs() < 1e-9);
        assert!((report.realized_avg_reduction_kw - 159.1).abs() < 1e-6);
        assert!((report.realized_peak_rebound_kw - 128.1).abs() < 1e-6);
        // 11.6% and 17.5% to 0.1 percentage points.
        assert!((report.ape_reduction.unwrap() - 0.116).abs() < 1e-3);
        assert!((report.ape_rebound.unwrap() - 0.175).abs() < 1e-3);
    }

    #[test]
    fn score_noop_event_is_null() {
        let c = 300.0;
        let n = 14 * 12;
        let refv = series(vec![c; n]);
        let ctrl = series(vec![c; n]);
        let plan = DREventPlan {
            group: vec!["g".into()],
            t_start_h: 9.0,
            t_hold_h: 1.0,
            delta_t_h: 0.0,
            release_times_h: BTreeMap::from([("g".to_string(), 10.0)]),
        };
        let predictions = Predictions { reduction_kw: 100.0, peak_rebound_kw: 50.0 };
        let (report, _) =
            score_event(&ctrl, &refv, &plan, &predictions, &ScoreConfig::default()).unwrap();
        assert!(report.realized_avg_reduction_kw.abs() < 1e-9);
        assert!(report.ape_reduction.is_none());
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn ape_statistics_quartiles() {
        let mk = |ape: f64| PredictionReport {
            predicted_reduction_kw: 0.0,
            realized_avg_reduction_kw: 0.0,
            predicted_peak_rebound_kw: 0.0,
            realized_peak_rebound_kw: 0.0,
            ape_reduction: Some(ape),
            ape_rebound: Some(ape),
            warnings: vec![],
        };
        let one = ape_statistics(&[mk(0.1)]);
        assert_eq!(one.reduction_q25, Some(0.1));
        assert_eq!(one.reduction_median, Some(0.1));
        assert_eq!(one.reduction_q75, Some(0.1));

        let reports: Vec<PredictionReport> =
            [0.01, 0.02, 0.03, 0.04, 0.05].iter().map(|&a| mk(a)).collect();
        let s = ape_statistics(&reports);
        assert!((s.reduction_q25.unwrap() - 0.02).abs() < 1e-12);
        assert!((s.reduction_median.unwrap() - 0.03).abs() < 1e-12);
        assert!((s.reduction_q75.unwrap() - 0.04).abs() < 1e-12);
    }
}
