//! Per-building thermal identification: normalized loss and charge rates,
//! duty cycle, and flexibility limits.
//!
//! Rates come straight from cycle durations: `r_c = 1/d_on + 1/d_off` and
//! `r_l = 1/d_off`, both in 1/h. Their temperature dependence is fitted
//! robustly (IRLS with Huber weights, c = 1.345, scale via MAD): the loss
//! rate as a clamped affine function, the charge rate as the rational form a
//! heat-curve COP model implies, via IRLS-wrapped Levenberg–Marquardt.

use crate::detect::HeatingCycle;
use crate::stats;
use serde::{Deserialize, Serialize};

pub const KELVIN_OFFSET: f64 = 273.15;

/// Default temperature validity range for fitted models, °C.
pub const DEFAULT_VALID_THETA_C: (f64, f64) = (-30.0, 25.0);

/// Huber tuning constant (95% efficiency under normal errors).
pub const HUBER_C: f64 = 1.345;

/// Cycles with either phase shorter than this are treated as detection
/// artifacts and excluded from fitting.
pub const MIN_PHASE_H: f64 = 10.0 / 60.0;

#[derive(Debug, thiserror::Error)]
pub enum ThermalError {
    #[error("insufficient data: {n} samples spanning {span_c:.2} °C (need ≥ {min_n} over ≥ {min_span_c} °C)")]
    InsufficientData { n: usize, span_c: f64, min_n: usize, min_span_c: f64 },
    #[error("fitted loss slope a_l = {a_l} is not negative")]
    SlopeSign { a_l: f64 },
    #[error("charge-rate fit did not converge within {max_outer} IRLS iterations")]
    NonConvergence { max_outer: usize },
    #[error("charge-rate denominator not positive over [{lo}, {hi}] °C")]
    DenominatorNotPositive { lo: f64, hi: f64 },
    #[error("loss rate is zero at {theta_c} °C; off-duration unbounded")]
    ZeroLoss { theta_c: f64 },
}

/// Normalized rates of one heating cycle, paired with the temperatures their
/// averaging windows saw: the loss rate with the off-period mean, the charge
/// rate with the whole-cycle mean.
#[derive(Debug, Clone, Copy)]
pub struct CycleRates {
    pub r_c: f64,
    pub r_l: f64,
    pub theta_off: f64,
    pub theta_cycle: f64,
}

/// Clamped affine loss-rate model `r_l(θ) = max(0, a_l·θ + b_l)`, 1/h.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossRateModel {
    pub a_l: f64,
    pub b_l: f64,
}

impl LossRateModel {
    /// Temperature-independent loss rate (`a_l = 0`). Fits always deliver a
    /// negative slope; this constructor exists for synthetic scenarios.
    pub fn constant(r_l: f64) -> Self {
        Self { a_l: 0.0, b_l: r_l }
    }

    pub fn rate(&self, theta_c: f64) -> f64 {
        (self.a_l * theta_c + self.b_l).max(0.0)
    }

    /// Temperature at which losses vanish; proxy for the nominal indoor
    /// temperature.
    pub fn zero_loss_temp_c(&self) -> f64 {
        -self.b_l / self.a_l
    }
}

/// Rational charge-rate model
/// `r_c(θ) = c_c (a_c·θ + b_c + 273.15) / ((a_c − 1)·θ + b_c)`, 1/h.
/// The heat-curve coefficients and exergetic efficiency behind it are not
/// separately identifiable; only the composite (a_c, b_c, c_c) is fitted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChargeRateModel {
    pub a_c: f64,
    pub b_c: f64,
    pub c_c: f64,
}

impl ChargeRateModel {
    /// Temperature-independent charge rate: `a_c = 2, b_c = 273.15` makes the
    /// rational part identically 2, so `c_c = r_c / 2` yields a flat model.
    pub fn constant(r_c: f64) -> Self {
        Self { a_c: 2.0, b_c: KELVIN_OFFSET, c_c: r_c / 2.0 }
    }

    pub fn rate(&self, theta_c: f64) -> f64 {
        self.c_c * (self.a_c * theta_c + self.b_c + KELVIN_OFFSET)
            / ((self.a_c - 1.0) * theta_c + self.b_c)
    }

    fn denominator(&self, theta_c: f64) -> f64 {
        (self.a_c - 1.0) * theta_c + self.b_c
    }

    /// The denominator is affine, so positivity at both ends covers the range.
    pub fn denominator_positive_over(&self, lo: f64, hi: f64) -> bool {
        self.denominator(lo) > 0.0 && self.denominator(hi) > 0.0
    }
}

/// The full identified description of one building.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildingModel {
    pub building_id: String,
    pub p_r_kw: f64,
    /// Flexibility factor granted by the occupants, ≥ 1. `f = 1` forbids
    /// throttling.
    pub f: f64,
    pub loss: LossRateModel,
    pub charge: ChargeRateModel,
    pub valid_theta_c: (f64, f64),
}

impl BuildingModel {
    /// Loss rate at `theta_c`, warning (without refusing) on extrapolation.
    pub fn r_l(&self, theta_c: f64) -> f64 {
        self.warn_if_outside(theta_c);
        self.loss.rate(theta_c)
    }

    /// Charge rate at `theta_c`, warning (without refusing) on extrapolation.
    pub fn r_c(&self, theta_c: f64) -> f64 {
        self.warn_if_outside(theta_c);
        self.charge.rate(theta_c)
    }

    fn warn_if_outside(&self, theta_c: f64) {
        let (lo, hi) = self.valid_theta_c;
        if theta_c < lo || theta_c > hi {
            log::warn!(
                "building {}: evaluating rate model at {theta_c} °C outside validity [{lo}, {hi}]",
                self.building_id
            );
        }
    }
}

/// Convert heating cycles to rate samples. Cycles with a phase shorter than
/// [`MIN_PHASE_H`] are dropped.
pub fn rates_from_cycles(cycles: &[HeatingCycle]) -> Vec<CycleRates> {
    cycles
        .iter()
        .filter(|c| c.d_on_h >= MIN_PHASE_H && c.d_off_h >= MIN_PHASE_H)
        .map(|c| CycleRates {
            r_c: 1.0 / c.d_on_h + 1.0 / c.d_off_h,
            r_l: 1.0 / c.d_off_h,
            theta_off: c.theta_mean_off_c,
            theta_cycle: c.theta_mean_cycle_c,
        })
        .collect()
}

fn check_sample_support(samples: &[(f64, f64)]) -> Result<(), ThermalError> {
    const MIN_N: usize = 10;
    const MIN_SPAN_C: f64 = 5.0;
    let n = samples.len();
    let span = if n == 0 {
        0.0
    } else {
        let lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    if n < MIN_N || span < MIN_SPAN_C {
        return Err(ThermalError::InsufficientData {
            n,
            span_c: span,
            min_n: MIN_N,
            min_span_c: MIN_SPAN_C,
        });
    }
    Ok(())
}

fn huber_weights(residuals: &[f64], weights: &mut [f64]) {
    let scale = stats::mad_scale(residuals).unwrap_or(0.0);
    if scale <= 1e-12 {
        // Essentially perfect fit: plain least squares.
        weights.iter_mut().for_each(|w| *w = 1.0);
        return;
    }
    for (w, r) in weights.iter_mut().zip(residuals) {
        let u = (r / scale).abs();
        *w = if u <= HUBER_C { 1.0 } else { HUBER_C / u };
    }
}

fn weighted_affine_ls(samples: &[(f64, f64)], w: &[f64]) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((x, y), wi) in samples.iter().zip(w) {
        sw += wi;
        sx += wi * x;
        sxx += wi * x * x;
        sy += wi * y;
        sxy += wi * x * y;
    }
    let det = sxx * sw - sx * sx;
    if det.abs() < 1e-12 {
        return None;
    }
    let slope = (sxy * sw - sy * sx) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Some((slope, intercept))
}

/// Robust affine fit of loss-rate samples `(θ, r_l)`.
///
/// The `max(0, ·)` clamp belongs to evaluation, not fitting: samples near the
/// zero-loss temperature would otherwise bias the slope.
pub fn fit_loss_rate(samples: &[(f64, f64)]) -> Result<LossRateModel, ThermalError> {
    check_sample_support(samples)?;
    let n = samples.len();
    let mut w = vec![1.0; n];
    let (mut a, mut b) = weighted_affine_ls(samples, &w)
        .ok_or(ThermalError::InsufficientData { n, span_c: 0.0, min_n: 10, min_span_c: 5.0 })?;
    let mut residuals = vec![0.0; n];
    for _ in 0..50 {
        for (r, (x, y)) in residuals.iter_mut().zip(samples) {
            *r = y - (a * x + b);
        }
        huber_weights(&residuals, &mut w);
        let Some((na, nb)) = weighted_affine_ls(samples, &w) else { break };
        let delta = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        if delta < 1e-8 {
            break;
        }
    }
    if a >= 0.0 {
        return Err(ThermalError::SlopeSign { a_l: a });
    }
    Ok(LossRateModel { a_l: a, b_l: b })
}

/// Robust fit of charge-rate samples `(θ, r_c)` by IRLS-wrapped
/// Levenberg–Marquardt, ensuring the denominator stays positive over
/// `valid_theta_c`.
pub fn fit_charge_rate(
    samples: &[(f64, f64)],
    valid_theta_c: (f64, f64),
) -> Result<ChargeRateModel, ThermalError> {
    const MAX_OUTER: usize = 200;
    check_sample_support(samples)?;
    let n = samples.len();
    let mean_rc = samples.iter().map(|s| s.1).sum::<f64>() / n as f64;
    // b_c° is sized so the denominator stays positive across the validity
    // range at the initial point.
    let mut params = [-2.0, 330.0, mean_rc];
    let mut w = vec![1.0; n];
    let mut residuals = vec![0.0; n];

    // During iteration the denominator only has to stay positive where there
    // is data; enforcing the full validity range mid-search walls off the
    // path to fits that are perfectly valid at the end.
    let sample_lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let sample_hi = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let mut converged = false;
    for _ in 0..MAX_OUTER {
        let new_params = lm_fit(samples, &w, params, (sample_lo, sample_hi));
        for (r, (x, y)) in residuals.iter_mut().zip(samples) {
            let m = ChargeRateModel { a_c: new_params[0], b_c: new_params[1], c_c: new_params[2] };
            *r = y - m.rate(*x);
        }
        huber_weights(&residuals, &mut w);
        let delta = params
            .iter()
            .zip(&new_params)
            .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
            .fold(0.0f64, f64::max);
        params = new_params;
        if delta < 1e-8 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ThermalError::NonConvergence { max_outer: MAX_OUTER });
    }
    let model = ChargeRateModel { a_c: params[0], b_c: params[1], c_c: params[2] };
    if !model.denominator_positive_over(valid_theta_c.0, valid_theta_c.1) {
        return Err(ThermalError::DenominatorNotPositive {
            lo: valid_theta_c.0,
            hi: valid_theta_c.1,
        });
    }
    Ok(model)
}

/// One weighted Levenberg–Marquardt solve for the rational charge model.
/// Steps that flip the denominator sign anywhere over `guard_theta_c` are
/// rejected like any other failed step.
fn lm_fit(
    samples: &[(f64, f64)],
    w: &[f64],
    start: [f64; 3],
    guard_theta_c: (f64, f64),
) -> [f64; 3] {
    let model = |p: &[f64; 3]| ChargeRateModel { a_c: p[0], b_c: p[1], c_c: p[2] };
    let sse = |p: &[f64; 3]| -> f64 {
        let m = model(p);
        samples
            .iter()
            .zip(w)
            .map(|((x, y), wi)| {
                let r = y - m.rate(*x);
                wi * r * r
            })
            .sum()
    };
    let denom_ok = |p: &[f64; 3]| {
        let m = model(p);
        m.denominator_positive_over(valid_theta_c.0, valid_theta_c.1)
    };

    let mut p = start;
    let mut lambda = 1e-3;
    let mut current = sse(&p);
    for _ in 0..2000 {
        // Weighted normal equations J^T W J + lambda diag.
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        let m = model(&p);
        for ((x, y), wi) in samples.iter().zip(w) {
            let d = m.denominator(*x);
            let num = p[0] * x + p[1] + KELVIN_OFFSET;
            let g = [
                // d r / d a_c = -c (θ)(θ + 273.15) / D²
                -p[2] * x * (x + KELVIN_OFFSET) / (d * d),
                // d r / d b_c = -c (θ + 273.15) / D²
                -p[2] * (x + KELVIN_OFFSET) / (d * d),
                // d r / d c_c = N / D
                num / d,
            ];
            let r = y - p[2] * num / d;
            for i in 0..3 {
                jtr[i] += wi * g[i] * r;
                for j in 0..3 {
                    jtj[i][j] += wi * g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        let mut step_norm = 0.0;
        for _ in 0..30 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * jtj[i][i].max(1e-12);
            }
            if let Some(step) = solve3(&a, &jtr) {
                let cand = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
                if denom_ok(&cand) {
                    let cand_sse = sse(&cand);
                    if cand_sse < current {
                        step_norm = step
                            .iter()
                            .zip(&p)
                            .map(|(s, v)| (s / v.abs().max(1.0)).abs())
                            .fold(0.0f64, f64::max);
                        p = cand;
                        current = cand_sse;
                        lambda = (lambda * 0.2).max(1e-14);
                        improved = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !improved || current < 1e-26 || step_norm < 1e-13 {
            break;
        }
    }
    p
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..3 {
        let (pivot_row, pivot) = (col..3)
            .map(|r| (r, m[r][col].abs()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())?;
        if pivot < 1e-300 {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in (col + 1)..3 {
            let f = m[r][col] / m[col][col];
            for c in col..3 {
                m[r][c] -= f * m[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..3 {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Duty cycle `d_c(θ) = min(1, max(0, r_l(θ)/r_c(θ)))`: the long-run fraction
/// of time the heat pump runs at `θ`.
pub fn duty_cycle(m: &BuildingModel, theta_c: f64) -> f64 {
    let r_c = m.r_c(theta_c);
    if r_c <= 0.0 {
        return 0.0;
    }
    (m.r_l(theta_c) / r_c).clamp(0.0, 1.0)
}

/// Maximum tolerable off-duration `f / r_l(θ)`, hours. Returns `+∞` at or
/// above the zero-loss temperature.
pub fn max_off_duration(m: &BuildingModel, theta_c: f64) -> f64 {
    let r_l = m.r_l(theta_c);
    if r_l <= 0.0 {
        return f64::INFINITY;
    }
    m.f / r_l
}

/// Maximum allowed throttle duration `(f − 1) / r_l(θ)`, hours. Zero when
/// `f = 1` (throttling not granted); `+∞` at zero loss.
pub fn max_throttle_duration(m: &BuildingModel, theta_c: f64) -> f64 {
    let r_l = m.r_l(theta_c);
    if m.f <= 1.0 {
        return 0.0;
    }
    if r_l <= 0.0 {
        return f64::INFINITY;
    }
    (m.f - 1.0) / r_l
}

impl BuildingModel {
    /// Model with temperature-independent rates, for synthetic scenarios and
    /// closed-form fixtures.
    pub fn with_constant_rates(id: &str, p_r_kw: f64, f: f64, r_c: f64, r_l: f64) -> Self {
        Self {
            building_id: id.into(),
            p_r_kw,
            f,
            loss: LossRateModel::constant(r_l),
            charge: ChargeRateModel::constant(r_c),
            valid_theta_c: DEFAULT_VALID_THETA_C,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Paper-reported fit: a_l = −0.084, b_l = 1.722, a_c = −17.85,
    /// b_c = 473.26, c_c = 1.6262.
    fn reference_model(id: &str, p_r_kw: f64, f: f64) -> BuildingModel {
        BuildingModel {
            building_id: id.into(),
            p_r_kw,
            f,
            loss: LossRateModel { a_l: -0.084, b_l: 1.722 },
            charge: ChargeRateModel { a_c: -17.85, b_c: 473.26, c_c: 1.6262 },
            valid_theta_c: DEFAULT_VALID_THETA_C,
        }
    }

    fn constant_rate_model(id: &str, p_r_kw: f64, f: f64, r_c: f64, r_l: f64) -> BuildingModel {
        BuildingModel::with_constant_rates(id, p_r_kw, f, r_c, r_l)
    }

    fn cycle(d_on_h: f64, d_off_h: f64) -> HeatingCycle {
        HeatingCycle {
            t_off_h: 0.0,
            t_on_h: d_off_h,
            t_off_next_h: d_off_h + d_on_h,
            d_on_h,
            d_off_h,
            theta_mean_off_c: 5.0,
            theta_mean_cycle_c: 5.0,
        }
    }

    #[test]
    fn rates_arithmetic() {
        let r = rates_from_cycles(&[cycle(0.5, 0.5)]);
        assert_eq!((r[0].r_c, r[0].r_l), (4.0, 2.0));
        let r = rates_from_cycles(&[cycle(1.0, 1.0)]);
        assert_eq!((r[0].r_c, r[0].r_l), (2.0, 1.0));
        let r = rates_from_cycles(&[cycle(0.25, 0.75)]);
        assert!((r[0].r_c - 16.0 / 3.0).abs() < 1e-12);
        assert!((r[0].r_l - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn short_phases_excluded() {
        let r = rates_from_cycles(&[cycle(0.1, 0.5), cycle(0.5, 0.1), cycle(0.5, 0.5)]);
        assert_eq!(r.len(), 1);
    }

    fn line_samples(a: f64, b: f64, thetas: &[f64]) -> Vec<(f64, f64)> {
        thetas.iter().map(|&t| (t, a * t + b)).collect()
    }

    #[test]
    fn loss_fit_recovers_reference_line() {
        let thetas: Vec<f64> = (0..20).map(|i| -5.0 + i as f64).collect();
        let m = fit_loss_rate(&line_samples(-0.084, 1.722, &thetas)).unwrap();
        assert!((m.a_l + 0.084).abs() < 1e-9);
        assert!((m.b_l - 1.722).abs() < 1e-9);
        assert!((m.zero_loss_temp_c() - 20.5).abs() < 1e-6);
    }

    #[test]
    fn loss_fit_shrugs_off_gross_outlier() {
        let thetas: Vec<f64> = (0..30).map(|i| -10.0 + i as f64).collect();
        let mut samples = line_samples(-0.1, 2.0, &thetas);
        samples.push((0.0, 50.0));
        let m = fit_loss_rate(&samples).unwrap();
        assert!((m.a_l + 0.1).abs() < 0.001, "a_l {}", m.a_l);
        assert!((m.b_l - 2.0).abs() < 0.02, "b_l {}", m.b_l);
    }

    #[test]
    fn loss_fit_preconditions() {
        let thetas = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(
            fit_loss_rate(&line_samples(-0.1, 2.0, &thetas)),
            Err(ThermalError::InsufficientData { .. })
        ));
        let thetas: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(matches!(
            fit_loss_rate(&line_samples(0.05, 1.0, &thetas)),
            Err(ThermalError::SlopeSign { .. })
        ));
    }

    fn charge_samples(m: &ChargeRateModel, thetas: &[f64]) -> Vec<(f64, f64)> {
        thetas.iter().map(|&t| (t, m.rate(t))).collect()
    }

    #[test]
    fn charge_fit_recovers_reference_parameters() {
        let truth = ChargeRateModel { a_c: -17.85, b_c: 473.26, c_c: 1.6262 };
        let thetas: Vec<f64> = (0..36).map(|i| -10.0 + i as f64 * 0.75).collect();
        let m = fit_charge_rate(&charge_samples(&truth, &thetas), DEFAULT_VALID_THETA_C).unwrap();
        for (got, want) in [(m.a_c, truth.a_c), (m.b_c, truth.b_c), (m.c_c, truth.c_c)] {
            assert!((got - want).abs() / want.abs() < 0.005, "{got} vs {want}");
        }
    }

    #[test]
    fn charge_fit_constant_signal_predicts_constant() {
        let thetas: Vec<f64> = (0..20).map(|i| -5.0 + i as f64).collect();
        let samples: Vec<(f64, f64)> = thetas.iter().map(|&t| (t, 2.5)).collect();
        let m = fit_charge_rate(&samples, DEFAULT_VALID_THETA_C).unwrap();
        // Parameters are non-unique on flat data; predictions must still be flat.
        for &t in &thetas {
            assert!((m.rate(t) - 2.5).abs() < 1e-6, "rate({t}) = {}", m.rate(t));
        }
    }

    #[test]
    fn charge_model_reference_evaluation() {
        let m = ChargeRateModel { a_c: -17.85, b_c: 473.26, c_c: 1.6262 };
        assert!((m.rate(0.0) - 1.6262 * 746.41 / 473.26).abs() < 1e-12);
        assert!((m.rate(0.0) - 2.565).abs() < 1e-3);
    }

    #[test]
    fn duty_cycle_reference_points() {
        let m = reference_model("b", 2.0, 4.0);
        assert_eq!(duty_cycle(&m, 20.5), 0.0);
        assert_eq!(duty_cycle(&m, -7.4), 1.0);
        assert!((duty_cycle(&m, 0.0) - 0.671).abs() < 1e-3);
    }

    #[test]
    fn duty_cycle_monotone_over_validity() {
        let m = reference_model("b", 2.0, 4.0);
        let mut prev = f64::INFINITY;
        let mut t = -30.0;
        while t <= 25.0 {
            let dc = duty_cycle(&m, t);
            assert!((0.0..=1.0).contains(&dc));
            assert!(dc <= prev + 1e-12);
            prev = dc;
            t += 0.25;
        }
    }

    #[test]
    fn off_and_throttle_durations() {
        let m = constant_rate_model("b", 2.0, 1.0, 4.0, 2.0);
        assert!((max_off_duration(&m, 0.0) - 0.5).abs() < 1e-12);
        assert_eq!(max_throttle_duration(&m, 0.0), 0.0);

        let m = reference_model("b", 2.0, 4.0);
        assert!((max_off_duration(&m, 0.0) - 4.0 / 1.722).abs() < 1e-12);
        assert!((max_throttle_duration(&m, 0.0) - 3.0 / 1.722).abs() < 1e-12);
        assert_eq!(max_off_duration(&m, 20.5), f64::INFINITY);
        assert_eq!(max_throttle_duration(&m, 20.5), f64::INFINITY);

        let m = constant_rate_model("b", 2.0, 2.0, 4.0, 0.5);
        assert!((max_throttle_duration(&m, 0.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn throttle_equals_off_minus_natural() {
        // T_max(θ) = d_off,max(θ) − 1/r_l(θ) wherever losses are positive.
        let m = reference_model("b", 2.0, 3.0);
        for t in [-20.0, -5.0, 0.0, 10.0, 18.0] {
            let lhs = max_throttle_duration(&m, t);
            let rhs = max_off_duration(&m, t) - 1.0 / m.r_l(t);
            assert!((lhs - rhs).abs() < 1e-9, "θ={t}");
        }
    }

    #[test]
    fn zero_loss_exactly_at_zero_loss_temp() {
        let m = LossRateModel { a_l: -0.084, b_l: 1.722 };
        assert_eq!(m.rate(m.zero_loss_temp_c()), 0.0);
        assert!(m.rate(m.zero_loss_temp_c() - 1e-9) > 0.0);
    }

    #[test]
    fn fit_round_trip_predictions() {
        // Parameters fitted from noiseless model samples reproduce
        // predictions to ≤ 0.1% everywhere sampled.
        let loss_truth = LossRateModel { a_l: -0.09, b_l: 1.9 };
        let charge_truth = ChargeRateModel { a_c: -15.0, b_c: 450.0, c_c: 1.8 };
        let thetas: Vec<f64> = (0..40).map(|i| -12.0 + i as f64 * 0.7).collect();
        let lm = fit_loss_rate(
            &thetas.iter().map(|&t| (t, loss_truth.a_l * t + loss_truth.b_l)).collect::<Vec<_>>(),
        )
        .unwrap();
        let cm = fit_charge_rate(&charge_samples(&charge_truth, &thetas), DEFAULT_VALID_THETA_C)
            .unwrap();
        for &t in &thetas {
            let want_l = loss_truth.rate(t);
            if want_l > 1e-6 {
                assert!((lm.rate(t) - want_l).abs() / want_l < 1e-3);
            }
            let want_c = charge_truth.rate(t);
            assert!((cm.rate(t) - want_c).abs() / want_c < 1e-3);
        }
    }

    #[test]
    fn fit_robust_to_ten_percent_outliers() {
        let truth = LossRateModel { a_l: -0.084, b_l: 1.722 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut samples = Vec::new();
        for i in 0..100 {
            let t = -10.0 + 25.0 * (i as f64 / 99.0);
            let noise = rng.gen_range(-0.02..0.02);
            samples.push((t, truth.a_l * t + truth.b_l + noise));
        }
        for i in 0..10 {
            let idx = i * 10;
            samples[idx].1 *= 10.0;
        }
        let m = fit_loss_rate(&samples).unwrap();
        for t in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0] {
            let want = truth.rate(t);
            assert!((m.rate(t) - want).abs() / want < 0.02, "θ={t}: {} vs {want}", m.rate(t));
        }
    }

    #[test]
    fn building_model_json_schema() {
        let m = reference_model("house-1", 2.0, 4.0);
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["building_id"], "house-1");
        assert_eq!(json["p_r_kw"], 2.0);
        assert_eq!(json["f"], 4.0);
        assert!((json["loss"]["a_l"].as_f64().unwrap() + 0.084).abs() < 1e-12);
        assert!((json["charge"]["c_c"].as_f64().unwrap() - 1.6262).abs() < 1e-12);
        assert_eq!(json["valid_theta_c"][0], -30.0);
        let back: BuildingModel = serde_json::from_value(json).unwrap();
        assert_eq!(back.building_id, m.building_id);
    }
}
