//! Heat-pump switching detection from whole-building power.
//!
//! Turn-on and turn-off procedures can straddle one sampling interval but not
//! two, so state changes are looked for in the two-step difference
//! `Δ₂p_k = p_k − p_{k−2}`. Local extrema of that series are clustered
//! (1-D k-means, k = 3) into off / noise / on groups, thresholds are taken as
//! quantiles of the outer clusters, and a stateful scan over the extrema turns
//! threshold crossings into a strictly alternating event sequence with
//! sub-interval switching times.

use crate::ingest::{format_iso, PowerSeries, TemperatureSeries};
use crate::stats;
use chrono::{DateTime, Utc};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("power series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error("degenerate clustering: {0}")]
    DegenerateCluster(String),
    #[error("switch-time denominator vanishes at k={k} (p_k = p_(k-2))")]
    UndefinedEdge { k: usize },
    #[error("empty {0} edge set")]
    EmptySet(&'static str),
    #[error("index {k} out of range or masked")]
    BadIndex { k: usize },
}

/// Two-step power differences and their local extrema.
///
/// `values[k] = p_k − p_{k−2}` where both terms are unmasked; entries for
/// `k < 2` and gap-spanning pairs are `None`. Extrema indices point into the
/// same indexing as the source power series.
#[derive(Debug, Clone)]
pub struct Delta2Series {
    pub values: Vec<Option<f64>>,
    pub extrema_idx: Vec<usize>,
}

/// Detection thresholds on `Δ₂p`, kW. `delta2_on > 0 > delta2_off`.
#[derive(Debug, Clone, Copy)]
pub struct SwitchThresholds {
    pub delta2_on: f64,
    pub delta2_off: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchKind {
    On,
    Off,
}

impl SwitchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SwitchKind::On => "on",
            SwitchKind::Off => "off",
        }
    }
}

/// One accepted switching event: grid index `k` and the interpolated
/// continuous switching time in hours since the series start.
#[derive(Debug, Clone, Copy)]
pub struct SwitchEvent {
    pub kind: SwitchKind,
    pub k: usize,
    pub t_hat_h: f64,
}

/// Event list anchored to the source power grid.
#[derive(Debug, Clone)]
pub struct Detection {
    pub t0: DateTime<Utc>,
    pub step_s: f64,
    pub events: Vec<SwitchEvent>,
}

/// One complete off→on→off heating cycle. Times are hours since the series
/// start; temperatures are time-weighted means over the off period and the
/// whole cycle.
#[derive(Debug, Clone, Copy)]
pub struct HeatingCycle {
    pub t_off_h: f64,
    pub t_on_h: f64,
    pub t_off_next_h: f64,
    pub d_on_h: f64,
    pub d_off_h: f64,
    pub theta_mean_off_c: f64,
    pub theta_mean_cycle_c: f64,
}

/// Compute `Δ₂p` and its local extrema.
///
/// Plateaus contribute their first index; a run boundary (series edge or gap)
/// counts as a satisfied side, so a plateau that starts a run and then falls
/// is still an extremum.
pub fn delta2(p: &PowerSeries) -> Result<Delta2Series, DetectError> {
    if p.len() < 3 {
        return Err(DetectError::TooShort { len: p.len(), min: 3 });
    }
    let mut values: Vec<Option<f64>> = vec![None; p.len()];
    for k in 2..p.len() {
        if let (Some(a), Some(b)) = (p.p[k], p.p[k - 2]) {
            values[k] = Some(a - b);
        }
    }
    let extrema_idx = local_extrema(&values);
    Ok(Delta2Series { values, extrema_idx })
}

fn local_extrema(values: &[Option<f64>]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = values.len();
    let mut k = 0;
    while k < n {
        let Some(v) = values[k] else {
            k += 1;
            continue;
        };
        // First index of a plateau only.
        if k > 0 {
            if let Some(prev) = values[k - 1] {
                if prev == v {
                    k += 1;
                    continue;
                }
            }
        }
        // Previous distinct value within the run (None = run boundary).
        let mut prev_distinct = None;
        let mut j = k;
        while j > 0 {
            match values[j - 1] {
                Some(w) if w == v => j -= 1,
                Some(w) => {
                    prev_distinct = Some(w);
                    break;
                }
                None => break,
            }
        }
        // Next distinct value within the run.
        let mut next_distinct = None;
        let mut j = k;
        while j + 1 < n {
            match values[j + 1] {
                Some(w) if w == v => j += 1,
                Some(w) => {
                    next_distinct = Some(w);
                    break;
                }
                None => break,
            }
        }
        let is_max = prev_distinct.map_or(true, |w| w < v) && next_distinct.map_or(true, |w| w < v);
        let is_min = prev_distinct.map_or(true, |w| w > v) && next_distinct.map_or(true, |w| w > v);
        // A plateau with no distinct neighbour on either side is flat, not an extremum.
        if (prev_distinct.is_some() || next_distinct.is_some()) && (is_max || is_min) {
            out.push(k);
        }
        k = j.max(k) + 1;
    }
    out
}

/// Cluster the extrema values with 1-D k-means (k = 3) and derive thresholds.
///
/// Centroids start at `{min, 0, max}` of the extrema values and Lloyd
/// iterations run to an assignment fixpoint, so results are reproducible.
/// Clusters are labelled by centroid sign; `delta2_on` is the 0.05-quantile
/// of the on cluster and `delta2_off` the 0.95-quantile of the off cluster.
pub fn cluster_thresholds(d2: &Delta2Series) -> Result<SwitchThresholds, DetectError> {
    let vals: Vec<f64> = d2.extrema_idx.iter().filter_map(|&k| d2.values[k]).collect();
    if vals.len() < 3 {
        return Err(DetectError::DegenerateCluster(format!(
            "{} extrema, need at least 3",
            vals.len()
        )));
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < 0.0 && hi > 0.0) {
        return Err(DetectError::DegenerateCluster(
            "extrema lack both positive and negative values".into(),
        ));
    }

    let mut centroids = [lo, 0.0, hi];
    let mut assign = vec![0usize; vals.len()];
    for _ in 0..200 {
        let mut changed = false;
        for (i, &v) in vals.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &ctr) in centroids.iter().enumerate() {
                let d = (v - ctr).abs();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = [0.0f64; 3];
        let mut counts = [0usize; 3];
        for (i, &v) in vals.iter().enumerate() {
            sums[assign[i]] += v;
            counts[assign[i]] += 1;
        }
        for c in 0..3 {
            if counts[c] > 0 {
                centroids[c] = sums[c] / counts[c] as f64;
            }
        }
        if !changed {
            break;
        }
    }

    // Label by centroid order: most negative = off, most positive = on.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| centroids[a].partial_cmp(&centroids[b]).unwrap());
    let (off_c, on_c) = (order[0], order[2]);
    let off_vals: Vec<f64> =
        vals.iter().zip(&assign).filter(|(_, &a)| a == off_c).map(|(&v, _)| v).collect();
    let on_vals: Vec<f64> =
        vals.iter().zip(&assign).filter(|(_, &a)| a == on_c).map(|(&v, _)| v).collect();
    if off_vals.is_empty() || on_vals.is_empty() || vals.len() == off_vals.len() + on_vals.len() {
        return Err(DetectError::DegenerateCluster("a cluster is empty after convergence".into()));
    }

    let delta2_on = stats::quantile(&on_vals, 0.05).unwrap();
    let delta2_off = stats::quantile(&off_vals, 0.95).unwrap();
    if !(delta2_on > 0.0 && delta2_off < 0.0) {
        return Err(DetectError::DegenerateCluster(format!(
            "thresholds do not straddle zero (on={delta2_on}, off={delta2_off})"
        )));
    }
    Ok(SwitchThresholds { delta2_on, delta2_off })
}

/// Sub-interval estimate of the switching time behind the edge seen at `k`:
/// `t̂ = t_s(k−1) + t_s (p_k − p_{k−1}) / (p_k − p_{k−2})`, clamped to
/// `[t_s(k−1), t_s(k+1)]`. Hours since the series start.
pub fn estimate_switch_time(p: &PowerSeries, k: usize) -> Result<f64, DetectError> {
    if k < 2 || k >= p.len() {
        return Err(DetectError::BadIndex { k });
    }
    let (Some(pk), Some(pk1), Some(pk2)) = (p.p[k], p.p[k - 1], p.p[k - 2]) else {
        return Err(DetectError::BadIndex { k });
    };
    let denom = pk - pk2;
    if denom == 0.0 {
        return Err(DetectError::UndefinedEdge { k });
    }
    let ts = p.step_h();
    let t = ts * (k as f64 - 1.0) + ts * (pk - pk1) / denom;
    Ok(t.clamp(ts * (k as f64 - 1.0), ts * (k as f64 + 1.0)))
}

/// Scan the `Δ₂p` extrema in time order and accept threshold crossings that
/// alternate with the tracked state and respect the minimum on/off durations.
///
/// The state before the first accepted event is taken to be the opposite of
/// that event's kind. A degenerate interpolation denominator falls back to
/// the two-interval midpoint `t_s·k`.
pub fn detect_switch_events(
    p: &PowerSeries,
    th: &SwitchThresholds,
    min_on_h: f64,
    min_off_h: f64,
) -> Result<Detection, DetectError> {
    let d2 = delta2(p)?;
    let ts = p.step_h();
    let mut events: Vec<SwitchEvent> = Vec::new();
    for &k in &d2.extrema_idx {
        let Some(v) = d2.values[k] else { continue };
        let kind = if v >= th.delta2_on {
            SwitchKind::On
        } else if v <= th.delta2_off {
            SwitchKind::Off
        } else {
            continue;
        };
        let t_hat_h = match estimate_switch_time(p, k) {
            Ok(t) => t,
            Err(DetectError::UndefinedEdge { .. }) | Err(DetectError::BadIndex { .. }) => {
                ts * k as f64
            }
            Err(e) => return Err(e),
        };
        if let Some(prev) = events.last() {
            if prev.kind == kind {
                continue;
            }
            let dur = t_hat_h - prev.t_hat_h;
            let min_req = match kind {
                SwitchKind::Off => min_on_h, // closing an on-period
                SwitchKind::On => min_off_h,
            };
            if dur < min_req {
                continue;
            }
        }
        events.push(SwitchEvent { kind, k, t_hat_h });
    }
    Ok(Detection { t0: p.t0, step_s: p.step_s, events })
}

/// Build complete heating cycles from an alternating event list. One cycle per
/// (off, on, off) triple; leading and trailing partial cycles are dropped.
/// `theta` must cover the cycle span (typically the series aligned to the
/// meter grid).
pub fn cycles_from_events(
    det: &Detection,
    theta: &TemperatureSeries,
) -> Vec<HeatingCycle> {
    let ev = &det.events;
    let mut cycles = Vec::new();
    let mut i = 0;
    // Skip to the first off event.
    while i < ev.len() && ev[i].kind != SwitchKind::Off {
        i += 1;
    }
    while i + 2 < ev.len() {
        let (off, on, off_next) = (&ev[i], &ev[i + 1], &ev[i + 2]);
        debug_assert_eq!(on.kind, SwitchKind::On);
        debug_assert_eq!(off_next.kind, SwitchKind::Off);
        let d_off_h = on.t_hat_h - off.t_hat_h;
        let d_on_h = off_next.t_hat_h - on.t_hat_h;
        if d_off_h > 0.0 && d_on_h > 0.0 {
            let theta_mean_off_c =
                theta.mean_over(det.t0, off.t_hat_h, on.t_hat_h).unwrap_or(f64::NAN);
            let theta_mean_cycle_c =
                theta.mean_over(det.t0, off.t_hat_h, off_next.t_hat_h).unwrap_or(f64::NAN);
            cycles.push(HeatingCycle {
                t_off_h: off.t_hat_h,
                t_on_h: on.t_hat_h,
                t_off_next_h: off_next.t_hat_h,
                d_on_h,
                d_off_h,
                theta_mean_off_c,
                theta_mean_cycle_c,
            });
        }
        i += 2;
    }
    cycles
}

/// Rated-power estimate from the edge heights:
/// `(median(Δ₂p on-edges) − median(Δ₂p off-edges)) / 2`.
pub fn estimate_rated_power(
    d2: &Delta2Series,
    on_idx: &[usize],
    off_idx: &[usize],
) -> Result<f64, DetectError> {
    let collect = |idx: &[usize]| -> Vec<f64> {
        idx.iter().filter_map(|&k| d2.values.get(k).copied().flatten()).collect()
    };
    let on_vals = collect(on_idx);
    let off_vals = collect(off_idx);
    if on_vals.is_empty() {
        return Err(DetectError::EmptySet("on"));
    }
    if off_vals.is_empty() {
        return Err(DetectError::EmptySet("off"));
    }
    Ok((stats::median(&on_vals).unwrap() - stats::median(&off_vals).unwrap()) / 2.0)
}

/// Index sets of accepted on/off events, as consumed by
/// [`estimate_rated_power`].
pub fn switch_index_sets(events: &[SwitchEvent]) -> (Vec<usize>, Vec<usize>) {
    let on = events.iter().filter(|e| e.kind == SwitchKind::On).map(|e| e.k).collect();
    let off = events.iter().filter(|e| e.kind == SwitchKind::Off).map(|e| e.k).collect();
    (on, off)
}

/// Audit export: `kind,k,t_hat_iso`.
pub fn write_events_csv(det: &Detection, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "kind,k,t_hat_iso")?;
    for e in &det.events {
        writeln!(w, "{},{},{}", e.kind.as_str(), e.k, format_iso(det.t0, e.t_hat_h))?;
    }
    Ok(())
}

/// Audit export: `t_off,t_on,t_off_next,d_on_h,d_off_h,theta_off_c,theta_cycle_c`.
pub fn write_cycles_csv(
    t0: DateTime<Utc>,
    cycles: &[HeatingCycle],
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "t_off,t_on,t_off_next,d_on_h,d_off_h,theta_off_c,theta_cycle_c")?;
    for c in cycles {
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.3},{:.3}",
            format_iso(t0, c.t_off_h),
            format_iso(t0, c.t_on_h),
            format_iso(t0, c.t_off_next_h),
            c.d_on_h,
            c.d_off_h,
            c.theta_mean_off_c,
            c.theta_mean_cycle_c
        )?;
    }
    Ok(())
}
