//! Seeded discrete-time simulator of a thermostat-controlled heat-pump
//! population under throttle commands.
//!
//! Each building is a hysteresis thermostat on the normalized SOC: on at
//! `x ≤ 0`, off at `x ≥ 1`, SOC slope `r_c(θ)·u − r_l(θ)`. Within a step,
//! bound crossings and rundown expiries are handled at their exact times, so
//! the SOC meets its bounds exactly and reported power equals rated power
//! times the exact on-fraction. A throttle command on a responsive running
//! unit starts a 2–10 min rundown before the unit holds off; unresponsive
//! units (per-event draw) ignore the command entirely. The pump can never be
//! forced on. Identical seeds and inputs give bit-identical results.

use crate::ingest::{format_iso, TemperatureSeries};
use crate::population::{throttle_set, Population};
use crate::thermal::{max_throttle_duration, BuildingModel};
use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("buildings not eligible for a {t_hold_h} h throttle at {theta_c} °C: {ids:?}")]
    Ineligible { ids: Vec<String>, theta_c: f64, t_hold_h: f64 },
    #[error("unknown building id `{0}`")]
    UnknownBuilding(String),
    #[error("temperature series does not cover the run ({need_h} h from its start)")]
    Coverage { need_h: f64 },
    #[error("bad simulation config: {0}")]
    BadConfig(String),
}

/// Simulator options. `dt_min` is the internal step; results are reported on
/// `report_step_s` bins like a meter would.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub dt_min: f64,
    pub report_step_s: f64,
    /// Keep per-building power series (memory scales with H × bins).
    pub keep_per_building: bool,
    /// Rundown duration range in minutes after a throttle hits a running unit.
    pub rundown_min: (f64, f64),
    /// Draw non-response once per building instead of once per event.
    pub persistent_nonresponse: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt_min: 1.0,
            report_step_s: 300.0,
            keep_per_building: false,
            rundown_min: (2.0, 10.0),
            persistent_nonresponse: false,
        }
    }
}

/// Instantaneous state of one simulated building.
#[derive(Debug, Clone, Copy)]
pub struct SimBuildingState {
    pub x: f64,
    pub on: bool,
    pub throttled: bool,
    pub rundown_remaining_min: f64,
    pub responsive: bool,
    response_drawn: bool,
}

impl SimBuildingState {
    pub fn new(x: f64, on: bool) -> Self {
        Self {
            x,
            on,
            throttled: false,
            rundown_remaining_min: 0.0,
            responsive: true,
            response_drawn: false,
        }
    }
}

/// One throttle experiment: who, when, for how long, and the per-building
/// release times (hours on the run's time axis, anchored at the temperature
/// series start).
#[derive(Debug, Clone)]
pub struct DREventPlan {
    pub group: Vec<String>,
    pub t_start_h: f64,
    pub t_hold_h: f64,
    pub delta_t_h: f64,
    pub release_times_h: BTreeMap<String, f64>,
}

/// Build a release schedule: `t_rel^h = min(t_end + δ^h, t_start + T_max^h(θ))`
/// with `δ^h` drawn uniformly from `[0, ΔT]` under the given seed. Buildings
/// that cannot sustain the full hold duration are rejected, not truncated.
pub fn plan_release(
    pop: &Population,
    group: &[String],
    t_start_h: f64,
    t_hold_h: f64,
    delta_t_h: f64,
    theta_c: f64,
    seed: u64,
) -> Result<DREventPlan, SimError> {
    if t_hold_h < 0.0 || delta_t_h < 0.0 {
        return Err(SimError::BadConfig("negative hold or spread duration".into()));
    }
    let eligible: std::collections::HashSet<&str> =
        throttle_set(pop, theta_c, t_hold_h).iter().map(|m| m.building_id.as_str()).collect();
    let mut offenders: Vec<String> = Vec::new();
    for id in group {
        if pop.get(id).is_none() || !eligible.contains(id.as_str()) {
            offenders.push(id.clone());
        }
    }
    if !offenders.is_empty() {
        offenders.sort();
        return Err(SimError::Ineligible { ids: offenders, theta_c, t_hold_h });
    }

    let mut sorted: Vec<String> = group.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xD1));
    let t_end = t_start_h + t_hold_h;
    let mut release_times_h = BTreeMap::new();
    for id in &sorted {
        let delta = if delta_t_h > 0.0 { rng.gen_range(0.0..=delta_t_h) } else { 0.0 };
        let t_max = max_throttle_duration(pop.get(id).unwrap(), theta_c);
        let t_rel = (t_end + delta).min(t_start_h + t_max);
        release_times_h.insert(id.clone(), t_rel);
    }
    Ok(DREventPlan { group: sorted, t_start_h, t_hold_h, delta_t_h, release_times_h })
}

/// Power and exact on-time produced by one step.
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub power_kw: f64,
    pub on_time_h: f64,
}

/// Advance one building by `cfg.dt_min`, applying throttle semantics:
/// a rising edge on a responsive running unit draws a rundown delay, after
/// which the unit holds off until release; an unresponsive unit (probability
/// `1 − sigma_red`, drawn per event) keeps cycling; on release the thermostat
/// resumes and a depleted unit turns on at once.
pub fn step(
    state: &mut SimBuildingState,
    m: &BuildingModel,
    theta_c: f64,
    throttle: bool,
    sigma_red: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> StepResult {
    step_rates(state, m.loss.rate(theta_c), m.charge.rate(theta_c), m.p_r_kw, throttle, sigma_red, cfg, rng)
}

/// [`step`] with rates already evaluated; the run loop caches them per
/// temperature slot.
pub fn step_rates(
    state: &mut SimBuildingState,
    r_l: f64,
    r_c: f64,
    p_r_kw: f64,
    throttle: bool,
    sigma_red: f64,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> StepResult {
    if throttle && !state.throttled {
        state.throttled = true;
        let responds = if cfg.persistent_nonresponse && state.response_drawn {
            state.responsive
        } else {
            state.response_drawn = true;
            rng.gen_bool(sigma_red.clamp(0.0, 1.0))
        };
        state.responsive = responds;
        state.rundown_remaining_min = if responds && state.on {
            rng.gen_range(cfg.rundown_min.0..=cfg.rundown_min.1)
        } else {
            0.0 // a unit that is already off just stays off
        };
    } else if !throttle && state.throttled {
        state.throttled = false;
        state.rundown_remaining_min = 0.0;
    }

    let dt_h = cfg.dt_min / 60.0;
    let mut remaining_h = dt_h;
    let mut on_time_h = 0.0;

    // Segment loop: each iteration runs until the next thermostat crossing,
    // rundown expiry, or the step end, whichever comes first.
    for _ in 0..64 {
        if remaining_h <= 0.0 {
            break;
        }
        let held_off = state.throttled && state.responsive && state.rundown_remaining_min <= 0.0;
        // Instantaneous switching rules at the segment start.
        if state.on && state.x >= 1.0 {
            state.on = false;
            state.rundown_remaining_min = 0.0; // thermostat beat the rundown timer
        }
        if !state.on && state.x <= 0.0 && !held_off {
            state.on = true;
        }
        if held_off && state.on && state.rundown_remaining_min <= 0.0 {
            state.on = false;
        }

        let slope = if state.on { r_c - r_l } else { -r_l };
        // Time to the first event inside this segment.
        let mut seg_h = remaining_h;
        let mut expire_rundown = false;
        if state.on && state.throttled && state.responsive && state.rundown_remaining_min > 0.0 {
            let t_run = state.rundown_remaining_min / 60.0;
            if t_run < seg_h {
                seg_h = t_run;
                expire_rundown = true;
            }
        }
        let mut hit_bound: Option<f64> = None;
        if state.on && slope > 0.0 {
            let t_hit = (1.0 - state.x) / slope;
            if t_hit < seg_h {
                seg_h = t_hit;
                hit_bound = Some(1.0);
                expire_rundown = false;
            }
        } else if !state.on && !(state.throttled && state.responsive) && slope < 0.0 {
            let t_hit = state.x / -slope;
            if t_hit < seg_h {
                seg_h = t_hit;
                hit_bound = Some(0.0);
                expire_rundown = false;
            }
        }

        if state.on {
            on_time_h += seg_h;
        }
        state.x = match hit_bound {
            Some(b) => b, // land exactly on the bound; the switch fires next iteration
            None => state.x + slope * seg_h,
        };
        if state.on && state.throttled && state.responsive && state.rundown_remaining_min > 0.0 {
            state.rundown_remaining_min -= seg_h * 60.0;
            if expire_rundown {
                state.rundown_remaining_min = 0.0;
                state.on = false;
            }
        }
        remaining_h -= seg_h;
        if seg_h <= 0.0 && hit_bound.is_none() && !expire_rundown {
            // No progress possible (degenerate rates); consume the step.
            if state.on {
                on_time_h += remaining_h;
            }
            state.x += slope * remaining_h;
            remaining_h = 0.0;
        }
    }

    StepResult { power_kw: p_r_kw * on_time_h / dt_h, on_time_h }
}

/// Draw an initial state from the stationary phase distribution of the
/// undisturbed cycle at `theta_c`: uniform phase, hence `P(on) = d_c` and a
/// uniform SOC.
pub fn init_state(m: &BuildingModel, theta_c: f64, rng: &mut ChaCha8Rng) -> SimBuildingState {
    let r_l = m.loss.rate(theta_c);
    let r_c = m.charge.rate(theta_c);
    if r_l <= 0.0 {
        return SimBuildingState::new(rng.gen_range(0.0..1.0), false);
    }
    if r_c <= r_l {
        return SimBuildingState::new(rng.gen_range(0.0..1.0), true);
    }
    let d_off = 1.0 / r_l;
    let d_on = 1.0 / (r_c - r_l);
    let tau = rng.gen_range(0.0..d_off + d_on);
    if tau < d_off {
        SimBuildingState::new(1.0 - tau * r_l, false)
    } else {
        SimBuildingState::new((tau - d_off) * (r_c - r_l), true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEventKind {
    SwitchOn,
    SwitchOff,
    ThrottleStart,
    Release,
}

impl SimEventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimEventKind::SwitchOn => "switch_on",
            SimEventKind::SwitchOff => "switch_off",
            SimEventKind::ThrottleStart => "throttle_start",
            SimEventKind::Release => "release",
        }
    }
}

/// Logged transition; time at the internal step resolution.
#[derive(Debug, Clone)]
pub struct SimEvent {
    pub t_h: f64,
    pub building_id: String,
    pub kind: SimEventKind,
}

/// Simulation output on the reporting grid.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub t0: DateTime<Utc>,
    pub step_s: f64,
    pub aggregate_kw: Vec<f64>,
    pub per_building_kw: Option<Vec<Vec<f64>>>,
    /// Exact accumulated on-time per building, hours.
    pub on_time_h: Vec<f64>,
    pub events: Vec<SimEvent>,
}

/// Run the population for `duration_h`, optionally replaying a throttle plan.
/// The run is anchored at the temperature series start; release times are
/// applied at the first internal step boundary at or after their exact value.
pub fn run(
    pop: &Population,
    plan: Option<&DREventPlan>,
    theta: &TemperatureSeries,
    duration_h: f64,
    cfg: &SimConfig,
) -> Result<SimResult, SimError> {
    if !(cfg.dt_min > 0.0) || !(cfg.report_step_s > 0.0) {
        return Err(SimError::BadConfig("step sizes must be positive".into()));
    }
    let steps_per_bin = (cfg.report_step_s / 60.0 / cfg.dt_min).round() as usize;
    if steps_per_bin == 0
        || ((cfg.report_step_s / 60.0 / cfg.dt_min) - steps_per_bin as f64).abs() > 1e-9
    {
        return Err(SimError::BadConfig(format!(
            "dt = {} min must divide the reporting step of {} s",
            cfg.dt_min, cfg.report_step_s
        )));
    }
    if theta.span_h() + 1e-9 < duration_h {
        return Err(SimError::Coverage { need_h: duration_h });
    }
    if let Some(plan) = plan {
        for id in &plan.group {
            if pop.get(id).is_none() {
                return Err(SimError::UnknownBuilding(id.clone()));
            }
        }
    }

    let dt_h = cfg.dt_min / 60.0;
    let n_steps = (duration_h / dt_h).round() as usize;
    let n_bins = n_steps / steps_per_bin;

    let h = pop.members.len();
    // Per-building throttle window [t_start, t_rel), if targeted.
    let windows: Vec<Option<(f64, f64)>> = pop
        .members
        .iter()
        .map(|m| {
            plan.and_then(|p| {
                p.release_times_h.get(&m.building_id).map(|&rel| (p.t_start_h, rel))
            })
        })
        .collect();

    let mut rngs: Vec<ChaCha8Rng> = (0..h)
        .map(|i| ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, i as u64)))
        .collect();
    let theta0 = theta.theta[0];
    let mut states: Vec<SimBuildingState> = pop
        .members
        .iter()
        .zip(rngs.iter_mut())
        .map(|(m, rng)| init_state(m, theta0, rng))
        .collect();

    let mut events: Vec<SimEvent> = Vec::new();
    let mut aggregate_kw = vec![0.0; n_bins];
    let mut per_building_kw =
        cfg.keep_per_building.then(|| vec![vec![0.0; n_bins]; h]);
    let mut on_time_h = vec![0.0; h];
    // Rates cached per temperature slot.
    let mut cached_slot = usize::MAX;
    let mut rates: Vec<(f64, f64)> = vec![(0.0, 0.0); h];

    for step_i in 0..n_steps {
        let t_h = step_i as f64 * dt_h;
        let slot = ((t_h / theta.step_h()).floor() as usize).min(theta.theta.len() - 1);
        if slot != cached_slot {
            let th = theta.theta[slot];
            for (i, m) in pop.members.iter().enumerate() {
                rates[i] = (m.loss.rate(th), m.charge.rate(th));
            }
            cached_slot = slot;
        }
        let bin = step_i / steps_per_bin;
        for (i, m) in pop.members.iter().enumerate() {
            let throttle = match windows[i] {
                Some((start, rel)) => t_h >= start && t_h < rel,
                None => false,
            };
            let was_on = states[i].on;
            let was_throttled = states[i].throttled;
            let (r_l, r_c) = rates[i];
            let out = step_rates(
                &mut states[i],
                r_l,
                r_c,
                m.p_r_kw,
                throttle,
                pop.sigma_red,
                cfg,
                &mut rngs[i],
            );
            on_time_h[i] += out.on_time_h;
            if bin < n_bins {
                aggregate_kw[bin] += out.power_kw / steps_per_bin as f64;
                if let Some(pb) = per_building_kw.as_mut() {
                    pb[i][bin] += out.power_kw / steps_per_bin as f64;
                }
            }
            if states[i].throttled != was_throttled {
                events.push(SimEvent {
                    t_h,
                    building_id: m.building_id.clone(),
                    kind: if states[i].throttled {
                        SimEventKind::ThrottleStart
                    } else {
                        SimEventKind::Release
                    },
                });
            }
            if states[i].on != was_on {
                events.push(SimEvent {
                    t_h,
                    building_id: m.building_id.clone(),
                    kind: if states[i].on { SimEventKind::SwitchOn } else { SimEventKind::SwitchOff },
                });
            }
        }
    }

    Ok(SimResult {
        t0: theta.t0,
        step_s: cfg.report_step_s,
        aggregate_kw,
        per_building_kw,
        on_time_h,
        events,
    })
}

/// Aggregate trace export: `t_iso,aggregate_kw`.
pub fn write_aggregate_csv(res: &SimResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "t_iso,aggregate_kw")?;
    let step_h = res.step_s / 3600.0;
    for (i, v) in res.aggregate_kw.iter().enumerate() {
        writeln!(w, "{},{:.9}", format_iso(res.t0, i as f64 * step_h), v)?;
    }
    Ok(())
}

/// Events export: `t_iso,building_id,kind`.
pub fn write_events_csv(res: &SimResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "t_iso,building_id,kind")?;
    for e in &res.events {
        writeln!(w, "{},{},{}", format_iso(res.t0, e.t_h), e.building_id, e.kind.as_str())?;
    }
    Ok(())
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 over (seed, stream) for independent per-building streams.
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
