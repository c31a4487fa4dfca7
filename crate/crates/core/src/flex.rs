//! Feasible-power-trajectory description of one building over a planning
//! horizon: SOC prediction, the constraint polytope, feasibility checks, and
//! cumulative-energy envelopes.
//!
//! Conventions. With steps `k = 0..N-1`, the SOC recursion is
//! `x̂_{k+1} = x̂_k + t_s (r_c(θ̂^k) u_k − r_l(θ̂^k))`. The matrix form
//! `x̂ = x̂₀·1 + B u − d` stacks `x̂_1..x̂_N`; row `i` (1-indexed) of `B` holds
//! `t_s·r_c(θ̂^j)` in columns `j = 0..i-1`, and
//! `d_i = t_s Σ_{k=0}^{i-1} r_l(θ̂^k)` — the loss sum starts at step 0 so
//! the matrix and recursive forms agree exactly. The energy bounds become
//! `[B; −B] p ≤ p_r [(1 − x̂₀)·1 + d; x̂₀·1 − d]` with `p = p_r·u`.

use crate::ingest::format_iso;
use crate::thermal::BuildingModel;
use chrono::{DateTime, Utc};
use std::io::Write;

/// Absolute feasibility tolerance on the normalized SOC.
pub const SOC_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum FlexError {
    #[error("horizon invalid: N={n}, t_s={t_s_h} h, {len} forecast temperatures")]
    BadHorizon { n: usize, t_s_h: f64, len: usize },
    #[error("trajectory length {got} does not match horizon N={n}")]
    BadLength { got: usize, n: usize },
    #[error("no admissible input at step {step}: SOC {x:.4} cannot stay within [0, 1]")]
    InfeasibleState { step: usize, x: f64 },
    #[error("charge rate must be positive at every step (step {step}: {r_c})")]
    NonPositiveCharge { step: usize, r_c: f64 },
}

/// Planning horizon: `n` steps of `t_s_h` hours with a temperature forecast
/// per step.
#[derive(Debug, Clone)]
pub struct FlexHorizon {
    pub n: usize,
    pub t_s_h: f64,
    pub theta_hat: Vec<f64>,
}

impl FlexHorizon {
    pub fn new(n: usize, t_s_h: f64, theta_hat: Vec<f64>) -> Result<Self, FlexError> {
        if n == 0 || !(t_s_h > 0.0) || theta_hat.len() != n {
            return Err(FlexError::BadHorizon { n, t_s_h, len: theta_hat.len() });
        }
        Ok(Self { n, t_s_h, theta_hat })
    }

    /// Constant-forecast horizon.
    pub fn constant(n: usize, t_s_h: f64, theta_c: f64) -> Result<Self, FlexError> {
        Self::new(n, t_s_h, vec![theta_c; n])
    }
}

/// The N-step feasible-power polytope of one building.
#[derive(Debug, Clone)]
pub struct FlexPolytope {
    pub n: usize,
    pub t_s_h: f64,
    pub x0: f64,
    pub p_r_kw: f64,
    /// Lower-triangular constraint matrix; `b[i][j] = t_s·r_c(θ̂^j)` for
    /// `j <= i` (0-indexed), zero above.
    pub b: Vec<Vec<f64>>,
    /// Cumulative loss vector, `d[i] = t_s Σ_{k<=i} r_l(θ̂^k)`.
    pub d: Vec<f64>,
}

impl FlexPolytope {
    /// Build directly from per-step rates. `build_polytope` derives the rates
    /// from a fitted model; this constructor serves precomputed schedules.
    pub fn from_rates(
        t_s_h: f64,
        x0: f64,
        p_r_kw: f64,
        r_c: &[f64],
        r_l: &[f64],
    ) -> Result<Self, FlexError> {
        let n = r_c.len();
        if n == 0 || r_l.len() != n || !(t_s_h > 0.0) {
            return Err(FlexError::BadHorizon { n, t_s_h, len: r_l.len() });
        }
        for (k, &rc) in r_c.iter().enumerate() {
            if !(rc > 0.0) {
                return Err(FlexError::NonPositiveCharge { step: k, r_c: rc });
            }
        }
        let mut b = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                b[i][j] = t_s_h * r_c[j];
            }
        }
        let mut d = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &rl in r_l {
            acc += t_s_h * rl;
            d.push(acc);
        }
        Ok(Self { n, t_s_h, x0, p_r_kw, b, d })
    }

    /// Per-step charge increment `t_s·r_c(θ̂^k)` (diagonal of `B`).
    fn charge_step(&self, k: usize) -> f64 {
        self.b[k][k]
    }

    /// Per-step loss increment `t_s·r_l(θ̂^k)`.
    fn loss_step(&self, k: usize) -> f64 {
        if k == 0 {
            self.d[0]
        } else {
            self.d[k] - self.d[k - 1]
        }
    }

    /// SOC after each step for a binary input trajectory, by the recursion
    /// (the stepwise counterpart of the matrix form).
    pub fn soc_after(&self, u: &[bool]) -> Vec<f64> {
        let mut x = self.x0;
        let mut out = Vec::with_capacity(self.n);
        for k in 0..self.n {
            x += self.charge_step(k) * (u[k] as u8 as f64) - self.loss_step(k);
            out.push(x);
        }
        out
    }
}

/// SOC predictions `x̂_1..x̂_N` for a binary input trajectory. Predictions may
/// leave `[0, 1]`; feasibility is checked separately.
pub fn predict_soc(m: &BuildingModel, h: &FlexHorizon, x0: f64, u: &[bool]) -> Vec<f64> {
    let mut x = x0;
    let mut out = Vec::with_capacity(h.n);
    for k in 0..h.n.min(u.len()) {
        let theta = h.theta_hat[k];
        x += h.t_s_h * (m.r_c(theta) * (u[k] as u8 as f64) - m.r_l(theta));
        out.push(x);
    }
    out
}

/// Estimate the SOC at `now_h` from the last switching action: decaying from
/// full since the last switch-off, or charging from empty since the last
/// switch-on. Clamped to `[0, 1]` (the normalized state cannot leave it under
/// thermostat control). Times in hours on a shared axis; `theta_mean_c` is
/// the average outdoor temperature since that action.
pub fn initial_soc(
    m: &BuildingModel,
    last_on_h: f64,
    last_off_h: f64,
    now_h: f64,
    theta_mean_c: f64,
) -> f64 {
    let x = if last_off_h > last_on_h {
        1.0 - m.r_l(theta_mean_c) * (now_h - last_off_h)
    } else {
        m.r_c(theta_mean_c) * (now_h - last_on_h)
    };
    x.clamp(0.0, 1.0)
}

/// Build the feasibility polytope for a fitted model over a horizon.
pub fn build_polytope(
    m: &BuildingModel,
    h: &FlexHorizon,
    x0: f64,
) -> Result<FlexPolytope, FlexError> {
    let r_c: Vec<f64> = h.theta_hat.iter().map(|&t| m.r_c(t)).collect();
    let r_l: Vec<f64> = h.theta_hat.iter().map(|&t| m.r_l(t)).collect();
    FlexPolytope::from_rates(h.t_s_h, x0, m.p_r_kw, &r_c, &r_l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A power level is neither 0 nor the rated power.
    PowerLevel,
    /// The SOC upper bound `x̂_i ≤ 1` fails.
    SocUpper,
    /// The SOC lower bound `x̂_i ≥ 0` fails.
    SocLower,
}

/// First violated constraint of an infeasible trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Step index (0-based) of the violated row.
    pub step: usize,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Feasibility {
    pub feasible: bool,
    pub violation: Option<Violation>,
}

/// Check a power trajectory against the binary power levels and all 2N
/// polytope rows (tolerance [`SOC_TOL`] on the normalized SOC).
pub fn is_feasible(poly: &FlexPolytope, p: &[f64]) -> Result<Feasibility, FlexError> {
    if p.len() != poly.n {
        return Err(FlexError::BadLength { got: p.len(), n: poly.n });
    }
    let p_tol = SOC_TOL * poly.p_r_kw;
    for (k, &pk) in p.iter().enumerate() {
        if (pk - 0.0).abs() > p_tol && (pk - poly.p_r_kw).abs() > p_tol {
            return Ok(Feasibility {
                feasible: false,
                violation: Some(Violation {
                    kind: ViolationKind::PowerLevel,
                    step: k,
                    amount: pk,
                }),
            });
        }
    }
    // Rows evaluated in normalized SOC form: x̂_i = x0 + (B p)_i / p_r − d_i.
    let mut bp = 0.0;
    for i in 0..poly.n {
        bp += poly.b[i][i] * p[i];
        // Lower-triangular with equal columns: (B p)_i accumulates row by row.
        let x_i = poly.x0 + bp / poly.p_r_kw - poly.d[i];
        if x_i > 1.0 + SOC_TOL {
            return Ok(Feasibility {
                feasible: false,
                violation: Some(Violation {
                    kind: ViolationKind::SocUpper,
                    step: i,
                    amount: x_i - 1.0,
                }),
            });
        }
        if x_i < -SOC_TOL {
            return Ok(Feasibility {
                feasible: false,
                violation: Some(Violation { kind: ViolationKind::SocLower, step: i, amount: -x_i }),
            });
        }
    }
    Ok(Feasibility { feasible: true, violation: None })
}

/// Cumulative-energy envelopes, kWh per step.
#[derive(Debug, Clone)]
pub struct EnergyEnvelope {
    pub e_min_cum: Vec<f64>,
    pub e_max_cum: Vec<f64>,
}

/// Extreme cumulative-energy trajectories by greedy forward recursion:
/// charge whenever the next SOC stays below 1 (maximum), idle whenever it
/// stays above 0 (minimum). For the per-step box structure the greedy
/// extremes are exact; brute-force enumeration backs this as a test oracle.
pub fn energy_envelope(poly: &FlexPolytope) -> Result<EnergyEnvelope, FlexError> {
    let run = |prefer_on: bool| -> Result<Vec<f64>, FlexError> {
        let mut x = poly.x0;
        let mut cum = 0.0;
        let mut out = Vec::with_capacity(poly.n);
        for k in 0..poly.n {
            let on_x = x + poly.charge_step(k) - poly.loss_step(k);
            let off_x = x - poly.loss_step(k);
            let on_ok = (-SOC_TOL..=1.0 + SOC_TOL).contains(&on_x);
            let off_ok = (-SOC_TOL..=1.0 + SOC_TOL).contains(&off_x);
            let u = match (prefer_on, on_ok, off_ok) {
                (true, true, _) => true,
                (true, false, true) => false,
                (false, _, true) => false,
                (false, true, false) => true,
                (_, false, false) => return Err(FlexError::InfeasibleState { step: k, x }),
            };
            x = if u { on_x } else { off_x };
            if u {
                cum += poly.t_s_h * poly.p_r_kw;
            }
            out.push(cum);
        }
        Ok(out)
    };
    Ok(EnergyEnvelope { e_min_cum: run(false)?, e_max_cum: run(true)? })
}

/// Largest `n` such that the all-off prefix of length `n` keeps the SOC
/// non-negative. `N` when losses vanish over the whole horizon.
pub fn max_deferral(poly: &FlexPolytope) -> usize {
    let mut x = poly.x0;
    for k in 0..poly.n {
        x -= poly.loss_step(k);
        if x < -SOC_TOL {
            return k;
        }
    }
    poly.n
}

/// Envelope export: `step,t_iso,e_min_kwh,e_max_kwh`.
pub fn write_envelope_csv(
    env: &EnergyEnvelope,
    t0: DateTime<Utc>,
    t_s_h: f64,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "step,t_iso,e_min_kwh,e_max_kwh")?;
    for (i, (lo, hi)) in env.e_min_cum.iter().zip(&env.e_max_cum).enumerate() {
        writeln!(
            w,
            "{},{},{:.9},{:.9}",
            i + 1,
            format_iso(t0, (i + 1) as f64 * t_s_h),
            lo,
            hi
        )?;
    }
    Ok(())
}
