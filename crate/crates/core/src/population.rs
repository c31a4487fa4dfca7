//! Aggregate load-reduction and rebound prediction for a building population.
//!
//! Meter data arrives hours late, so per-unit states are unobservable at
//! dispatch time; each heat pump is treated as ON with probability equal to
//! its duty cycle. Predictions therefore sum `p_r·d_c(θ)` over the buildings
//! eligible for a throttle of duration `T`, discounted by the empirical
//! command success rate.

use crate::thermal::{duty_cycle, max_throttle_duration, BuildingModel};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum PopulationError {
    #[error("duplicate building id `{0}`")]
    DuplicateId(String),
    #[error("success rate {name} = {value} outside (0, 1]")]
    BadSigma { name: &'static str, value: f64 },
    #[error("empty grid")]
    EmptyGrid,
}

/// A set of identified buildings with empirical command success rates.
/// The paper reports σ_red = 0.88; σ_reb is never stated and defaults to the
/// same value.
#[derive(Debug, Clone)]
pub struct Population {
    pub members: Vec<BuildingModel>,
    pub sigma_red: f64,
    pub sigma_reb: f64,
}

impl Population {
    pub fn new(
        members: Vec<BuildingModel>,
        sigma_red: f64,
        sigma_reb: f64,
    ) -> Result<Self, PopulationError> {
        for (name, value) in [("sigma_red", sigma_red), ("sigma_reb", sigma_reb)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(PopulationError::BadSigma { name, value });
            }
        }
        let mut seen = std::collections::HashSet::new();
        for m in &members {
            if !seen.insert(m.building_id.as_str()) {
                return Err(PopulationError::DuplicateId(m.building_id.clone()));
            }
        }
        Ok(Self { members, sigma_red, sigma_reb })
    }

    pub fn get(&self, id: &str) -> Option<&BuildingModel> {
        self.members.iter().find(|m| m.building_id == id)
    }
}

/// Buildings that may be throttled for `T` hours or longer at `theta_c`:
/// `T_max^h(θ) ≥ T` (inclusive).
pub fn throttle_set<'a>(pop: &'a Population, theta_c: f64, t_h: f64) -> Vec<&'a BuildingModel> {
    pop.members.iter().filter(|m| max_throttle_duration(m, theta_c) >= t_h).collect()
}

/// Expected aggregate load reduction, kW:
/// `σ_red Σ_{h ∈ I_T(θ)} p_r^h d_c^h(θ)`.
pub fn expected_reduction(pop: &Population, theta_c: f64, t_h: f64) -> f64 {
    pop.sigma_red
        * throttle_set(pop, theta_c, t_h)
            .iter()
            .map(|m| m.p_r_kw * duty_cycle(m, theta_c))
            .sum::<f64>()
}

/// Per-building expected rebound power with the rebound probability clamped
/// to 1: `min(1, T·r_l(θ)) (1 − d_c(θ)) p_r`.
fn rebound_term(m: &BuildingModel, theta_c: f64, t_h: f64, clamp: bool) -> f64 {
    let mut prob = t_h * m.r_l(theta_c);
    if clamp {
        prob = prob.min(1.0);
    }
    prob * (1.0 - duty_cycle(m, theta_c)) * m.p_r_kw
}

/// Expected aggregate rebound power, kW:
/// `σ_reb Σ_{h ∈ I_T(θ)} min(1, T·r_l^h(θ)) (1 − d_c^h(θ)) p_r^h`.
pub fn expected_rebound(pop: &Population, theta_c: f64, t_h: f64) -> f64 {
    pop.sigma_reb
        * throttle_set(pop, theta_c, t_h)
            .iter()
            .map(|m| rebound_term(m, theta_c, t_h, true))
            .sum::<f64>()
}

/// Audit variant without the probability clamp, for comparing against the
/// raw linear form, which exceeds a probability of 1 for long throttles.
pub fn expected_rebound_unclamped(pop: &Population, theta_c: f64, t_h: f64) -> f64 {
    pop.sigma_reb
        * throttle_set(pop, theta_c, t_h)
            .iter()
            .map(|m| rebound_term(m, theta_c, t_h, false))
            .sum::<f64>()
}

/// Prediction surface over a (θ, T) grid; `values[ti][thi]` belongs to
/// `(theta_grid[thi], t_grid[ti])`.
#[derive(Debug, Clone)]
pub struct ResponseSurface {
    pub theta_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Evaluate reduction and rebound surfaces plus, per throttle duration, the
/// temperature of the largest expected reduction (ties resolved toward the
/// warmer temperature).
pub fn response_surfaces(
    pop: &Population,
    theta_grid: &[f64],
    t_grid: &[f64],
) -> Result<(ResponseSurface, ResponseSurface, Vec<f64>), PopulationError> {
    if theta_grid.is_empty() || t_grid.is_empty() {
        return Err(PopulationError::EmptyGrid);
    }
    let mut red = Vec::with_capacity(t_grid.len());
    let mut reb = Vec::with_capacity(t_grid.len());
    let mut argmax = Vec::with_capacity(t_grid.len());
    for &t_h in t_grid {
        let row_red: Vec<f64> =
            theta_grid.iter().map(|&th| expected_reduction(pop, th, t_h)).collect();
        let row_reb: Vec<f64> =
            theta_grid.iter().map(|&th| expected_rebound(pop, th, t_h)).collect();
        let mut best = 0;
        for (i, v) in row_red.iter().enumerate() {
            if *v >= row_red[best] {
                best = i; // >= keeps the warmest of tied maxima (grid sorted ascending)
            }
        }
        argmax.push(theta_grid[best]);
        red.push(row_red);
        reb.push(row_reb);
    }
    let surface = |values| ResponseSurface {
        theta_grid: theta_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        values,
    };
    Ok((surface(red), surface(reb), argmax))
}

/// Surface export: `theta_c,T_h,reduction_kw,rebound_kw`.
pub fn write_surface_csv(
    reduction: &ResponseSurface,
    rebound: &ResponseSurface,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "theta_c,T_h,reduction_kw,rebound_kw")?;
    for (ti, &t_h) in reduction.t_grid.iter().enumerate() {
        for (thi, &theta) in reduction.theta_grid.iter().enumerate() {
            writeln!(
                w,
                "{theta},{t_h},{:.6},{:.6}",
                reduction.values[ti][thi], rebound.values[ti][thi]
            )?;
        }
    }
    Ok(())
}
