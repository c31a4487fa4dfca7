//! End-to-end identification of one building: power derivation, switching
//! detection, cycle extraction, and model fitting.

use crate::detect::{
    self, cluster_thresholds, cycles_from_events, delta2, detect_switch_events,
    estimate_rated_power, switch_index_sets, Detection, HeatingCycle, SwitchThresholds,
};
use crate::ingest::{align_temperature, power_from_energy, MeterSeries, TemperatureSeries};
use crate::thermal::{
    self, fit_charge_rate, fit_loss_rate, rates_from_cycles, BuildingModel,
    DEFAULT_VALID_THETA_C,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("ingest: {0}")]
    Ingest(#[from] crate::ingest::IngestError),
    #[error("detect: {0}")]
    Detect(#[from] detect::DetectError),
    #[error("fit: {0}")]
    Thermal(#[from] thermal::ThermalError),
}

impl PipelineError {
    /// Stage label for skip reports.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Detect(_) => "detect",
            PipelineError::Thermal(_) => "fit",
        }
    }
}

/// Identification knobs; defaults follow the module design values.
#[derive(Debug, Clone)]
pub struct IdentifyConfig {
    pub min_on_h: f64,
    pub min_off_h: f64,
    /// Flexibility factor assigned to the model (a user preference, not an
    /// identified quantity).
    pub default_f: f64,
    pub valid_theta_c: (f64, f64),
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            min_on_h: 0.25,
            min_off_h: 0.25,
            default_f: 4.0,
            valid_theta_c: DEFAULT_VALID_THETA_C,
        }
    }
}

/// Fitted model plus the intermediate artifacts worth auditing.
#[derive(Debug, Clone)]
pub struct IdentifiedBuilding {
    pub model: BuildingModel,
    pub thresholds: SwitchThresholds,
    pub detection: Detection,
    pub cycles: Vec<HeatingCycle>,
    pub n_rate_samples: usize,
}

/// Run the whole identification chain for one building.
pub fn identify_building(
    meter: &MeterSeries,
    temperature: &TemperatureSeries,
    cfg: &IdentifyConfig,
) -> Result<IdentifiedBuilding, PipelineError> {
    let power = power_from_energy(meter);
    let theta = align_temperature(temperature, &power)?;

    let d2 = delta2(&power)?;
    let thresholds = cluster_thresholds(&d2)?;
    let detection = detect_switch_events(&power, &thresholds, cfg.min_on_h, cfg.min_off_h)?;
    let (on_idx, off_idx) = switch_index_sets(&detection.events);
    let p_r_kw = estimate_rated_power(&d2, &on_idx, &off_idx)?;

    let cycles = cycles_from_events(&detection, &theta);
    let rates = rates_from_cycles(&cycles);
    let loss_samples: Vec<(f64, f64)> = rates.iter().map(|r| (r.theta_off, r.r_l)).collect();
    let charge_samples: Vec<(f64, f64)> = rates.iter().map(|r| (r.theta_cycle, r.r_c)).collect();
    let loss = fit_loss_rate(&loss_samples)?;
    let charge = fit_charge_rate(&charge_samples, cfg.valid_theta_c)?;

    Ok(IdentifiedBuilding {
        model: BuildingModel {
            building_id: meter.building_id.clone(),
            p_r_kw,
            f: cfg.default_f,
            loss,
            charge,
            valid_theta_c: cfg.valid_theta_c,
        },
        thresholds,
        detection,
        cycles,
        n_rate_samples: rates.len(),
    })
}
