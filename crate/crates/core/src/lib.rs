//! Identification, flexibility quantification, and demand-response simulation
//! for residential heat-pump buildings observed through 5-minute smart-meter data.
//!
//! The pipeline runs bottom-up:
//!
//! 1. [`ingest`] loads cumulative-energy and outdoor-temperature CSVs and
//!    derives interval-average power.
//! 2. [`detect`] finds heat-pump switching events in the whole-building power
//!    signal and assembles heating cycles.
//! 3. [`thermal`] fits the normalized loss/charge-rate models and flexibility
//!    limits of one building from its cycles.
//! 4. [`flex`] turns a fitted model into an N-step feasible-power polytope and
//!    cumulative-energy envelopes.
//! 5. [`population`] aggregates per-building models into expected load
//!    reduction and rebound over temperature/duration grids.
//! 6. [`sim`] replays throttle events against a seeded discrete-time
//!    thermostat population.
//! 7. [`baseline`] scores realized events against a scaled, smoothed
//!    reference-group baseline.

pub mod baseline;
pub mod detect;
pub mod flex;
pub mod ingest;
pub mod pipeline;
pub mod population;
pub mod sim;
pub mod stats;
pub mod thermal;

pub use detect::{Delta2Series, Detection, HeatingCycle, SwitchEvent, SwitchKind, SwitchThresholds};
pub use flex::{EnergyEnvelope, Feasibility, FlexHorizon, FlexPolytope};
pub use ingest::{MeterSeries, PowerSeries, TemperatureSeries};
pub use population::{Population, ResponseSurface};
pub use sim::{DREventPlan, SimBuildingState, SimConfig, SimResult};
pub use thermal::{BuildingModel, ChargeRateModel, CycleRates, LossRateModel};
