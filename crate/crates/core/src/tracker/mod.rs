//! Particle filter tracking of a person's position and velocity.

mod controller;
mod filter;
mod measurement;
mod particles;

pub use controller::{controller_step, LinkInput, StepOutput, Tracker};
pub use filter::{initialize, InitConfig, ParticleFilter, TrackerConfig};
pub use measurement::{
    predict_all, predict_measurement, update_weights, LinkObservation, MeasurementModel, MeasurementNoiseConfig,
    PredictedMeasurement, UpdateOutcome,
};
pub use particles::{
    estimate, normalize, predict, resample, systematic_counts, KinematicState, Particle, ParticleSet,
    ProcessNoiseConfig,
};
