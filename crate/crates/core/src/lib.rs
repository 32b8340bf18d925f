pub mod config;
pub mod error;
pub mod geometry;
pub mod link_state;
pub mod metrics;
pub mod pipeline;
pub mod rss_model;
pub mod simulator;
pub mod spectral;
pub mod sweep;
pub mod trace;
pub mod tracker;

pub use error::{DflError, Result};
