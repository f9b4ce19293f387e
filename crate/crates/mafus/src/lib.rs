//! Mortality-risk classifier toolkit: experiment pipeline, plot data,
//! synthetic cohorts and the prediction service.

pub mod pipeline;
pub mod plots;
pub mod service;
pub mod synth;
