//! Metapopulation epidemic simulation and invasion-pathway inference.
//!
//! The library covers the full pipeline: generating weighted metapopulation
//! networks, running stochastic SI reaction-diffusion simulations, detecting
//! invasion events in surveillance time series, identifying the most likely
//! invasion pathways per case, and scoring identified pathways against the
//! simulator's ground truth.

pub mod anatomy;
pub mod baselines;
pub mod estimators;
pub mod eval;
pub mod graph;
pub mod ipi;
pub mod logmath;
pub mod netgen;
pub mod rng;
pub mod sim;
pub mod tree;

pub use graph::{MetapopNetwork, NodeId, SurveillanceSeries};
pub use sim::{GroundTruthLog, SimConfig};
pub use tree::PathwayTree;
