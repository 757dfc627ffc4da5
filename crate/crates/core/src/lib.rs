//! Place recognition from semantic scene graphs, with particle-filter
//! sequence localization and nearest-neighbor Q-learning viewpoint planning.

pub mod baselines;
pub mod benchmark;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod planner;
pub mod scene_graph;
pub mod sequence_filter;

pub use error::{Error, Result};
