//! Coarse-grained graph models of population migration, fit to synthetic
//! agent-based housing-market runs.
//!
//! The pipeline: [`abm`] generates fine-scale runs, [`coarsen`] projects them
//! onto a 4-node x 3-income-group graph, [`ebm`] defines the graph ODE with a
//! small neural closure term, [`train`] fits it by differentiating through the
//! Euler rollout, and [`metrics`] scores the fit.

pub mod abm;
pub mod coarsen;
pub mod ebm;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod par;
pub mod seed;
pub mod series;
pub mod train;

pub use error::{Error, Result};
