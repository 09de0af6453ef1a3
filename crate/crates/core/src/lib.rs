//! Auto-annotation of stationary roadside LiDAR sequences.
//!
//! A per-beam distance histogram over a short query window yields a
//! background model; filtering it out leaves moving objects, which are
//! clustered with DBSCAN, boxed and classified by rule. The resulting labels
//! feed a student detector, and evaluation utilities score either against
//! reference labels.

pub mod annotator;
pub mod background;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod pipeline;
pub mod pointcloud;
pub mod preprocess;
pub mod simulator;

pub use error::{Error, ErrorKind, Result};
