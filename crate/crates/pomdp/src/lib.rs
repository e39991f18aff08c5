//! Finite-horizon tabular POMDP toolkit.
//!
//! The centerpiece is short-memory planning: backward induction over
//! bounded action/observation windows with approximate beliefs, which is
//! near-optimal whenever the observation channels keep distinct state
//! distributions apart. Around it sit an exact oracle for desk-scale
//! instances, an observability estimator, a filter-stability lab, and
//! generators for the hard instances that calibrate all of the above.

pub mod belief;
pub mod exactplan;
pub mod gen;
pub mod lab;
pub mod model;
pub mod observability;
pub mod rng;
pub mod simplex;
pub mod smp;

pub use model::{Belief, History, HistoryWindow, Pomdp, Trajectory};
