//! Foot trajectory and force optimization for dry-adhesive legged climbing robots.
//!
//! The pipeline runs bottom-up through the modules:
//!
//! * [`geometry`] builds three-segment quintic Bezier foot trajectories with C² stitching.
//! * [`kinematics`] models a 3-DOF leg and solves the foot position and velocity bounds.
//! * [`constraints`] turns a foot description into a constraint policy and samples climbable
//!   trajectories.
//! * [`surrogate`] generates synthetic force data and trains GRU force predictors with the
//!   DILATE loss.
//! * [`strategies`] scores trajectories with the seven strategy functionals.
//! * [`optimizer`] runs NSGA-II over the free control points and picks one trajectory from the
//!   Pareto front with the redundancy hierarchical strategy.

pub mod baselines;
pub mod constraints;
pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod optimizer;
pub mod plot;
pub mod strategies;
pub mod surrogate;

pub use error::{Error, Result};
