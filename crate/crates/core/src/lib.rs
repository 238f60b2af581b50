//! Planar bipedal jumping pipeline.
//!
//! A desk-scale stack for planning and executing a jump with a planar
//! floating-base biped that has swing arms:
//!
//! - [`fslip`] — flywheel-augmented spring loaded inverted pendulum template
//!   model (reduced dynamics used by the planner).
//! - [`trajopt`] — direct-transcription trajectory optimization of the
//!   jumping and landing phases over the template dynamics, solved by SQP.
//! - [`flight`] — capture-point landing-angle computation and flight-phase
//!   leg-angle interpolation.
//! - [`dynamics`] — planar floating-base articulated rigid-body dynamics
//!   (mass matrix, bias forces, Jacobians, centroidal momentum).
//! - [`wbc`] — per-phase whole-body controller solved as a QP over
//!   (q̈, τ, F).
//! - [`qp`] — dense strictly-convex QP solver (dual active set).
//! - [`sim`] — fixed-step contact simulation with phase switching, closing
//!   the loop between plans and the whole-body controller.
//! - [`metrics`] — agility / stability / energy evaluation of trial logs.
//! - [`config`] — scenario and robot description schemas.

pub mod config;
pub mod dynamics;
pub mod flight;
pub mod fslip;
pub mod metrics;
pub mod qp;
pub mod sim;
pub mod trajopt;
pub mod wbc;

pub use fslip::{FslipControl, FslipParams, FslipState};
