//! Diffusion-based trajectory planning toolkit.
//!
//! The crate covers the full planning pipeline for a kinematic-bicycle
//! vehicle on a 2D occupancy grid:
//!
//! - MPC expert data generation ([`mpc`], [`datagen`]) over reference paths
//!   from a grid planner ([`refpath`]);
//! - conditional trajectory diffusion: forward noising, denoiser training,
//!   and DDPM/DDIM sampling ([`schedule`], [`model`], [`train`], [`sample`]);
//! - test-time composition of independently trained models ([`compose`]);
//! - a rule-based safety filter selecting one executable trajectory
//!   ([`filter`]);
//! - trajectory tracking and evaluation metrics ([`track`], [`eval`]).
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `difftraj` binary for the end-to-end command-line workflow.

pub mod ckpt;
pub mod compose;
pub mod datagen;
pub mod denoiser;
pub mod error;
pub mod filter;
pub mod geom;
pub mod mpc;
pub mod model;
pub mod nn;
pub mod refpath;
pub mod sample;
pub mod scene;
pub mod eval;
pub mod plan;
pub mod plot;
pub mod scenes;
pub mod track;
pub mod schedule;
pub mod train;
pub mod traj;
pub mod vehicle;

pub use error::{Error, Result};
