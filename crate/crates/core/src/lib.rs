//! Simulated mobile-manipulation benchmark: procedurally generated
//! apartments, a planar mobile base with a lift/extend/wrist arm, articulated
//! doors and fridges, table wiping, shaped rewards, scripted and learned
//! controllers, and a recurrent PPO trainer.

pub mod agents;
pub mod env;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod interaction;
pub mod kinematics;
pub mod ppo;
pub mod reward;
pub mod scene;

pub use env::{Env, Observation, StepResult, TaskKind};
pub use error::{Error, Result};
