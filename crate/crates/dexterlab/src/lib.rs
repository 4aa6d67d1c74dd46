//! Training routines for precise muscle-level pointing control.
//!
//! A simplified planar muscle arm learns to touch small on-screen targets
//! with PPO, using the training routines under test: action masking, a
//! four-stage curriculum, dynamic reward shaping, adaptive target sampling,
//! and linearly decayed optimizer hyperparameters. The evaluation harness
//! reports success rate, errors per successful episode, and time to touch.

pub mod arm;
pub mod checkpoint;
pub mod config;
pub mod curriculum;
pub mod logging;
pub mod mask;
pub mod nn;
pub mod ppo;
pub mod reward;
pub mod rollout;
pub mod sampler;
pub mod trainer;
