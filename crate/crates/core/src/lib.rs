//! Delay-aware movable-antenna downlink: channel model, movement analysis,
//! single-user and multiuser position/beamforming optimizers, and a
//! Monte-Carlo harness.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod movement;
pub mod multiuser;
pub mod scenario;
pub mod single_user;
pub mod surrogate;
