//! Harmonic MPC and MPC for tracking on discrete LTI plants.
//!
//! * [`model`]: plants, box constraints, the ball-and-plate benchmark.
//! * [`harmonic`]: single-harmonic reference algebra.
//! * [`formulations`]: conic programs for both controllers and the one-step shift.
//! * [`solver`]: ADMM solver for zero / nonnegative / second-order cones.
//! * [`sim`]: closed-loop simulation and diagnostics.
//! * [`freqdesign`]: base-frequency selection from the plant's frequency response.

pub mod formulations;
pub mod freqdesign;
pub mod harmonic;
pub mod model;
pub mod solver;
pub mod sim;
