//! Servo-space facial expression mimicry: an expert policy that samples
//! valid servo configurations, a simulated face that turns them into
//! blendshape observations, and learned inverse models mapping
//! observations back to servo commands.

pub mod dataset;
pub mod error;
pub mod expert_policy;
pub mod face_sim;
pub mod io_util;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod report;
pub mod seed;
pub mod servo_space;
pub mod train;

pub use error::{Error, Result};
