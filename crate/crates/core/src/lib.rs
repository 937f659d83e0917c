//! Sign recognition from holistic landmarks, co-speech gesture scripting and
//! the robot socket bridge.

pub mod dialogue;
pub mod gesture;
pub mod landmark;
pub mod netpipe;
pub mod nn;
pub mod preprocess;
pub mod synth;
