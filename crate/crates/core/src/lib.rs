//! Script-routed, two-stage language identification.

pub mod features;
pub mod label;
pub mod linear;
pub mod script;
pub mod stage2;
pub mod ensemble;
pub mod data;
pub mod eval;
pub mod synth;
