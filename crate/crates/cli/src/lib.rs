//! Library surface of the experiment driver: the grid-restricted
//! nuclear-norm oracle, the phase-transition harness, and output emitters.

pub mod emit;
pub mod oracle;
pub mod phase;
