pub mod amp;
pub mod biht;
pub mod error;
pub mod harness;
pub mod part1;
pub mod measure;
pub mod model;
pub mod quad;
pub mod rng;
pub mod theory;
