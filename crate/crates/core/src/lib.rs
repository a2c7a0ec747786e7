//! Closed-loop optimisation of condensate transport and decompression ramps.

pub mod atom_laser;
pub mod config;
pub mod cost;
pub mod dynamics;
pub mod experiment;
pub mod harness;
pub mod ramp;
pub mod trap;
pub mod optimizer;
pub mod runlog;
pub mod seed;
