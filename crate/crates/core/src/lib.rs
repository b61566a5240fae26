//! Simulator and cooling-power control engine for a vapour-compression
//! refrigeration cycle backed by a PCM thermal-storage tank.

pub mod calib;
pub mod condenser;
pub mod control;
pub mod config;
pub mod cycle;
pub mod envelope;
pub mod pcm_tank;
pub mod sim;
pub mod thermo;
