//! Fault-injection simulator for microring-based optical CNN accelerators.
//!
//! [`photonics`] models single rings and heat spread, [`accelerator`] lays out
//! MR banks and maps CNN weights onto them, [`faults`] turns attack
//! descriptions into per-ring fault states, [`nn`] runs inference through the
//! faulted hardware and [`campaign`] sweeps attack scenarios.

pub mod accelerator;
pub mod campaign;
pub mod faults;
pub mod model_io;
pub mod nn;
pub mod photonics;
