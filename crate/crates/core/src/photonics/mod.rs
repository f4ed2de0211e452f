//! Device-level physics for microring resonators (MRs) on a WDM waveguide.
//!
//! Everything in here is a pure function of its inputs: resonance from ring
//! geometry, thermo-optic resonance drift, snapping a drifted resonance onto
//! the carrier grid, and the steady-state temperature rise produced by a set
//! of point heaters.

mod device;
mod thermal;

pub use device::{
    mr_transmission, resonant_wavelength, snap_to_channel, thermal_shift, ChannelGrid, MrPhysical,
    MrState, OffResonancePolicy, ThermoOpticParams,
};
pub use thermal::{
    compute_temperature_field, ChipBounds, Heater, TemperatureField, ThermalKernel,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point on the chip floorplan, in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Point) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhotonicsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, PhotonicsError>;
