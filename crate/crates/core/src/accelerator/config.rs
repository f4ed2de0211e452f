use serde::{Deserialize, Serialize};

use super::{AcceleratorError, Result};
use crate::photonics::{ChannelGrid, OffResonancePolicy};

/// Size and arrangement of one VDP block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Number of VDP units.
    pub units: usize,
    /// MR banks per unit.
    pub banks_per_unit: usize,
    /// MRs per bank, equal to the WDM channel count.
    pub bank_width: usize,
    /// Units per floorplan row.
    pub units_per_row: usize,
    /// WDM carriers on the bank waveguide; defaults to `bank_width` and must
    /// equal it when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_count: Option<usize>,
}

impl BlockConfig {
    pub fn banks(&self) -> usize {
        self.units * self.banks_per_unit
    }

    /// Input-imprint plus weight-imprint MRs.
    pub fn mr_count(&self) -> usize {
        self.banks() * self.bank_width * 2
    }
}

/// Physical placement parameters, um.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloorplanConfig {
    /// Centre-to-centre distance of MRs along a bank.
    pub mr_pitch_um: f64,
    /// Centre-to-centre distance of adjacent banks. Each bank is one
    /// waveguide row: the input-imprint array followed by the weight array.
    pub bank_pitch_um: f64,
    /// Extra waveguide between the last input MR and the first weight MR.
    pub array_gap_um: f64,
    pub unit_gap_um: f64,
    /// Separation between the CONV and FC blocks.
    pub block_gap_um: f64,
    /// Clearance between the blocks and the chip edge.
    pub margin_um: f64,
}

impl Default for FloorplanConfig {
    fn default() -> Self {
        Self {
            mr_pitch_um: 10.0,
            bank_pitch_um: 30.0,
            array_gap_um: 10.0,
            unit_gap_um: 100.0,
            block_gap_um: 1000.0,
            margin_um: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcceleratorConfig {
    pub conv: BlockConfig,
    pub fc: BlockConfig,
    /// Shortest carrier wavelength of every bank's grid, nm.
    pub base_wavelength_nm: f64,
    pub channel_spacing_nm: f64,
    pub floorplan: FloorplanConfig,
    /// Multiplicand of an MR forced off resonance.
    pub off_resonance_value: OffResonancePolicy,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self {
            conv: BlockConfig {
                units: 100,
                banks_per_unit: 20,
                bank_width: 20,
                units_per_row: 10,
                channel_count: None,
            },
            fc: BlockConfig {
                units: 60,
                banks_per_unit: 150,
                bank_width: 150,
                units_per_row: 10,
                channel_count: None,
            },
            base_wavelength_nm: 1550.0,
            channel_spacing_nm: 0.8,
            floorplan: FloorplanConfig::default(),
            off_resonance_value: OffResonancePolicy::default(),
        }
    }
}

impl AcceleratorConfig {
    /// One unit, one bank of `width` MRs per block: the textbook two-array
    /// dot-product bank.
    pub fn toy(width: usize) -> Self {
        let block = BlockConfig {
            units: 1,
            banks_per_unit: 1,
            bank_width: width,
            units_per_row: 1,
            channel_count: None,
        };
        Self {
            conv: block,
            fc: block,
            ..Self::default()
        }
    }

    pub fn grid(&self, width: usize) -> Result<ChannelGrid> {
        ChannelGrid::new(self.base_wavelength_nm, self.channel_spacing_nm, width)
            .map_err(|e| AcceleratorError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("conv", &self.conv), ("fc", &self.fc)] {
            if b.units == 0 || b.banks_per_unit == 0 || b.bank_width == 0 || b.units_per_row == 0 {
                return Err(AcceleratorError::Config(format!(
                    "{name} block sizes must be positive: {b:?}"
                )));
            }
            if let Some(n) = b.channel_count {
                if n != b.bank_width {
                    return Err(AcceleratorError::Config(format!(
                        "{name} block: {n} WDM channels cannot serve banks of {} MRs",
                        b.bank_width
                    )));
                }
            }
            self.grid(b.bank_width)?;
        }
        if u32::try_from(self.conv.mr_count() + self.fc.mr_count()).is_err() {
            return Err(AcceleratorError::Config("MR inventory exceeds u32 ids".into()));
        }
        let f = &self.floorplan;
        for (name, v) in [
            ("mr_pitch_um", f.mr_pitch_um),
            ("bank_pitch_um", f.bank_pitch_um),
        ] {
            if !(v > 0.0) {
                return Err(AcceleratorError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("array_gap_um", f.array_gap_um),
            ("unit_gap_um", f.unit_gap_um),
            ("block_gap_um", f.block_gap_um),
            ("margin_um", f.margin_um),
        ] {
            if !(v >= 0.0) {
                return Err(AcceleratorError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let p = self.off_resonance_value.0;
        if !(0.0..=1.0).contains(&p) {
            return Err(AcceleratorError::Config(format!(
                "off_resonance_value must lie in [0, 1], got {p}"
            )));
        }
        Ok(())
    }
}
