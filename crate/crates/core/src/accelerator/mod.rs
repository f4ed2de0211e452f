//! Architecture model of the non-coherent ONN accelerator: CONV and FC blocks
//! of VDP units, each unit a stack of MR banks with an input-imprint array and
//! a weight-imprint array, plus weight-stationary mapping and execution of dot
//! products through possibly faulted MRs.

mod compiled;
mod config;
mod execute;
mod faulted;
mod layout;
mod mapping;

pub use compiled::{CompiledLayer, CompiledNetwork};
pub use config::{AcceleratorConfig, BlockConfig, FloorplanConfig};
pub use execute::{execute_dot_product, layer_forward_via_accelerator, DeviceLevel};
pub use faulted::FaultedAccelerator;
pub use layout::{Accelerator, ArrayRole, BankId, Block, BlockLayout, MrCoordinate, MrId};
pub use mapping::{map_model, LayerMapping, MappingPlan, Tile};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcceleratorError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, AcceleratorError>;

impl From<crate::nn::NnError> for AcceleratorError {
    fn from(e: crate::nn::NnError) -> Self {
        AcceleratorError::Contract(e.to_string())
    }
}
