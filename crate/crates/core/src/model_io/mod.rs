//! File formats: the SLWA weights archive and IDX datasets.

mod archive;
mod idx;

pub use archive::{
    read_archive, write_archive, ArchiveError, LayerSpec, Manifest, TensorRecord, TestSetRef, WeightsArchive,
    MAGIC, VERSION,
};
pub use idx::{load_idx, parse_idx, parse_images, parse_labels, Dataset, IdxError};

use std::path::Path;

use crate::nn::Model;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Archive {
        path: String,
        #[source]
        source: ArchiveError,
    },
}

/// Reads and decodes an archive file.
pub fn load_archive(path: impl AsRef<Path>) -> Result<(Model, Manifest), LoadError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io { path: display.clone(), source })?;
    read_archive(&bytes).map_err(|source| LoadError::Archive { path: display, source })
}
