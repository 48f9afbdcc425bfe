//! Persistence: the PDRT tensor container and checkpoint serialization.

pub mod checkpoint;
pub mod pdrt;
