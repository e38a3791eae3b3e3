//! Localized orthogonal decomposition (LOD) on structured two-scale
//! quadrilateral meshes.

pub mod correctors;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod grid;
pub mod lod;
pub mod sparse;

pub use error::{LodError, Result};
