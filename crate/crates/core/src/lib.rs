//! Simulation of heralded and entangled-photon imaging through
//! polarization-selective metasurfaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`pol`]: two-photon polarization states, analyzer projectors, heralding.
//! - [`metasurface`]: per-pixel POVM elements, star/triangle masks, slit lattices
//!   and slit Jones matrices.
//! - [`imaging`]: analytic expected images, region intensities, visibility laws.
//! - [`montecarlo`]: seeded photon-counting simulation of the camera frames.
//! - [`bell`]: CHSH correlations, S optimization and state-model calibration.
//! - [`hologram`]: phase/amplitude hologram encoding, field synthesis and
//!   angular-spectrum propagation.
//! - [`pgm`]: binary PGM reading and writing.

pub mod bell;
pub mod error;
pub mod fmt;
pub mod hologram;
pub mod imaging;
pub mod metasurface;
pub mod montecarlo;
pub mod pgm;
pub mod pol;

pub use error::{Error, Result};
