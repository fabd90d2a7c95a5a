use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("pixel ({row}, {col}) is outside a {rows}x{cols} grid")]
    PixelOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("mask of {rows}x{cols} is too small (need at least {min}x{min})")]
    TooSmall { rows: usize, cols: usize, min: usize },

    #[error("visibility undefined: both region intensities are zero")]
    UndefinedVisibility,

    #[error("slit {first} and slit {second} overlap")]
    SlitOverlap { first: usize, second: usize },

    #[error("invalid phase class {0} (expected 0..=7)")]
    InvalidPhaseClass(u8),

    #[error("mask is not binary and disjoint at pixel ({row}, {col})")]
    NotBinaryDisjoint { row: usize, col: usize },

    #[error("target S = {0} is not reachable by the state model")]
    UnreachableTarget(f64),

    #[error("image has zero variance")]
    ZeroVariance,

    #[error("no counts available: {0}")]
    NoCounts(&'static str),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid PGM data: {0}")]
    Pgm(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}
