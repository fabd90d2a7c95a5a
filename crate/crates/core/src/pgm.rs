//! Binary PGM (P5) reading and writing, 8- and 16-bit.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Grayscale raster as stored in a PGM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub data: Vec<u16>,
}

impl Pgm {
    pub fn from_array(samples: &Array2<u16>, maxval: u16) -> Self {
        let (height, width) = samples.dim();
        Self {
            width,
            height,
            maxval,
            data: samples.iter().map(|&s| s.min(maxval)).collect(),
        }
    }

    pub fn to_array(&self) -> Array2<u16> {
        Array2::from_shape_vec((self.height, self.width), self.data.clone())
            .expect("data length matches header")
    }

    /// Samples scaled to `[0, 1]`.
    pub fn to_unit(&self) -> Array2<f64> {
        let m = self.maxval as f64;
        self.to_array().mapv(|s| s as f64 / m)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.data.iter().map(|&s| s as u8));
        } else {
            for &s in &self.data {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        if magic != b"P5" {
            return Err(Error::Pgm("not a binary PGM (expected P5)".into()));
        }
        let width = parse_num(next_token(bytes, &mut pos)?, "width")?;
        let height = parse_num(next_token(bytes, &mut pos)?, "height")?;
        let maxval = parse_num(next_token(bytes, &mut pos)?, "maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::Pgm("zero-sized image".into()));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Pgm(format!("maxval {maxval} outside 1..=65535")));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let n = width * height;
        let bps = if maxval < 256 { 1 } else { 2 };
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() < n * bps {
            return Err(Error::Pgm(format!(
                "raster truncated: need {} bytes, found {}",
                n * bps,
                raster.len()
            )));
        }
        let data: Vec<u16> = if bps == 1 {
            raster[..n].iter().map(|&b| b as u16).collect()
        } else {
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        if let Some(&s) = data.iter().find(|&&s| s as usize > maxval) {
            return Err(Error::Pgm(format!("sample {s} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval: maxval as u16,
            data,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            None => return Err(Error::Pgm("unexpected end of header".into())),
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn parse_num(tok: &[u8], what: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Pgm(format!("bad {what} field")))
}

/// 8-bit mask export, 255 = fully transmitting.
pub fn mask_to_pgm(values: &Array2<f64>) -> Pgm {
    Pgm::from_array(&values.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u16), 255)
}

/// Mask import: samples above half of maxval transmit.
pub fn pgm_to_binary_mask(pgm: &Pgm) -> Array2<f64> {
    let half = pgm.maxval as f64 / 2.0;
    pgm.to_array().mapv(|s| if s as f64 > half { 1.0 } else { 0.0 })
}

/// 16-bit count export, clipped at 65535.
pub fn counts_to_pgm(counts: &Array2<u32>) -> Pgm {
    Pgm::from_array(&counts.mapv(|c| c.min(u16::MAX as u32) as u16), u16::MAX)
}

/// 16-bit export of a non-negative image scaled so its maximum maps to 65535.
pub fn intensity_to_pgm(values: &Array2<f64>) -> Pgm {
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    Pgm::from_array(&values.mapv(|v| (v.max(0.0) * scale).round() as u16), u16::MAX)
}

/// 8-bit export of phases, `[−π, π)` mapped onto `0..=255`.
pub fn phase_to_pgm(phases: &Array2<f64>) -> Pgm {
    use std::f64::consts::PI;
    Pgm::from_array(
        &phases.mapv(|p| {
            let t = (p + PI).rem_euclid(2.0 * PI) / (2.0 * PI);
            ((t * 256.0).floor() as u16).min(255)
        }),
        255,
    )
}
