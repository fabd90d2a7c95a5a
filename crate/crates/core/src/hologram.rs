//! Phase/amplitude hologram design, slit encoding, field synthesis and
//! angular-spectrum propagation.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::imaging::IntensityImage;
use crate::metasurface::{slit_jones, slit_length_for_class, Slit, SlitLayout, LATTICE_PERIOD_NM, SLIT_WIDTH_NM};
use crate::montecarlo::stream_rng;
use crate::pgm::Pgm;
use crate::pol::{PolVector, PolarizerAngle};

pub const DEFAULT_WAVELENGTH: f64 = 808e-9;
/// Design distance giving a Fresnel number near 10 for a 128-cell hologram on
/// the 300 nm lattice.
pub const DEFAULT_DESIGN_DISTANCE: f64 = 45e-6;
pub const DEFAULT_DESIGN_ITERATIONS: usize = 20;

const DOMAIN_HOLOGRAM: u64 = 0x4f4c;

/// Complex scalar field sampled on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub amplitudes: Array2<Complex64>,
    /// Meters per sample.
    pub pitch: f64,
    /// Meters.
    pub wavelength: f64,
}

impl ComplexField {
    pub fn new(amplitudes: Array2<Complex64>, pitch: f64) -> Self {
        Self {
            amplitudes,
            pitch,
            wavelength: DEFAULT_WAVELENGTH,
        }
    }

    pub fn with_wavelength(mut self, wavelength: f64) -> Self {
        self.wavelength = wavelength;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.amplitudes.dim()
    }

    pub fn energy(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn intensity(&self) -> IntensityImage {
        IntensityImage {
            values: self.amplitudes.mapv(|z| z.norm_sqr()),
            pitch: self.pitch,
        }
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.amplitudes.mapv(|z| z.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.amplitudes.mapv(|z| z.arg())
    }

    pub fn conj(&self) -> Self {
        Self {
            amplitudes: self.amplitudes.mapv(|z| z.conj()),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::OutOfRange {
                name: "pitch",
                value: self.pitch,
                range: "(0, inf)",
            });
        }
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::OutOfRange {
                name: "wavelength",
                value: self.wavelength,
                range: "(0, inf)",
            });
        }
        Ok(())
    }

    /// Metadata sidecar in `key=value` lines.
    pub fn metadata(&self) -> String {
        let (rows, cols) = self.dims();
        format!(
            "rows={rows}\ncols={cols}\npitch_m={}\nwavelength_m={}\nmax_magnitude={}\n",
            self.pitch,
            self.wavelength,
            self.magnitude().iter().copied().fold(0.0, f64::max)
        )
    }
}

/// Anti-aliasing taper on the lateral walk-off of each plane-wave component.
///
/// Components whose geometric walk `z·tanθ` exceeds `start` of the padded
/// window are rolled off smoothly to zero at `stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taper {
    pub start: f64,
    pub stop: f64,
}

impl Default for Taper {
    fn default() -> Self {
        Self {
            start: 0.2,
            stop: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationPlan {
    /// Meters, ≥ 0.
    pub z: f64,
    /// Zero evanescent components instead of letting them decay.
    pub band_limit: bool,
    /// Each axis is zero-padded to `pad_factor ×` its size; 1 is periodic.
    pub pad_factor: usize,
    pub taper: Option<Taper>,
}

impl PropagationPlan {
    pub fn new(z: f64) -> Self {
        Self {
            z,
            band_limit: true,
            pad_factor: 1,
            taper: None,
        }
    }

    pub fn band_limit(mut self, on: bool) -> Self {
        self.band_limit = on;
        self
    }

    pub fn padded(mut self, factor: usize) -> Self {
        self.pad_factor = factor;
        self
    }

    pub fn tapered(mut self, taper: Taper) -> Self {
        self.taper = Some(taper);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(Error::OutOfRange {
                name: "z",
                value: self.z,
                range: "[0, inf)",
            });
        }
        if self.pad_factor == 0 {
            return Err(Error::OutOfRange {
                name: "pad_factor",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        if let Some(t) = self.taper {
            if !(0.0 < t.start && t.start < t.stop) {
                return Err(Error::OutOfRange {
                    name: "taper.start",
                    value: t.start,
                    range: "(0, stop)",
                });
            }
        }
        Ok(())
    }
}

/// In-place 2-D FFT of a row-major `rows × cols` buffer.
fn fft2(buf: &mut [Complex64], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft): (std::sync::Arc<dyn Fft<f64>>, std::sync::Arc<dyn Fft<f64>>) = if inverse {
        (planner.plan_fft_inverse(cols), planner.plan_fft_inverse(rows))
    } else {
        (planner.plan_fft_forward(cols), planner.plan_fft_forward(rows))
    };
    buf.par_chunks_mut(cols).for_each(|row| row_fft.process(row));
    let mut t = transpose(buf, rows, cols);
    t.par_chunks_mut(rows).for_each(|col| col_fft.process(col));
    buf.copy_from_slice(&transpose(&t, cols, rows));
    if inverse {
        let k = 1.0 / (rows * cols) as f64;
        buf.par_iter_mut().for_each(|z| *z *= k);
    }
}

fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); buf.len()];
    out.par_chunks_mut(rows).enumerate().for_each(|(c, col)| {
        for (r, z) in col.iter_mut().enumerate() {
            *z = buf[r * cols + c];
        }
    });
    out
}

/// Spatial frequencies of an `n`-point DFT with sample spacing `d`.
fn frequencies(n: usize, d: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            k / (n as f64 * d)
        })
        .collect()
}

/// Smooth step from 0 at `t ≤ 0` to 1 at `t ≥ 1`, infinitely differentiable.
fn smooth_step(t: f64) -> f64 {
    let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let (a, b) = (bump(t), bump(1.0 - t));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Propagates `field` a distance `plan.z` by the angular-spectrum method.
///
/// Propagating components are multiplied by `exp(i z kz)`; evanescent
/// components are zeroed under `band_limit` and decay otherwise.
pub fn angular_spectrum_propagate(field: &ComplexField, plan: &PropagationPlan) -> Result<ComplexField> {
    field.validate()?;
    plan.validate()?;
    if plan.z == 0.0 {
        return Ok(field.clone());
    }
    let (rows, cols) = field.dims();
    let (pr, pc) = (rows * plan.pad_factor, cols * plan.pad_factor);
    let mut buf = vec![Complex64::default(); pr * pc];
    for ((r, c), &z) in field.amplitudes.indexed_iter() {
        buf[r * pc + c] = z;
    }
    fft2(&mut buf, pr, pc, false);

    let inv_lambda2 = 1.0 / (field.wavelength * field.wavelength);
    let fy = frequencies(pr, field.pitch);
    let fx = frequencies(pc, field.pitch);
    let z = plan.z;
    let window = (pr.min(pc) as f64) * field.pitch;
    buf.par_chunks_mut(pc).enumerate().for_each(|(r, row)| {
        for (c, u) in row.iter_mut().enumerate() {
            let f2 = fx[c] * fx[c] + fy[r] * fy[r];
            let arg = inv_lambda2 - f2;
            let h = if arg > 0.0 {
                let kz = TAU * arg.sqrt();
                let mut h = Complex64::from_polar(1.0, z * kz);
                if let Some(t) = plan.taper {
                    // lateral walk of this plane wave over distance z
                    let walk = |f: f64| (z * f / arg.sqrt()).abs() / window;
                    let roll = |w: f64| 1.0 - smooth_step((w - t.start) / (t.stop - t.start));
                    h *= roll(walk(fx[c])) * roll(walk(fy[r]));
                }
                h
            } else if plan.band_limit || plan.taper.is_some() {
                Complex64::default()
            } else {
                Complex64::new((-z * TAU * (-arg).sqrt()).exp(), 0.0)
            };
            *u *= h;
        }
    });
    fft2(&mut buf, pr, pc, true);
    let out = Array2::from_shape_fn((rows, cols), |(r, c)| buf[r * pc + c]);
    Ok(ComplexField {
        amplitudes: out,
        ..*field
    })
}

/// Reverse propagation over `plan.z`, applying the conjugate transfer function
/// to propagating components.
pub fn back_propagate(field: &ComplexField, plan: &PropagationPlan) -> Result<ComplexField> {
    Ok(angular_spectrum_propagate(&field.conj(), plan)?.conj())
}

/// Nearest of the eight phase levels `k·π/4`; ties go to the lower level.
pub fn quantize_phase(phase: f64) -> u8 {
    let x = phase.rem_euclid(TAU) / FRAC_PI_4;
    ((x - 0.5).ceil() as i64).rem_euclid(8) as u8
}

/// Iterative phase-retrieval design of a hologram-plane field whose
/// propagated intensity reproduces `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HologramDesign {
    pub z: f64,
    pub iterations: usize,
    pub seed: u64,
    pub wavelength: f64,
    /// Meters per hologram cell.
    pub pitch: f64,
}

impl Default for HologramDesign {
    fn default() -> Self {
        Self {
            z: DEFAULT_DESIGN_DISTANCE,
            iterations: DEFAULT_DESIGN_ITERATIONS,
            seed: 0,
            wavelength: DEFAULT_WAVELENGTH,
            pitch: LATTICE_PERIOD_NM * 1e-9,
        }
    }
}

impl HologramDesign {
    pub fn plan(&self) -> PropagationPlan {
        PropagationPlan::new(self.z)
    }
}

fn quantized_hologram(field: &ComplexField) -> ComplexField {
    let max = field.amplitudes.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    ComplexField {
        amplitudes: field.amplitudes.mapv(|z| {
            let a = z.norm() * scale;
            Complex64::from_polar(a, quantize_phase(z.arg()) as f64 * FRAC_PI_4)
        }),
        ..*field
    }
}

/// Designs a hologram-plane field with amplitudes in `[0, 1]` (maximum 1) and
/// phases on the eight-level grid.
pub fn design_hologram(target: &IntensityImage, design: &HologramDesign) -> Result<ComplexField> {
    if let Some(&bad) = target.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::OutOfRange {
            name: "target intensity",
            value: bad,
            range: "[0, inf)",
        });
    }
    let amp = target.values.mapv(f64::sqrt);
    let plan = design.plan();
    let mut rng = stream_rng(design.seed, DOMAIN_HOLOGRAM, 0);
    let mut image = ComplexField {
        amplitudes: amp.mapv(|a| Complex64::from_polar(a, rng.random_range(0.0..TAU))),
        pitch: design.pitch,
        wavelength: design.wavelength,
    };
    let mut holo = quantized_hologram(&back_propagate(&image, &plan)?);
    for _ in 0..design.iterations {
        let out = angular_spectrum_propagate(&holo, &plan)?;
        Zip::from(&mut image.amplitudes)
            .and(&amp)
            .and(&out.amplitudes)
            .for_each(|u, &a, o| *u = Complex64::from_polar(a, o.arg()));
        holo = quantized_hologram(&back_propagate(&image, &plan)?);
    }
    Ok(holo)
}

/// Orientation realizing cross-polarized amplitude `a` for a phase class:
/// `θ = ½·arcsin(a)`, in the first quadrant for classes 4–7 and the second
/// for classes 0–3.
pub fn encoding_orientation(amplitude: f64, phase_class: u8) -> f64 {
    let theta = 0.5 * amplitude.clamp(0.0, 1.0).asin();
    if phase_class >= 4 {
        theta
    } else {
        PI - theta
    }
}

/// One slit per nonzero cell, centered in its lattice cell.
pub fn encode_hologram(field: &ComplexField) -> Result<SlitLayout> {
    let (rows, cols) = field.dims();
    let p = LATTICE_PERIOD_NM;
    let mut layout = SlitLayout::empty(rows, cols);
    for ((r, c), z) in field.amplitudes.indexed_iter() {
        let a = z.norm();
        if a.is_nan() || a > 1.0 + 1e-12 {
            return Err(Error::OutOfRange {
                name: "hologram amplitude",
                value: a,
                range: "[0, 1]",
            });
        }
        if a == 0.0 {
            continue;
        }
        let class = quantize_phase(z.arg());
        layout.slits.push(Slit {
            x_nm: (c as f64 + 0.5) * p,
            y_nm: (r as f64 + 0.5) * p,
            orientation: encoding_orientation(a, class),
            length_nm: slit_length_for_class(class),
            width_nm: SLIT_WIDTH_NM,
            phase_class: class,
        });
    }
    Ok(layout)
}

/// Field behind `layout` for input polarization `input` seen through a linear
/// analyzer: per cell `<analyzer|J|input>`, zero where no slit sits.
pub fn synthesize_field(
    layout: &SlitLayout,
    input: &PolVector,
    analyzer: PolarizerAngle,
    wavelength: f64,
) -> Result<ComplexField> {
    let (rows, cols) = (layout.rows, layout.cols);
    let bra = PolVector::linear(analyzer);
    let mut amplitudes = Array2::zeros((rows, cols));
    for s in &layout.slits {
        let r = (s.y_nm / layout.period_nm).floor();
        let c = (s.x_nm / layout.period_nm).floor();
        if !(r >= 0.0 && c >= 0.0 && (r as usize) < rows && (c as usize) < cols) {
            return Err(Error::PixelOutOfRange {
                row: r.max(0.0) as usize,
                col: c.max(0.0) as usize,
                rows,
                cols,
            });
        }
        amplitudes[(r as usize, c as usize)] += slit_jones(s.orientation, s.phase_class)?.element(&bra, input);
    }
    Ok(ComplexField {
        amplitudes,
        pitch: layout.period_nm * 1e-9,
        wavelength,
    })
}

/// Pearson correlation of two equally sized images.
pub fn scramble_metric(a: &IntensityImage, b: &IntensityImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    let n = a.values.len() as f64;
    let ma = a.values.sum() / n;
    let mb = b.values.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    Zip::from(&a.values).and(&b.values).for_each(|&x, &y| {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    });
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Outcome of designing, encoding and imaging a hologram in both polarization
/// configurations.
#[derive(Debug, Clone)]
pub struct HologramRun {
    pub layout: SlitLayout,
    /// H input, V analyzer.
    pub designed: ComplexField,
    /// V input, V analyzer.
    pub scrambled: ComplexField,
    pub designed_correlation: f64,
    pub scrambled_correlation: f64,
}

pub fn run_hologram(target: &IntensityImage, design: &HologramDesign) -> Result<HologramRun> {
    let holo = design_hologram(target, design)?;
    let layout = encode_hologram(&holo)?;
    let plan = design.plan();
    let image = |input: PolVector| -> Result<ComplexField> {
        let near = synthesize_field(&layout, &input, PolarizerAngle(0.0), design.wavelength)?;
        angular_spectrum_propagate(&near, &plan)
    };
    let designed = image(PolVector::horizontal())?;
    let scrambled = image(PolVector::vertical())?;
    let designed_correlation = scramble_metric(&designed.intensity(), target)?;
    let scrambled_correlation = scramble_metric(&scrambled.intensity(), target)?;
    Ok(HologramRun {
        layout,
        designed,
        scrambled,
        designed_correlation,
        scrambled_correlation,
    })
}

static TEST_TARGET: &[u8] = include_bytes!("../assets/test_target.pgm");

/// Bundled 128×128 binary test target (ring, cross and block).
pub fn bundled_test_image() -> IntensityImage {
    let pgm = Pgm::decode(TEST_TARGET).expect("bundled image is valid");
    IntensityImage {
        values: pgm.to_unit(),
        pitch: LATTICE_PERIOD_NM * 1e-9,
    }
}

/// Central `rows × cols` window of `field`.
pub fn crop_center(field: &ComplexField, rows: usize, cols: usize) -> ComplexField {
    let (r, c) = field.dims();
    let (r0, c0) = ((r - rows.min(r)) / 2, (c - cols.min(c)) / 2);
    ComplexField {
        amplitudes: field.amplitudes.slice(s![r0..r0 + rows.min(r), c0..c0 + cols.min(c)]).to_owned(),
        ..*field
    }
}
