//! Analytic heralded images and pattern visibility.
//!
//! The expected image is `Tr(rho · chi_h(phi) ⊗ E_pixel)` with `E_pixel` the
//! metasurface POVM element. Region intensities are per-pattern means, which
//! makes the two pattern intensities sum to the heralded signal trace (½ for a
//! fully transmitting binary device).

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::fmt::format_sig;
use crate::metasurface::{measurement_operator, AmplitudeMask, MetasurfaceAngle};
use crate::pol::{
    heralded_signal_state, projector, tensor, trace_expectation, PolarizerAngle, StateModel,
    TwoPhotonState,
};

/// Per-pixel coincidence probability per detected pair, for a photon landing
/// on that pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub values: Array2<f64>,
    pub pitch: f64,
}

impl IntensityImage {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Heralded-signal transmission probabilities through the two pattern analyzers.
pub(crate) fn pattern_transmissions(
    rho: &TwoPhotonState,
    phi: PolarizerAngle,
    xi: MetasurfaceAngle,
) -> (f64, f64) {
    let sigma = heralded_signal_state(rho, phi);
    let axis = PolarizerAngle(xi.radians());
    let ta = sigma.trace_with(&projector(axis)).max(0.0);
    let tb = sigma.trace_with(&projector(axis.orthogonal())).max(0.0);
    (ta, tb)
}

/// Expected coincidence image for one herald analyzer and metasurface angle.
pub fn expected_image(
    rho: &TwoPhotonState,
    phi: PolarizerAngle,
    mask: &AmplitudeMask,
    xi: MetasurfaceAngle,
) -> IntensityImage {
    let (ta, tb) = pattern_transmissions(rho, phi, xi);
    let mut values = Array2::zeros(mask.dims());
    Zip::from(&mut values)
        .and(mask.theta_a())
        .and(mask.theta_b())
        .par_for_each(|v, &a, &b| *v = a * ta + b * tb);
    IntensityImage {
        values,
        pitch: mask.pitch(),
    }
}

/// One pixel of the expected image evaluated as a full two-photon trace.
pub fn pixel_expectation(
    rho: &TwoPhotonState,
    phi: PolarizerAngle,
    mask: &AmplitudeMask,
    pixel: (usize, usize),
    xi: MetasurfaceAngle,
) -> Result<f64> {
    let e = measurement_operator(mask, pixel, xi)?;
    Ok(trace_expectation(rho, &tensor(&projector(phi), &e)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIntensities {
    pub triangle: f64,
    pub star: f64,
}

impl RegionIntensities {
    pub fn visibility(&self) -> Result<f64> {
        visibility(self.triangle, self.star)
    }
}

/// Neumaier summation.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Mean image value over each pattern's support (pixels with nonzero
/// transmittance). An empty pattern contributes zero.
pub fn region_intensities(img: &IntensityImage, mask: &AmplitudeMask) -> Result<RegionIntensities> {
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            got: img.dims(),
        });
    }
    let mut sums = [CompensatedSum::default(); 2];
    let mut counts = [0usize; 2];
    Zip::from(&img.values)
        .and(mask.theta_a())
        .and(mask.theta_b())
        .for_each(|&v, &a, &b| {
            if a > 0.0 {
                sums[0].add(v);
                counts[0] += 1;
            }
            if b > 0.0 {
                sums[1].add(v);
                counts[1] += 1;
            }
        });
    let mean = |i: usize| if counts[i] == 0 { 0.0 } else { sums[i].value() / counts[i] as f64 };
    Ok(RegionIntensities {
        triangle: mean(0),
        star: mean(1),
    })
}

/// `(I_triangle − I_star) / (I_triangle + I_star)`.
pub fn visibility(triangle: f64, star: f64) -> Result<f64> {
    let total = triangle + star;
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::UndefinedVisibility);
    }
    Ok(((triangle - star) / total).clamp(-1.0, 1.0))
}

/// Visibility predicted by the state model:
/// `v·[(2cos²φ − 1)(2sin²ξ − 1) − λ·sin2φ·sin2ξ]`.
pub fn visibility_closed_form(model: StateModel, phi: PolarizerAngle, xi: MetasurfaceAngle) -> f64 {
    let (phi, xi) = (phi.radians(), xi.radians());
    let mixed = (2.0 * phi.cos().powi(2) - 1.0) * (2.0 * xi.sin().powi(2) - 1.0);
    model.v() * (mixed - model.lambda() * (2.0 * phi).sin() * (2.0 * xi).sin())
}

/// Full-pipeline visibility for one configuration.
pub fn pipeline_visibility(
    rho: &TwoPhotonState,
    phi: PolarizerAngle,
    mask: &AmplitudeMask,
    xi: MetasurfaceAngle,
) -> Result<f64> {
    let img = expected_image(rho, phi, mask, xi);
    region_intensities(&img, mask)?.visibility()
}

/// Visibility of the triangle image versus herald analyzer angle.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityCurve {
    /// `(phi radians, visibility)`
    pub points: Vec<(f64, f64)>,
    pub xi: MetasurfaceAngle,
    pub model: StateModel,
}

impl VisibilityCurve {
    /// CSV with header `phi_deg,visibility`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi_deg,visibility\n");
        for &(phi, v) in &self.points {
            out.push_str(&format_sig(phi.to_degrees(), 9));
            out.push(',');
            out.push_str(&format_sig(v, 9));
            out.push('\n');
        }
        out
    }
}

/// Evenly spaced analyzer angles in degrees, inclusive of `stop` when it lands on
/// the grid.
pub fn degree_grid(start: f64, stop: f64, step: f64) -> Vec<PolarizerAngle> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| PolarizerAngle::from_degrees(start + i as f64 * step))
        .collect()
}

/// Runs the image → region → visibility pipeline over `phi_grid`.
pub fn sweep_polarizer(
    model: StateModel,
    xi: MetasurfaceAngle,
    phi_grid: &[PolarizerAngle],
    mask: &AmplitudeMask,
) -> Result<VisibilityCurve> {
    if phi_grid.is_empty() {
        return Err(Error::NoCounts("empty polarizer grid"));
    }
    let rho = model.state();
    let points = phi_grid
        .iter()
        .map(|&phi| Ok((phi.radians(), pipeline_visibility(&rho, phi, mask, xi)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VisibilityCurve { points, xi, model })
}
