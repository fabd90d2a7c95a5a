//! Metasurface measurement operators, the star/triangle test device, and the
//! slit-antenna lattice that realizes it.
//!
//! A metasurface pixel carries two intensity transmittances: `theta_a` for the
//! pattern whose slits pass polarization along the metasurface axis `xi`, and
//! `theta_b` for the orthogonal pattern. For the star/triangle device pattern A
//! is the triangle and pattern B is the star.
//!
//! Slit orientation is the angle of the slit's long axis measured from the V
//! axis, in the same sense as analyzer angles. An ideal slit transmits only the
//! field component across its short (TM) axis, which lies at `orientation + 90°`.

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pol::{projector, PolarizerAngle, SingleOperator};

/// Lattice period of the slit arrays, nm.
pub const LATTICE_PERIOD_NM: f64 = 300.0;
/// Slit width shared by every antenna, nm.
pub const SLIT_WIDTH_NM: f64 = 50.0;
/// Length of the uniform star/triangle slits, nm.
pub const UNIFORM_SLIT_LENGTH_NM: f64 = 190.0;
/// Slit lengths for the four base phase steps 0, π/4, π/2, 3π/4.
pub const PHASE_SLIT_LENGTHS_NM: [f64; 4] = [170.0, 200.0, 240.0, 280.0];
/// Smallest frame that can hold both star and triangle.
pub const MIN_MASK_DIM: usize = 64;

/// Orientation of the metasurface axes relative to the photon H/V axes, in [0, π).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetasurfaceAngle(f64);

impl MetasurfaceAngle {
    /// Wraps any finite angle into [0, π).
    pub fn new(xi: f64) -> Self {
        let w = xi.rem_euclid(PI);
        // rem_euclid can round up to exactly π for tiny negative inputs
        Self(if w >= PI { 0.0 } else { w })
    }

    pub fn from_degrees(deg: f64) -> Self {
        Self::new(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

/// Pair of per-pixel intensity transmittance grids with a shared pixel pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeMask {
    theta_a: Array2<f64>,
    theta_b: Array2<f64>,
    pitch: f64,
}

impl AmplitudeMask {
    pub fn new(theta_a: Array2<f64>, theta_b: Array2<f64>, pitch: f64) -> Result<Self> {
        if theta_a.dim() != theta_b.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta_a.dim(),
                got: theta_b.dim(),
            });
        }
        for &t in theta_a.iter().chain(theta_b.iter()) {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::OutOfRange {
                    name: "transmittance",
                    value: t,
                    range: "[0, 1]",
                });
            }
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::OutOfRange {
                name: "pitch",
                value: pitch,
                range: "(0, inf)",
            });
        }
        Ok(Self {
            theta_a,
            theta_b,
            pitch,
        })
    }

    /// A mask with no transmitting pixels.
    pub fn dark(rows: usize, cols: usize, pitch: f64) -> Self {
        Self {
            theta_a: Array2::zeros((rows, cols)),
            theta_b: Array2::zeros((rows, cols)),
            pitch,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.theta_a.dim()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn theta_a(&self) -> &Array2<f64> {
        &self.theta_a
    }

    pub fn theta_b(&self) -> &Array2<f64> {
        &self.theta_b
    }

    /// Exchanges the two patterns.
    pub fn swapped(&self) -> Self {
        Self {
            theta_a: self.theta_b.clone(),
            theta_b: self.theta_a.clone(),
            pitch: self.pitch,
        }
    }

    /// Number of pixels with nonzero transmittance in each pattern.
    pub fn support_counts(&self) -> (usize, usize) {
        let count = |g: &Array2<f64>| g.iter().filter(|&&t| t > 0.0).count();
        (count(&self.theta_a), count(&self.theta_b))
    }

    /// Every value is 0 or 1 and no pixel belongs to both patterns.
    pub fn check_binary_disjoint(&self) -> Result<()> {
        for ((r, c), &a) in self.theta_a.indexed_iter() {
            let b = self.theta_b[(r, c)];
            let binary = (a == 0.0 || a == 1.0) && (b == 0.0 || b == 1.0);
            if !binary || a * b != 0.0 {
                return Err(Error::NotBinaryDisjoint { row: r, col: c });
            }
        }
        Ok(())
    }
}

/// Geometry of the star/triangle test device.
///
/// The triangle (pattern A) sits in the left part of the frame and the
/// five-pointed star (pattern B) in the right part; both have circumradius
/// `size * min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StarTriangle {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub size: f64,
    pub swap: bool,
}

impl StarTriangle {
    pub fn new(rows: usize, cols: usize, pitch: f64) -> Self {
        Self {
            rows,
            cols,
            pitch,
            size: 0.2,
            swap: false,
        }
    }

    pub fn swap(mut self, swap: bool) -> Self {
        self.swap = swap;
        self
    }

    pub fn render(&self) -> Result<AmplitudeMask> {
        if self.rows < MIN_MASK_DIM || self.cols < MIN_MASK_DIM {
            return Err(Error::TooSmall {
                rows: self.rows,
                cols: self.cols,
                min: MIN_MASK_DIM,
            });
        }
        let (h, w) = (self.rows as f64, self.cols as f64);
        let radius = self.size * h.min(w);
        // vertices in (x, y) pixel units with y pointing down
        let triangle: Vec<(f64, f64)> = (0..3)
            .map(|k| {
                let a = -FRAC_PI_2 + k as f64 * 2.0 * PI / 3.0;
                (0.28 * w + radius * a.cos(), 0.5 * h + radius * a.sin())
            })
            .collect();
        let inner = radius * 0.381_966_011_250_105_1;
        let star: Vec<(f64, f64)> = (0..10)
            .map(|k| {
                let a = -FRAC_PI_2 + k as f64 * PI / 5.0;
                let r = if k % 2 == 0 { radius } else { inner };
                (0.72 * w + r * a.cos(), 0.52 * h + r * a.sin())
            })
            .collect();

        let mut tri = Array2::zeros((self.rows, self.cols));
        let mut st = Array2::zeros((self.rows, self.cols));
        for ((r, c), t) in tri.indexed_iter_mut() {
            let p = (c as f64 + 0.5, r as f64 + 0.5);
            if point_in_polygon(p, &triangle) {
                *t = 1.0;
            } else if point_in_polygon(p, &star) {
                st[(r, c)] = 1.0;
            }
        }
        let mask = AmplitudeMask::new(tri, st, self.pitch)?;
        let (na, nb) = mask.support_counts();
        if na == 0 || nb == 0 {
            return Err(Error::TooSmall {
                rows: self.rows,
                cols: self.cols,
                min: MIN_MASK_DIM,
            });
        }
        Ok(if self.swap { mask.swapped() } else { mask })
    }
}

/// Star/triangle device with default geometry.
pub fn generate_star_triangle_mask(dims: (usize, usize), pitch: f64) -> Result<AmplitudeMask> {
    StarTriangle::new(dims.0, dims.1, pitch).render()
}

// even-odd crossing rule
fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// POVM element of one pixel: `theta_a·chi(xi) + theta_b·chi(xi + 90°)`.
pub fn measurement_operator(
    mask: &AmplitudeMask,
    pixel: (usize, usize),
    xi: MetasurfaceAngle,
) -> Result<SingleOperator> {
    let (rows, cols) = mask.dims();
    let (row, col) = pixel;
    if row >= rows || col >= cols {
        return Err(Error::PixelOutOfRange {
            row,
            col,
            rows,
            cols,
        });
    }
    let axis = PolarizerAngle(xi.radians());
    Ok(projector(axis).scale(mask.theta_a[pixel]) + projector(axis.orthogonal()).scale(mask.theta_b[pixel]))
}

/// One slit antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slit {
    pub x_nm: f64,
    pub y_nm: f64,
    /// Long-axis angle from V, radians.
    pub orientation: f64,
    pub length_nm: f64,
    pub width_nm: f64,
    pub phase_class: u8,
}

impl Slit {
    /// Half extents of the axis-aligned bounding box, with x to the right and y down
    /// (along V).
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.orientation.sin_cos();
        let (s, c) = (s.abs(), c.abs());
        (
            0.5 * (self.length_nm * s + self.width_nm * c),
            0.5 * (self.length_nm * c + self.width_nm * s),
        )
    }

    pub fn overlaps(&self, other: &Slit) -> bool {
        let (ax, ay) = self.half_extents();
        let (bx, by) = other.half_extents();
        (self.x_nm - other.x_nm).abs() < ax + bx && (self.y_nm - other.y_nm).abs() < ay + by
    }

    pub fn jones(&self) -> Result<SingleOperator> {
        slit_jones(self.orientation, self.phase_class)
    }
}

/// Slits on a square lattice covering a `rows × cols` cell frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SlitLayout {
    pub period_nm: f64,
    pub rows: usize,
    pub cols: usize,
    pub slits: Vec<Slit>,
}

impl SlitLayout {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            period_nm: LATTICE_PERIOD_NM,
            rows,
            cols,
            slits: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.slits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slits.is_empty()
    }

    /// First overlapping pair of slit bounding boxes, if any.
    pub fn find_overlap(&self) -> Option<(usize, usize)> {
        let max_hx = self
            .slits
            .iter()
            .map(|s| s.half_extents().0)
            .fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..self.slits.len()).collect();
        order.sort_by(|&a, &b| self.slits[a].x_nm.total_cmp(&self.slits[b].x_nm));
        for (k, &i) in order.iter().enumerate() {
            let si = &self.slits[i];
            let reach = si.half_extents().0 + max_hx;
            for &j in &order[k + 1..] {
                let sj = &self.slits[j];
                if sj.x_nm - si.x_nm >= reach {
                    break;
                }
                if si.overlaps(sj) {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
        None
    }

    /// Grid cell of a slit, accounting for the half-period shift of pattern A.
    fn cell_of(&self, slit: &Slit, shifted: bool) -> Option<(usize, usize)> {
        let off = if shifted { 0.5 * self.period_nm } else { 0.0 };
        let c = ((slit.x_nm - off) / self.period_nm).round();
        let r = ((slit.y_nm - off) / self.period_nm).round();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Rebuilds the binary star/triangle mask from a lattice of axis-aligned slits.
    pub fn rasterize(&self, pitch: f64) -> Result<AmplitudeMask> {
        let mut a = Array2::zeros((self.rows, self.cols));
        let mut b = Array2::zeros((self.rows, self.cols));
        for (i, slit) in self.slits.iter().enumerate() {
            let o = slit.orientation.rem_euclid(PI);
            let bad = || Error::Parse {
                line: i + 1,
                msg: format!(
                    "slit at ({}, {}) nm does not sit on the star/triangle lattice",
                    slit.x_nm, slit.y_nm
                ),
            };
            // horizontal long axis passes V (pattern A); vertical passes H (pattern B)
            let pattern_a = if (o - FRAC_PI_2).abs() < 1e-9 {
                true
            } else if o < 1e-9 || (PI - o) < 1e-9 {
                false
            } else {
                return Err(bad());
            };
            let cell = self.cell_of(slit, pattern_a).ok_or_else(bad)?;
            if pattern_a {
                a[cell] = 1.0;
            } else {
                b[cell] = 1.0;
            }
        }
        AmplitudeMask::new(a, b, pitch)
    }

    /// Text export: `# period_nm=…`, `# rows=… cols=…`, then one
    /// `x_nm y_nm orientation_deg length_nm width_nm phase_class` line per slit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# period_nm={}", self.period_nm);
        let _ = writeln!(out, "# rows={} cols={}", self.rows, self.cols);
        for s in &self.slits {
            let _ = writeln!(
                out,
                "{} {} {} {} {} {}",
                s.x_nm,
                s.y_nm,
                s.orientation.to_degrees(),
                s.length_nm,
                s.width_nm,
                s.phase_class
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut period = None;
        let mut rows = None;
        let mut cols = None;
        let mut slits = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.split_whitespace() {
                    let Some((k, v)) = kv.split_once('=') else {
                        continue;
                    };
                    match k {
                        "period_nm" => {
                            period = Some(v.parse::<f64>().map_err(|e| perr(format!("period_nm: {e}")))?)
                        }
                        "rows" => rows = Some(v.parse::<usize>().map_err(|e| perr(format!("rows: {e}")))?),
                        "cols" => cols = Some(v.parse::<usize>().map_err(|e| perr(format!("cols: {e}")))?),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(perr(format!("expected 6 fields, found {}", fields.len())));
            }
            let num = |i: usize| {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| perr(format!("field {}: {e}", i + 1)))
            };
            let phase_class: u8 = fields[5]
                .parse()
                .map_err(|e| perr(format!("phase_class: {e}")))?;
            if phase_class > 7 {
                return Err(perr(format!("phase_class {phase_class} > 7")));
            }
            slits.push(Slit {
                x_nm: num(0)?,
                y_nm: num(1)?,
                orientation: num(2)?.to_radians(),
                length_nm: num(3)?,
                width_nm: num(4)?,
                phase_class,
            });
        }
        let period_nm = period.ok_or(Error::Parse {
            line: 1,
            msg: "missing `# period_nm=` header".into(),
        })?;
        let rows = rows.unwrap_or_else(|| infer_extent(&slits, period_nm, |s| s.y_nm));
        let cols = cols.unwrap_or_else(|| infer_extent(&slits, period_nm, |s| s.x_nm));
        Ok(Self {
            period_nm,
            rows,
            cols,
            slits,
        })
    }
}

fn infer_extent(slits: &[Slit], period: f64, coord: impl Fn(&Slit) -> f64) -> usize {
    slits
        .iter()
        .map(|s| (coord(s) / period).floor() as usize + 1)
        .max()
        .unwrap_or(0)
}

/// Lattice realization of a binary star/triangle mask.
///
/// Pattern B cells get a vertical slit (passes H) at the lattice point; pattern
/// A cells get a horizontal slit (passes V) on the lattice shifted by half a
/// period in both directions.
pub fn layout_star_triangle(mask: &AmplitudeMask) -> Result<SlitLayout> {
    mask.check_binary_disjoint()?;
    let (rows, cols) = mask.dims();
    let p = LATTICE_PERIOD_NM;
    let mut slits = Vec::new();
    for ((r, c), &a) in mask.theta_a().indexed_iter() {
        let b = mask.theta_b()[(r, c)];
        let (x0, y0) = (c as f64 * p, r as f64 * p);
        if a == 1.0 {
            slits.push(Slit {
                x_nm: x0 + 0.5 * p,
                y_nm: y0 + 0.5 * p,
                orientation: FRAC_PI_2,
                length_nm: UNIFORM_SLIT_LENGTH_NM,
                width_nm: SLIT_WIDTH_NM,
                phase_class: 0,
            });
        } else if b == 1.0 {
            slits.push(Slit {
                x_nm: x0,
                y_nm: y0,
                orientation: 0.0,
                length_nm: UNIFORM_SLIT_LENGTH_NM,
                width_nm: SLIT_WIDTH_NM,
                phase_class: 0,
            });
        }
    }
    let layout = SlitLayout {
        period_nm: p,
        rows,
        cols,
        slits,
    };
    if let Some((first, second)) = layout.find_overlap() {
        return Err(Error::SlitOverlap { first, second });
    }
    Ok(layout)
}

/// Slit length realizing a phase class.
pub fn slit_length_for_class(phase_class: u8) -> f64 {
    PHASE_SLIT_LENGTHS_NM[(phase_class % 4) as usize]
}

/// Jones matrix of an ideal slit with long axis at `orientation` (from V).
///
/// The slit length fixes a resonance phase of `(phase_class mod 4)·π/4`; the
/// field passes only along the TM axis at `orientation + 90°`. Cross-polarized
/// conversion `<V|J|H>` equals `−½·sin(2·orientation)` times the resonance phase,
/// so flipping the long axis between the second/fourth and first/third quadrants
/// adds the extra π of classes 4–7.
pub fn slit_jones(orientation: f64, phase_class: u8) -> Result<SingleOperator> {
    if phase_class > 7 {
        return Err(Error::InvalidPhaseClass(phase_class));
    }
    let phase = Complex64::from_polar(1.0, (phase_class % 4) as f64 * FRAC_PI_4);
    let tm = projector(PolarizerAngle(orientation + FRAC_PI_2));
    Ok(SingleOperator(tm.0 * phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pol::PolVector;
    use proptest::prelude::*;

    fn close(a: &SingleOperator, b: &SingleOperator, tol: f64) -> bool {
        (a.0 - b.0).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn star_triangle_mask_is_binary_disjoint_and_nonempty() {
        let m = generate_star_triangle_mask((256, 256), 3e-7).unwrap();
        m.check_binary_disjoint().unwrap();
        let (na, nb) = m.support_counts();
        assert!(na > 0 && nb > 0);
        for (a, b) in m.theta_a().iter().zip(m.theta_b().iter()) {
            assert!(a + b <= 1.0);
        }
    }

    #[test]
    fn swap_exchanges_patterns_and_keeps_area() {
        let m = generate_star_triangle_mask((256, 256), 3e-7).unwrap();
        let s = StarTriangle::new(256, 256, 3e-7).swap(true).render().unwrap();
        assert_eq!(m.theta_a(), s.theta_b());
        assert_eq!(m.theta_b(), s.theta_a());
        let (a, b) = m.support_counts();
        let (sa, sb) = s.support_counts();
        assert_eq!(a + b, sa + sb);
    }

    #[test]
    fn small_frames_are_rejected() {
        assert!(matches!(
            generate_star_triangle_mask((8, 8), 3e-7),
            Err(Error::TooSmall { .. })
        ));
        assert!(generate_star_triangle_mask((64, 64), 3e-7).is_ok());
        assert!(generate_star_triangle_mask((64, 200), 3e-7).is_ok());
    }

    #[test]
    fn metasurface_angle_wraps() {
        assert!((MetasurfaceAngle::from_degrees(225.0).degrees() - 45.0).abs() < 1e-12);
        assert!((MetasurfaceAngle::from_degrees(-45.0).degrees() - 135.0).abs() < 1e-12);
        assert_eq!(MetasurfaceAngle::new(-1e-300).radians(), 0.0);
    }

    #[test]
    fn measurement_operator_examples() {
        let m = generate_star_triangle_mask((128, 128), 3e-7).unwrap();
        let tri = m.theta_a().indexed_iter().find(|(_, &t)| t == 1.0).unwrap().0;
        let star = m.theta_b().indexed_iter().find(|(_, &t)| t == 1.0).unwrap().0;
        let v = PolVector::vertical().outer();
        assert!(close(
            &measurement_operator(&m, tri, MetasurfaceAngle(0.0)).unwrap(),
            &v,
            1e-15
        ));
        assert!(close(
            &measurement_operator(&m, (0, 0), MetasurfaceAngle(0.0)).unwrap(),
            &SingleOperator::zero(),
            0.0
        ));
        let ad = projector(PolarizerAngle::from_degrees(135.0));
        assert!(close(
            &measurement_operator(&m, star, MetasurfaceAngle(FRAC_PI_4)).unwrap(),
            &ad,
            1e-15
        ));
        assert!(matches!(
            measurement_operator(&m, (128, 0), MetasurfaceAngle(0.0)),
            Err(Error::PixelOutOfRange { .. })
        ));
    }

    #[test]
    fn full_transmission_pixel_is_identity() {
        let one = Array2::from_elem((2, 2), 1.0);
        let m = AmplitudeMask::new(one.clone(), one, 1.0).unwrap();
        for k in 0..100 {
            let xi = MetasurfaceAngle::new(k as f64 * 0.0314);
            let e = measurement_operator(&m, (1, 1), xi).unwrap();
            assert!(close(&e, &SingleOperator::identity(), 1e-12));
        }
    }

    #[test]
    fn mask_validation() {
        let a = Array2::from_elem((2, 2), 0.5);
        assert!(AmplitudeMask::new(a.clone(), Array2::zeros((2, 3)), 1.0).is_err());
        assert!(AmplitudeMask::new(a.clone(), Array2::from_elem((2, 2), 1.5), 1.0).is_err());
        assert!(AmplitudeMask::new(a.clone(), a.clone(), 0.0).is_err());
        let m = AmplitudeMask::new(a.clone(), Array2::zeros((2, 2)), 1.0).unwrap();
        assert!(m.check_binary_disjoint().is_err());
    }

    #[test]
    fn single_triangle_pixel_layout() {
        let mut a = Array2::zeros((4, 4));
        a[(0, 0)] = 1.0;
        let m = AmplitudeMask::new(a, Array2::zeros((4, 4)), 1.0).unwrap();
        let l = layout_star_triangle(&m).unwrap();
        assert_eq!(l.len(), 1);
        let s = l.slits[0];
        assert_eq!((s.x_nm, s.y_nm), (150.0, 150.0));
        assert_eq!(s.orientation, FRAC_PI_2);
        // passes V, the triangle's analyzer at xi = 0
        let j = s.jones().unwrap();
        assert!(close(&j, &PolVector::vertical().outer(), 1e-15));
    }

    #[test]
    fn empty_mask_gives_empty_layout() {
        let l = layout_star_triangle(&AmplitudeMask::dark(5, 5, 1.0)).unwrap();
        assert!(l.is_empty());
    }

    #[test]
    fn checkerboard_layout_has_no_overlaps() {
        let mut a = Array2::zeros((10, 10));
        let mut b = Array2::zeros((10, 10));
        for r in 0..10 {
            for c in 0..10 {
                if (r + c) % 2 == 0 {
                    a[(r, c)] = 1.0;
                } else {
                    b[(r, c)] = 1.0;
                }
            }
        }
        let m = AmplitudeMask::new(a, b, 1.0).unwrap();
        let l = layout_star_triangle(&m).unwrap();
        assert_eq!(l.len(), 100);
        // exhaustive pairwise check
        for i in 0..l.len() {
            for j in i + 1..l.len() {
                assert!(!l.slits[i].overlaps(&l.slits[j]), "{i} {j}");
            }
        }
        assert_eq!(l.find_overlap(), None);
    }

    #[test]
    fn overlap_detection_finds_collisions() {
        let mut l = SlitLayout::empty(2, 2);
        let s = Slit {
            x_nm: 0.0,
            y_nm: 0.0,
            orientation: 0.0,
            length_nm: 190.0,
            width_nm: 50.0,
            phase_class: 0,
        };
        l.slits.push(s);
        l.slits.push(Slit { x_nm: 40.0, ..s });
        assert_eq!(l.find_overlap(), Some((0, 1)));
        l.slits[1].x_nm = 60.0;
        assert_eq!(l.find_overlap(), None);
    }

    #[test]
    fn layout_round_trips_through_raster_and_text() {
        let m = generate_star_triangle_mask((96, 80), 3e-7).unwrap();
        let l = layout_star_triangle(&m).unwrap();
        assert_eq!(l.rasterize(m.pitch()).unwrap(), m);
        let back = SlitLayout::from_text(&l.to_text()).unwrap();
        assert_eq!(back, l);
        let (na, nb) = m.support_counts();
        assert_eq!(l.to_text().lines().filter(|s| !s.starts_with('#')).count(), na + nb);
    }

    #[test]
    fn layout_text_errors_carry_line_numbers() {
        let err = SlitLayout::from_text("# period_nm=300\n0 0 90 190 50\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(SlitLayout::from_text("0 0 90 190 50 0\n").is_err());
        assert!(SlitLayout::from_text("# period_nm=300\n0 0 90 190 50 9\n").is_err());
    }

    #[test]
    fn slit_jones_examples() {
        let (v, h) = (PolVector::vertical(), PolVector::horizontal());
        let j = slit_jones(FRAC_PI_4, 0).unwrap();
        assert!((j.element(&v, &h).norm() - 0.5).abs() < 1e-15);
        for class in 0..8 {
            let j = slit_jones(0.0, class).unwrap();
            assert!(j.element(&v, &h).norm() < 1e-15);
        }
        let x = slit_jones(22.5_f64.to_radians(), 4).unwrap().element(&v, &h);
        let expect = 0.5 * 45.0_f64.to_radians().sin();
        assert!((x.norm() - expect).abs() < 1e-12);
        assert!((x.arg().abs() - PI).abs() < 1e-12);
        assert!(matches!(slit_jones(0.0, 8), Err(Error::InvalidPhaseClass(8))));
    }

    #[test]
    fn slit_lengths_follow_phase_class() {
        assert_eq!(slit_length_for_class(0), 170.0);
        assert_eq!(slit_length_for_class(3), 280.0);
        assert_eq!(slit_length_for_class(6), 240.0);
    }

    proptest! {
        #[test]
        fn measurement_operator_is_bounded_povm(xi in 0.0..PI, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let m = AmplitudeMask::new(
                Array2::from_elem((1, 1), a),
                Array2::from_elem((1, 1), b),
                1.0,
            ).unwrap();
            let e = measurement_operator(&m, (0, 0), MetasurfaceAngle::new(xi)).unwrap();
            prop_assert!(e.is_hermitian(1e-12));
            let ev = e.hermitian_eigenvalues();
            prop_assert!(ev[0] >= -1e-12 && ev[1] <= 1.0 + 1e-12);
        }

        #[test]
        fn slit_jones_is_rank_one_with_unit_phase(theta in -PI..PI, class in 0u8..8) {
            let j = slit_jones(theta, class).unwrap();
            let sv = j.0.singular_values();
            let (lo, hi) = (sv[0].min(sv[1]), sv[0].max(sv[1]));
            prop_assert!(lo <= 1e-12);
            prop_assert!((hi - 1.0).abs() <= 1e-12);
            // cross-polarized magnitude follows the sin2θ rule
            let x = j.element(&PolVector::vertical(), &PolVector::horizontal());
            prop_assert!((x.norm() - 0.5 * (2.0 * theta).sin().abs()).abs() <= 1e-12);
        }
    }
}
