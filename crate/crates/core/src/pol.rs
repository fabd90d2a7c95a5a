//! Two-photon polarization algebra.
//!
//! Single-photon operators act on the ordered basis `(V, H)`. Linear polarization
//! angles are measured from the V axis, so the analyzer ket at angle `phi` is
//! `cos(phi)|V> + sin(phi)|H>`. Two-photon operators act on `herald ⊗ signal`
//! with basis order `(VV, VH, HV, HH)`.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

use crate::error::{check_unit_interval, Error, Result};

/// Tolerance used for Hermiticity and trace checks.
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a density matrix.
pub const PSD_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Linear polarizer orientation in radians, measured from the V axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizerAngle(pub f64);

impl PolarizerAngle {
    pub fn from_degrees(deg: f64) -> Self {
        Self(deg.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// The orthogonal analyzer orientation.
    pub fn orthogonal(self) -> Self {
        Self(self.0 + FRAC_PI_2)
    }
}

/// Single-photon polarization ket in the `(V, H)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolVector(pub Vector2<Complex64>);

impl PolVector {
    pub fn vertical() -> Self {
        Self(Vector2::new(ONE, ZERO))
    }

    pub fn horizontal() -> Self {
        Self(Vector2::new(ZERO, ONE))
    }

    /// Linear polarization at `angle` from V.
    pub fn linear(angle: PolarizerAngle) -> Self {
        let (s, c) = angle.0.sin_cos();
        Self(Vector2::new(re(c), re(s)))
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Outer product `|self><self|`.
    pub fn outer(&self) -> SingleOperator {
        SingleOperator(self.0 * self.0.adjoint())
    }
}

/// A 2×2 operator on one photon's polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleOperator(pub Matrix2<Complex64>);

impl SingleOperator {
    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn zero() -> Self {
        Self(Matrix2::zeros())
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self(self.0 * re(k))
    }

    /// Expectation `Tr(self · other)`, real part.
    pub fn trace_with(&self, other: &SingleOperator) -> f64 {
        (self.0 * other.0).trace().re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.0 - self.0.adjoint()).iter().all(|z| z.norm() <= tol)
    }

    /// Eigenvalues in ascending order; only meaningful for Hermitian operators.
    pub fn hermitian_eigenvalues(&self) -> [f64; 2] {
        let ev = self.0.symmetric_eigenvalues();
        let (a, b) = (ev[0], ev[1]);
        if a <= b {
            [a, b]
        } else {
            [b, a]
        }
    }

    /// Matrix element `<bra| self |ket>`.
    pub fn element(&self, bra: &PolVector, ket: &PolVector) -> Complex64 {
        (bra.0.adjoint() * self.0 * ket.0)[(0, 0)]
    }
}

impl std::ops::Add for SingleOperator {
    type Output = SingleOperator;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

/// A 4×4 operator on the herald ⊗ signal pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOperator(pub Matrix4<Complex64>);

impl PairOperator {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }
}

/// Two-photon polarization density matrix over `(VV, VH, HV, HH)` of (herald, signal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhotonState {
    rho: Matrix4<Complex64>,
}

impl TwoPhotonState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(rho: Matrix4<Complex64>) -> Result<Self> {
        let herm_err = (rho - rho.adjoint())
            .iter()
            .fold(0.0_f64, |m, z| m.max(z.norm()));
        if herm_err > ALGEBRA_TOL {
            return Err(Error::OutOfRange {
                name: "hermiticity error",
                value: herm_err,
                range: "[0, 1e-12]",
            });
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > ALGEBRA_TOL {
            return Err(Error::OutOfRange {
                name: "trace",
                value: tr.re,
                range: "1 ± 1e-12",
            });
        }
        let min_ev = rho
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        if min_ev < -PSD_TOL {
            return Err(Error::OutOfRange {
                name: "minimum eigenvalue",
                value: min_ev,
                range: ">= -1e-10",
            });
        }
        Ok(Self { rho })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.rho
    }

    /// `Tr(rho²)`.
    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.rho.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `<a ⊗ b| rho |a ⊗ b>` for product kets (herald `a`, signal `b`).
    pub fn product_population(&self, herald: &PolVector, signal: &PolVector) -> f64 {
        let ket = herald.0.kronecker(&signal.0);
        (ket.adjoint() * self.rho * ket)[(0, 0)].re
    }

    /// Reduced state of the signal photon with no herald filtering.
    pub fn signal_marginal(&self) -> SingleOperator {
        partial_trace_herald(&self.rho)
    }
}

/// Convex-mixture knobs: `lambda` weights pure-state coherence, `v` weights the
/// entangled/correlated part against white noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateModel {
    lambda: f64,
    v: f64,
}

impl StateModel {
    pub fn new(lambda: f64, v: f64) -> Result<Self> {
        check_unit_interval("lambda", lambda)?;
        check_unit_interval("v", v)?;
        Ok(Self { lambda, v })
    }

    pub const PURE: StateModel = StateModel {
        lambda: 1.0,
        v: 1.0,
    };
    pub const MIXED: StateModel = StateModel {
        lambda: 0.0,
        v: 1.0,
    };

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn state(&self) -> TwoPhotonState {
        model_state(*self)
    }
}

/// Rank-1 analyzer projector `|phi><phi|` with `|phi> = cos(phi)|V> + sin(phi)|H>`.
pub fn projector(phi: PolarizerAngle) -> SingleOperator {
    PolVector::linear(phi).outer()
}

/// Dichotomic analyzer observable `chi(theta) - chi(theta + 90°)`.
pub fn analyzer_observable(theta: PolarizerAngle) -> SingleOperator {
    let (s, c) = (2.0 * theta.0).sin_cos();
    SingleOperator(Matrix2::new(re(c), re(s), re(s), re(-c)))
}

/// Basis index of `|herald, signal>` with `V = 0`, `H = 1`.
const fn idx(herald_h: bool, signal_h: bool) -> usize {
    2 * herald_h as usize + signal_h as usize
}

const HV: usize = idx(true, false);
const VH: usize = idx(false, true);

/// Classically correlated mixture `½|H_h V_s><H_h V_s| + ½|V_h H_s><V_h H_s|`.
pub fn mixed_state() -> TwoPhotonState {
    let mut rho = Matrix4::zeros();
    rho[(HV, HV)] = re(0.5);
    rho[(VH, VH)] = re(0.5);
    TwoPhotonState { rho }
}

/// Singlet `(|H_h V_s> - |V_h H_s>)/√2`.
pub fn pure_state() -> TwoPhotonState {
    let mut rho = Matrix4::zeros();
    rho[(HV, HV)] = re(0.5);
    rho[(VH, VH)] = re(0.5);
    rho[(HV, VH)] = re(-0.5);
    rho[(VH, HV)] = re(-0.5);
    TwoPhotonState { rho }
}

/// `v·[λ·ρ_pure + (1−λ)·ρ_mixed] + (1−v)·I/4`.
pub fn model_state(m: StateModel) -> TwoPhotonState {
    let correlated = pure_state().rho * re(m.lambda) + mixed_state().rho * re(1.0 - m.lambda);
    let rho = correlated * re(m.v) + Matrix4::identity() * re((1.0 - m.v) / 4.0);
    TwoPhotonState { rho }
}

pub fn tensor(herald: &SingleOperator, signal: &SingleOperator) -> PairOperator {
    PairOperator(herald.0.kronecker(&signal.0))
}

/// `Tr(rho · op)`, real part. The imaginary part vanishes for Hermitian `op`.
pub fn trace_expectation(rho: &TwoPhotonState, op: &PairOperator) -> f64 {
    (rho.rho * op.0).trace().re
}

fn partial_trace_herald(m: &Matrix4<Complex64>) -> SingleOperator {
    let mut out = Matrix2::zeros();
    for s in 0..2 {
        for t in 0..2 {
            out[(s, t)] = m[(s, t)] + m[(2 + s, 2 + t)];
        }
    }
    SingleOperator(out)
}

/// Unnormalized signal state after the herald passes an analyzer at `phi`:
/// `Tr_h[(chi(phi) ⊗ 1) rho]`. Its trace is the herald pass probability.
pub fn heralded_signal_state(rho: &TwoPhotonState, phi: PolarizerAngle) -> SingleOperator {
    let filter = tensor(&projector(phi), &SingleOperator::identity());
    partial_trace_herald(&(filter.0 * rho.rho))
}
