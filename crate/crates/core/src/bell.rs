//! CHSH correlations, Bell-parameter optimization and state-model calibration.

use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::montecarlo::{sample_analyzer_counts, AnalyzerCounts};
use crate::pol::{analyzer_observable, tensor, trace_expectation, PolarizerAngle, StateModel, TwoPhotonState};

/// Quantum bound on |S|.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// Analyzer angles: herald pair `a`, `a_prime`; signal pair `b`, `b_prime`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshSetting {
    pub a: PolarizerAngle,
    pub a_prime: PolarizerAngle,
    pub b: PolarizerAngle,
    pub b_prime: PolarizerAngle,
}

impl ChshSetting {
    /// `a = 0°, a' = 45°, b = 22.5°, b' = 67.5°`.
    pub fn canonical() -> Self {
        Self {
            a: PolarizerAngle(0.0),
            a_prime: PolarizerAngle(FRAC_PI_4),
            b: PolarizerAngle(FRAC_PI_8),
            b_prime: PolarizerAngle(3.0 * FRAC_PI_8),
        }
    }

    /// The four `(herald, signal)` pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(PolarizerAngle, PolarizerAngle); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// `E(a, b) = Tr[rho σ(a) ⊗ σ(b)]` with `σ(θ) = chi(θ) − chi(θ + 90°)`.
pub fn correlation(rho: &TwoPhotonState, a: PolarizerAngle, b: PolarizerAngle) -> f64 {
    trace_expectation(rho, &tensor(&analyzer_observable(a), &analyzer_observable(b)))
}

/// `S = E(a,b) − E(a,b') + E(a',b) + E(a',b')`.
pub fn chsh_s(rho: &TwoPhotonState, s: &ChshSetting) -> f64 {
    let [e1, e2, e3, e4] = s.pairs().map(|(a, b)| correlation(rho, a, b));
    e1 - e2 + e3 + e4
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshOptimum {
    /// Largest attainable S (≥ 0); the minimum is its negative.
    pub s: f64,
    pub setting: ChshSetting,
}

/// Correlations are bilinear in `(cos2θ, sin2θ)` of each analyzer, so four
/// traces fix `E` for every angle pair.
struct CorrelationTensor([[f64; 2]; 2]);

impl CorrelationTensor {
    fn of(rho: &TwoPhotonState) -> Self {
        let axes = [PolarizerAngle(0.0), PolarizerAngle(FRAC_PI_4)];
        let mut t = [[0.0; 2]; 2];
        for (i, &a) in axes.iter().enumerate() {
            for (j, &b) in axes.iter().enumerate() {
                t[i][j] = correlation(rho, a, b);
            }
        }
        Self(t)
    }

    fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let t = &self.0;
        [t[0][0] * v[0] + t[0][1] * v[1], t[1][0] * v[0] + t[1][1] * v[1]]
    }

    /// S maximized over the herald angles for fixed signal angles; also returns
    /// the maximizing `(a, a')`.
    fn best_over_herald(&self, b: f64, bp: f64) -> (f64, f64, f64) {
        let db = [(2.0 * b).cos(), (2.0 * b).sin()];
        let dbp = [(2.0 * bp).cos(), (2.0 * bp).sin()];
        let w1 = self.apply([db[0] - dbp[0], db[1] - dbp[1]]);
        let w2 = self.apply([db[0] + dbp[0], db[1] + dbp[1]]);
        let s = w1[0].hypot(w1[1]) + w2[0].hypot(w2[1]);
        (s, 0.5 * w1[1].atan2(w1[0]), 0.5 * w2[1].atan2(w2[0]))
    }
}

/// Grid step of the signal-angle search, radians.
pub const GRID_STEP: f64 = 0.5 * PI / 180.0;

/// Maximizes S over all analyzer settings: herald angles analytically, signal
/// angles by a 0.5° grid followed by local pattern-search refinement.
pub fn max_chsh(rho: &TwoPhotonState) -> ChshOptimum {
    let t = CorrelationTensor::of(rho);
    let n = (PI / GRID_STEP).round() as usize;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..n {
        let b = i as f64 * GRID_STEP;
        for j in 0..n {
            let bp = j as f64 * GRID_STEP;
            let (s, _, _) = t.best_over_herald(b, bp);
            if s > best.0 {
                best = (s, b, bp);
            }
        }
    }
    let (mut s, mut b, mut bp) = best;
    let mut step = 0.5 * GRID_STEP;
    while step > 1e-12 {
        let mut moved = false;
        for (db, dbp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let (cand, _, _) = t.best_over_herald(b + db, bp + dbp);
            if cand > s {
                (s, b, bp) = (cand, b + db, bp + dbp);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    let (s, a, ap) = t.best_over_herald(b, bp);
    ChshOptimum {
        s,
        setting: ChshSetting {
            a: PolarizerAngle(a),
            a_prime: PolarizerAngle(ap),
            b: PolarizerAngle(b),
            b_prime: PolarizerAngle(bp),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub model: StateModel,
    pub achieved_s: f64,
}

/// Finds the state model whose maximal S equals `target`.
///
/// Targets above 2 keep `v = 1` and bisect the coherence `lambda`; targets at or
/// below 2 keep `lambda = 0` and bisect the white-noise weight `v`.
pub fn calibrate_model(target: f64) -> Result<Calibration> {
    if !(target > 0.0 && target <= TSIRELSON + 1e-12) {
        return Err(Error::UnreachableTarget(target));
    }
    let entangled = target > 2.0;
    let model = |x: f64| {
        if entangled {
            StateModel::new(x, 1.0)
        } else {
            StateModel::new(0.0, x)
        }
        .expect("bisection stays in [0, 1]")
    };
    let s_of = |x: f64| max_chsh(&model(x).state()).s;

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let s_hi = s_of(hi);
    if (s_hi - target).abs() <= 1e-12 {
        return Ok(Calibration {
            model: model(hi),
            achieved_s: s_hi,
        });
    }
    if s_hi < target {
        return Err(Error::UnreachableTarget(target));
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if s_of(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let x = 0.5 * (lo + hi);
    Ok(Calibration {
        model: model(x),
        achieved_s: s_of(x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshEstimate {
    pub s: f64,
    pub stderr: f64,
    pub correlations: [f64; 4],
}

/// S from analyzer counts at `(a,b), (a,b'), (a',b), (a',b')`.
pub fn chsh_from_counts(counts: &[AnalyzerCounts; 4]) -> Result<ChshEstimate> {
    let mut correlations = [0.0; 4];
    let mut var = 0.0;
    for (k, c) in counts.iter().enumerate() {
        let n = c.total();
        if n == 0 {
            return Err(Error::NoCounts("empty analyzer setting"));
        }
        let e = ((c.pp + c.mm) as f64 - (c.pm + c.mp) as f64) / n as f64;
        correlations[k] = e;
        var += (1.0 - e * e) / n as f64;
    }
    let [e1, e2, e3, e4] = correlations;
    Ok(ChshEstimate {
        s: e1 - e2 + e3 + e4,
        stderr: var.sqrt(),
        correlations,
    })
}

/// Simulates `pairs` detections at each of the four settings and estimates S.
pub fn measure_chsh(
    rho: &TwoPhotonState,
    setting: &ChshSetting,
    pairs: u64,
    seed: u64,
) -> Result<ChshEstimate> {
    let pairs_of = setting.pairs();
    let counts: [AnalyzerCounts; 4] =
        std::array::from_fn(|k| sample_analyzer_counts(rho, pairs_of[k].0, pairs_of[k].1, pairs, seed, k as u64));
    chsh_from_counts(&counts)
}
