//! Photon-counting simulation of heralded coincidence imaging.
//!
//! Random streams are derived from the master seed by domain and block index,
//! so a run is bit-identical regardless of how many worker threads execute it.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::pattern_transmissions;
use crate::metasurface::{AmplitudeMask, MetasurfaceAngle};
use crate::pol::{projector, tensor, trace_expectation, PolarizerAngle, TwoPhotonState};

/// Pairs simulated per random stream.
pub const PAIRS_PER_BLOCK: u64 = 1 << 16;

const DOMAIN_PAIRS: u64 = 0x7061_6972;
const DOMAIN_BACKGROUND: u64 = 0x6267_6e64;
const DOMAIN_ANALYZER: u64 = 0x616e_6c7a;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a seed for an independent sub-experiment (e.g. one sweep point).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}

/// Independent ChaCha stream for `(seed, domain, index)`.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub pair_count: u64,
    /// Mean dark counts per pixel over the whole acquisition.
    pub background_per_pixel: f64,
    pub seed: u64,
    /// Global transmission efficiency in (0, 1].
    pub efficiency: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pair_count: 1_000_000,
            background_per_pixel: 0.0,
            seed: 0,
            efficiency: 1.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.background_per_pixel >= 0.0 && self.background_per_pixel.is_finite()) {
            return Err(Error::OutOfRange {
                name: "background_per_pixel",
                value: self.background_per_pixel,
                range: "[0, inf)",
            });
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::OutOfRange {
                name: "efficiency",
                value: self.efficiency,
                range: "(0, 1]",
            });
        }
        Ok(())
    }
}

/// Simulated camera frame of heralded coincidences plus background.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceImage {
    pub counts: Array2<u32>,
    pub config: DetectorConfig,
    pub phi: PolarizerAngle,
    pub xi: MetasurfaceAngle,
    pub total_heralds: u64,
    pub background_total: u64,
}

impl CoincidenceImage {
    pub fn total_counts(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// `key=value` sidecar describing the acquisition.
    pub fn metadata(&self) -> String {
        format!(
            "seed={}\npair_count={}\nbackground={}\nefficiency={}\nphi_deg={}\nxi_deg={}\ntotal_heralds={}\nbackground_total={}\ntotal_counts={}\n",
            self.config.seed,
            self.config.pair_count,
            self.config.background_per_pixel,
            self.config.efficiency,
            self.phi.degrees(),
            self.xi.degrees(),
            self.total_heralds,
            self.background_total,
            self.total_counts(),
        )
    }
}

/// Samples heralded coincidences pair by pair.
///
/// Each pair heralds with probability `Tr[rho (chi(phi) ⊗ 1)]`; a heralded
/// signal photon lands on a uniformly chosen pixel and is transmitted with
/// probability `Tr[sigma E_pixel]·efficiency`, `sigma` being the normalized
/// heralded signal state. Poisson background is added independently per pixel.
pub fn sample_coincidences(
    rho: &TwoPhotonState,
    phi: PolarizerAngle,
    mask: &AmplitudeMask,
    xi: MetasurfaceAngle,
    cfg: &DetectorConfig,
) -> Result<CoincidenceImage> {
    cfg.validate()?;
    let (rows, cols) = mask.dims();
    let npix = rows * cols;
    let (ta, tb) = pattern_transmissions(rho, phi, xi);
    let p_herald = (ta + tb).clamp(0.0, 1.0);
    let transmit: Vec<f64> = if p_herald > 0.0 {
        mask.theta_a()
            .iter()
            .zip(mask.theta_b().iter())
            .map(|(&a, &b)| ((a * ta + b * tb) / p_herald * cfg.efficiency).clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; npix]
    };

    let blocks = cfg.pair_count.div_ceil(PAIRS_PER_BLOCK);
    let (flat, total_heralds) = if npix == 0 {
        (Vec::new(), 0)
    } else {
        (0..blocks)
            .into_par_iter()
            .fold(
                || (vec![0u32; npix], 0u64),
                |(mut counts, mut heralds), block| {
                    let mut rng = stream_rng(cfg.seed, DOMAIN_PAIRS, block);
                    let n = PAIRS_PER_BLOCK.min(cfg.pair_count - block * PAIRS_PER_BLOCK);
                    for _ in 0..n {
                        if rng.random::<f64>() >= p_herald {
                            continue;
                        }
                        heralds += 1;
                        let pix = rng.random_range(0..npix);
                        if rng.random::<f64>() < transmit[pix] {
                            counts[pix] += 1;
                        }
                    }
                    (counts, heralds)
                },
            )
            .reduce(
                || (vec![0u32; npix], 0u64),
                |(mut a, ha), (b, hb)| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    (a, ha + hb)
                },
            )
    };
    let mut counts = Array2::from_shape_vec((rows, cols), flat).expect("grid shape");

    let mut background_total = 0u64;
    if cfg.background_per_pixel > 0.0 {
        let poisson = Poisson::new(cfg.background_per_pixel).map_err(|_| Error::OutOfRange {
            name: "background_per_pixel",
            value: cfg.background_per_pixel,
            range: "(0, inf)",
        })?;
        background_total = counts
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .map(|(r, mut row)| {
                let mut rng = stream_rng(cfg.seed, DOMAIN_BACKGROUND, r as u64);
                let mut added = 0u64;
                for c in row.iter_mut() {
                    let k = poisson.sample(&mut rng) as u64;
                    *c = c.saturating_add(k.min(u32::MAX as u64) as u32);
                    added += k;
                }
                added
            })
            .sum();
    }

    Ok(CoincidenceImage {
        counts,
        config: *cfg,
        phi,
        xi,
        total_heralds,
        background_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityEstimate {
    pub visibility: f64,
    pub stderr: f64,
    pub triangle_counts: u64,
    pub star_counts: u64,
}

/// Visibility from area-normalized region count rates.
///
/// Conditional on the total `n` of pattern counts, the triangle share is
/// binomial; its standard error is propagated through the rate ratio.
pub fn estimate_visibility(ci: &CoincidenceImage, mask: &AmplitudeMask) -> Result<VisibilityEstimate> {
    if ci.counts.dim() != mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: mask.dims(),
            got: ci.counts.dim(),
        });
    }
    let (area_a, area_b) = mask.support_counts();
    if area_a == 0 || area_b == 0 {
        return Err(Error::NoCounts("a pattern has empty support"));
    }
    let mut ca = 0u64;
    let mut cb = 0u64;
    for ((&n, &a), &b) in ci.counts.iter().zip(mask.theta_a()).zip(mask.theta_b()) {
        if a > 0.0 {
            ca += n as u64;
        }
        if b > 0.0 {
            cb += n as u64;
        }
    }
    let n = ca + cb;
    if n == 0 {
        return Err(Error::NoCounts("no counts in either pattern"));
    }
    let p = ca as f64 / n as f64;
    let (ra, rb) = (1.0 / area_a as f64, 1.0 / area_b as f64);
    let d = p * ra + (1.0 - p) * rb;
    let visibility = (p * ra - (1.0 - p) * rb) / d;
    let stderr = 2.0 * ra * rb / (d * d) * (p * (1.0 - p) / n as f64).sqrt();
    Ok(VisibilityEstimate {
        visibility,
        stderr,
        triangle_counts: ca,
        star_counts: cb,
    })
}

/// Joint outcome counts for a herald analyzer at `a` and a signal analyzer at
/// `b`; `m` marks the orthogonal port (`angle + 90°`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AnalyzerCounts {
    pub pp: u64,
    pub pm: u64,
    pub mp: u64,
    pub mm: u64,
}

impl AnalyzerCounts {
    pub fn total(&self) -> u64 {
        self.pp + self.pm + self.mp + self.mm
    }

    fn add(self, o: Self) -> Self {
        Self {
            pp: self.pp + o.pp,
            pm: self.pm + o.pm,
            mp: self.mp + o.mp,
            mm: self.mm + o.mm,
        }
    }
}

/// Samples `pairs` two-port analyzer outcomes. `stream` separates settings that
/// share a seed.
pub fn sample_analyzer_counts(
    rho: &TwoPhotonState,
    a: PolarizerAngle,
    b: PolarizerAngle,
    pairs: u64,
    seed: u64,
    stream: u64,
) -> AnalyzerCounts {
    let p = |x: PolarizerAngle, y: PolarizerAngle| {
        trace_expectation(rho, &tensor(&projector(x), &projector(y))).max(0.0)
    };
    let probs = [
        p(a, b),
        p(a, b.orthogonal()),
        p(a.orthogonal(), b),
        p(a.orthogonal(), b.orthogonal()),
    ];
    let total: f64 = probs.iter().sum();
    let c0 = probs[0] / total;
    let c1 = c0 + probs[1] / total;
    let c2 = c1 + probs[2] / total;
    let seed = derive_seed(seed, stream);
    let blocks = pairs.div_ceil(PAIRS_PER_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = stream_rng(seed, DOMAIN_ANALYZER, block);
            let n = PAIRS_PER_BLOCK.min(pairs - block * PAIRS_PER_BLOCK);
            let mut k = AnalyzerCounts::default();
            for _ in 0..n {
                let u: f64 = rng.random();
                if u < c0 {
                    k.pp += 1;
                } else if u < c1 {
                    k.pm += 1;
                } else if u < c2 {
                    k.mp += 1;
                } else {
                    k.mm += 1;
                }
            }
            k
        })
        .reduce(AnalyzerCounts::default, AnalyzerCounts::add)
}
