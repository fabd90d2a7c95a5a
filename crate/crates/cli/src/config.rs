//! Experiment configuration (TOML) and its validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qmeta::bell::calibrate_model;
use qmeta::hologram::{DEFAULT_DESIGN_DISTANCE, DEFAULT_DESIGN_ITERATIONS, DEFAULT_WAVELENGTH};
use qmeta::metasurface::{LATTICE_PERIOD_NM, MIN_MASK_DIM};
use qmeta::pol::StateModel;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub state: StateSpec,
    pub angles: Angles,
    pub sweep: SweepSpec,
    pub mask: MaskSpec,
    pub detector: DetectorSpec,
    pub hologram: HologramSpec,
    pub output: OutputSpec,
}

/// Either a named preset or explicit `(lambda, v)`; `pure` when neither is given.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateSpec {
    pub preset: Option<String>,
    pub lambda: Option<f64>,
    pub v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Angles {
    pub phi_deg: f64,
    pub xi_deg: f64,
}

impl Default for Angles {
    fn default() -> Self {
        Self {
            phi_deg: 45.0,
            xi_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
    pub monte_carlo: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            start_deg: 0.0,
            stop_deg: 180.0,
            step_deg: 5.0,
            monte_carlo: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch_nm: f64,
    pub swap: bool,
    /// Slit layout text file used instead of the star/triangle device.
    pub layout: Option<PathBuf>,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 256,
            pitch_nm: LATTICE_PERIOD_NM,
            swap: false,
            layout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub pairs: u64,
    pub background_per_pixel: f64,
    pub efficiency: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            pairs: 1_000_000,
            background_per_pixel: 0.0,
            efficiency: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HologramSpec {
    /// Target image (PGM); the bundled test image when absent.
    pub target: Option<PathBuf>,
    /// Design and imaging distance. The default gives a Fresnel number near
    /// 10 for a 128-cell hologram.
    pub z_um: f64,
    pub iterations: usize,
    pub wavelength_nm: f64,
}

impl Default for HologramSpec {
    fn default() -> Self {
        Self {
            target: None,
            z_um: DEFAULT_DESIGN_DISTANCE * 1e6,
            iterations: DEFAULT_DESIGN_ITERATIONS,
            wavelength_nm: DEFAULT_WAVELENGTH * 1e9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A state model together with how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedState {
    pub label: String,
    pub model: StateModel,
    /// Target S when the model came from calibration.
    pub calibrated_s: Option<f64>,
}

impl ResolvedState {
    pub fn metadata(&self) -> String {
        let mut s = format!(
            "state={}\nlambda={}\nv={}\n",
            self.label,
            self.model.lambda(),
            self.model.v()
        );
        if let Some(t) = self.calibrated_s {
            s.push_str(&format!("calibrated_s={t}\n"));
        }
        s
    }
}

pub const PRESETS: [&str; 4] = ["pure", "mixed", "s2.5", "s1.6"];

fn field_err(field: &str, msg: impl std::fmt::Display) -> String {
    format!("field `{field}`: {msg}")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        // relative input paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.mask.layout, &mut cfg.hologram.target].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = |field: &str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(field_err(field, "must be finite"))
            }
        };
        finite("angles.phi_deg", self.angles.phi_deg)?;
        finite("angles.xi_deg", self.angles.xi_deg)?;
        finite("sweep.start_deg", self.sweep.start_deg)?;
        finite("sweep.stop_deg", self.sweep.stop_deg)?;
        if !(self.sweep.step_deg > 0.0 && self.sweep.step_deg.is_finite()) {
            return Err(field_err("sweep.step_deg", "must be > 0"));
        }
        if self.sweep.stop_deg < self.sweep.start_deg {
            return Err(field_err("sweep.stop_deg", "must not be below start_deg"));
        }
        match (&self.state.preset, self.state.lambda, self.state.v) {
            (None, None, None) => {}
            (Some(p), None, None) => {
                if !PRESETS.contains(&p.as_str()) {
                    return Err(field_err(
                        "state.preset",
                        format!("unknown preset `{p}` (expected one of {})", PRESETS.join(", ")),
                    ));
                }
            }
            (None, Some(l), Some(v)) => {
                StateModel::new(l, v).map_err(|e| field_err("state", e))?;
            }
            _ => {
                return Err(field_err(
                    "state",
                    "give either `preset` or both `lambda` and `v`",
                ))
            }
        }
        if self.mask.layout.is_none() && (self.mask.rows < MIN_MASK_DIM || self.mask.cols < MIN_MASK_DIM) {
            return Err(field_err(
                "mask",
                format!(
                    "{}x{} is too small (need at least {MIN_MASK_DIM}x{MIN_MASK_DIM})",
                    self.mask.rows, self.mask.cols
                ),
            ));
        }
        if !(self.mask.pitch_nm > 0.0 && self.mask.pitch_nm.is_finite()) {
            return Err(field_err("mask.pitch_nm", "must be > 0"));
        }
        if !(self.detector.background_per_pixel >= 0.0 && self.detector.background_per_pixel.is_finite()) {
            return Err(field_err("detector.background_per_pixel", "must be >= 0"));
        }
        if !(self.detector.efficiency > 0.0 && self.detector.efficiency <= 1.0) {
            return Err(field_err("detector.efficiency", "must be in (0, 1]"));
        }
        if !(self.hologram.z_um >= 0.0 && self.hologram.z_um.is_finite()) {
            return Err(field_err("hologram.z_um", "must be >= 0"));
        }
        if !(self.hologram.wavelength_nm > 0.0 && self.hologram.wavelength_nm.is_finite()) {
            return Err(field_err("hologram.wavelength_nm", "must be > 0"));
        }
        for (field, path) in [("mask.layout", &self.mask.layout), ("hologram.target", &self.hologram.target)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(field_err(field, format!("file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Resolves the state; calibrated presets run the S calibration.
    pub fn resolve_state(&self) -> Result<ResolvedState, String> {
        if let (Some(lambda), Some(v)) = (self.state.lambda, self.state.v) {
            return Ok(ResolvedState {
                label: "custom".into(),
                model: StateModel::new(lambda, v).map_err(|e| field_err("state", e))?,
                calibrated_s: None,
            });
        }
        let preset = self.state.preset.as_deref().unwrap_or("pure");
        let (model, calibrated_s) = match preset {
            "pure" => (StateModel::PURE, None),
            "mixed" => (StateModel::MIXED, None),
            "s2.5" | "s1.6" => {
                let target: f64 = preset[1..].parse().expect("preset suffix is numeric");
                let c = calibrate_model(target).map_err(|e| field_err("state.preset", e))?;
                (c.model, Some(target))
            }
            other => return Err(field_err("state.preset", format!("unknown preset `{other}`"))),
        };
        Ok(ResolvedState {
            label: preset.into(),
            model,
            calibrated_s,
        })
    }
}
