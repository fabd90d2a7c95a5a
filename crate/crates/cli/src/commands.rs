use std::fmt::Write as _;
use std::path::Path;

use qmeta::bell::{chsh_s, max_chsh, measure_chsh, ChshSetting};
use qmeta::fmt::format_sig;
use qmeta::hologram::{
    bundled_test_image, run_hologram, synthesize_field, HologramDesign,
};
use qmeta::imaging::{
    degree_grid, expected_image, pipeline_visibility, region_intensities, visibility_closed_form,
    IntensityImage,
};
use qmeta::metasurface::{layout_star_triangle, AmplitudeMask, MetasurfaceAngle, SlitLayout, StarTriangle};
use qmeta::montecarlo::{derive_seed, estimate_visibility, sample_coincidences, DetectorConfig};
use qmeta::pgm::{counts_to_pgm, intensity_to_pgm, mask_to_pgm, phase_to_pgm, Pgm};
use qmeta::pol::{PolVector, PolarizerAngle};

use crate::config::{ExperimentConfig, ResolvedState};

/// Exit status classes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Files produced by a command, written only after everything is computed.
#[derive(Debug, Default)]
pub struct Outputs(pub Vec<(String, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.0.push((name.to_string(), bytes.into()));
    }

    /// Writes each file to a temporary sibling and renames it into place.
    pub fn write_all(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, bytes) in &self.0 {
            let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
            let result = std::fs::write(&tmp, bytes).and_then(|_| std::fs::rename(&tmp, dir.join(name)));
            if let Err(e) = result {
                let _ = std::fs::remove_file(&tmp);
                return Err(e);
            }
        }
        Ok(())
    }
}

fn resolve(cfg: &ExperimentConfig) -> Result<ResolvedState, Failure> {
    cfg.resolve_state().map_err(Failure::Config)
}

fn load_mask(cfg: &ExperimentConfig) -> Result<AmplitudeMask, Failure> {
    let pitch = cfg.mask.pitch_nm * 1e-9;
    match &cfg.mask.layout {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let layout = SlitLayout::from_text(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            layout.rasterize(pitch).map_err(runtime)
        }
        None => StarTriangle::new(cfg.mask.rows, cfg.mask.cols, pitch)
            .swap(cfg.mask.swap)
            .render()
            .map_err(|e| Failure::Config(e.to_string())),
    }
}

fn detector(cfg: &ExperimentConfig, seed: u64) -> DetectorConfig {
    DetectorConfig {
        pair_count: cfg.detector.pairs,
        background_per_pixel: cfg.detector.background_per_pixel,
        seed,
        efficiency: cfg.detector.efficiency,
    }
}

pub fn cmd_mask(cfg: &ExperimentConfig) -> Result<Outputs, Failure> {
    let mask = load_mask(cfg)?;
    let layout = layout_star_triangle(&mask).map_err(runtime)?;
    let (rows, cols) = mask.dims();
    let (na, nb) = mask.support_counts();
    let mut out = Outputs::default();
    out.add("mask_triangle.pgm", mask_to_pgm(mask.theta_a()).encode());
    out.add("mask_star.pgm", mask_to_pgm(mask.theta_b()).encode());
    out.add("layout.txt", layout.to_text());
    out.add(
        "mask.meta",
        format!(
            "rows={rows}\ncols={cols}\npitch_nm={}\nswap={}\ntriangle_pixels={na}\nstar_pixels={nb}\nslits={}\n",
            cfg.mask.pitch_nm,
            cfg.mask.swap,
            layout.len()
        ),
    );
    Ok(out)
}

pub fn cmd_image(cfg: &ExperimentConfig, analytic_only: bool) -> Result<Outputs, Failure> {
    let state = resolve(cfg)?;
    let mask = load_mask(cfg)?;
    let rho = state.model.state();
    let phi = PolarizerAngle::from_degrees(cfg.angles.phi_deg);
    let xi = MetasurfaceAngle::from_degrees(cfg.angles.xi_deg);

    let img = expected_image(&rho, phi, &mask, xi);
    let regions = region_intensities(&img, &mask).map_err(runtime)?;
    let mut meta = state.metadata();
    let _ = write!(
        meta,
        "phi_deg={}\nxi_deg={}\ni_triangle={}\ni_star={}\nv_analytic={}\nv_closed_form={}\n",
        cfg.angles.phi_deg,
        cfg.angles.xi_deg,
        regions.triangle,
        regions.star,
        regions.visibility().map_or(f64::NAN, |v| v),
        visibility_closed_form(state.model, phi, xi),
    );
    let mut out = Outputs::default();
    out.add("expected.pgm", intensity_to_pgm(&img.values).encode());
    if !analytic_only {
        let ci = sample_coincidences(&rho, phi, &mask, xi, &detector(cfg, cfg.seed)).map_err(runtime)?;
        match estimate_visibility(&ci, &mask) {
            Ok(est) => {
                let _ = write!(
                    meta,
                    "v_mc={}\nstderr={}\ntriangle_counts={}\nstar_counts={}\n",
                    est.visibility, est.stderr, est.triangle_counts, est.star_counts
                );
            }
            Err(e) => eprintln!("warning: no Monte Carlo visibility: {e}"),
        }
        out.add("counts.pgm", counts_to_pgm(&ci.counts).encode());
        out.add("counts.meta", ci.metadata());
    }
    out.add("image.meta", meta);
    Ok(out)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Outputs, Failure> {
    let state = resolve(cfg)?;
    let mask = load_mask(cfg)?;
    let rho = state.model.state();
    let xi = MetasurfaceAngle::from_degrees(cfg.angles.xi_deg);
    let grid = degree_grid(cfg.sweep.start_deg, cfg.sweep.stop_deg, cfg.sweep.step_deg);
    let mut csv = String::from("phi_deg,v_analytic,v_mc,stderr\n");
    for (i, &phi) in grid.iter().enumerate() {
        let deg = cfg.sweep.start_deg + i as f64 * cfg.sweep.step_deg;
        let analytic = pipeline_visibility(&rho, phi, &mask, xi).unwrap_or_else(|e| {
            eprintln!("warning: phi={deg}: {e}");
            f64::NAN
        });
        let (mc, se) = if cfg.sweep.monte_carlo {
            let ci = sample_coincidences(&rho, phi, &mask, xi, &detector(cfg, derive_seed(cfg.seed, i as u64)))
                .map_err(runtime)?;
            match estimate_visibility(&ci, &mask) {
                Ok(e) => (format_sig(e.visibility, 9), format_sig(e.stderr, 9)),
                Err(e) => {
                    eprintln!("warning: phi={deg}: {e}");
                    ("NaN".into(), "NaN".into())
                }
            }
        } else {
            (String::new(), String::new())
        };
        let _ = writeln!(csv, "{},{},{mc},{se}", format_sig(deg, 9), format_sig(analytic, 9));
    }
    let mut meta = state.metadata();
    let _ = write!(
        meta,
        "xi_deg={}\nstart_deg={}\nstop_deg={}\nstep_deg={}\nseed={}\npairs={}\nbackground={}\n",
        cfg.angles.xi_deg,
        cfg.sweep.start_deg,
        cfg.sweep.stop_deg,
        cfg.sweep.step_deg,
        cfg.seed,
        cfg.detector.pairs,
        cfg.detector.background_per_pixel
    );
    let mut out = Outputs::default();
    out.add("sweep.csv", csv);
    out.add("sweep.meta", meta);
    Ok(out)
}

fn wrap_degrees(theta: PolarizerAngle) -> f64 {
    theta.degrees().rem_euclid(180.0)
}

pub fn cmd_bell(cfg: &ExperimentConfig) -> Result<Outputs, Failure> {
    let state = resolve(cfg)?;
    let rho = state.model.state();
    let opt = max_chsh(&rho);
    let canonical = chsh_s(&rho, &ChshSetting::canonical());
    let mut report = state.metadata();
    let s = &opt.setting;
    let _ = write!(
        report,
        "s_canonical={canonical}\ns_max={}\na_deg={}\na_prime_deg={}\nb_deg={}\nb_prime_deg={}\n",
        opt.s,
        wrap_degrees(s.a),
        wrap_degrees(s.a_prime),
        wrap_degrees(s.b),
        wrap_degrees(s.b_prime),
    );
    if cfg.detector.pairs > 0 {
        let est = measure_chsh(&rho, &opt.setting, cfg.detector.pairs, cfg.seed).map_err(runtime)?;
        let _ = write!(
            report,
            "seed={}\npairs_per_setting={}\ns_counts={}\ns_counts_stderr={}\n",
            cfg.seed, cfg.detector.pairs, est.s, est.stderr
        );
    }
    let mut out = Outputs::default();
    out.add("bell_report.txt", report);
    Ok(out)
}

pub fn cmd_hologram(cfg: &ExperimentConfig) -> Result<Outputs, Failure> {
    let target = match &cfg.hologram.target {
        Some(path) => {
            let pgm = Pgm::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            IntensityImage {
                values: pgm.to_unit(),
                pitch: cfg.mask.pitch_nm * 1e-9,
            }
        }
        None => bundled_test_image(),
    };
    let design = HologramDesign {
        z: cfg.hologram.z_um * 1e-6,
        iterations: cfg.hologram.iterations,
        seed: cfg.seed,
        wavelength: cfg.hologram.wavelength_nm * 1e-9,
        pitch: cfg.mask.pitch_nm * 1e-9,
    };
    let run = run_hologram(&target, &design).map_err(runtime)?;
    let near = synthesize_field(&run.layout, &PolVector::horizontal(), PolarizerAngle(0.0), design.wavelength)
        .map_err(runtime)?;
    let (rows, cols) = target.dims();
    let meta = format!(
        "rows={rows}\ncols={cols}\nseed={}\nz_um={}\nfresnel_number={}\niterations={}\nwavelength_nm={}\nslits={}\ndesigned_correlation={}\nscrambled_correlation={}\n",
        cfg.seed,
        cfg.hologram.z_um,
        fresnel_number(rows.min(cols), design.pitch, design.wavelength, design.z),
        cfg.hologram.iterations,
        cfg.hologram.wavelength_nm,
        run.layout.len(),
        run.designed_correlation,
        run.scrambled_correlation,
    );
    let mut out = Outputs::default();
    out.add("hologram_layout.txt", run.layout.to_text());
    out.add("hologram_near_magnitude.pgm", intensity_to_pgm(&near.magnitude()).encode());
    out.add("hologram_near_phase.pgm", phase_to_pgm(&near.phase()).encode());
    out.add("hologram_near.meta", near.metadata());
    out.add("hologram_designed.pgm", intensity_to_pgm(&run.designed.intensity().values).encode());
    out.add("hologram_scrambled.pgm", intensity_to_pgm(&run.scrambled.intensity().values).encode());
    out.add("hologram.meta", meta);
    Ok(out)
}

/// `a²/(λz)` with `a` the half-width of the hologram.
fn fresnel_number(cells: usize, pitch: f64, wavelength: f64, z: f64) -> f64 {
    let a = 0.5 * cells as f64 * pitch;
    if z > 0.0 {
        a * a / (wavelength * z)
    } else {
        f64::INFINITY
    }
}
