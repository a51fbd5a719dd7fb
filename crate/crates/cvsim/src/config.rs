//! Run configuration: TOML parsing, defaults, validation, and conversion to
//! the internal model types.
//!
//! All lengths in the file are millimetres and all stresses kilopascals;
//! conversion to the SI units used internally (metres, kPa) happens in the
//! accessor methods. Unknown keys are rejected so that a typo in a study
//! sweep fails loudly instead of silently running the defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::material::MaterialParams;
use crate::mesh::Geometry;
use crate::solve::SolveSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config validation error at `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

/// Top-level run configuration. An empty file yields the default vessel.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub mesh: MeshConfig,
    pub load: LoadConfig,
    pub material: MaterialConfig,
    pub stages: StageConfig,
    pub solver: SolverConfig,
    /// Output directory; the CLI `--out` flag overrides it.
    pub output_dir: Option<PathBuf>,
    /// Seed for randomized verification checks only; the simulation itself
    /// is deterministic.
    pub seed: u64,
    /// Skips the magnitude heuristics that catch likely unit mix-ups.
    pub allow_unusual_magnitudes: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// Unloaded inner radius (mm).
    pub radius_mm: f64,
    /// Unloaded wall thickness (mm). Mutually exclusive with
    /// `thickness_ratio`; if neither is given the default ratio applies.
    pub thickness_mm: Option<f64>,
    /// Unloaded thickness-to-radius ratio H/R.
    pub thickness_ratio: Option<f64>,
    /// Unloaded length (mm).
    pub length_mm: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            radius_mm: 1.45,
            thickness_mm: None,
            thickness_ratio: None,
            length_mm: 12.5,
        }
    }
}

pub const DEFAULT_THICKNESS_RATIO: f64 = 0.35;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub n_radial: usize,
    pub n_circumferential: usize,
    pub n_axial: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            n_radial: 8,
            n_circumferential: 8,
            n_axial: 48,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoadConfig {
    /// Physiological luminal pressure (kPa).
    pub pressure_kpa: f64,
    /// In vivo axial pre-stretch.
    pub axial_stretch: f64,
    /// Maximum additional luminal pressure during treatment (kPa).
    pub treatment_pressure_kpa: f64,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            pressure_kpa: 16.0,
            axial_stretch: 1.2,
            treatment_pressure_kpa: 12.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialConfig {
    /// Elastin stiffness (kPa).
    pub k_e_kpa: f64,
    /// Collagen fibre stiffness (kPa).
    pub k_c_kpa: f64,
    /// VSMC passive stiffness (kPa).
    pub k_m_passive_kpa: f64,
    /// VSMC active stress scale (kPa).
    pub k_m_active_kpa: f64,
    /// Active-response shape factor.
    pub c_v: f64,
    /// Support and peak of the active length-tension parabola.
    pub lam_m_min: f64,
    pub lam_m_mean: f64,
    pub lam_m_max: f64,
    /// Homeostatic VSMC cell stretch.
    pub lam_m_h: f64,
    /// Homeostatic collagen fibre-stretch triplet (min, mode, max).
    pub lam_c_h: [f64; 3],
    /// Helical fibre angle from the circumferential direction (degrees);
    /// the two families sit at plus/minus this angle.
    pub fibre_angle_deg: f64,
    /// VSMC and collagen remodelling gains.
    pub alpha_m: f64,
    pub alpha_c: f64,
    /// Damage accumulation rate.
    pub alpha_d: f64,
    /// VSMC cell stretch at damage onset.
    pub lam_m_damage: f64,
    /// Peak of the Gaussian vasospasm tone profile.
    pub k_a_max: f64,
    /// Centre and width of the tone profile (mm).
    pub z_mid_mm: f64,
    pub sigma_mm: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            k_e_kpa: 93.0,
            k_c_kpa: 5800.0,
            k_m_passive_kpa: 45.1,
            k_m_active_kpa: 11.0,
            c_v: 1.0,
            lam_m_min: 0.8,
            lam_m_mean: 1.065,
            lam_m_max: 1.33,
            lam_m_h: 1.15,
            lam_c_h: [0.85, 0.95, 1.05],
            fibre_angle_deg: 45.0,
            alpha_m: 2.0,
            alpha_c: 2.0,
            alpha_d: 12.0,
            lam_m_damage: 1.30,
            k_a_max: 18.0,
            z_mid_mm: 6.25,
            sigma_mm: 2.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    /// Increments for the pressurisation/pre-stretch ramp.
    pub load_steps: usize,
    /// Staggered remodelling sweep budget and termination tolerances for the
    /// homeostasis stage.
    pub homeostasis_max_sweeps: usize,
    pub homeostasis_tol: f64,
    pub collagen_tol: f64,
    /// Fixed step counts for the vasospasm and treatment stages.
    pub vasospasm_steps: usize,
    pub treatment_steps: usize,
    /// Remodelling pseudo-time step.
    pub dt: f64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            load_steps: 50,
            homeostasis_max_sweeps: 2000,
            homeostasis_tol: 1e-7,
            collagen_tol: 1e-4,
            vasospasm_steps: 300,
            treatment_steps: 2000,
            dt: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Volumetric penalty (kPa); the augmentation loop supplies the rest of
    /// the incompressibility enforcement.
    pub kappa_kpa: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub vol_tol: f64,
    pub max_newton: usize,
    pub max_augment: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolveSettings::default();
        Self {
            kappa_kpa: 1e4,
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            vol_tol: s.vol_tol,
            max_newton: s.max_newton,
            max_augment: s.max_augment,
        }
    }
}

const MM: f64 = 1e-3;

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Wall thickness (mm) after resolving the H-versus-H/R choice.
    pub fn thickness_mm(&self) -> Result<f64, ConfigError> {
        match (self.geometry.thickness_mm, self.geometry.thickness_ratio) {
            (Some(_), Some(_)) => Err(invalid(
                "geometry.thickness_mm",
                "give either thickness_mm or thickness_ratio, not both",
            )),
            (Some(h), None) => Ok(h),
            (None, Some(r)) => Ok(r * self.geometry.radius_mm),
            (None, None) => Ok(DEFAULT_THICKNESS_RATIO * self.geometry.radius_mm),
        }
    }

    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        Ok(Geometry {
            r_inner: self.geometry.radius_mm * MM,
            thickness: self.thickness_mm()? * MM,
            length: self.geometry.length_mm * MM,
        })
    }

    pub fn material_params(&self) -> MaterialParams {
        let m = &self.material;
        MaterialParams {
            k_e: m.k_e_kpa,
            mu_c: m.k_c_kpa,
            k_m_pass: m.k_m_passive_kpa,
            k_m_act: m.k_m_active_kpa,
            c_v: m.c_v,
            lam_m_min: m.lam_m_min,
            lam_m_mean: m.lam_m_mean,
            lam_m_max: m.lam_m_max,
            lam_m_h: m.lam_m_h,
            lam_c_h: m.lam_c_h,
            phi_a0: m.fibre_angle_deg.to_radians(),
            phi_g0: -m.fibre_angle_deg.to_radians(),
            alpha_m: m.alpha_m,
            alpha_c: m.alpha_c,
            alpha_d: m.alpha_d,
            i_md_min: m.lam_m_damage * m.lam_m_damage,
            k_a_max: m.k_a_max,
            z_mid: m.z_mid_mm * MM,
            sigma: m.sigma_mm * MM,
        }
    }

    pub fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            max_newton: self.solver.max_newton,
            max_augment: self.solver.max_augment,
            rel_tol: self.solver.rel_tol,
            abs_tol: self.solver.abs_tol,
            vol_tol: self.solver.vol_tol,
            full_newton: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        if !(g.radius_mm > 0.0) {
            return Err(invalid("geometry.radius_mm", "must be positive"));
        }
        if !(g.length_mm > 0.0) {
            return Err(invalid("geometry.length_mm", "must be positive"));
        }
        let h = self.thickness_mm()?;
        if !(h > 0.0) {
            return Err(invalid("geometry.thickness_mm", "must be positive"));
        }

        let m = &self.mesh;
        if m.n_radial == 0 || m.n_circumferential == 0 || m.n_axial == 0 {
            return Err(invalid("mesh", "all element counts must be at least 1"));
        }

        let l = &self.load;
        if !(l.pressure_kpa > 0.0) {
            return Err(invalid("load.pressure_kpa", "must be positive"));
        }
        if !(l.axial_stretch > 0.0) {
            return Err(invalid("load.axial_stretch", "must be positive"));
        }
        if !(l.treatment_pressure_kpa >= 0.0) {
            return Err(invalid("load.treatment_pressure_kpa", "must be nonnegative"));
        }

        self.material_params()
            .validate()
            .map_err(|message| invalid("material", message))?;
        if !(self.material.lam_m_damage > 1.0) {
            return Err(invalid("material.lam_m_damage", "must exceed 1"));
        }

        let st = &self.stages;
        if st.load_steps == 0 {
            return Err(invalid("stages.load_steps", "must be at least 1"));
        }
        if st.treatment_steps == 0 {
            return Err(invalid("stages.treatment_steps", "must be at least 1"));
        }
        if !(st.dt > 0.0) {
            return Err(invalid("stages.dt", "must be positive"));
        }
        let max_gain = self.material.alpha_m.max(self.material.alpha_c).max(1.0);
        if st.dt * max_gain > 0.5 {
            return Err(invalid(
                "stages.dt",
                format!(
                    "dt * max remodelling gain = {} risks an unstable explicit update",
                    st.dt * max_gain
                ),
            ));
        }
        if !(st.homeostasis_tol > 0.0 && st.collagen_tol > 0.0) {
            return Err(invalid("stages.homeostasis_tol", "must be positive"));
        }

        let s = &self.solver;
        if !(s.kappa_kpa > 0.0) {
            return Err(invalid("solver.kappa_kpa", "must be positive"));
        }
        if !(s.rel_tol > 0.0 && s.vol_tol > 0.0) {
            return Err(invalid("solver.rel_tol", "must be positive"));
        }

        if !self.allow_unusual_magnitudes {
            self.magnitude_heuristics()?;
        }
        Ok(())
    }

    /// Rejects values whose magnitude suggests the wrong unit was written
    /// (Pa instead of kPa, metres instead of millimetres). Set
    /// `allow_unusual_magnitudes = true` to run them anyway.
    fn magnitude_heuristics(&self) -> Result<(), ConfigError> {
        let msg = "unusual magnitude, check units (set allow_unusual_magnitudes to override)";
        if self.load.pressure_kpa > 1e3 || self.load.pressure_kpa < 0.1 {
            return Err(invalid("load.pressure_kpa", msg));
        }
        if self.load.treatment_pressure_kpa > 1e3 {
            return Err(invalid("load.treatment_pressure_kpa", msg));
        }
        if self.geometry.radius_mm > 100.0 || self.geometry.radius_mm < 0.05 {
            return Err(invalid("geometry.radius_mm", msg));
        }
        if self.geometry.length_mm > 1e3 || self.geometry.length_mm < 0.5 {
            return Err(invalid("geometry.length_mm", msg));
        }
        for (key, v) in [
            ("material.k_e_kpa", self.material.k_e_kpa),
            ("material.k_c_kpa", self.material.k_c_kpa),
            ("material.k_m_passive_kpa", self.material.k_m_passive_kpa),
            ("material.k_m_active_kpa", self.material.k_m_active_kpa),
        ] {
            if v > 1e6 || v < 1e-2 {
                return Err(invalid(key, msg));
            }
        }
        Ok(())
    }
}
