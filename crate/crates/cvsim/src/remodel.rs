//! Evolution laws for recruitment stretches and the vasospastic active tone.
//!
//! All laws are scalar ODEs integrated with explicit Euler in a staggered
//! scheme: each converged equilibrium solve is followed by one per-point
//! sweep. Remodelling drives each constituent stretch towards its
//! homeostatic value; the active tone relaxes towards a Gaussian axial
//! target profile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::RecruitmentTriplet;

#[derive(Debug, Error)]
pub enum RemodelError {
    #[error("remodelling step produced non-positive recruitment stretch {value:.3e}; reduce dt")]
    NonPositiveRecruitment { value: f64 },
    #[error("remodelling step broke recruitment-triplet ordering ({rmin:.4}, {rmod:.4}, {rmax:.4}); reduce dt")]
    TripletOrdering { rmin: f64, rmod: f64, rmax: f64 },
}

/// Evolving state of one integration point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussPointState {
    /// VSMC recruitment stretch.
    pub lam_m_r: f64,
    /// Collagen recruitment triplet, shared by both fibre families.
    pub triplet: RecruitmentTriplet,
    /// Active tone factor, 1 in health.
    pub k_a: f64,
    /// VSMC damage variable in [0, 1].
    pub d_m: f64,
    /// Elastin damage (no evolution law; scaling hook only).
    pub d_e: f64,
    /// Collagen damage (no evolution law; scaling hook only).
    pub d_c: f64,
    /// Axial material coordinate of the point (m).
    pub z_ref: f64,
}

impl GaussPointState {
    /// Healthy initial state: unit VSMC recruitment, collagen recruitment
    /// placed so the reference-configuration fibre stretches equal the
    /// homeostatic triplet, unit tone, no damage.
    pub fn initial(lam_c_h: [f64; 3], z_ref: f64) -> Self {
        Self {
            lam_m_r: 1.0,
            triplet: RecruitmentTriplet::new(1.0 / lam_c_h[2], 1.0 / lam_c_h[1], 1.0 / lam_c_h[0]),
            k_a: 1.0,
            d_m: 0.0,
            d_e: 0.0,
            d_c: 0.0,
            z_ref,
        }
    }
}

/// One explicit-Euler update of the VSMC recruitment stretch towards the
/// homeostatic cell stretch.
pub fn remodel_vsmc_step(
    lam_m_r: f64,
    lam_m_current: f64,
    lam_m_h: f64,
    alpha_m: f64,
    dt: f64,
) -> Result<f64, RemodelError> {
    let updated = lam_m_r + dt * alpha_m * (lam_m_current - lam_m_h) / lam_m_h;
    if updated <= 0.0 {
        return Err(RemodelError::NonPositiveRecruitment { value: updated });
    }
    Ok(updated)
}

/// One explicit-Euler update of the collagen recruitment triplet.
///
/// The pairing is crossed: the most-stretched fibres (recruited at `rmin`)
/// drive `rmin`, so an overstretched tail raises `rmin` and thereby lowers
/// the peak fibre stretch (negative feedback), and symmetrically for `rmax`.
pub fn remodel_collagen_step(
    triplet: &RecruitmentTriplet,
    lam_c_current: [f64; 3],
    lam_c_h: [f64; 3],
    alpha_c: f64,
    dt: f64,
) -> Result<RecruitmentTriplet, RemodelError> {
    let [cur_min, cur_mod, cur_max] = lam_c_current;
    let [h_min, h_mod, h_max] = lam_c_h;
    let rmin = triplet.rmin + dt * alpha_c * (cur_max - h_max) / h_max;
    let rmod = triplet.rmod + dt * alpha_c * (cur_mod - h_mod) / h_mod;
    let rmax = triplet.rmax + dt * alpha_c * (cur_min - h_min) / h_min;
    if !(rmin > 0.0 && rmin < rmod && rmod < rmax) {
        return Err(RemodelError::TripletOrdering { rmin, rmod, rmax });
    }
    Ok(RecruitmentTriplet { rmin, rmod, rmax })
}

/// Current collagen fibre-stretch triplet (min, mode, max) for tissue
/// stretch `lam` resolved along the fibre direction.
pub fn collagen_stretch_triplet(lam: f64, t: &RecruitmentTriplet) -> [f64; 3] {
    [lam / t.rmax, lam / t.rmod, lam / t.rmin]
}

/// Gaussian axial target for the active tone factor.
pub fn k_a_target(z_ref: f64, k_a_max: f64, z_mid: f64, sigma: f64) -> f64 {
    let x = (z_ref - z_mid) / sigma;
    1.0 + k_a_max * (-0.5 * x * x).exp()
}

/// One explicit-Euler relaxation of the tone factor towards its target.
pub fn k_a_step(k_a: f64, k_a_target: f64, dt: f64) -> f64 {
    k_a + dt * (k_a_target - k_a)
}
