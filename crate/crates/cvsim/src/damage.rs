//! Strain-based, irreversible VSMC damage accumulation.
//!
//! Above the minimum damage threshold the damage variable grows
//! proportionally to the overshoot of the squared cell stretch; below the
//! threshold it holds its value (monotone semantics). The variable scales
//! the VSMC energy contribution by `(1 - d)`.

/// One damage increment for a converged equilibrium step.
///
/// `im_current` is the squared cell stretch `(lam_M)^2`; `alpha_d` carries
/// the pseudo-time step, i.e. callers pass `alpha_d * dt`.
pub fn damage_step(d_m: f64, im_current: f64, i_md_min: f64, alpha_d: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&d_m));
    if im_current >= i_md_min {
        (d_m + alpha_d * (im_current - i_md_min)).min(1.0)
    } else {
        d_m
    }
}

/// Scale constituent energies by the damage factor.
pub fn apply_damage_to_energy(psi_pass: f64, psi_act: f64, d_m: f64) -> (f64, f64) {
    ((1.0 - d_m) * psi_pass, (1.0 - d_m) * psi_act)
}
