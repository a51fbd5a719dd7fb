//! Independent, slow reference implementations used to validate fast paths.
//!
//! These deliberately avoid the closed-form code in [`crate::material`]:
//! the density and integrand are restated here and integrated numerically,
//! and tangents are checked by central finite differences on the stress.
//! They run in the test suite and under the `verify` CLI subcommand.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::material::{stress_and_tangent, MaterialParams, RecruitmentTriplet};
use crate::remodel::GaussPointState;
use crate::tensor::{isochoric_split, StructureTensors, VOIGT_PAIRS};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("adaptive quadrature failed to converge (interval [{lo}, {hi}])")]
    QuadratureDiverged { lo: f64, hi: f64 },
}

// Triangular density, restated independently of material::collagen_pdf.
fn triangle_density(r: f64, t: &RecruitmentTriplet) -> f64 {
    let span = t.rmax - t.rmin;
    if r < t.rmin || r > t.rmax {
        0.0
    } else if r < t.rmod {
        2.0 * (r - t.rmin) / (span * (t.rmod - t.rmin))
    } else {
        2.0 * (t.rmax - r) / (span * (t.rmax - t.rmod))
    }
}

fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, OracleError> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, OracleError> {
        if depth == 0 {
            return Err(OracleError::QuadratureDiverged { lo: a, hi: b });
        }
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        if (left + right - whole).abs() <= 15.0 * tol {
            Ok(left + right + (left + right - whole) / 15.0)
        } else {
            Ok(rec(f, a, m, left, 0.5 * tol, depth - 1)?
                + rec(f, m, b, right, 0.5 * tol, depth - 1)?)
        }
    }
    if hi <= lo {
        return Ok(0.0);
    }
    rec(f, lo, hi, simpson(f, lo, hi), tol, depth)
}

/// Quadrature of the recruitment-distribution fibre stress,
/// `dPsi_C/dlam = integral (lam/r - 1)/r rho(r) dr` over recruited fibres.
///
/// Split at the density mode so each panel is smooth; tolerance 1e-10.
pub fn collagen_stress_quadrature(
    lam: f64,
    t: &RecruitmentTriplet,
    mu_c: f64,
) -> Result<f64, OracleError> {
    let lo = t.rmin.max(1.0);
    let hi = t.rmax.min(lam);
    if hi <= lo {
        return Ok(0.0);
    }
    let integrand = |r: f64| (lam / r - 1.0) / r * triangle_density(r, t);
    let mut total = 0.0;
    for (a, b) in [(lo, t.rmod.clamp(lo, hi)), (t.rmod.clamp(lo, hi), hi)] {
        total += adaptive_simpson(&integrand, a, b, 1e-10, 48)?;
    }
    Ok(mu_c * total)
}

/// Classical thin-wall (Laplace) estimate of the circumferential Cauchy
/// stress in a pressurised tube.
pub fn thin_wall_estimate(p_kpa: f64, r_deformed: f64, h_deformed: f64) -> f64 {
    p_kpa * r_deformed / h_deformed
}

/// Maximum relative error between the analytic material tangent and central
/// finite differences of the stress over a step sweep.
///
/// Perturbs the right Cauchy-Green tensor directly; the perturbed stress is
/// evaluated through a Cholesky-reconstructed deformation gradient so the
/// oracle only shares the public stress entry point with the fast path.
pub fn fd_material_tangent_check(
    f: &Matrix3<f64>,
    dirs: &StructureTensors,
    gp: &GaussPointState,
    p_hydro: f64,
    params: &MaterialParams,
) -> f64 {
    let state = isochoric_split(f).expect("valid deformation");
    let (_, tangent) = stress_and_tangent(&state, dirs, gp, p_hydro, params, true);
    fd_material_tangent_error(f, dirs, gp, p_hydro, params, &tangent.unwrap())
}

/// As [`fd_material_tangent_check`] but against a caller-supplied tangent,
/// which lets tests verify the checker detects a corrupted one.
pub fn fd_material_tangent_error(
    f: &Matrix3<f64>,
    dirs: &StructureTensors,
    gp: &GaussPointState,
    p_hydro: f64,
    params: &MaterialParams,
    tangent: &Matrix6<f64>,
) -> f64 {
    let state = isochoric_split(f).expect("valid deformation");
    let c = state.fe.transpose() * state.fe;
    let tangent = *tangent;

    let stress_of_c = |c: &Matrix3<f64>| -> Vector6<f64> {
        let chol = c.cholesky().expect("C SPD");
        let f = chol.l().transpose();
        let st = isochoric_split(&f).expect("valid");
        let (s, _) = stress_and_tangent(&st, dirs, gp, p_hydro, params, false);
        crate::tensor::to_voigt(&s)
    };

    let mut best = f64::INFINITY;
    for h in [1e-5, 1e-6, 1e-7] {
        let mut fd = Matrix6::zeros();
        for (q, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            let mut cp = c;
            let mut cm = c;
            cp[(k, l)] += h;
            cm[(k, l)] -= h;
            if k != l {
                cp[(l, k)] += h;
                cm[(l, k)] -= h;
            }
            // dE: diagonal dC/2, engineering shear dC
            let de = if k == l { 0.5 * h } else { h };
            let ds = (stress_of_c(&cp) - stress_of_c(&cm)) / (2.0 * de);
            fd.set_column(q, &ds);
        }
        let scale = tangent.norm().max(1.0);
        let err = (fd - tangent).norm() / scale;
        best = best.min(err);
    }
    best
}

/// Max |closed form − quadrature| of the recruitment-distribution fibre
/// stress over `n` seeded random (stretch, triplet) samples at the default
/// collagen stiffness.
pub fn collagen_quadrature_sweep(n: usize, seed: u64) -> Result<f64, OracleError> {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let rmin = 0.85 + 0.35 * rng.gen::<f64>();
        let rmod = rmin + 0.02 + 0.3 * rng.gen::<f64>();
        let rmax = rmod + 0.02 + 0.3 * rng.gen::<f64>();
        let t = RecruitmentTriplet::new(rmin, rmod, rmax);
        let lam = 0.9 + 1.3 * rng.gen::<f64>();
        let q = collagen_stress_quadrature(lam, &t, 5800.0)?;
        let a = crate::material::collagen_distribution_stress(lam, &t, 5800.0);
        worst = worst.max((a - q).abs() / q.abs().max(1.0));
    }
    Ok(worst)
}

/// Max finite-difference error of the analytic material tangent over `n`
/// seeded random states (deformation, recruitment, tone, damage, pressure).
pub fn fd_tangent_sweep(n: usize, seed: u64) -> f64 {
    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let params = MaterialParams {
        k_e: 93.0,
        mu_c: 5800.0,
        k_m_pass: 45.1,
        k_m_act: 11.0,
        c_v: 1.0,
        lam_m_min: 0.8,
        lam_m_mean: 1.4,
        lam_m_max: 2.0,
        lam_m_h: 1.15,
        lam_c_h: [0.85, 0.95, 1.05],
        phi_a0: std::f64::consts::FRAC_PI_4,
        phi_g0: -std::f64::consts::FRAC_PI_4,
        alpha_m: 2.0,
        alpha_c: 2.0,
        alpha_d: 1.0,
        i_md_min: 1.69,
        k_a_max: 17.0,
        z_mid: 0.00625,
        sigma: 0.002,
    };
    let unit = |rng: &mut rand_chacha::ChaCha8Rng| -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    };
    let mut worst = 0.0f64;
    let mut accepted = 0;
    while accepted < n {
        let mut f = Matrix3::identity();
        for i in 0..3 {
            for j in 0..3 {
                f[(i, j)] += 0.25 * (rng.gen::<f64>() - 0.5) + if i == j { 0.15 * rng.gen::<f64>() } else { 0.0 };
            }
        }
        if f.determinant() < 0.3 {
            continue;
        }
        let dirs = StructureTensors::new(unit(&mut rng), unit(&mut rng), unit(&mut rng));
        let mut gp = GaussPointState::initial([0.85, 0.95, 1.05], 0.0);
        gp.lam_m_r = 0.9 + 0.5 * rng.gen::<f64>();
        gp.k_a = 1.0 + 17.0 * rng.gen::<f64>();
        gp.d_m = rng.gen::<f64>();
        let p_hydro = 100.0 * (rng.gen::<f64>() - 0.5);
        worst = worst.max(fd_material_tangent_check(&f, &dirs, &gp, p_hydro, &params));
        accepted += 1;
    }
    worst
}
