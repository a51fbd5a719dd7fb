//! Mixed Q1P0 hexahedron and follower-pressure faces.
//!
//! Displacements are trilinear; the volumetric response is constant per
//! element (mean dilatation). The element pressure is
//!
//!     p = p0 + kappa * (theta - 1),    theta = v / V0,
//!
//! where `p0` is an externally updated augmentation term and `kappa` a
//! penalty stiffness. With p0 iterated to convergence the volume error drops
//! far below what the penalty alone could reach at a well-conditioned kappa.
//!
//! The lumen pressure follows the deforming surface. Its load stiffness is
//! unsymmetric at face level; the assembler symmetrizes it, which is exact
//! for a pressure acting on a surface whose boundary is held by the symmetry
//! and end constraints.

use nalgebra::{Matrix3, Point3, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::material::{stress_and_tangent, MaterialParams};
use crate::mesh::{gauss_abscissa, shape_grad, GaussFrame};
use crate::remodel::GaussPointState;
use crate::tensor::{isochoric_split, to_voigt, KinematicsError, VOIGT_PAIRS};

pub const ELEM_DOF: usize = 24;
pub const FACE_DOF: usize = 12;

#[derive(Debug, Error)]
pub enum ElementError {
    #[error("non-positive reference jacobian ({0:.3e})")]
    BadReferenceJacobian(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Internal force and consistent stiffness of one element.
pub struct ElementResponse {
    pub f_int: SVector<f64, ELEM_DOF>,
    pub stiffness: Option<Box<SMatrix<f64, ELEM_DOF, ELEM_DOF>>>,
    /// Mean dilatation v / V0.
    pub theta: f64,
    /// Reference volume of the element.
    pub v0: f64,
    /// Current element pressure p0 + kappa (theta - 1).
    pub pressure: f64,
}

/// Reference-configuration quantities that do not change between Newton
/// iterations: shape gradients with respect to X and the Jacobian weights.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub grads: [[Vector3<f64>; 8]; 8],
    pub weights: [f64; 8],
    pub v0: f64,
}

impl ReferenceElement {
    pub fn new(coords: &[Point3<f64>; 8]) -> Result<Self, ElementError> {
        let mut grads = [[Vector3::zeros(); 8]; 8];
        let mut weights = [0.0; 8];
        let mut v0 = 0.0;
        for q in 0..8 {
            let (xi, eta, zeta) = gauss_abscissa(q);
            let mut jac = Matrix3::zeros();
            for a in 0..8 {
                jac += coords[a].coords * shape_grad(a, xi, eta, zeta).transpose();
            }
            let det = jac.determinant();
            if det <= 0.0 {
                return Err(ElementError::BadReferenceJacobian(det));
            }
            let inv_t = jac
                .try_inverse()
                .expect("positive determinant implies invertible")
                .transpose();
            for a in 0..8 {
                grads[q][a] = inv_t * shape_grad(a, xi, eta, zeta);
            }
            weights[q] = det; // unit Gauss weights
            v0 += det;
        }
        Ok(ReferenceElement { grads, weights, v0 })
    }

    /// Deformation gradient at Gauss point `q` for nodal displacements `u`.
    pub fn deformation_gradient(&self, u: &[Vector3<f64>; 8], q: usize) -> Matrix3<f64> {
        let mut f = Matrix3::identity();
        for a in 0..8 {
            f += u[a] * self.grads[q][a].transpose();
        }
        f
    }
}

/// Evaluates internal force, mean dilatation and (optionally) the consistent
/// stiffness of a Q1P0 element.
#[allow(clippy::too_many_arguments)]
pub fn element_response(
    re: &ReferenceElement,
    u: &[Vector3<f64>; 8],
    frames: &[GaussFrame; 8],
    states: &[GaussPointState; 8],
    params: &MaterialParams,
    p0: f64,
    kappa: f64,
    want_stiffness: bool,
) -> Result<ElementResponse, ElementError> {
    // Pass 1: kinematics and the element dilatation.
    let mut defs = Vec::with_capacity(8);
    let mut v = 0.0;
    for q in 0..8 {
        let f = re.deformation_gradient(u, q);
        let state = isochoric_split(&f)?;
        v += state.j * re.weights[q];
        defs.push(state);
    }
    let theta = v / re.v0;
    let pressure = p0 + kappa * (theta - 1.0);

    // Pass 2: stress, force, stiffness at fixed element pressure.
    let mut f_int = SVector::<f64, ELEM_DOF>::zeros();
    let mut k = want_stiffness.then(|| Box::new(SMatrix::<f64, ELEM_DOF, ELEM_DOF>::zeros()));
    // dv/du, for both the p0-fixed rank-1 stiffness and the augmentation.
    let mut h = SVector::<f64, ELEM_DOF>::zeros();

    for q in 0..8 {
        let state = &defs[q];
        let w = re.weights[q];
        let (s, d) = stress_and_tangent(
            state,
            &frames[q].dirs,
            &states[q],
            -pressure,
            params,
            want_stiffness,
        );
        let s_v = to_voigt(&s);

        // Strain-displacement matrices (engineering shear rows).
        let mut b = [SMatrix::<f64, 6, 3>::zeros(); 8];
        for a in 0..8 {
            let g = re.grads[q][a];
            for (r, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
                for kk in 0..3 {
                    b[a][(r, kk)] = if i == j {
                        state.f[(kk, i)] * g[i]
                    } else {
                        state.f[(kk, i)] * g[j] + state.f[(kk, j)] * g[i]
                    };
                }
            }
        }

        let f_inv_t = state
            .f
            .try_inverse()
            .expect("J > 0 guarantees invertibility")
            .transpose();
        for a in 0..8 {
            let fa = b[a].transpose() * s_v * w;
            let ha = f_inv_t * re.grads[q][a] * (state.j * w);
            for kk in 0..3 {
                f_int[3 * a + kk] += fa[kk];
                h[3 * a + kk] += ha[kk];
            }
        }

        if let Some(k) = k.as_deref_mut() {
            let d = d.expect("tangent requested");
            for a in 0..8 {
                let db = d * b[a];
                for bn in a..8 {
                    // Material part.
                    let kab = b[bn].transpose() * db * w;
                    // Geometric part: G_a . S G_b on the displacement block.
                    let geo = (re.grads[q][bn].transpose() * s * re.grads[q][a])[(0, 0)] * w;
                    for i in 0..3 {
                        for j in 0..3 {
                            let v = kab[(j, i)] + if i == j { geo } else { 0.0 };
                            k[(3 * a + i, 3 * bn + j)] += v;
                            if bn != a {
                                k[(3 * bn + j, 3 * a + i)] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    if let Some(k) = k.as_deref_mut() {
        // Pressure-dilatation coupling: dp = (kappa / V0) h . du.
        let scale = kappa / re.v0;
        for i in 0..ELEM_DOF {
            for j in 0..ELEM_DOF {
                k[(i, j)] += scale * h[i] * h[j];
            }
        }
    }

    Ok(ElementResponse {
        f_int,
        stiffness: k,
        theta,
        v0: re.v0,
        pressure,
    })
}

/// Bilinear face shape function and its (xi, eta) gradient.
fn face_shape(a: usize, xi: f64, eta: f64) -> (f64, f64, f64) {
    const S: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let (sx, se) = S[a];
    (
        0.25 * (1.0 + sx * xi) * (1.0 + se * eta),
        0.25 * sx * (1.0 + se * eta),
        0.25 * se * (1.0 + sx * xi),
    )
}

/// Follower pressure on one quad face in its current configuration.
///
/// Returns the external force and, on request, the load stiffness
/// `-d f_ext / d u` (unsymmetrized).
pub fn face_pressure(
    coords: &[Point3<f64>; 4],
    p: f64,
    want_stiffness: bool,
) -> (SVector<f64, FACE_DOF>, Option<SMatrix<f64, FACE_DOF, FACE_DOF>>) {
    let mut f = SVector::<f64, FACE_DOF>::zeros();
    let mut k = want_stiffness.then(SMatrix::<f64, FACE_DOF, FACE_DOF>::zeros);
    let g = 0.577_350_269_189_625_8_f64;
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            let mut x_xi = Vector3::zeros();
            let mut x_eta = Vector3::zeros();
            let mut n = [0.0; 4];
            for a in 0..4 {
                let (na, dxi, deta) = face_shape(a, xi, eta);
                n[a] = na;
                x_xi += dxi * coords[a].coords;
                x_eta += deta * coords[a].coords;
            }
            let area_n = x_xi.cross(&x_eta);
            for a in 0..4 {
                for i in 0..3 {
                    f[3 * a + i] += p * n[a] * area_n[i];
                }
            }
            if let Some(k) = k.as_mut() {
                let sk_xi = skew(&x_xi);
                let sk_eta = skew(&x_eta);
                for a in 0..4 {
                    for b in 0..4 {
                        let (_, dxi_b, deta_b) = face_shape(b, xi, eta);
                        // d f_a = p N_a (-skew(x_eta) dxi_b + skew(x_xi) deta_b) du_b
                        let block = (sk_eta * (-dxi_b) + sk_xi * deta_b) * (p * n[a]);
                        for i in 0..3 {
                            for j in 0..3 {
                                k[(3 * a + i, 3 * b + j)] -= block[(i, j)];
                            }
                        }
                    }
                }
            }
        }
    }
    (f, k)
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}
