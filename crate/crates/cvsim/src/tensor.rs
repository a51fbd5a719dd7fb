//! Small dense 3x3 tensor algebra shared by all constitutive code.
//!
//! Deformation gradients are split multiplicatively into a growth part
//! (identity in this model) and an elastic part, and the elastic part is
//! further split into volumetric and isochoric contributions:
//!
//! ```text
//! F = Fe * Fg,   Fe = J^(1/3) Fbar,   det(Fbar) = 1
//! ```
//!
//! All anisotropic behaviour enters through the pseudo-invariants of the
//! isochoric right Cauchy-Green tensor `Cbar = Fbar^T Fbar` evaluated along
//! unit structural directions.

use nalgebra::{Matrix3, Vector3, Vector6};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    /// Signals local element inversion during a Newton iterate.
    #[error("deformation gradient has non-positive determinant ({det:.6e})")]
    InvertedDeformation { det: f64 },
}

/// Multiplicative decomposition of a deformation gradient.
///
/// The growth part `fg` is kept as an explicit slot but is identity in this
/// model; `fe` therefore equals the total gradient.
#[derive(Debug, Clone)]
pub struct DeformationState {
    pub f: Matrix3<f64>,
    pub fg: Matrix3<f64>,
    pub fe: Matrix3<f64>,
    pub fbar: Matrix3<f64>,
    pub cbar: Matrix3<f64>,
    pub j: f64,
}

/// Unit direction vectors of the two collagen fibre families (`a0`, `g0`)
/// and of the circumferentially aligned smooth muscle cells (`m0`).
#[derive(Debug, Clone)]
pub struct StructureTensors {
    pub a0: Vector3<f64>,
    pub g0: Vector3<f64>,
    pub m0: Vector3<f64>,
}

impl StructureTensors {
    pub fn new(a0: Vector3<f64>, g0: Vector3<f64>, m0: Vector3<f64>) -> Self {
        Self {
            a0: a0.normalize(),
            g0: g0.normalize(),
            m0: m0.normalize(),
        }
    }

    /// Rank-one structure tensor a0 (x) a0.
    pub fn a_tensor(&self) -> Matrix3<f64> {
        self.a0 * self.a0.transpose()
    }

    pub fn g_tensor(&self) -> Matrix3<f64> {
        self.g0 * self.g0.transpose()
    }

    pub fn m_tensor(&self) -> Matrix3<f64> {
        self.m0 * self.m0.transpose()
    }
}

/// Volumetric/isochoric split of a deformation gradient.
///
/// Fails when `det F <= 0`, which a caller treats as element inversion.
pub fn isochoric_split(f: &Matrix3<f64>) -> Result<DeformationState, KinematicsError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(KinematicsError::InvertedDeformation { det: j });
    }
    let fe = *f;
    let fbar = fe * j.powf(-1.0 / 3.0);
    let cbar = fbar.transpose() * fbar;
    Ok(DeformationState {
        f: *f,
        fg: Matrix3::identity(),
        fe,
        fbar,
        cbar,
        j,
    })
}

/// Isochoric invariants: trace plus the squared stretches along the three
/// structural directions. I2/I3/I5/I7/I8 are not used by the mixture model.
pub fn invariants(cbar: &Matrix3<f64>, dirs: &StructureTensors) -> (f64, f64, f64, f64) {
    let i1 = cbar.trace();
    let i4 = (dirs.a0.transpose() * cbar * dirs.a0)[0];
    let i6 = (dirs.g0.transpose() * cbar * dirs.g0)[0];
    let im = (dirs.m0.transpose() * cbar * dirs.m0)[0];
    (i1, i4, i6, im)
}

// ---------------------------------------------------------------------------
// Voigt notation helpers, order (11, 22, 33, 12, 23, 13).
// Stress-like vectors carry off-diagonal components once; strain-like
// vectors carry engineering (doubled) shears.
// ---------------------------------------------------------------------------

pub const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)];

/// Symmetric 3x3 tensor to a stress-like Voigt vector.
pub fn to_voigt(m: &Matrix3<f64>) -> Vector6<f64> {
    Vector6::new(
        m[(0, 0)],
        m[(1, 1)],
        m[(2, 2)],
        m[(0, 1)],
        m[(1, 2)],
        m[(0, 2)],
    )
}

pub fn from_voigt(v: &Vector6<f64>) -> Matrix3<f64> {
    Matrix3::new(
        v[0], v[3], v[5], //
        v[3], v[1], v[4], //
        v[5], v[4], v[2],
    )
}

/// Dyadic product A (x) B of two symmetric tensors as a 6x6 Voigt matrix.
pub fn voigt_outer(a: &Vector6<f64>, b: &Vector6<f64>) -> nalgebra::Matrix6<f64> {
    a * b.transpose()
}

/// Symmetrised product (A [] A)_ijkl = 1/2 (A_ik A_jl + A_il A_jk) in Voigt
/// form; this is the fourth-order identity when A = I.
pub fn voigt_odot(a: &Matrix3<f64>) -> nalgebra::Matrix6<f64> {
    let mut d = nalgebra::Matrix6::zeros();
    for (p, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (q, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            d[(p, q)] = 0.5 * (a[(i, k)] * a[(j, l)] + a[(i, l)] * a[(j, k)]);
        }
    }
    d
}

/// Double contraction of two symmetric tensors.
pub fn ddot(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    (a.component_mul(b)).sum()
}
