//! Quarter-cylinder hexahedral mesh of the artery wall.
//!
//! Symmetry reduces the vessel to one quadrant: the planes x = 0 and y = 0
//! carry normal-displacement constraints, z = 0 is held axially, and z = L
//! receives the prescribed axial stretch. Nodes are numbered radial-fastest,
//! then circumferential, then axial, which keeps the stiffness half-bandwidth
//! at 3 * ((nr + 1) * (nt + 1) + nr + 2) - 1 regardless of vessel length.
//!
//! Each element carries its Gauss-point fibre frames in the reference
//! configuration: two collagen families at +/- 45 degrees in the
//! circumferential-axial plane and the muscle direction circumferential.

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::tensor::StructureTensors;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh resolution must be at least 1 element per direction")]
    EmptyResolution,
    #[error("geometry must have positive radius, thickness and length")]
    BadGeometry,
}

/// Reference geometry of the unloaded quarter cylinder.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    /// Inner radius (m).
    pub r_inner: f64,
    /// Wall thickness (m).
    pub thickness: f64,
    /// Vessel length (m).
    pub length: f64,
}

impl Geometry {
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.r_inner <= 0.0 || self.thickness <= 0.0 || self.length <= 0.0 {
            return Err(MeshError::BadGeometry);
        }
        Ok(())
    }
}

/// One Gauss point's reference data: local fibre frame and position.
#[derive(Debug, Clone)]
pub struct GaussFrame {
    pub dirs: StructureTensors,
    /// Axial coordinate in the reference configuration (m).
    pub z_ref: f64,
    /// Radial coordinate in the reference configuration (m).
    pub r_ref: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub geometry: Geometry,
    pub nr: usize,
    pub nt: usize,
    pub nz: usize,
    pub nodes: Vec<Point3<f64>>,
    /// Hexahedra, corner order: the r-theta quad at the lower z face counter
    /// clockwise seen from +z, then the same quad at the upper z face.
    pub elems: Vec<[usize; 8]>,
    /// Per-element Gauss frames, 2x2x2 points in the order produced by
    /// [`crate::element::GAUSS_2`].
    pub frames: Vec<[GaussFrame; 8]>,
    /// Inner-surface quads (element index, corner nodes). The corner order
    /// makes the isoparametric normal point radially outward, into the wall,
    /// so a positive lumen pressure inflates the vessel.
    pub lumen_faces: Vec<(usize, [usize; 4])>,
    /// Nodes on the x = 0 symmetry plane (constrain ux).
    pub plane_x0: Vec<usize>,
    /// Nodes on the y = 0 symmetry plane (constrain uy).
    pub plane_y0: Vec<usize>,
    /// Nodes at z = 0 (constrain uz).
    pub plane_z0: Vec<usize>,
    /// Nodes at z = L (prescribe uz).
    pub plane_zl: Vec<usize>,
}

/// Abscissae of the two-point Gauss rule on [-1, 1].
const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

impl Mesh {
    /// Builds the structured mesh with `nr x nt x nz` elements and the
    /// default helical fibre angle of 45 degrees.
    pub fn build(geometry: Geometry, nr: usize, nt: usize, nz: usize) -> Result<Mesh, MeshError> {
        Self::build_with_angle(geometry, nr, nt, nz, std::f64::consts::FRAC_PI_4)
    }

    /// Builds the structured mesh with the two collagen families at
    /// `+/- fibre_angle` (radians) from the circumferential direction.
    pub fn build_with_angle(
        geometry: Geometry,
        nr: usize,
        nt: usize,
        nz: usize,
        fibre_angle: f64,
    ) -> Result<Mesh, MeshError> {
        geometry.validate()?;
        if nr == 0 || nt == 0 || nz == 0 {
            return Err(MeshError::EmptyResolution);
        }
        let (npr, npt, npz) = (nr + 1, nt + 1, nz + 1);
        let node_id = |ir: usize, it: usize, iz: usize| iz * npt * npr + it * npr + ir;

        let mut nodes = Vec::with_capacity(npr * npt * npz);
        for iz in 0..npz {
            let z = geometry.length * iz as f64 / nz as f64;
            for it in 0..npt {
                let th = std::f64::consts::FRAC_PI_2 * it as f64 / nt as f64;
                let (s, c) = th.sin_cos();
                for ir in 0..npr {
                    let r = geometry.r_inner + geometry.thickness * ir as f64 / nr as f64;
                    nodes.push(Point3::new(r * c, r * s, z));
                }
            }
        }

        let mut elems = Vec::with_capacity(nr * nt * nz);
        let mut lumen_faces = Vec::new();
        for iz in 0..nz {
            for it in 0..nt {
                for ir in 0..nr {
                    let conn = [
                        node_id(ir, it, iz),
                        node_id(ir + 1, it, iz),
                        node_id(ir + 1, it + 1, iz),
                        node_id(ir, it + 1, iz),
                        node_id(ir, it, iz + 1),
                        node_id(ir + 1, it, iz + 1),
                        node_id(ir + 1, it + 1, iz + 1),
                        node_id(ir, it + 1, iz + 1),
                    ];
                    let e = elems.len();
                    elems.push(conn);
                    if ir == 0 {
                        // Corners ordered (theta, z) so that d/dxi x d/deta
                        // follows e_theta x e_z = e_r.
                        lumen_faces.push((
                            e,
                            [
                                node_id(0, it, iz),
                                node_id(0, it + 1, iz),
                                node_id(0, it + 1, iz + 1),
                                node_id(0, it, iz + 1),
                            ],
                        ));
                    }
                }
            }
        }

        let mut frames = Vec::with_capacity(elems.len());
        let (sa, ca) = fibre_angle.sin_cos();
        for conn in &elems {
            let gp_frames: [GaussFrame; 8] = std::array::from_fn(|q| {
                let (xi, eta, zeta) = gauss_abscissa(q);
                let mut x = Vector3::zeros();
                for (a, &n) in conn.iter().enumerate() {
                    x += shape_value(a, xi, eta, zeta) * nodes[n].coords;
                }
                let th = x.y.atan2(x.x);
                let e_t = Vector3::new(-th.sin(), th.cos(), 0.0);
                let e_z = Vector3::z();
                GaussFrame {
                    dirs: StructureTensors::new(
                        ca * e_t + sa * e_z,
                        ca * e_t - sa * e_z,
                        e_t,
                    ),
                    z_ref: x.z,
                    r_ref: x.xy().norm(),
                }
            });
            frames.push(gp_frames);
        }

        let mut plane_x0 = Vec::new();
        let mut plane_y0 = Vec::new();
        let mut plane_z0 = Vec::new();
        let mut plane_zl = Vec::new();
        for iz in 0..npz {
            for it in 0..npt {
                for ir in 0..npr {
                    let n = node_id(ir, it, iz);
                    if it == nt {
                        plane_x0.push(n);
                    }
                    if it == 0 {
                        plane_y0.push(n);
                    }
                    if iz == 0 {
                        plane_z0.push(n);
                    }
                    if iz == nz {
                        plane_zl.push(n);
                    }
                }
            }
        }

        Ok(Mesh {
            geometry,
            nr,
            nt,
            nz,
            nodes,
            elems,
            frames,
            lumen_faces,
            plane_x0,
            plane_y0,
            plane_z0,
            plane_zl,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    /// Half-bandwidth of the assembled stiffness for this numbering.
    pub fn half_bandwidth(&self) -> usize {
        let mut max_diff = 0usize;
        for conn in &self.elems {
            let lo = *conn.iter().min().unwrap();
            let hi = *conn.iter().max().unwrap();
            max_diff = max_diff.max(hi - lo);
        }
        3 * max_diff + 2
    }

    /// The node closest to cylindrical coordinates (r, theta, z).
    pub fn nearest_node(&self, r: f64, theta: f64, z: f64) -> usize {
        let target = Point3::new(r * theta.cos(), r * theta.sin(), z);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p - target).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Gauss-point coordinates of the 2x2x2 rule; index bits are (zeta, eta, xi).
pub fn gauss_abscissa(q: usize) -> (f64, f64, f64) {
    let pick = |bit: usize| if q >> bit & 1 == 1 { G } else { -G };
    (pick(0), pick(1), pick(2))
}

/// Trilinear shape function a evaluated at (xi, eta, zeta).
pub fn shape_value(a: usize, xi: f64, eta: f64, zeta: f64) -> f64 {
    let (sx, se, sz) = corner_signs(a);
    0.125 * (1.0 + sx * xi) * (1.0 + se * eta) * (1.0 + sz * zeta)
}

/// Gradient of shape function a with respect to (xi, eta, zeta).
pub fn shape_grad(a: usize, xi: f64, eta: f64, zeta: f64) -> Vector3<f64> {
    let (sx, se, sz) = corner_signs(a);
    Vector3::new(
        0.125 * sx * (1.0 + se * eta) * (1.0 + sz * zeta),
        0.125 * se * (1.0 + sx * xi) * (1.0 + sz * zeta),
        0.125 * sz * (1.0 + sx * xi) * (1.0 + se * eta),
    )
}

fn corner_signs(a: usize) -> (f64, f64, f64) {
    // Corner order matches Mesh::build connectivity.
    const S: [(f64, f64, f64); 8] = [
        (-1.0, -1.0, -1.0),
        (1.0, -1.0, -1.0),
        (1.0, 1.0, -1.0),
        (-1.0, 1.0, -1.0),
        (-1.0, -1.0, 1.0),
        (1.0, -1.0, 1.0),
        (1.0, 1.0, 1.0),
        (-1.0, 1.0, 1.0),
    ];
    S[a]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn small_geometry() -> Geometry {
        Geometry {
            r_inner: 1.45e-3,
            thickness: 0.5075e-3,
            length: 12.5e-3,
        }
    }

    #[test]
    fn node_and_element_counts() {
        let m = Mesh::build(small_geometry(), 2, 3, 4).unwrap();
        assert_eq!(m.n_nodes(), 3 * 4 * 5);
        assert_eq!(m.elems.len(), 2 * 3 * 4);
        assert_eq!(m.lumen_faces.len(), 3 * 4);
        assert_eq!(m.plane_z0.len(), 3 * 4);
        assert_eq!(m.plane_zl.len(), 3 * 4);
        assert_eq!(m.plane_x0.len(), 3 * 5);
        assert_eq!(m.plane_y0.len(), 3 * 5);
    }

    #[test]
    fn shape_functions_partition_unity() {
        for &(xi, eta, zeta) in &[(0.3, -0.7, 0.1), (-1.0, 1.0, 0.5), (0.0, 0.0, 0.0)] {
            let sum: f64 = (0..8).map(|a| shape_value(a, xi, eta, zeta)).sum();
            assert_relative_eq!(sum, 1.0, max_relative = 1e-14);
            let gsum: Vector3<f64> = (0..8).map(|a| shape_grad(a, xi, eta, zeta)).sum();
            assert!(gsum.norm() < 1e-15);
        }
    }

    #[test]
    fn shape_gradients_match_finite_differences() {
        let h = 1e-6;
        for a in 0..8 {
            let (xi, eta, zeta) = (0.21, -0.43, 0.65);
            let g = shape_grad(a, xi, eta, zeta);
            let fd = Vector3::new(
                (shape_value(a, xi + h, eta, zeta) - shape_value(a, xi - h, eta, zeta)) / (2.0 * h),
                (shape_value(a, xi, eta + h, zeta) - shape_value(a, xi, eta - h, zeta)) / (2.0 * h),
                (shape_value(a, xi, eta, zeta + h) - shape_value(a, xi, eta, zeta - h)) / (2.0 * h),
            );
            assert!((g - fd).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobians_positive_and_volume_matches_annulus() {
        let g = small_geometry();
        let m = Mesh::build(g, 4, 12, 6).unwrap();
        let mut vol = 0.0;
        for conn in &m.elems {
            for q in 0..8 {
                let (xi, eta, zeta) = gauss_abscissa(q);
                let mut j = Matrix3::zeros();
                for (a, &n) in conn.iter().enumerate() {
                    let gr = shape_grad(a, xi, eta, zeta);
                    j += m.nodes[n].coords * gr.transpose();
                }
                let det = j.determinant();
                assert!(det > 0.0, "non-positive jacobian");
                vol += det; // unit Gauss weights
            }
        }
        let exact = std::f64::consts::FRAC_PI_4
            * ((g.r_inner + g.thickness).powi(2) - g.r_inner.powi(2))
            * g.length;
        // Straight element edges replace each arc by its chord, so the mesh
        // volume falls short of the annulus by exactly sin(dth)/dth.
        let dth = std::f64::consts::FRAC_PI_2 / 12.0;
        assert_relative_eq!(vol, exact * dth.sin() / dth, max_relative = 1e-12);
        assert!(vol < exact);
    }

    #[test]
    fn fibre_frames_are_orthonormal_and_tangent() {
        let m = Mesh::build(small_geometry(), 2, 6, 3).unwrap();
        for gps in &m.frames {
            for f in gps {
                let d = &f.dirs;
                assert_relative_eq!(d.a0.norm(), 1.0, max_relative = 1e-12);
                assert_relative_eq!(d.g0.norm(), 1.0, max_relative = 1e-12);
                assert_relative_eq!(d.m0.norm(), 1.0, max_relative = 1e-12);
                // Both collagen families make 45 degrees with the axis.
                assert_relative_eq!(d.a0.z, 0.5f64.sqrt(), max_relative = 1e-12);
                assert_relative_eq!(d.g0.z, -(0.5f64.sqrt()), max_relative = 1e-12);
                // All directions are tangent to the cylinder: no radial part.
                let e_r = Vector3::new(d.m0.y, -d.m0.x, 0.0);
                assert!(d.a0.dot(&e_r).abs() < 1e-12);
                assert!(d.g0.dot(&e_r).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bandwidth_is_independent_of_length_resolution() {
        let g = small_geometry();
        let a = Mesh::build(g, 3, 5, 4).unwrap();
        let b = Mesh::build(g, 3, 5, 20).unwrap();
        assert_eq!(a.half_bandwidth(), b.half_bandwidth());
        assert_eq!(a.half_bandwidth(), 3 * (4 * 6 + 5) + 2);
    }

    #[test]
    fn nearest_node_lookup() {
        let g = small_geometry();
        let m = Mesh::build(g, 2, 4, 4).unwrap();
        let n = m.nearest_node(g.r_inner, 0.0, 0.0);
        assert_eq!(n, 0);
        let n = m.nearest_node(g.r_inner + g.thickness, std::f64::consts::FRAC_PI_2, g.length);
        assert_eq!(n, m.n_nodes() - 1 - 0);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(Mesh::build(small_geometry(), 0, 1, 1).is_err());
        let bad = Geometry {
            r_inner: -1.0,
            thickness: 1.0,
            length: 1.0,
        };
        assert!(Mesh::build(bad, 1, 1, 1).is_err());
    }
}
