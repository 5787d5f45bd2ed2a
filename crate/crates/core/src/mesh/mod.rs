//! Structured hexahedral meshes: truncated-ellipsoid ventricles and box
//! slabs, with per-element fiber frames.

mod io;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::element::{self, cross, dot, normalized, Vec3};

pub use io::{load_mesh, read_mesh, save_mesh, write_mesh, MeshFormat};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("element {element} has non-positive Jacobian determinant {det:e} at Gauss point {gauss_point}")]
    Geometry {
        element: usize,
        gauss_point: usize,
        det: f64,
    },
    #[error("element {element}: {msg}")]
    Connectivity { element: usize, msg: String },
    #[error("fiber frame of element {element} is not orthonormal (defect {defect:e})")]
    FiberFrame { element: usize, defect: f64 },
    #[error("mesh has no transmural coordinate; fibers cannot be assigned")]
    MissingTransmural,
    #[error("mesh file parse error at {location}: {msg}")]
    Parse { location: String, msg: String },
    #[error("unsupported mesh file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Local orthonormal fiber axes: fiber, cross-fiber (in sheet), sheet normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberFrame {
    pub a_l: Vec3,
    pub a_t: Vec3,
    pub a_n: Vec3,
}

impl FiberFrame {
    pub const GLOBAL: FiberFrame = FiberFrame {
        a_l: [1.0, 0.0, 0.0],
        a_t: [0.0, 1.0, 0.0],
        a_n: [0.0, 0.0, 1.0],
    };

    /// Largest deviation from orthonormality over the six Gram entries.
    pub fn orthonormality_defect(&self) -> f64 {
        let v = [self.a_l, self.a_t, self.a_n];
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in i..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(v[i], v[j]) - target).abs());
            }
        }
        worst
    }

    /// Frame whose fiber direction is rotated by `angle` (radians) from the
    /// circumferential tangent `e1` towards the second tangent `e2`, with the
    /// sheet normal orthogonal to both. Inputs need not be orthonormal.
    pub fn from_tangents(e1: Vec3, e2: Vec3, angle: f64) -> FiberFrame {
        let n = normalized(cross(e1, e2));
        let u = normalized(e1);
        let v = cross(n, u);
        let (s, c) = angle.sin_cos();
        let a_l = normalized([c * u[0] + s * v[0], c * u[1] + s * v[1], c * u[2] + s * v[2]]);
        let a_t = cross(n, a_l);
        FiberFrame { a_l, a_t, a_n: n }
    }
}

/// Axis coefficients (cm) and angular ranges (rad) of a truncated ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl Default for EllipsoidParams {
    /// Idealized left ventricle.
    fn default() -> Self {
        Self {
            a1: 2.2,
            a2: 3.3,
            b1: 2.2,
            b2: 3.3,
            c1: 5.9,
            c2: 6.4,
            theta_min: -1.5 * PI,
            theta_max: 0.5 * PI,
            phi_min: -3.0 * PI / 8.0,
            phi_max: PI / 8.0,
        }
    }
}

impl EllipsoidParams {
    pub fn validate(&self) -> Result<(), MeshError> {
        let pos = |lo: f64, hi: f64, name: &str| {
            if lo > 0.0 && hi > lo && hi.is_finite() {
                Ok(())
            } else {
                Err(MeshError::InvalidParameter(format!(
                    "{name}: require 0 < {name}1 < {name}2, got {lo}, {hi}"
                )))
            }
        };
        pos(self.a1, self.a2, "a")?;
        pos(self.b1, self.b2, "b")?;
        pos(self.c1, self.c2, "c")?;
        if !(self.theta_max > self.theta_min) || !(self.phi_max > self.phi_min) {
            return Err(MeshError::InvalidParameter("angular ranges must be non-empty".into()));
        }
        Ok(())
    }

    /// Point at circumferential angle `theta`, latitude `phi`, transmural
    /// depth `r` (0 = endocardium, 1 = epicardium).
    pub fn point(&self, theta: f64, phi: f64, r: f64) -> Vec3 {
        let a = self.a1 + r * (self.a2 - self.a1);
        let b = self.b1 + r * (self.b2 - self.b1);
        let c = self.c1 + r * (self.c2 - self.c1);
        [a * phi.cos() * theta.cos(), b * phi.cos() * theta.sin(), c * phi.sin()]
    }
}

/// Hexahedral mesh with trilinear elements.
#[derive(Debug, Clone, PartialEq)]
pub struct HexMesh {
    nodes: Vec<Vec3>,
    elements: Vec<[usize; 8]>,
    fibers: Vec<FiberFrame>,
    /// Per-element transmural coordinate in [0, 1], when known.
    transmural: Option<Vec<f64>>,
    metadata: BTreeMap<String, String>,
}

impl HexMesh {
    /// Assembles a mesh from parts and validates it.
    pub fn from_parts(
        nodes: Vec<Vec3>,
        elements: Vec<[usize; 8]>,
        fibers: Vec<FiberFrame>,
        transmural: Option<Vec<f64>>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self, MeshError> {
        let mesh = Self {
            nodes,
            elements,
            fibers,
            transmural,
            metadata,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 8]] {
        &self.elements
    }

    pub fn fibers(&self) -> &[FiberFrame] {
        &self.fibers
    }

    pub fn transmural(&self) -> Option<&[f64]> {
        self.transmural.as_deref()
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// Two unknowns (v, u_e) per node.
    pub fn bidomain_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn element_coords(&self, e: usize) -> [Vec3; 8] {
        let mut c = [[0.0; 3]; 8];
        for (a, &n) in self.elements[e].iter().enumerate() {
            c[a] = self.nodes[n];
        }
        c
    }

    /// Checks connectivity, Jacobian positivity at all Gauss points, and
    /// fiber orthonormality (1e-12).
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.nodes.len();
        if self.fibers.len() != self.elements.len() {
            return Err(MeshError::Connectivity {
                element: self.fibers.len().min(self.elements.len()),
                msg: format!(
                    "{} fiber frames for {} elements",
                    self.fibers.len(),
                    self.elements.len()
                ),
            });
        }
        if let Some(t) = &self.transmural {
            if t.len() != self.elements.len() {
                return Err(MeshError::Connectivity {
                    element: t.len().min(self.elements.len()),
                    msg: "transmural coordinate count does not match element count".into(),
                });
            }
        }
        if self.nodes.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(MeshError::InvalidParameter("non-finite node coordinate".into()));
        }
        let gps = element::gauss_points();
        for (e, conn) in self.elements.iter().enumerate() {
            for (a, &i) in conn.iter().enumerate() {
                if i >= n {
                    return Err(MeshError::Connectivity {
                        element: e,
                        msg: format!("node index {i} >= node count {n}"),
                    });
                }
                if conn[..a].contains(&i) {
                    return Err(MeshError::Connectivity {
                        element: e,
                        msg: format!("node {i} repeated"),
                    });
                }
            }
            let coords = self.element_coords(e);
            for (g, xi) in gps.iter().enumerate() {
                let det = element::det3(&element::jacobian(&coords, &element::shape_gradients(*xi)));
                if !(det > 0.0) {
                    return Err(MeshError::Geometry {
                        element: e,
                        gauss_point: g,
                        det,
                    });
                }
            }
            let defect = self.fibers[e].orthonormality_defect();
            if !(defect <= 1e-12) {
                return Err(MeshError::FiberFrame { element: e, defect });
            }
        }
        Ok(())
    }

    /// `∑_e ∫ |det J|` by 2x2x2 Gauss quadrature.
    pub fn volume(&self) -> f64 {
        let gps = element::gauss_points();
        (0..self.elements.len())
            .map(|e| {
                let c = self.element_coords(e);
                gps.iter()
                    .map(|xi| element::det3(&element::jacobian(&c, &element::shape_gradients(*xi))).abs())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.nodes {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Structured lattice dimensions (elements per direction), if recorded.
    pub fn lattice_dims(&self) -> Option<[usize; 3]> {
        let s = self.metadata.get("lattice")?;
        let v: Vec<usize> = s.split(',').filter_map(|t| t.trim().parse().ok()).collect();
        (v.len() == 3).then(|| [v[0], v[1], v[2]])
    }

    pub fn kind(&self) -> &str {
        self.metadata.get("kind").map_or("unknown", String::as_str)
    }
}

fn structured_connectivity(n: [usize; 3]) -> Vec<[usize; 8]> {
    let (nx, ny) = (n[0] + 1, n[1] + 1);
    let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut out = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                out.push([
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ]);
            }
        }
    }
    out
}

fn layer_coordinates(n: [usize; 3]) -> Vec<f64> {
    let mut t = Vec::with_capacity(n[0] * n[1] * n[2]);
    for k in 0..n[2] {
        let r = (k as f64 + 0.5) / n[2] as f64;
        t.extend(std::iter::repeat_n(r, n[0] * n[1]));
    }
    t
}

fn check_counts(n: [usize; 3]) -> Result<(), MeshError> {
    if n.contains(&0) {
        return Err(MeshError::InvalidParameter(format!(
            "element counts must be >= 1, got {n:?}"
        )));
    }
    Ok(())
}

/// Mesh of the truncated ellipsoid on a uniform `(θ, φ, r)` lattice.
///
/// `θ` is circumferential (lattice direction 0), `φ` latitudinal (direction 1)
/// and `r` transmural (direction 2). The seam in `θ` is not identified, so the
/// node count is `(n_theta+1)(n_phi+1)(n_r+1)`. Fibers start circumferential;
/// see [`assign_fibers`].
pub fn generate_ellipsoid_mesh(
    params: &EllipsoidParams,
    n_theta: usize,
    n_phi: usize,
    n_r: usize,
) -> Result<HexMesh, MeshError> {
    params.validate()?;
    let n = [n_theta, n_phi, n_r];
    check_counts(n)?;
    let mut nodes = Vec::with_capacity((n_theta + 1) * (n_phi + 1) * (n_r + 1));
    for k in 0..=n_r {
        let r = k as f64 / n_r as f64;
        for j in 0..=n_phi {
            let phi = params.phi_min + (params.phi_max - params.phi_min) * j as f64 / n_phi as f64;
            for i in 0..=n_theta {
                let theta = params.theta_min + (params.theta_max - params.theta_min) * i as f64 / n_theta as f64;
                nodes.push(params.point(theta, phi, r));
            }
        }
    }
    let elements = structured_connectivity(n);
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "ellipsoid".into());
    metadata.insert("lattice".into(), format!("{n_theta},{n_phi},{n_r}"));
    metadata.insert(
        "params".into(),
        format!(
            "a={},{} b={},{} c={},{} theta={},{} phi={},{}",
            params.a1,
            params.a2,
            params.b1,
            params.b2,
            params.c1,
            params.c2,
            params.theta_min,
            params.theta_max,
            params.phi_min,
            params.phi_max
        ),
    );
    let mut mesh = HexMesh {
        fibers: vec![FiberFrame::GLOBAL; elements.len()],
        nodes,
        elements,
        transmural: Some(layer_coordinates(n)),
        metadata,
    };
    mesh.fibers = rotated_frames(&mesh, |_| 0.0);
    mesh.validate()?;
    Ok(mesh)
}

/// Axis-aligned box `[0, L_x] x [0, L_y] x [0, L_z]` with `n` elements per
/// direction and global-axis fiber frames.
pub fn generate_box_mesh(lengths: [f64; 3], n: [usize; 3]) -> Result<HexMesh, MeshError> {
    check_counts(n)?;
    if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(MeshError::InvalidParameter(format!(
            "box lengths must be positive, got {lengths:?}"
        )));
    }
    let mut nodes = Vec::with_capacity((n[0] + 1) * (n[1] + 1) * (n[2] + 1));
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                nodes.push([
                    lengths[0] * i as f64 / n[0] as f64,
                    lengths[1] * j as f64 / n[1] as f64,
                    lengths[2] * k as f64 / n[2] as f64,
                ]);
            }
        }
    }
    let elements = structured_connectivity(n);
    let mut metadata = BTreeMap::new();
    metadata.insert("kind".into(), "box".into());
    metadata.insert("lattice".into(), format!("{},{},{}", n[0], n[1], n[2]));
    metadata.insert(
        "lengths".into(),
        format!("{},{},{}", lengths[0], lengths[1], lengths[2]),
    );
    let mesh = HexMesh {
        fibers: vec![FiberFrame::GLOBAL; elements.len()],
        nodes,
        elements,
        transmural: Some(layer_coordinates(n)),
        metadata,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn rotated_frames(mesh: &HexMesh, angle_of: impl Fn(usize) -> f64) -> Vec<FiberFrame> {
    let center = element::shape_gradients([0.0; 3]);
    (0..mesh.elements.len())
        .map(|e| {
            let j = element::jacobian(&mesh.element_coords(e), &center);
            let e1 = [j[0][0], j[1][0], j[2][0]];
            let e2 = [j[0][1], j[1][1], j[2][1]];
            FiberFrame::from_tangents(e1, e2, angle_of(e))
        })
        .collect()
}

/// Rotates fibers linearly in angle from `endo_angle` (transmural 0) to
/// `epi_angle` (transmural 1) within each element's local tangent plane.
///
/// The tangent plane is spanned by the first two lattice directions at the
/// element center; the first is taken as circumferential.
pub fn assign_fibers(mut mesh: HexMesh, endo_angle: f64, epi_angle: f64) -> Result<HexMesh, MeshError> {
    let t = mesh.transmural.clone().ok_or(MeshError::MissingTransmural)?;
    mesh.fibers = rotated_frames(&mesh, |e| endo_angle + (epi_angle - endo_angle) * t[e]);
    mesh.metadata
        .insert("fibers".into(), format!("endo={endo_angle},epi={epi_angle}"));
    Ok(mesh)
}

/// Default fiber rotation, radians.
pub const DEFAULT_ENDO_ANGLE: f64 = PI / 3.0;
pub const DEFAULT_EPI_ANGLE: f64 = -PI / 3.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipsoid_dof_counts() {
        let p = EllipsoidParams::default();
        let m = generate_ellipsoid_mesh(&p, 32, 32, 16).unwrap();
        assert_eq!(m.n_nodes(), 33 * 33 * 17);
        assert_eq!(m.bidomain_dofs(), 37026);
        assert_eq!(m.n_elements(), 32 * 32 * 16);
    }

    #[test]
    fn single_cell_full_turn_is_degenerate() {
        // one cell spanning the full 2π in θ puts both θ-ends on the seam, so
        // the element collapses; this must be reported, not accepted
        let m = generate_ellipsoid_mesh(&EllipsoidParams::default(), 1, 1, 1);
        assert!(matches!(m, Err(MeshError::Geometry { element: 0, .. })));
    }

    #[test]
    fn single_cell_on_reduced_sector_is_valid() {
        let p = EllipsoidParams {
            theta_min: 0.0,
            theta_max: 0.5,
            ..EllipsoidParams::default()
        };
        let m = generate_ellipsoid_mesh(&p, 1, 1, 1).unwrap();
        assert_eq!(m.n_nodes(), 8);
        assert!(m.volume() > 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = EllipsoidParams {
            a2: 1.0,
            ..EllipsoidParams::default()
        };
        assert!(matches!(
            generate_ellipsoid_mesh(&p, 4, 4, 2),
            Err(MeshError::InvalidParameter(_))
        ));
        assert!(generate_box_mesh([1.0, 1.0, 1.0], [0, 1, 1]).is_err());
        assert!(generate_box_mesh([1.0, -1.0, 1.0], [1, 1, 1]).is_err());
    }

    #[test]
    fn box_counts_and_volume() {
        let m = generate_box_mesh([1.0, 1.0, 1.0], [16, 16, 16]).unwrap();
        assert_eq!(m.n_nodes(), 4913);
        let m = generate_box_mesh([2.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let e0 = m.element_coords(0);
        assert!((e0[1][0] - e0[0][0] - 1.0).abs() < 1e-15);
        let unit = generate_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        assert!((unit.volume() - 1.0).abs() < 1e-14);
        let b = generate_box_mesh([1.3, 0.7, 2.1], [5, 3, 4]).unwrap();
        assert!((b.volume() - 1.3 * 0.7 * 2.1).abs() <= 1e-10 * 1.3 * 0.7 * 2.1);
    }

    #[test]
    fn inverted_element_named() {
        let m = generate_box_mesh([1.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let mut elements = m.elements().to_vec();
        elements[1].swap(0, 1);
        elements[1].swap(2, 3);
        elements[1].swap(4, 5);
        elements[1].swap(6, 7);
        let err =
            HexMesh::from_parts(m.nodes().to_vec(), elements, m.fibers().to_vec(), None, BTreeMap::new()).unwrap_err();
        assert!(matches!(err, MeshError::Geometry { element: 1, .. }));
    }

    #[test]
    fn zero_rotation_keeps_circumferential_fibers() {
        let m = generate_ellipsoid_mesh(&EllipsoidParams::default(), 8, 6, 3).unwrap();
        let m = assign_fibers(m, 0.0, 0.0).unwrap();
        let center = element::shape_gradients([0.0; 3]);
        for e in 0..m.n_elements() {
            let j = element::jacobian(&m.element_coords(e), &center);
            let circ = normalized([j[0][0], j[1][0], j[2][0]]);
            let f = m.fibers()[e].a_l;
            for d in 0..3 {
                assert!((f[d] - circ[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn midwall_fiber_is_circumferential_for_symmetric_rotation() {
        // three layers: the middle layer has transmural coordinate 0.5
        let m = generate_box_mesh([1.0, 1.0, 1.0], [2, 2, 3]).unwrap();
        let m = assign_fibers(m, PI / 3.0, -PI / 3.0).unwrap();
        for (e, t) in m.transmural().unwrap().iter().enumerate() {
            if (t - 0.5).abs() < 1e-15 {
                let f = m.fibers()[e].a_l;
                assert!((f[0] - 1.0).abs() < 1e-12 && f[1].abs() < 1e-12 && f[2].abs() < 1e-12);
            }
        }
        let k0 = m.fibers()[0].a_l;
        let expected = (PI / 3.0 - (2.0 * PI / 3.0) / 6.0).cos();
        assert!((k0[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_transmural_is_an_error() {
        let m = generate_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        let bare = HexMesh::from_parts(
            m.nodes().to_vec(),
            m.elements().to_vec(),
            m.fibers().to_vec(),
            None,
            BTreeMap::new(),
        )
        .unwrap();
        assert!(matches!(
            assign_fibers(bare, 0.1, 0.2),
            Err(MeshError::MissingTransmural)
        ));
    }

    #[test]
    fn frame_is_right_handed() {
        let f = FiberFrame::from_tangents([1.0, 0.2, 0.0], [0.1, 1.0, 0.3], 0.7);
        let c = cross(f.a_l, f.a_t);
        for d in 0..3 {
            assert!((c[d] - f.a_n[d]).abs() < 1e-14);
        }
    }
}
