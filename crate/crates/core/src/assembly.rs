//! Conductivity tensors and trilinear FEM assembly of the lumped mass and
//! stiffness matrices.

use serde::{Deserialize, Serialize};

use crate::element::{self, Mat3, Vec3};
use crate::mesh::{FiberFrame, HexMesh};
use crate::sparsekit::CsrMatrix;

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("element {element} is inverted or degenerate (det J = {det:e})")]
    Geometry { element: usize, det: f64 },
    #[error("invalid conductivity: {0}")]
    Conductivity(String),
    #[error("fiber frame is not orthonormal (defect {defect:e})")]
    Frame { defect: f64 },
}

/// Principal conductivities of one medium along `(a_l, a_t, a_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MediumConductivity {
    pub l: f64,
    pub t: f64,
    pub n: f64,
}

impl MediumConductivity {
    pub fn isotropic(s: f64) -> Self {
        Self { l: s, t: s, n: s }
    }

    fn validate(&self) -> Result<(), AssemblyError> {
        if [self.l, self.t, self.n].iter().all(|s| *s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(AssemblyError::Conductivity(format!(
                "all conductivities must be positive, got {self:?}"
            )))
        }
    }
}

/// Intra- and extracellular conductivities, mS/cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductivitySet {
    pub sigma_l_i: f64,
    pub sigma_t_i: f64,
    pub sigma_n_i: f64,
    pub sigma_l_e: f64,
    pub sigma_t_e: f64,
    pub sigma_n_e: f64,
}

impl Default for ConductivitySet {
    /// Orthotropic ventricular values from the literature.
    fn default() -> Self {
        Self {
            sigma_l_i: 3.0,
            sigma_t_i: 0.31525,
            sigma_n_i: 0.031525,
            sigma_l_e: 2.0,
            sigma_t_e: 1.3514,
            sigma_n_e: 0.6757,
        }
    }
}

impl ConductivitySet {
    pub fn intra(&self) -> MediumConductivity {
        MediumConductivity {
            l: self.sigma_l_i,
            t: self.sigma_t_i,
            n: self.sigma_n_i,
        }
    }

    pub fn extra(&self) -> MediumConductivity {
        MediumConductivity {
            l: self.sigma_l_e,
            t: self.sigma_t_e,
            n: self.sigma_n_e,
        }
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        self.intra().validate()?;
        self.extra().validate()
    }
}

/// `D = σ_t I + (σ_l - σ_t) a_l a_l^T + (σ_n - σ_t) a_n a_n^T`.
pub fn conductivity_tensor(frame: &FiberFrame, sigma: MediumConductivity) -> Result<Mat3, AssemblyError> {
    sigma.validate()?;
    let defect = frame.orthonormality_defect();
    if !(defect <= 1e-10) {
        return Err(AssemblyError::Frame { defect });
    }
    Ok(tensor_unchecked(frame, sigma))
}

fn tensor_unchecked(frame: &FiberFrame, s: MediumConductivity) -> Mat3 {
    let (l, n) = (frame.a_l, frame.a_n);
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { s.t } else { 0.0 };
            d[i][j] = id + (s.l - s.t) * l[i] * l[j] + (s.n - s.t) * n[i] * n[j];
        }
    }
    d
}

/// Element matrix `K_ab = ∫ D ∇N_b · ∇N_a` with 2x2x2 Gauss quadrature.
pub fn element_stiffness(coords: &[Vec3; 8], d: &Mat3) -> Result<[[f64; 8]; 8], f64> {
    let mut k = [[0.0; 8]; 8];
    for xi in element::gauss_points() {
        let dn = element::shape_gradients(xi);
        let j = element::jacobian(coords, &dn);
        let det = element::det3(&j);
        if !(det > 0.0) {
            return Err(det);
        }
        let jinv = element::inv3(&j, det);
        // physical gradients: ∇N = J^{-T} dN/dξ
        let mut g = [[0.0; 3]; 8];
        for a in 0..8 {
            for i in 0..3 {
                g[a][i] = (0..3).map(|dd| jinv[dd][i] * dn[a][dd]).sum();
            }
        }
        let mut dg = [[0.0; 3]; 8];
        for a in 0..8 {
            for i in 0..3 {
                dg[a][i] = (0..3).map(|m| d[i][m] * g[a][m]).sum();
            }
        }
        for a in 0..8 {
            for b in 0..8 {
                k[a][b] += det * element::dot(g[a], dg[b]);
            }
        }
    }
    Ok(k)
}

/// Node-to-node sparsity pattern induced by shared elements (values zero).
pub fn node_pattern(mesh: &HexMesh) -> CsrMatrix {
    let n = mesh.n_nodes();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in mesh.elements() {
        for &a in e {
            rows[a].extend_from_slice(e);
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(r);
        row_ptr.push(col_idx.len());
    }
    let nnz = col_idx.len();
    CsrMatrix::new(n, n, row_ptr, col_idx, vec![0.0; nnz]).expect("pattern is sorted by construction")
}

/// Stiffness matrix of one medium with per-element constant fiber tensors.
pub fn assemble_stiffness(mesh: &HexMesh, sigma: MediumConductivity) -> Result<CsrMatrix, AssemblyError> {
    sigma.validate()?;
    let mut a = node_pattern(mesh);
    for (e, conn) in mesh.elements().iter().enumerate() {
        let d = conductivity_tensor(&mesh.fibers()[e], sigma)?;
        let ke = element_stiffness(&mesh.element_coords(e), &d)
            .map_err(|det| AssemblyError::Geometry { element: e, det })?;
        for (p, &i) in conn.iter().enumerate() {
            for (q, &j) in conn.iter().enumerate() {
                let k = a.find(i, j).expect("pattern covers element couplings");
                a.vals_mut()[k] += ke[p][q];
            }
        }
    }
    Ok(a)
}

/// Row-sum lumped mass matrix (nodal volumes, cm^3).
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMass {
    pub diag: Vec<f64>,
}

impl LumpedMass {
    pub fn total(&self) -> f64 {
        self.diag.iter().sum()
    }

    /// `y = M x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.diag.iter().zip(x).map(|(m, v)| m * v).collect()
    }
}

/// Row sums of the consistent mass matrix, i.e. `m_a = ∫ N_a`.
pub fn assemble_lumped_mass(mesh: &HexMesh) -> Result<LumpedMass, AssemblyError> {
    let mut diag = vec![0.0; mesh.n_nodes()];
    let gps = element::gauss_points();
    for (e, conn) in mesh.elements().iter().enumerate() {
        let coords = mesh.element_coords(e);
        for xi in gps {
            let det = element::det3(&element::jacobian(&coords, &element::shape_gradients(xi)));
            if !(det > 0.0) {
                return Err(AssemblyError::Geometry { element: e, det });
            }
            let nv = element::shape_values(xi);
            for (a, &i) in conn.iter().enumerate() {
                diag[i] += nv[a] * det;
            }
        }
    }
    Ok(LumpedMass { diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{assign_fibers, generate_box_mesh, generate_ellipsoid_mesh, EllipsoidParams};

    #[test]
    fn isotropic_tensor_is_scaled_identity() {
        let f = FiberFrame::from_tangents([1.0, 0.3, -0.2], [0.0, 1.0, 0.4], 0.9);
        let d = conductivity_tensor(&f, MediumConductivity::isotropic(2.5)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.5 } else { 0.0 };
                assert!((d[i][j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn aligned_tensor_is_diagonal() {
        let d = conductivity_tensor(&FiberFrame::GLOBAL, MediumConductivity { l: 3.0, t: 1.0, n: 0.5 }).unwrap();
        assert_eq!(d, [[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.5]]);
    }

    #[test]
    fn bad_inputs_rejected() {
        let skew = FiberFrame {
            a_l: [1.0, 0.0, 0.0],
            a_t: [1.0, 0.0, 0.0],
            a_n: [0.0, 0.0, 1.0],
        };
        assert!(matches!(
            conductivity_tensor(&skew, MediumConductivity::isotropic(1.0)),
            Err(AssemblyError::Frame { .. })
        ));
        assert!(conductivity_tensor(&FiberFrame::GLOBAL, MediumConductivity { l: 1.0, t: 0.0, n: 1.0 }).is_err());
    }

    #[test]
    fn unit_cube_mass_is_one_eighth_per_node() {
        let m = generate_box_mesh([1.0, 1.0, 1.0], [1, 1, 1]).unwrap();
        let mass = assemble_lumped_mass(&m).unwrap();
        for v in &mass.diag {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn two_element_bar_mass_is_additive() {
        let m = generate_box_mesh([2.0, 1.0, 1.0], [2, 1, 1]).unwrap();
        let mass = assemble_lumped_mass(&m).unwrap();
        for (i, p) in m.nodes().iter().enumerate() {
            let expected = if (p[0] - 1.0).abs() < 1e-12 { 0.25 } else { 0.125 };
            assert!((mass.diag[i] - expected).abs() < 1e-15, "node {i}");
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_symmetric() {
        let m = generate_ellipsoid_mesh(&EllipsoidParams::default(), 8, 6, 3).unwrap();
        let m = assign_fibers(m, 1.0, -1.0).unwrap();
        let a = assemble_stiffness(&m, ConductivitySet::default().intra()).unwrap();
        let amax = a.max_abs();
        assert!(a.symmetry_defect() <= 1e-12 * amax);
        for i in 0..a.n_rows() {
            let (_, v) = a.row(i);
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            let s: f64 = v.iter().sum();
            assert!(s.abs() <= 1e-10 * l1);
        }
    }
}
