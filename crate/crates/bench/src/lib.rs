//! Shared fixtures for the criterion benchmarks.

use cardio_amg::{assemble_lumped_mass, assemble_stiffness, ConductivitySet, CsrMatrix, MeshSpec};

pub struct Fixture {
    pub nodes: usize,
    /// `A_i + A_e`, singular with the constants as kernel.
    pub elliptic: CsrMatrix,
    /// `(c_m/dt) M + A_i` with `c_m = 1`, `dt = 0.05`.
    pub parabolic: CsrMatrix,
    /// Zero-mean right-hand side for the elliptic operator.
    pub rhs: Vec<f64>,
}

pub fn ellipsoid_fixture(n: usize) -> Fixture {
    let mesh = MeshSpec::ellipsoid([n, n, n]).build().expect("mesh");
    let cond = ConductivitySet::default();
    let a_i = assemble_stiffness(&mesh, cond.intra()).expect("A_i");
    let a_e = assemble_stiffness(&mesh, cond.extra()).expect("A_e");
    let mass = assemble_lumped_mass(&mesh).expect("mass");
    let elliptic = a_i.lin_comb(1.0, &a_e, 1.0).expect("sum");
    let scale: Vec<f64> = mass.diag.iter().map(|m| m / 0.05).collect();
    let parabolic = a_i.add_diagonal(&scale).expect("parabolic");

    let nodes = mesh.n_nodes();
    let v: Vec<f64> = (0..nodes).map(|k| (0.37 * k as f64).sin() * 10.0).collect();
    let mut rhs = a_i.mul_vec(&v).expect("rhs");
    rhs.iter_mut().for_each(|r| *r = -*r);
    Fixture {
        nodes,
        elliptic,
        parabolic,
        rhs,
    }
}
