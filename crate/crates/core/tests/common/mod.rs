#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

use cardio_amg::amg::FilteredGraph;
use cardio_amg::element::{Mat3, Vec3, VERTICES};
use cardio_amg::{assemble_stiffness, generate_box_mesh, CsrMatrix, MediumConductivity};
use nalgebra::{DMatrix, Matrix3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.n_rows(), a.n_cols(), &a.to_dense())
}

/// Closed-form stiffness of an axis-aligned `hx*hy*hz` brick with constant `D`,
/// built from 1D factors: stiffness `k`, mass `m`, and gradient-value coupling `c`.
pub fn brick_oracle(h: Vec3, d: &Mat3) -> [[f64; 8]; 8] {
    // local 1D index of each vertex per direction: 0 at -1, 1 at +1
    let idx = |a: usize, dir: usize| usize::from(VERTICES[a][dir] > 0.0);
    let s = [-1.0, 1.0];
    let factor = |dir: usize, i: usize, j: usize, a: usize, b: usize| -> f64 {
        let (p, q) = (idx(a, dir), idx(b, dir));
        let hd = h[dir];
        match (i == dir, j == dir) {
            (true, true) => s[p] * s[q] / hd,
            // ∫ N_p' N_q = s_p / 2
            (true, false) => s[p] / 2.0,
            (false, true) => s[q] / 2.0,
            (false, false) => hd / 6.0 * if p == q { 2.0 } else { 1.0 },
        }
    };
    let mut k = [[0.0; 8]; 8];
    for a in 0..8 {
        for b in 0..8 {
            let mut sum = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    sum += d[i][j] * (0..3).map(|dir| factor(dir, i, j, a, b)).product::<f64>();
                }
            }
            k[a][b] = sum;
        }
    }
    k
}

pub fn brick(origin: Vec3, h: Vec3) -> [Vec3; 8] {
    let mut c = [[0.0; 3]; 8];
    for (a, v) in VERTICES.iter().enumerate() {
        for i in 0..3 {
            c[a][i] = origin[i] + 0.5 * (v[i] + 1.0) * h[i];
        }
    }
    c
}

pub fn random_spd(rng: &mut ChaCha8Rng) -> Mat3 {
    let mut b = [[0.0; 3]; 3];
    for row in &mut b {
        for x in row.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
    }
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = (0..3).map(|k| b[i][k] * b[j][k]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    d
}

/// Element volume by 3-point Gauss on `det J` using a locally written trilinear map.
pub fn hex_volume(c: &[Vec3; 8]) -> f64 {
    let pts = [-(0.6f64.sqrt()), 0.0, 0.6f64.sqrt()];
    let wts = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
    let mut vol = 0.0;
    for (i, &x) in pts.iter().enumerate() {
        for (j, &y) in pts.iter().enumerate() {
            for (k, &z) in pts.iter().enumerate() {
                let mut jac = Matrix3::<f64>::zeros();
                for (a, v) in VERTICES.iter().enumerate() {
                    let g = [
                        v[0] * (1.0 + v[1] * y) * (1.0 + v[2] * z) / 8.0,
                        v[1] * (1.0 + v[0] * x) * (1.0 + v[2] * z) / 8.0,
                        v[2] * (1.0 + v[0] * x) * (1.0 + v[1] * y) / 8.0,
                    ];
                    for r in 0..3 {
                        for d in 0..3 {
                            jac[(r, d)] += c[a][r] * g[d];
                        }
                    }
                }
                vol += wts[i] * wts[j] * wts[k] * jac.determinant();
            }
        }
    }
    vol
}

/// Symmetric graph on `n` nodes with each edge present with probability `p`.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> FilteredGraph {
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(p) {
                let w = rng.gen_range(0.05..1.0);
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
    }
    FilteredGraph::from_adjacency(adj)
}

/// Random irreducible-ish symmetric M-matrix with positive row-sum slack.
pub fn random_m_matrix(rng: &mut ChaCha8Rng, n: usize, p: f64) -> CsrMatrix {
    let mut off = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || rng.gen_bool(p) {
                let w = -rng.gen_range(0.1..1.0);
                off[i][j] = w;
                off[j][i] = w;
            }
        }
    }
    let mut t = Vec::new();
    for i in 0..n {
        let s: f64 = off[i].iter().map(|v| v.abs()).sum();
        t.push((i, i, s + rng.gen_range(0.0..0.1)));
        for j in 0..n {
            if off[i][j] != 0.0 {
                t.push((i, j, off[i][j]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &t).unwrap()
}

/// Interior (homogeneous Dirichlet) block of the trilinear Laplacian on the unit cube.
pub fn dirichlet_poisson(n: usize) -> CsrMatrix {
    let mesh = generate_box_mesh([1.0; 3], [n, n, n]).unwrap();
    let a = assemble_stiffness(&mesh, MediumConductivity::isotropic(1.0)).unwrap();
    let is_interior = |p: &[f64; 3]| p.iter().all(|&x| x > 1e-12 && x < 1.0 - 1e-12);
    let mut map = vec![usize::MAX; mesh.n_nodes()];
    let mut m = 0;
    for (i, p) in mesh.nodes().iter().enumerate() {
        if is_interior(p) {
            map[i] = m;
            m += 1;
        }
    }
    let mut t = Vec::new();
    for i in 0..a.n_rows() {
        if map[i] == usize::MAX {
            continue;
        }
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if map[j] != usize::MAX {
                t.push((map[i], map[j], v));
            }
        }
    }
    CsrMatrix::from_triplets(m, m, &t).unwrap()
}
