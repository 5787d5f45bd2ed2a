//! Trilinear reference hexahedron on `[-1, 1]^3` and 2x2x2 Gauss quadrature.
//!
//! Vertex order: bottom quad (ζ = -1) counterclockwise, then top quad.

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Reference coordinates of the 8 vertices.
pub const VERTICES: [Vec3; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Tensor 2-point Gauss rule; all weights are 1.
pub fn gauss_points() -> [Vec3; 8] {
    let g = 1.0 / 3f64.sqrt();
    let mut out = [[0.0; 3]; 8];
    for (k, v) in VERTICES.iter().enumerate() {
        out[k] = [v[0] * g, v[1] * g, v[2] * g];
    }
    out
}

pub fn shape_values(xi: Vec3) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (a, v) in VERTICES.iter().enumerate() {
        n[a] = 0.125 * (1.0 + v[0] * xi[0]) * (1.0 + v[1] * xi[1]) * (1.0 + v[2] * xi[2]);
    }
    n
}

/// Reference gradients `dN_a/dξ`.
pub fn shape_gradients(xi: Vec3) -> [Vec3; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, v) in VERTICES.iter().enumerate() {
        let f = [1.0 + v[0] * xi[0], 1.0 + v[1] * xi[1], 1.0 + v[2] * xi[2]];
        g[a] = [
            0.125 * v[0] * f[1] * f[2],
            0.125 * v[1] * f[0] * f[2],
            0.125 * v[2] * f[0] * f[1],
        ];
    }
    g
}

/// `J[i][d] = dx_i/dξ_d`.
pub fn jacobian(coords: &[Vec3; 8], dn: &[Vec3; 8]) -> Mat3 {
    let mut j = [[0.0; 3]; 3];
    for a in 0..8 {
        for i in 0..3 {
            for d in 0..3 {
                j[i][d] += coords[a][i] * dn[a][d];
            }
        }
    }
    j
}

pub fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn inv3(m: &Mat3, det: f64) -> Mat3 {
    let inv_det = 1.0 / det;
    [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalized(a: Vec3) -> Vec3 {
    let n = norm(a);
    [a[0] / n, a[1] / n, a[2] / n]
}
