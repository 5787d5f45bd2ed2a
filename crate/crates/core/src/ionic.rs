//! Membrane models and the applied stimulus.
//!
//! Potentials enter in mV. The default Rogers–McCulloch model works on the
//! normalized `u = (v - v_rest) / v_amp` and reports its current scaled by
//! `v_amp`, so with `c_m = 1` the normalized dynamics are recovered exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::Vec3;
use crate::mesh::HexMesh;

#[derive(Debug, Error)]
pub enum IonicError {
    #[error("invalid ionic parameter: {0}")]
    InvalidParameter(String),
    #[error("implicit gating update did not converge at node {node} (residual {residual:e} after {iterations} Newton steps)")]
    NewtonFailed {
        node: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("state length mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid stimulus: {0}")]
    InvalidStimulus(String),
}

const NEWTON_MAX_ITERS: usize = 30;
const NEWTON_TOL: f64 = 1e-12;

/// A membrane model with `n_w` gating and `n_c` concentration variables.
pub trait IonicModel: Send + Sync {
    fn name(&self) -> &str;
    fn n_w(&self) -> usize;
    fn n_c(&self) -> usize;

    /// `(v0, w0, c0)`.
    fn resting_state(&self) -> (f64, Vec<f64>, Vec<f64>);

    /// Nominal upper bound of the action potential in mV.
    fn peak_potential(&self) -> f64;

    /// `dw/dt = R(v, w)`.
    fn gating_rate(&self, v: f64, w: &[f64], out: &mut [f64]);

    /// `dc/dt = C(v, w, c)`.
    fn concentration_rate(&self, v: f64, w: &[f64], c: &[f64], out: &mut [f64]) {
        let _ = (v, w, c);
        out.iter_mut().for_each(|x| *x = 0.0);
    }

    /// Membrane current density per unit volume.
    fn ion_current(&self, v: f64, w: &[f64], c: &[f64]) -> f64;

    /// Backward Euler at frozen `v`: `y - dt F(v, y) = y_n` for `y = (w, c)`.
    /// The default uses Newton with a finite-difference Jacobian; `node` only
    /// labels errors.
    fn backward_euler(&self, node: usize, v: f64, w: &mut [f64], c: &mut [f64], dt: f64) -> Result<(), IonicError> {
        let (nw, nc) = (self.n_w(), self.n_c());
        let m = nw + nc;
        if m == 0 {
            return Ok(());
        }
        let y0: Vec<f64> = w.iter().chain(c.iter()).copied().collect();
        let mut y = y0.clone();
        let residual = |y: &[f64], out: &mut [f64]| {
            let mut f = vec![0.0; m];
            self.gating_rate(v, &y[..nw], &mut f[..nw]);
            self.concentration_rate(v, &y[..nw], &y[nw..], &mut f[nw..]);
            for k in 0..m {
                out[k] = y[k] - dt * f[k] - y0[k];
            }
        };
        let mut g = vec![0.0; m];
        let mut gp = vec![0.0; m];
        let mut res = f64::INFINITY;
        for it in 0..NEWTON_MAX_ITERS {
            residual(&y, &mut g);
            res = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            if res <= NEWTON_TOL * (1.0 + y.iter().fold(0.0f64, |a, x| a.max(x.abs()))) {
                w.copy_from_slice(&y[..nw]);
                c.copy_from_slice(&y[nw..]);
                return Ok(());
            }
            let mut jac = vec![0.0; m * m];
            for col in 0..m {
                let h = 1e-7 * (1.0 + y[col].abs());
                let mut yp = y.clone();
                yp[col] += h;
                residual(&yp, &mut gp);
                for row in 0..m {
                    jac[row * m + col] = (gp[row] - g[row]) / h;
                }
            }
            let step = solve_small(&mut jac, &mut g, m).ok_or(IonicError::NewtonFailed {
                node,
                iterations: it,
                residual: res,
            })?;
            for k in 0..m {
                y[k] -= step[k];
            }
            if y.iter().any(|x| !x.is_finite()) {
                break;
            }
        }
        Err(IonicError::NewtonFailed {
            node,
            iterations: NEWTON_MAX_ITERS,
            residual: res,
        })
    }
}

fn solve_small(a: &mut [f64], b: &mut [f64], m: usize) -> Option<Vec<f64>> {
    for k in 0..m {
        let piv = (k..m).max_by(|&i, &j| a[i * m + k].abs().total_cmp(&a[j * m + k].abs()))?;
        if a[piv * m + k].abs() < 1e-300 {
            return None;
        }
        if piv != k {
            for j in 0..m {
                a.swap(k * m + j, piv * m + j);
            }
            b.swap(k, piv);
        }
        for i in k + 1..m {
            let f = a[i * m + k] / a[k * m + k];
            for j in k..m {
                a[i * m + j] -= f * a[k * m + j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; m];
    for k in (0..m).rev() {
        let mut s = b[k];
        for j in k + 1..m {
            s -= a[k * m + j] * x[j];
        }
        x[k] = s / a[k * m + k];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RogersMcCullochParams {
    pub g: f64,
    pub v_th: f64,
    pub v_p: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    /// Resting potential in mV (`u = 0`).
    pub v_rest: f64,
    /// mV per unit of `u`; `u = v_p` maps to `v_rest + v_p * v_amp`.
    pub v_amp: f64,
}

impl Default for RogersMcCullochParams {
    fn default() -> Self {
        Self {
            g: 4.0,
            v_th: 0.13,
            v_p: 1.0,
            eta1: 4.4,
            eta2: 0.012,
            eta3: 1.0,
            v_rest: -85.0,
            v_amp: 100.0,
        }
    }
}

impl RogersMcCullochParams {
    pub fn validate(&self) -> Result<(), IonicError> {
        let all = [
            self.g,
            self.v_th,
            self.v_p,
            self.eta1,
            self.eta2,
            self.eta3,
            self.v_rest,
            self.v_amp,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(IonicError::InvalidParameter(
                "non-finite Rogers-McCulloch parameter".into(),
            ));
        }
        if !(self.v_p > self.v_th && self.v_th > 0.0) {
            return Err(IonicError::InvalidParameter(format!(
                "need v_p > v_th > 0, got v_p = {}, v_th = {}",
                self.v_p, self.v_th
            )));
        }
        if !(self.g > 0.0 && self.eta1 > 0.0 && self.eta2 > 0.0 && self.eta3 > 0.0 && self.v_amp > 0.0) {
            return Err(IonicError::InvalidParameter("rates and v_amp must be positive".into()));
        }
        Ok(())
    }
}

/// Two-variable excitable model:
/// `I_ion = G u (1 - u/v_th)(1 - u/v_p) + η1 u w`, `R = η2 (u/v_p - η3 w)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RogersMcCulloch {
    pub params: RogersMcCullochParams,
}

impl RogersMcCulloch {
    pub fn new(params: RogersMcCullochParams) -> Result<Self, IonicError> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn normalized(&self, v: f64) -> f64 {
        (v - self.params.v_rest) / self.params.v_amp
    }

    /// Current of the normalized model at `(u, w)`.
    pub fn normalized_current(&self, u: f64, w: f64) -> f64 {
        let p = &self.params;
        p.g * u * (1.0 - u / p.v_th) * (1.0 - u / p.v_p) + p.eta1 * u * w
    }
}

impl IonicModel for RogersMcCulloch {
    fn name(&self) -> &str {
        "rogers-mcculloch"
    }

    fn n_w(&self) -> usize {
        1
    }

    fn n_c(&self) -> usize {
        0
    }

    fn resting_state(&self) -> (f64, Vec<f64>, Vec<f64>) {
        (self.params.v_rest, vec![0.0], Vec::new())
    }

    fn peak_potential(&self) -> f64 {
        self.params.v_rest + self.params.v_p * self.params.v_amp
    }

    fn gating_rate(&self, v: f64, w: &[f64], out: &mut [f64]) {
        let p = &self.params;
        out[0] = p.eta2 * (self.normalized(v) / p.v_p - p.eta3 * w[0]);
    }

    fn ion_current(&self, v: f64, w: &[f64], _c: &[f64]) -> f64 {
        self.params.v_amp * self.normalized_current(self.normalized(v), w[0])
    }

    fn backward_euler(&self, _node: usize, v: f64, w: &mut [f64], _c: &mut [f64], dt: f64) -> Result<(), IonicError> {
        let p = &self.params;
        let u = self.normalized(v);
        w[0] = (w[0] + dt * p.eta2 * u / p.v_p) / (1.0 + dt * p.eta2 * p.eta3);
        Ok(())
    }
}

/// Gating and concentration variables, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IonicState {
    pub w: Vec<f64>,
    pub c: Vec<f64>,
}

impl IonicState {
    pub fn resting(model: &dyn IonicModel, n_nodes: usize) -> Self {
        let (_, w0, c0) = model.resting_state();
        Self {
            w: w0.iter().copied().cycle().take(n_nodes * w0.len()).collect(),
            c: c0.iter().copied().cycle().take(n_nodes * c0.len()).collect(),
        }
    }
}

fn check_dims(model: &dyn IonicModel, v: &[f64], state: &IonicState) -> Result<(), IonicError> {
    let n = v.len();
    for (len, per) in [(state.w.len(), model.n_w()), (state.c.len(), model.n_c())] {
        if len != n * per {
            return Err(IonicError::DimensionMismatch {
                expected: n * per,
                found: len,
            });
        }
    }
    Ok(())
}

/// Backward-Euler update of `w` and `c` at frozen `v`, node by node.
pub fn ionic_step(model: &dyn IonicModel, v: &[f64], state: &mut IonicState, dt: f64) -> Result<(), IonicError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(IonicError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    check_dims(model, v, state)?;
    let (nw, nc) = (model.n_w(), model.n_c());
    let n = v.len();
    let mut w_chunks: Vec<&mut [f64]> = if nw == 0 {
        (0..n).map(|_| &mut [][..]).collect()
    } else {
        state.w.chunks_mut(nw).collect()
    };
    let mut c_chunks: Vec<&mut [f64]> = if nc == 0 {
        (0..n).map(|_| &mut [][..]).collect()
    } else {
        state.c.chunks_mut(nc).collect()
    };
    let failures: Vec<IonicError> = w_chunks
        .par_iter_mut()
        .zip(c_chunks.par_iter_mut())
        .enumerate()
        .filter_map(|(i, (w, c))| model.backward_euler(i, v[i], w, c, dt).err())
        .collect();
    match failures.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Pointwise `I_ion(v, w, c)`.
pub fn eval_ion_current(model: &dyn IonicModel, v: &[f64], state: &IonicState) -> Result<Vec<f64>, IonicError> {
    check_dims(model, v, state)?;
    let (nw, nc) = (model.n_w(), model.n_c());
    Ok((0..v.len())
        .into_par_iter()
        .map(|i| model.ion_current(v[i], &state.w[i * nw..(i + 1) * nw], &state.c[i * nc..(i + 1) * nc]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StimulusRegion {
    /// Ball around the lowest mesh node. Ties on z go to the median index, which on
    /// the ellipsoid lattice is the ring point opposite the unconnected theta seam.
    Apex {
        radius: f64,
    },
    /// Slab of the given depth at the low end of one axis.
    Face {
        axis: usize,
        depth: f64,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
}

impl StimulusRegion {
    pub const DEFAULT_APEX_RADIUS: f64 = 0.35;

    /// Apex ball for ellipsoids, a thin slab at `x = min` otherwise.
    pub fn default_for(mesh: &HexMesh) -> Self {
        if mesh.kind() == "ellipsoid" {
            StimulusRegion::Apex {
                radius: Self::DEFAULT_APEX_RADIUS,
            }
        } else {
            let (lo, hi) = mesh.bounding_box();
            StimulusRegion::Face {
                axis: 0,
                depth: 0.1 * (hi[0] - lo[0]),
            }
        }
    }

    /// Nodes inside the region.
    pub fn node_mask(&self, mesh: &HexMesh) -> Vec<bool> {
        let nodes = mesh.nodes();
        let (lo, _) = mesh.bounding_box();
        let dist = |p: &Vec3, c: &Vec3| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
        match *self {
            StimulusRegion::Apex { radius } => {
                let Some(zmin) = nodes.iter().map(|p| p[2]).min_by(f64::total_cmp) else {
                    return Vec::new();
                };
                let tol = 1e-12 * (1.0 + zmin.abs());
                let lowest: Vec<&Vec3> = nodes.iter().filter(|p| p[2] <= zmin + tol).collect();
                let apex = lowest[lowest.len() / 2];
                nodes.iter().map(|p| dist(p, apex) <= radius).collect()
            }
            StimulusRegion::Face { axis, depth } => nodes.iter().map(|p| p[axis] <= lo[axis] + depth).collect(),
            StimulusRegion::Sphere { center, radius } => nodes.iter().map(|p| dist(p, &center) <= radius).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub region: StimulusRegion,
    pub start: f64,
    pub duration: f64,
    pub amplitude: f64,
}

impl Stimulus {
    pub const DEFAULT_DURATION: f64 = 1.0;
    pub const DEFAULT_AMPLITUDE: f64 = 350.0;

    pub fn new(region: StimulusRegion) -> Self {
        Self {
            region,
            start: 0.0,
            duration: Self::DEFAULT_DURATION,
            amplitude: Self::DEFAULT_AMPLITUDE,
        }
    }

    pub fn validate(&self) -> Result<(), IonicError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(IonicError::InvalidStimulus(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !self.amplitude.is_finite() || !self.start.is_finite() {
            return Err(IonicError::InvalidStimulus("amplitude and start must be finite".into()));
        }
        match self.region {
            StimulusRegion::Face { axis, .. } if axis > 2 => {
                Err(IonicError::InvalidStimulus(format!("axis {axis} out of range")))
            }
            StimulusRegion::Apex { radius } | StimulusRegion::Sphere { radius, .. } if !(radius > 0.0) => Err(
                IonicError::InvalidStimulus(format!("radius must be positive, got {radius}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    pub fn node_mask(&self, mesh: &HexMesh) -> Vec<bool> {
        self.region.node_mask(mesh)
    }
}

/// Intracellular applied current at time `t`, plus a warning when the
/// region holds no node.
pub fn eval_stimulus(stim: &Stimulus, t: f64, mesh: &HexMesh) -> (Vec<f64>, Option<String>) {
    let mask = stim.node_mask(mesh);
    let warning =
        (!mask.iter().any(|&m| m)).then(|| format!("stimulus region {:?} contains no mesh node", stim.region));
    (stimulus_from_mask(stim, t, &mask), warning)
}

pub fn stimulus_from_mask(stim: &Stimulus, t: f64, mask: &[bool]) -> Vec<f64> {
    let a = if stim.is_active(t) { stim.amplitude } else { 0.0 };
    mask.iter().map(|&m| if m { a } else { 0.0 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;

    /// Same physics as the default model but through the generic Newton path.
    struct GenericRm(RogersMcCulloch);

    impl IonicModel for GenericRm {
        fn name(&self) -> &str {
            "generic"
        }
        fn n_w(&self) -> usize {
            1
        }
        fn n_c(&self) -> usize {
            0
        }
        fn resting_state(&self) -> (f64, Vec<f64>, Vec<f64>) {
            self.0.resting_state()
        }
        fn peak_potential(&self) -> f64 {
            self.0.peak_potential()
        }
        fn gating_rate(&self, v: f64, w: &[f64], out: &mut [f64]) {
            self.0.gating_rate(v, w, out)
        }
        fn ion_current(&self, v: f64, w: &[f64], c: &[f64]) -> f64 {
            self.0.ion_current(v, w, c)
        }
    }

    struct Divergent;

    impl IonicModel for Divergent {
        fn name(&self) -> &str {
            "divergent"
        }
        fn n_w(&self) -> usize {
            1
        }
        fn n_c(&self) -> usize {
            0
        }
        fn resting_state(&self) -> (f64, Vec<f64>, Vec<f64>) {
            (0.0, vec![0.0], vec![])
        }
        fn peak_potential(&self) -> f64 {
            1.0
        }
        fn gating_rate(&self, v: f64, w: &[f64], out: &mut [f64]) {
            // y - dt (1 + y^2) = 0 has no real root for dt > 1/2
            out[0] = 1.0 + w[0] * w[0] + v;
        }
        fn ion_current(&self, _: f64, _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn resting_state_is_equilibrium() {
        let m = RogersMcCulloch::default();
        let (v0, w0, c0) = m.resting_state();
        let mut r = [1.0];
        m.gating_rate(v0, &w0, &mut r);
        assert!(r[0].abs() < 1e-12);
        assert!(m.ion_current(v0, &w0, &c0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_gating_step() {
        let m = RogersMcCulloch::default();
        let p = m.params;
        let v = p.v_rest + p.v_amp; // u = 1
        let mut w = [0.2];
        m.backward_euler(0, v, &mut w, &mut [], 0.05).unwrap();
        let expect = (0.2 + 0.05 * 0.012 * 1.0 / 1.0) / (1.0 + 0.05 * 0.012 * 1.0);
        assert!((w[0] - expect).abs() < 1e-16);
    }

    #[test]
    fn generic_newton_matches_closed_form() {
        let m = RogersMcCulloch::default();
        let g = GenericRm(m.clone());
        for &(v, w0, dt) in &[(-85.0, 0.0, 0.05), (15.0, 0.3, 0.05), (-20.0, 1.1, 2.0)] {
            let mut a = [w0];
            let mut b = [w0];
            m.backward_euler(0, v, &mut a, &mut [], dt).unwrap();
            g.backward_euler(0, v, &mut b, &mut [], dt).unwrap();
            assert!((a[0] - b[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn newton_failure_names_node() {
        let v = vec![0.0; 4];
        let mut s = IonicState::resting(&Divergent, 4);
        let err = ionic_step(&Divergent, &v, &mut s, 1.0).unwrap_err();
        assert!(matches!(err, IonicError::NewtonFailed { node: 0, .. }), "{err}");
    }

    #[test]
    fn current_roots_and_reference() {
        let m = RogersMcCulloch::default();
        let p = m.params;
        assert_eq!(m.ion_current(p.v_rest, &[0.7], &[]), 0.0);
        assert!(m.ion_current(p.v_rest + p.v_p * p.v_amp, &[0.0], &[]).abs() < 1e-12);
        let (u, w) = (0.37, 0.21);
        let reference = 100.0 * (4.0 * u * (1.0 - u / 0.13) * (1.0 - u) + 4.4 * u * w);
        let got = m.ion_current(-85.0 + 100.0 * u, &[w], &[]);
        assert!((got - reference).abs() < 1e-12 * reference.abs());
    }

    #[test]
    fn parameter_validation() {
        let bad = RogersMcCullochParams {
            v_th: 1.2,
            ..Default::default()
        };
        assert!(RogersMcCulloch::new(bad).is_err());
        let bad = RogersMcCullochParams {
            eta2: 0.0,
            ..Default::default()
        };
        assert!(RogersMcCulloch::new(bad).is_err());
    }

    #[test]
    fn step_is_node_local() {
        let m = RogersMcCulloch::default();
        let n = 50;
        let v: Vec<f64> = (0..n).map(|i| -85.0 + 2.0 * i as f64).collect();
        let mut a = IonicState::resting(&m, n);
        let mut b = a.clone();
        let mut v2 = v.clone();
        v2[17] += 30.0;
        ionic_step(&m, &v, &mut a, 0.05).unwrap();
        ionic_step(&m, &v2, &mut b, 0.05).unwrap();
        for i in 0..n {
            assert_eq!(a.w[i] == b.w[i], i != 17);
        }
    }

    #[test]
    fn stimulus_window_and_region() {
        let mesh = generate_box_mesh([1.0, 1.0, 1.0], [4, 4, 4]).unwrap();
        let stim = Stimulus::new(StimulusRegion::default_for(&mesh));
        let (before, _) = eval_stimulus(&Stimulus { start: 1.0, ..stim }, 0.5, &mesh);
        assert!(before.iter().all(|&x| x == 0.0));
        let (during, warn) = eval_stimulus(&stim, 0.0, &mesh);
        assert!(warn.is_none());
        assert_eq!(during.iter().filter(|&&x| x == 350.0).count(), 25);
        let (after, _) = eval_stimulus(&stim, 1.0, &mesh);
        assert!(after.iter().all(|&x| x == 0.0));
        let far = Stimulus::new(StimulusRegion::Sphere {
            center: [9.0; 3],
            radius: 0.1,
        });
        let (z, warn) = eval_stimulus(&far, 0.0, &mesh);
        assert!(warn.is_some() && z.iter().all(|&x| x == 0.0));
        assert!(Stimulus { duration: 0.0, ..stim }.validate().is_err());
    }
}
