//! The IMEX Bidomain time loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amg::{amg_setup, AmgConfig, AmgError, HierarchySummary};
use crate::assembly::{assemble_lumped_mass, assemble_stiffness, AssemblyError, ConductivitySet, LumpedMass};
use crate::ionic::{
    eval_ion_current, ionic_step, stimulus_from_mask, IonicError, IonicModel, IonicState, RogersMcCulloch,
    RogersMcCullochParams, Stimulus, StimulusRegion,
};
use crate::mesh::{
    assign_fibers, generate_box_mesh, generate_ellipsoid_mesh, load_mesh, EllipsoidParams, HexMesh, MeshError,
    DEFAULT_ENDO_ANGLE, DEFAULT_EPI_ANGLE,
};
use crate::sparsekit::{
    pcg, vector, BlockJacobi, CsrMatrix, Identity, Jacobi, PcgOptions, Preconditioner, SolveStats, SparseError,
};
use crate::vtk::save_vtk;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Amg(#[from] AmgError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Ionic(#[from] IonicError),
    #[error("{stage} solve did not converge at step {step}: {iterations} iterations, relative residual {residual:e}")]
    NotConverged {
        stage: &'static str,
        step: usize,
        iterations: usize,
        residual: f64,
    },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Ellipsoid {
        n: [usize; 3],
        params: EllipsoidParams,
        endo_angle: f64,
        epi_angle: f64,
    },
    Box {
        lengths: [f64; 3],
        n: [usize; 3],
    },
    File {
        path: PathBuf,
    },
}

impl MeshSpec {
    pub fn ellipsoid(n: [usize; 3]) -> Self {
        MeshSpec::Ellipsoid {
            n,
            params: EllipsoidParams::default(),
            endo_angle: DEFAULT_ENDO_ANGLE,
            epi_angle: DEFAULT_EPI_ANGLE,
        }
    }

    pub fn build(&self) -> Result<HexMesh, MeshError> {
        match self {
            MeshSpec::Ellipsoid {
                n,
                params,
                endo_angle,
                epi_angle,
            } => assign_fibers(
                generate_ellipsoid_mesh(params, n[0], n[1], n[2])?,
                *endo_angle,
                *epi_angle,
            ),
            MeshSpec::Box { lengths, n } => generate_box_mesh(*lengths, *n),
            MeshSpec::File { path } => load_mesh(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EllipticPrecond {
    Amg(AmgConfig),
    Jacobi,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParabolicPrecond {
    /// `None` picks one block per `DEFAULT_BLOCK_ROWS` rows.
    BlockJacobi {
        n_blocks: Option<usize>,
    },
    Identity,
}

pub const DEFAULT_BLOCK_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub trace: bool,
    /// Snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// When false, timing columns of the trace are written as zero.
    pub timings: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trace: true,
            snapshot_every: 0,
            timings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub mesh: MeshSpec,
    pub dt: f64,
    pub t_end: f64,
    pub c_m: f64,
    pub conductivities: ConductivitySet,
    pub ionic: RogersMcCullochParams,
    /// `None` means no applied current.
    pub stimulus: Option<Stimulus>,
    /// Region left unset picks the mesh-dependent default.
    pub stimulus_region_auto: bool,
    pub elliptic: EllipticPrecond,
    pub parabolic: ParabolicPrecond,
    pub rtol: f64,
    pub maxit: usize,
    pub output: OutputConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            mesh: MeshSpec::ellipsoid([32, 32, 16]),
            dt: 0.05,
            t_end: 5.0,
            c_m: 1.0,
            conductivities: ConductivitySet::default(),
            ionic: RogersMcCullochParams::default(),
            stimulus: Some(Stimulus::new(StimulusRegion::Apex {
                radius: StimulusRegion::DEFAULT_APEX_RADIUS,
            })),
            stimulus_region_auto: true,
            elliptic: EllipticPrecond::Amg(AmgConfig::default()),
            parabolic: ParabolicPrecond::BlockJacobi { n_blocks: None },
            rtol: 1e-5,
            maxit: 10_000,
            output: OutputConfig::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-9)) || !self.t_end.is_finite() {
            return Err(SimError::Config(format!(
                "t_end {} must be >= dt {}",
                self.t_end, self.dt
            )));
        }
        if !(self.c_m > 0.0 && self.c_m.is_finite()) {
            return Err(SimError::Config(format!("c_m must be positive, got {}", self.c_m)));
        }
        if !(self.rtol > 0.0 && self.rtol < 1.0) {
            return Err(SimError::Config(format!("rtol must lie in (0, 1), got {}", self.rtol)));
        }
        if self.maxit == 0 {
            return Err(SimError::Config("maxit must be >= 1".into()));
        }
        if let ParabolicPrecond::BlockJacobi { n_blocks: Some(0) } = self.parabolic {
            return Err(SimError::Config("parabolic block count must be >= 1".into()));
        }
        self.conductivities.validate()?;
        self.ionic.validate()?;
        if let Some(s) = &self.stimulus {
            s.validate()?;
        }
        if let EllipticPrecond::Amg(cfg) = &self.elliptic {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Number of steps, `round(t_end / dt)`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }

    fn pcg_options(&self) -> PcgOptions {
        PcgOptions {
            rtol: self.rtol,
            maxit: self.maxit,
            ..PcgOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub v: Vec<f64>,
    pub u_e: Vec<f64>,
    pub ionic: IonicState,
    pub t: f64,
    pub step: usize,
}

impl SimState {
    pub fn resting(model: &dyn IonicModel, n_nodes: usize) -> Self {
        let (v0, _, _) = model.resting_state();
        Self {
            v: vec![v0; n_nodes],
            u_e: vec![0.0; n_nodes],
            ionic: IonicState::resting(model, n_nodes),
            t: 0.0,
            step: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v
            .iter()
            .chain(&self.u_e)
            .chain(&self.ionic.w)
            .chain(&self.ionic.c)
            .all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// 1-based step number.
    pub step: usize,
    /// Time at the end of the step, ms.
    pub t: f64,
    pub elliptic: SolveStats,
    pub parabolic: SolveStats,
    /// Seconds spent in the ionic update and current evaluation.
    pub ionic_time: f64,
}

/// Assembled operators and preconditioners for one mesh and config.
pub struct Systems {
    pub mesh: HexMesh,
    pub mass: LumpedMass,
    pub a_i: CsrMatrix,
    pub a_e: CsrMatrix,
    pub elliptic_matrix: CsrMatrix,
    pub parabolic_matrix: CsrMatrix,
    pub elliptic_pc: Box<dyn Preconditioner>,
    pub parabolic_pc: Box<dyn Preconditioner>,
    pub amg_summary: Option<HierarchySummary>,
    pub stimulus: Option<Stimulus>,
    pub stimulus_mask: Vec<bool>,
    pub warnings: Vec<String>,
    pub setup_time: f64,
}

impl std::fmt::Debug for Systems {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Systems")
            .field("nodes", &self.mesh.n_nodes())
            .field("elliptic_pc", &self.elliptic_pc.describe())
            .field("parabolic_pc", &self.parabolic_pc.describe())
            .finish()
    }
}

pub fn build_elliptic_precond(
    a: &CsrMatrix,
    kind: &EllipticPrecond,
) -> Result<(Box<dyn Preconditioner>, Option<HierarchySummary>), SimError> {
    Ok(match kind {
        EllipticPrecond::Amg(cfg) => {
            let h = amg_setup(a, cfg)?;
            let s = h.summary();
            (Box::new(h), Some(s))
        }
        EllipticPrecond::Jacobi => (Box::new(Jacobi::new(a)?), None),
        EllipticPrecond::Identity => (Box::new(Identity), None),
    })
}

pub fn build_parabolic_precond(a: &CsrMatrix, kind: ParabolicPrecond) -> Result<Box<dyn Preconditioner>, SimError> {
    Ok(match kind {
        ParabolicPrecond::BlockJacobi { n_blocks } => {
            let nb = n_blocks
                .unwrap_or_else(|| a.n_rows().div_ceil(DEFAULT_BLOCK_ROWS))
                .min(a.n_rows())
                .max(1);
            Box::new(BlockJacobi::new(a, nb)?)
        }
        ParabolicPrecond::Identity => Box::new(Identity),
    })
}

impl Systems {
    pub fn build(mesh: HexMesh, config: &SimulationConfig) -> Result<Self, SimError> {
        config.validate()?;
        let start = Instant::now();
        let mut warnings = Vec::new();
        let mass = assemble_lumped_mass(&mesh)?;
        let a_i = assemble_stiffness(&mesh, config.conductivities.intra())?;
        let a_e = assemble_stiffness(&mesh, config.conductivities.extra())?;
        let elliptic_matrix = a_i.lin_comb(1.0, &a_e, 1.0)?;
        let shift: Vec<f64> = mass.diag.iter().map(|m| config.c_m / config.dt * m).collect();
        let parabolic_matrix = a_i.add_diagonal(&shift)?;
        let (elliptic_pc, amg_summary) = build_elliptic_precond(&elliptic_matrix, &config.elliptic)?;
        if let Some(s) = &amg_summary {
            warnings.extend(s.warnings.iter().cloned());
        }
        let parabolic_pc = build_parabolic_precond(&parabolic_matrix, config.parabolic)?;
        let stimulus = config.stimulus.map(|mut s| {
            if config.stimulus_region_auto {
                s.region = StimulusRegion::default_for(&mesh);
            }
            s
        });
        let stimulus_mask = match &stimulus {
            Some(s) => s.node_mask(&mesh),
            None => vec![false; mesh.n_nodes()],
        };
        if stimulus.is_some() && !stimulus_mask.iter().any(|&m| m) {
            warnings.push("stimulus region contains no mesh node; applied current is zero".into());
        }
        Ok(Self {
            mesh,
            mass,
            a_i,
            a_e,
            elliptic_matrix,
            parabolic_matrix,
            elliptic_pc,
            parabolic_pc,
            amg_summary,
            stimulus,
            stimulus_mask,
            warnings,
            setup_time: start.elapsed().as_secs_f64(),
        })
    }

    /// Swaps in a fresh elliptic preconditioner; matrices are untouched.
    pub fn replace_elliptic_precond(&mut self, kind: &EllipticPrecond) -> Result<(), SimError> {
        let (pc, summary) = build_elliptic_precond(&self.elliptic_matrix, kind)?;
        self.elliptic_pc = pc;
        self.amg_summary = summary;
        Ok(())
    }

    pub fn applied_current(&self, t: f64) -> Vec<f64> {
        match &self.stimulus {
            Some(s) => stimulus_from_mask(s, t, &self.stimulus_mask),
            None => vec![0.0; self.mesh.n_nodes()],
        }
    }
}

/// Solves `(A_i + A_e) u_e = -A_i v` on the zero-mean subspace.
pub fn elliptic_solve(
    a_sum: &CsrMatrix,
    a_i: &CsrMatrix,
    v: &[f64],
    x0: Option<&[f64]>,
    precond: &dyn Preconditioner,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveStats), SimError> {
    let mut b = a_i.mul_vec(v)?;
    b.iter_mut().for_each(|x| *x = -*x);
    let out = pcg(a_sum, &b, precond, x0, &opts.deflated())?;
    Ok((out.x, out.stats))
}

/// Solves `((c_m/dt) M + A_i) v' = (c_m/dt) M v - A_i u_e - M I_ion + M I_app`.
#[allow(clippy::too_many_arguments)]
pub fn parabolic_solve(
    parabolic_matrix: &CsrMatrix,
    mass: &LumpedMass,
    a_i: &CsrMatrix,
    v: &[f64],
    u_e: &[f64],
    i_ion: &[f64],
    i_app: &[f64],
    dt: f64,
    c_m: f64,
    precond: &dyn Preconditioner,
    opts: &PcgOptions,
) -> Result<(Vec<f64>, SolveStats), SimError> {
    let n = v.len();
    if [u_e.len(), i_ion.len(), i_app.len(), mass.diag.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(SparseError::DimensionMismatch {
            op: "parabolic_solve",
            expected: n,
            found: [u_e.len(), i_ion.len(), i_app.len(), mass.diag.len()]
                .into_iter()
                .find(|&l| l != n)
                .unwrap(),
        }
        .into());
    }
    let aiu = a_i.mul_vec(u_e)?;
    let s = c_m / dt;
    let b: Vec<f64> = (0..n)
        .map(|k| s * mass.diag[k] * v[k] - aiu[k] - mass.diag[k] * i_ion[k] + mass.diag[k] * i_app[k])
        .collect();
    let out = pcg(parabolic_matrix, &b, precond, Some(v), opts)?;
    Ok((out.x, out.stats))
}

/// Advances `state` by one step: gating update, elliptic solve, parabolic solve.
pub fn time_step(
    state: &mut SimState,
    systems: &Systems,
    model: &dyn IonicModel,
    config: &SimulationConfig,
) -> Result<StepReport, SimError> {
    let opts = config.pcg_options();
    let step = state.step + 1;

    let t0 = Instant::now();
    ionic_step(model, &state.v, &mut state.ionic, config.dt)?;
    let i_ion = eval_ion_current(model, &state.v, &state.ionic)?;
    let ionic_time = t0.elapsed().as_secs_f64();

    let (u_e, elliptic) = elliptic_solve(
        &systems.elliptic_matrix,
        &systems.a_i,
        &state.v,
        Some(&state.u_e),
        systems.elliptic_pc.as_ref(),
        &opts,
    )?;
    if !elliptic.converged {
        return Err(SimError::NotConverged {
            stage: "elliptic",
            step,
            iterations: elliptic.iterations,
            residual: elliptic.final_relative_residual,
        });
    }

    let i_app = systems.applied_current(state.t);
    let (v, parabolic) = parabolic_solve(
        &systems.parabolic_matrix,
        &systems.mass,
        &systems.a_i,
        &state.v,
        &u_e,
        &i_ion,
        &i_app,
        config.dt,
        config.c_m,
        systems.parabolic_pc.as_ref(),
        &opts,
    )?;
    if !parabolic.converged {
        return Err(SimError::NotConverged {
            stage: "parabolic",
            step,
            iterations: parabolic.iterations,
            residual: parabolic.final_relative_residual,
        });
    }

    state.v = v;
    state.u_e = u_e;
    state.step = step;
    state.t = step as f64 * config.dt;
    if !state.is_finite() {
        return Err(SimError::NonFinite { step });
    }
    Ok(StepReport {
        step,
        t: state.t,
        elliptic,
        parabolic,
        ionic_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceMeans {
    pub steps: usize,
    pub it_ellip: f64,
    pub t_ellip_s: f64,
    pub it_parab: f64,
    pub t_parab_s: f64,
    pub t_memb_s: f64,
}

impl TraceMeans {
    pub fn of(trace: &[StepReport]) -> Self {
        let n = trace.len();
        if n == 0 {
            return Self::default();
        }
        let mean = |f: &dyn Fn(&StepReport) -> f64| trace.iter().map(f).sum::<f64>() / n as f64;
        Self {
            steps: n,
            it_ellip: mean(&|r| r.elliptic.iterations as f64),
            t_ellip_s: mean(&|r| r.elliptic.wall_time),
            it_parab: mean(&|r| r.parabolic.iterations as f64),
            t_parab_s: mean(&|r| r.parabolic.wall_time),
            t_memb_s: mean(&|r| r.ionic_time),
        }
    }
}

/// Run-level observations used by the physiology checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub v_min: f64,
    pub v_max: f64,
    /// Largest `|mean(u_e)| / (||u_e||_inf + 1)` over all steps.
    pub max_ue_mean_defect: f64,
    /// Largest `||v - v0||_inf` over all steps.
    pub max_v_deviation: f64,
    /// First time each node exceeded the activation threshold, if ever.
    pub activation_time: Vec<Option<f64>>,
    pub activation_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_nodes: usize,
    pub dofs: usize,
    pub dt: f64,
    pub t_end: f64,
    pub setup_time_s: f64,
    pub total_time_s: f64,
    pub all_steps: TraceMeans,
    /// Means over steps 2.., which drop the cold-start first solve.
    pub after_first: TraceMeans,
    pub activated_nodes: usize,
    pub stimulated_nodes: usize,
    pub activated_outside_stimulus: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub amg: Option<HierarchySummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub trace: Vec<StepReport>,
    pub state: SimState,
    pub diagnostics: Diagnostics,
    pub summary: RunSummary,
    pub snapshots: Vec<PathBuf>,
}

pub const TRACE_HEADER: &str = "step,t_ms,it_ellip,t_ellip_s,it_parab,t_parab_s,t_memb_s";

pub fn trace_row(r: &StepReport, timings: bool) -> String {
    let t = |x: f64| if timings { x } else { 0.0 };
    format!(
        "{},{},{},{:e},{},{:e},{:e}",
        r.step,
        r.t,
        r.elliptic.iterations,
        t(r.elliptic.wall_time),
        r.parabolic.iterations,
        t(r.parabolic.wall_time),
        t(r.ionic_time)
    )
}

struct Outputs {
    trace: Option<(PathBuf, BufWriter<File>)>,
    dir: Option<PathBuf>,
}

impl Outputs {
    fn open(cfg: &OutputConfig) -> Result<Self, SimError> {
        let Some(dir) = &cfg.dir else {
            return Ok(Self { trace: None, dir: None });
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let trace = if cfg.trace {
            let path = dir.join("trace.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            writeln!(w, "{TRACE_HEADER}").map_err(io_err(&path))?;
            Some((path, w))
        } else {
            None
        };
        Ok(Self {
            trace,
            dir: Some(dir.clone()),
        })
    }

    fn row(&mut self, r: &StepReport, timings: bool) -> Result<(), SimError> {
        if let Some((path, w)) = &mut self.trace {
            writeln!(w, "{}", trace_row(r, timings)).map_err(io_err(path))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), SimError> {
        if let Some((path, w)) = &mut self.trace {
            w.flush().map_err(io_err(path))?;
        }
        Ok(())
    }
}

fn snapshot(dir: &std::path::Path, systems: &Systems, state: &SimState) -> Result<PathBuf, SimError> {
    let path = dir.join(format!("snapshot_{:05}.vtk", state.step));
    let title = format!("bidomain t = {} ms", state.t);
    save_vtk(
        &path,
        &systems.mesh,
        &title,
        &[("v_mV", &state.v), ("ue_mV", &state.u_e)],
    )
    .map_err(io_err(&path))?;
    Ok(path)
}

/// Builds the mesh and systems, then runs from rest to `t_end`.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationOutcome, SimError> {
    config.validate()?;
    let mesh = config.mesh.build()?;
    let systems = Systems::build(mesh, config)?;
    run_with_systems(&systems, config)
}

/// Runs from rest on prebuilt systems. On a solver failure the trace written
/// so far is flushed before the error is returned.
pub fn run_with_systems(systems: &Systems, config: &SimulationConfig) -> Result<SimulationOutcome, SimError> {
    let model = RogersMcCulloch::new(config.ionic)?;
    let n = systems.mesh.n_nodes();
    let mut state = SimState::resting(&model, n);
    let (v0, _, _) = model.resting_state();
    let threshold = model.params.v_rest + 0.5 * model.params.v_p * model.params.v_amp;
    let mut diag = Diagnostics {
        v_min: v0,
        v_max: v0,
        max_ue_mean_defect: 0.0,
        max_v_deviation: 0.0,
        activation_time: vec![None; n],
        activation_threshold: threshold,
    };
    let mut outputs = Outputs::open(&config.output)?;
    let mut trace = Vec::with_capacity(config.n_steps());
    let mut snapshots = Vec::new();
    let start = Instant::now();
    for _ in 0..config.n_steps() {
        let report = match time_step(&mut state, systems, &model, config) {
            Ok(r) => r,
            Err(e) => {
                outputs.flush()?;
                return Err(e);
            }
        };
        for (k, &v) in state.v.iter().enumerate() {
            diag.v_min = diag.v_min.min(v);
            diag.v_max = diag.v_max.max(v);
            diag.max_v_deviation = diag.max_v_deviation.max((v - v0).abs());
            if v >= threshold && diag.activation_time[k].is_none() {
                diag.activation_time[k] = Some(state.t);
            }
        }
        let defect = vector::mean(&state.u_e).abs() / (vector::norm_inf(&state.u_e) + 1.0);
        diag.max_ue_mean_defect = diag.max_ue_mean_defect.max(defect);
        outputs.row(&report, config.output.timings)?;
        if config.output.snapshot_every > 0 && report.step % config.output.snapshot_every == 0 {
            if let Some(dir) = &outputs.dir {
                snapshots.push(snapshot(dir, systems, &state)?);
            }
        }
        trace.push(report);
    }
    outputs.flush()?;
    let total_time = start.elapsed().as_secs_f64();

    let activated = diag.activation_time.iter().filter(|a| a.is_some()).count();
    let outside = diag
        .activation_time
        .iter()
        .zip(&systems.stimulus_mask)
        .filter(|(a, &m)| a.is_some() && !m)
        .count();
    let summary = RunSummary {
        n_nodes: n,
        dofs: systems.mesh.bidomain_dofs(),
        dt: config.dt,
        t_end: state.t,
        setup_time_s: systems.setup_time,
        total_time_s: total_time,
        all_steps: TraceMeans::of(&trace),
        after_first: TraceMeans::of(trace.get(1..).unwrap_or(&[])),
        activated_nodes: activated,
        stimulated_nodes: systems.stimulus_mask.iter().filter(|&&m| m).count(),
        activated_outside_stimulus: outside,
        v_min: diag.v_min,
        v_max: diag.v_max,
        amg: systems.amg_summary.clone(),
        warnings: systems.warnings.clone(),
    };
    if let Some(dir) = &outputs.dir {
        let path = dir.join("summary.json");
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        std::fs::write(&path, json).map_err(io_err(&path))?;
    }
    Ok(SimulationOutcome {
        trace,
        state,
        diagnostics: diag,
        summary,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SimulationConfig {
        SimulationConfig {
            mesh: MeshSpec::Box {
                lengths: [1.0, 1.0, 0.5],
                n: [6, 6, 3],
            },
            t_end: 0.25,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn t_end_equal_dt_gives_one_report() {
        let cfg = SimulationConfig {
            t_end: 0.05,
            ..small_config()
        };
        assert_eq!(run_simulation(&cfg).unwrap().trace.len(), 1);
    }

    #[test]
    fn rest_without_stimulus_is_steady() {
        let cfg = SimulationConfig {
            stimulus: None,
            ..small_config()
        };
        let out = run_simulation(&cfg).unwrap();
        assert!(out.diagnostics.max_v_deviation <= 10.0 * cfg.rtol * 85.0);
        assert!(vector::norm_inf(&out.state.u_e) < 1e-9);
    }

    #[test]
    fn stimulated_nodes_rise() {
        let cfg = small_config();
        let mesh = cfg.mesh.build().unwrap();
        let sys = Systems::build(mesh, &cfg).unwrap();
        let model = RogersMcCulloch::new(cfg.ionic).unwrap();
        let mut st = SimState::resting(&model, sys.mesh.n_nodes());
        let before = st.v.clone();
        time_step(&mut st, &sys, &model, &cfg).unwrap();
        for (k, &m) in sys.stimulus_mask.iter().enumerate() {
            if m {
                assert!(st.v[k] > before[k]);
            }
        }
    }

    #[test]
    fn mass_only_parabolic_is_identity() {
        let mesh = generate_box_mesh([1.0; 3], [2, 2, 2]).unwrap();
        let mass = assemble_lumped_mass(&mesh).unwrap();
        let n = mesh.n_nodes();
        let zero = CsrMatrix::zeros(n, n);
        let shift: Vec<f64> = mass.diag.iter().map(|m| 20.0 * m).collect();
        let p = CsrMatrix::from_diagonal(&shift);
        let v: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let z = vec![0.0; n];
        let (v1, _) = parabolic_solve(
            &p,
            &mass,
            &zero,
            &v,
            &z,
            &z,
            &z,
            0.05,
            1.0,
            &Identity,
            &PcgOptions::default(),
        )
        .unwrap();
        assert_eq!(v1, v);
    }

    #[test]
    fn invalid_configs() {
        assert!(SimulationConfig {
            dt: 0.0,
            ..small_config()
        }
        .validate()
        .is_err());
        assert!(SimulationConfig {
            t_end: 0.01,
            ..small_config()
        }
        .validate()
        .is_err());
        assert!(SimulationConfig {
            c_m: -1.0,
            ..small_config()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn trace_row_zeroes_timings() {
        let r = StepReport {
            step: 3,
            t: 0.15,
            elliptic: SolveStats {
                iterations: 7,
                wall_time: 0.5,
                ..SolveStats::trivial()
            },
            parabolic: SolveStats {
                iterations: 2,
                wall_time: 0.25,
                ..SolveStats::trivial()
            },
            ionic_time: 0.125,
        };
        assert_eq!(trace_row(&r, false), "3,0.15,7,0e0,2,0e0,0e0");
        assert_eq!(trace_row(&r, true), "3,0.15,7,5e-1,2,2.5e-1,1.25e-1");
    }
}
