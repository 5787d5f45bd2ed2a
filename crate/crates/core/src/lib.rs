//! Bidomain cardiac electrophysiology on structured hexahedral meshes, with
//! an algebraic multigrid laboratory for the elliptic solve.
//!
//! The pipeline is: [`mesh`] generation and fibers, [`assembly`] of the lumped
//! mass and stiffness matrices, [`sparsekit`] Krylov solvers, [`amg`]
//! preconditioners, [`ionic`] membrane models, the IMEX [`stepper`], and the
//! experiment [`harness`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod amg;
pub mod assembly;
pub mod config;
pub mod element;
pub mod harness;
pub mod ionic;
pub mod mesh;
pub mod sparsekit;
pub mod stepper;
pub mod vtk;

pub use amg::{amg_setup, AmgConfig, AmgError, AmgHierarchy, Coarsening, HierarchySummary, SmootherKind};
pub use assembly::{assemble_lumped_mass, assemble_stiffness, ConductivitySet, LumpedMass, MediumConductivity};
pub use config::{simulation_config, ConfigError, KvConfig};
pub use harness::{
    cmd_refinement_study, cmd_threshold_sweep, Branch, HarnessError, RefinementSpec, ReportTable, SolverConfig,
    SweepSpec,
};
pub use ionic::{IonicModel, RogersMcCulloch, RogersMcCullochParams, Stimulus, StimulusRegion};
pub use mesh::{generate_box_mesh, generate_ellipsoid_mesh, EllipsoidParams, HexMesh, MeshError};
pub use sparsekit::{pcg, CsrMatrix, PcgOptions, Preconditioner, SolveStats, SparseError};
pub use stepper::{
    run_simulation, EllipticPrecond, MeshSpec, ParabolicPrecond, SimError, SimState, SimulationConfig,
    SimulationOutcome, StepReport,
};
