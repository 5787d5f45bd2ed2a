//! Algebraic multigrid: MIS aggregation with smoothed prolongators and a
//! classical C/F branch, plus the smoothers and V-cycle they share.

mod aggregation;
mod classical;
mod eig;
mod graph;
mod hierarchy;
mod smoother;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sparsekit::SparseError;

pub use aggregation::{build_tentative_prolongator, mis_aggregate, smooth_prolongator, Aggregation};
pub use classical::{strong_coarsen, strong_connections, CfSplit, PointKind};
pub use eig::{estimate_lambda_max, tridiag_max_eig};
pub use graph::{filter_graph, FilteredGraph};
pub use hierarchy::{amg_setup, AmgHierarchy, HierarchySummary, Level, LevelSummary, StopReason, DIRECT_SOLVE_LIMIT};
pub use smoother::{smoother_apply, Smoother, SmootherKind};

#[derive(Debug, Error)]
pub enum AmgError {
    #[error("invalid AMG configuration: {0}")]
    InvalidConfig(String),
    #[error("row {row} has non-positive diagonal {value}")]
    NonPositiveDiagonal { row: usize, value: f64 },
    #[error("invalid aggregation: {0}")]
    InvalidPartition(String),
    #[error("eigenvalue estimate is not a positive finite number: {0}")]
    EigenEstimate(f64),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coarsening {
    MisAggregation { threshold: f64 },
    StrongThreshold { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmgConfig {
    pub coarsening: Coarsening,
    /// Only used by aggregation.
    pub prolongator_smoothing_steps: usize,
    pub esteig_iters: usize,
    pub smoother: SmootherKind,
    pub mu1: usize,
    pub mu2: usize,
    pub coarse_eq_limit: usize,
    pub max_levels: usize,
}

pub const DEFAULT_MIS_THRESHOLD: f64 = 0.06;
pub const DEFAULT_STRONG_THRESHOLD: f64 = 0.5;

impl Default for AmgConfig {
    fn default() -> Self {
        Self::aggregation(DEFAULT_MIS_THRESHOLD)
    }
}

impl AmgConfig {
    pub fn aggregation(threshold: f64) -> Self {
        Self {
            coarsening: Coarsening::MisAggregation { threshold },
            prolongator_smoothing_steps: 1,
            esteig_iters: 10,
            smoother: SmootherKind::chebyshev_default(),
            mu1: 1,
            mu2: 1,
            coarse_eq_limit: 100,
            max_levels: 25,
        }
    }

    pub fn classical(alpha: f64) -> Self {
        Self {
            coarsening: Coarsening::StrongThreshold { alpha },
            prolongator_smoothing_steps: 0,
            esteig_iters: 10,
            smoother: SmootherKind::SymmetricGaussSeidel,
            mu1: 1,
            mu2: 1,
            coarse_eq_limit: 100,
            max_levels: 25,
        }
    }

    pub fn validate(&self) -> Result<(), AmgError> {
        match self.coarsening {
            Coarsening::MisAggregation { threshold } if !(threshold >= 0.0 && threshold.is_finite()) => {
                return Err(AmgError::InvalidConfig(format!(
                    "MIS threshold {threshold} must be >= 0"
                )));
            }
            Coarsening::StrongThreshold { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                return Err(AmgError::InvalidConfig(format!(
                    "strong threshold {alpha} outside (0, 1)"
                )));
            }
            _ => {}
        }
        if self.max_levels == 0 {
            return Err(AmgError::InvalidConfig("max_levels must be >= 1".into()));
        }
        if self.coarse_eq_limit == 0 {
            return Err(AmgError::InvalidConfig("coarse_eq_limit must be >= 1".into()));
        }
        if self.mu1 + self.mu2 == 0 {
            return Err(AmgError::InvalidConfig(
                "at least one smoothing step is required".into(),
            ));
        }
        if self.esteig_iters == 0 {
            return Err(AmgError::InvalidConfig("esteig_iters must be >= 1".into()));
        }
        self.smoother.validate()
    }
}
