use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::sparsekit::dense::DenseLdl;
use crate::sparsekit::{CsrMatrix, Preconditioner};

use super::aggregation::{build_tentative_prolongator, mis_aggregate, smooth_prolongator};
use super::classical::strong_coarsen;
use super::graph::filter_graph;
use super::smoother::Smoother;
use super::{AmgConfig, AmgError, Coarsening};

/// Coarsest levels larger than this are smoothed rather than factored.
pub const DIRECT_SOLVE_LIMIT: usize = 2000;
const COARSE_DROP_TOL: f64 = 1e-10;
const COARSE_SMOOTHING_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CoarseEnough,
    MaxLevels,
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct Level {
    pub a: CsrMatrix,
    /// Prolongator to this level from the next coarser one.
    pub p: Option<CsrMatrix>,
    pub r: Option<CsrMatrix>,
    pub smoother: Option<Smoother>,
}

#[derive(Debug, Clone)]
enum CoarseSolve {
    Direct(DenseLdl),
    Smoothing,
}

#[derive(Debug, Clone)]
pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarse: CoarseSolve,
    config: AmgConfig,
    stop: StopReason,
    warnings: Vec<String>,
    setup_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub rows: usize,
    pub nnz: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchySummary {
    pub coarsening: Coarsening,
    pub levels: Vec<LevelSummary>,
    pub operator_complexity: f64,
    pub grid_complexity: f64,
    pub stop_reason: StopReason,
    pub coarse_solver: String,
    pub setup_time_s: f64,
    pub warnings: Vec<String>,
}

fn coarsen(a: &CsrMatrix, cfg: &AmgConfig, warnings: &mut Vec<String>, level: usize) -> Result<CsrMatrix, AmgError> {
    match cfg.coarsening {
        Coarsening::MisAggregation { threshold } => {
            let g = filter_graph(a, threshold)?;
            let agg = mis_aggregate(&g);
            let p = build_tentative_prolongator(&agg.cluster_of, agg.n_clusters)?;
            smooth_prolongator(a, &p, cfg.prolongator_smoothing_steps, cfg.esteig_iters)
        }
        Coarsening::StrongThreshold { alpha } => {
            let (split, p) = strong_coarsen(a, alpha)?;
            if split.positive_offdiag_fraction > 0.5 {
                warnings.push(format!(
                    "level {level}: {:.0}% of off-diagonal entries are positive",
                    100.0 * split.positive_offdiag_fraction
                ));
            }
            Ok(p)
        }
    }
}

/// Builds the multigrid hierarchy for a symmetric (semi)definite operator.
pub fn amg_setup(a: &CsrMatrix, cfg: &AmgConfig) -> Result<AmgHierarchy, AmgError> {
    cfg.validate()?;
    if a.n_rows() != a.n_cols() || a.n_rows() == 0 {
        return Err(AmgError::InvalidConfig(format!(
            "operator must be square and non-empty, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let start = Instant::now();
    let mut warnings = Vec::new();
    let mut mats = vec![a.clone()];
    let mut prolongs = Vec::new();
    let stop = loop {
        let cur = mats.last().unwrap();
        if cur.n_rows() <= cfg.coarse_eq_limit {
            break StopReason::CoarseEnough;
        }
        if mats.len() >= cfg.max_levels {
            break StopReason::MaxLevels;
        }
        let p = coarsen(cur, cfg, &mut warnings, mats.len() - 1)?;
        if p.n_cols() == 0 || p.n_cols() >= cur.n_rows() {
            warnings.push(format!(
                "coarsening stagnated at level {} with {} rows",
                mats.len() - 1,
                cur.n_rows()
            ));
            break StopReason::Stagnation;
        }
        let ap = cur.matmul(&p)?;
        let r = p.transpose();
        let ac = r.matmul(&ap)?.symmetrized()?;
        prolongs.push((p, r));
        mats.push(ac);
    };

    let n_levels = mats.len();
    let coarsest = &mats[n_levels - 1];
    let coarse = if coarsest.n_rows() <= DIRECT_SOLVE_LIMIT {
        let ldl = DenseLdl::factor_semidefinite(&coarsest.to_dense(), coarsest.n_rows(), COARSE_DROP_TOL)?;
        CoarseSolve::Direct(ldl)
    } else {
        warnings.push(format!(
            "coarsest level has {} rows; using {} smoothing steps instead of a direct solve",
            coarsest.n_rows(),
            COARSE_SMOOTHING_STEPS
        ));
        CoarseSolve::Smoothing
    };

    let mut levels = Vec::with_capacity(n_levels);
    let mut prolongs = prolongs.into_iter();
    for (k, m) in mats.into_iter().enumerate() {
        let last = k + 1 == n_levels;
        let smoother = if !last || matches!(coarse, CoarseSolve::Smoothing) {
            Some(Smoother::new(cfg.smoother, &m)?)
        } else {
            None
        };
        let (p, r) = if last {
            (None, None)
        } else {
            let (p, r) = prolongs.next().unwrap();
            (Some(p), Some(r))
        };
        levels.push(Level { a: m, p, r, smoother });
    }

    Ok(AmgHierarchy {
        levels,
        coarse,
        config: cfg.clone(),
        stop,
        warnings,
        setup_time: start.elapsed(),
    })
}

impl AmgHierarchy {
    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn config(&self) -> &AmgConfig {
        &self.config
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn setup_time(&self) -> Duration {
        self.setup_time
    }

    pub fn n_rows(&self) -> usize {
        self.levels[0].a.n_rows()
    }

    pub fn operator_complexity(&self) -> f64 {
        let total: usize = self.levels.iter().map(|l| l.a.nnz()).sum();
        total as f64 / self.levels[0].a.nnz() as f64
    }

    pub fn grid_complexity(&self) -> f64 {
        let total: usize = self.levels.iter().map(|l| l.a.n_rows()).sum();
        total as f64 / self.levels[0].a.n_rows() as f64
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            coarsening: self.config.coarsening,
            levels: self
                .levels
                .iter()
                .map(|l| LevelSummary {
                    rows: l.a.n_rows(),
                    nnz: l.a.nnz(),
                })
                .collect(),
            operator_complexity: self.operator_complexity(),
            grid_complexity: self.grid_complexity(),
            stop_reason: self.stop,
            coarse_solver: match &self.coarse {
                CoarseSolve::Direct(ldl) => format!("dense LDLt ({} dropped pivots)", ldl.dropped_pivots()),
                CoarseSolve::Smoothing => format!("{COARSE_SMOOTHING_STEPS} smoothing steps"),
            },
            setup_time_s: self.setup_time.as_secs_f64(),
            warnings: self.warnings.clone(),
        }
    }

    /// One V-cycle on `A x = b` from `x0` (zero if `None`).
    pub fn v_cycle(&self, b: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>, AmgError> {
        let n = self.n_rows();
        if b.len() != n || x0.is_some_and(|x| x.len() != n) {
            return Err(AmgError::Sparse(crate::sparsekit::SparseError::DimensionMismatch {
                op: "v_cycle",
                expected: n,
                found: if b.len() != n {
                    b.len()
                } else {
                    x0.map_or(0, <[f64]>::len)
                },
            }));
        }
        let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        self.cycle(0, b, &mut x);
        Ok(x)
    }

    fn cycle(&self, k: usize, b: &[f64], x: &mut [f64]) {
        let lvl = &self.levels[k];
        if k + 1 == self.levels.len() {
            match &self.coarse {
                CoarseSolve::Direct(ldl) => {
                    x.copy_from_slice(b);
                    ldl.solve_in_place(x);
                }
                CoarseSolve::Smoothing => {
                    lvl.smoother
                        .as_ref()
                        .unwrap()
                        .apply(&lvl.a, b, x, COARSE_SMOOTHING_STEPS);
                }
            }
            return;
        }
        let smoother = lvl.smoother.as_ref().unwrap();
        smoother.apply(&lvl.a, b, x, self.config.mu1);
        let mut r = vec![0.0; x.len()];
        lvl.a.residual_into(b, x, &mut r);
        let restrict = lvl.r.as_ref().unwrap();
        let mut rc = vec![0.0; restrict.n_rows()];
        restrict.apply_into(&r, &mut rc);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(k + 1, &rc, &mut ec);
        let prolong = lvl.p.as_ref().unwrap();
        prolong.apply_into(&ec, &mut r);
        for (xi, ei) in x.iter_mut().zip(&r) {
            *xi += ei;
        }
        smoother.apply(&lvl.a, b, x, self.config.mu2);
    }
}

impl Preconditioner for AmgHierarchy {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = 0.0);
        self.cycle(0, r, z);
    }

    fn describe(&self) -> String {
        let s = self.summary();
        format!(
            "AMG({:?}, {} levels, op.cx {:.3})",
            self.config.coarsening,
            s.levels.len(),
            s.operator_complexity
        )
    }
}
