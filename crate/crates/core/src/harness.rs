//! Experiment drivers: threshold sweeps, refinement studies and report tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amg::{AmgConfig, Coarsening};
use crate::stepper::{
    run_with_systems, EllipticPrecond, MeshSpec, OutputConfig, SimError, SimulationConfig, Systems, TraceMeans,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("report table: {0}")]
    Table(String),
}

/// A titled table of string cells; numeric cells use the shortest
/// round-trip float formatting so they parse back exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ReportTable {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Self {
            title: title.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) -> Result<(), HarnessError> {
        if row.len() != self.columns.len() {
            return Err(HarnessError::Table(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Column parsed as floats; unparsable cells become NaN.
    pub fn numeric_column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r
            .headers()
            .map_err(|e| HarnessError::Table(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| HarnessError::Table(e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self {
            title: String::new(),
            columns,
            rows,
        })
    }

    /// Space-aligned rendering with the title on top.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.columns.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&self.columns));
        let _ = writeln!(
            out,
            "{}",
            widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ")
        );
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Mis,
    Strong,
}

impl Branch {
    pub fn config(self, value: f64) -> AmgConfig {
        match self {
            Branch::Mis => AmgConfig::aggregation(value),
            Branch::Strong => AmgConfig::classical(value),
        }
    }

    /// Replaces the coarsening of `base`, keeping its other settings when the
    /// branch already matches.
    pub fn with_value(self, base: &AmgConfig, value: f64) -> AmgConfig {
        let same = matches!(
            (self, base.coarsening),
            (Branch::Mis, Coarsening::MisAggregation { .. }) | (Branch::Strong, Coarsening::StrongThreshold { .. })
        );
        if !same {
            return self.config(value);
        }
        let mut cfg = base.clone();
        cfg.coarsening = match self {
            Branch::Mis => Coarsening::MisAggregation { threshold: value },
            Branch::Strong => Coarsening::StrongThreshold { alpha: value },
        };
        cfg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub branch: Branch,
    pub values: Vec<f64>,
    /// Mesh, window (`t_end`) and all non-AMG settings.
    pub base: SimulationConfig,
    pub repetitions: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::Spec("sweep needs at least one value".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Spec("repetitions must be >= 1".into()));
        }
        let base = match &self.base.elliptic {
            EllipticPrecond::Amg(c) => c.clone(),
            _ => AmgConfig::default(),
        };
        for &v in &self.values {
            self.branch
                .with_value(&base, v)
                .validate()
                .map_err(|e| HarnessError::Spec(format!("value {v}: {e}")))?;
        }
        self.base.validate()?;
        Ok(())
    }
}

pub const SWEEP_COLUMNS: [&str; 12] = [
    "threshold",
    "it_ellip_mean",
    "t_ellip_mean_s",
    "it_ellip_mean_excl1",
    "t_ellip_mean_excl1_s",
    "it_parab_mean",
    "t_parab_mean_s",
    "t_memb_mean_s",
    "levels",
    "operator_complexity",
    "steps",
    "status",
];

fn quiet(cfg: &SimulationConfig) -> SimulationConfig {
    SimulationConfig {
        output: OutputConfig {
            dir: None,
            ..cfg.output.clone()
        },
        ..cfg.clone()
    }
}

/// Runs the configured window once per threshold (and repetition), sharing
/// the mesh and assembled matrices; only the AMG preconditioner is rebuilt.
/// A failing value is reported in its row and the sweep continues.
pub fn cmd_threshold_sweep(spec: &SweepSpec) -> Result<ReportTable, HarnessError> {
    spec.validate()?;
    let base_amg = match &spec.base.elliptic {
        EllipticPrecond::Amg(c) => c.clone(),
        _ => AmgConfig::default(),
    };
    let mesh = spec.base.mesh.build().map_err(SimError::from)?;
    let mut base = quiet(&spec.base);
    base.elliptic = EllipticPrecond::Amg(spec.branch.with_value(&base_amg, spec.values[0]));
    let mut systems = Systems::build(mesh, &base)?;
    let title = format!(
        "{} threshold sweep, {} nodes, {} ms window",
        match spec.branch {
            Branch::Mis => "MIS aggregation",
            Branch::Strong => "strong-threshold",
        },
        systems.mesh.n_nodes(),
        base.t_end
    );
    let mut table = ReportTable::new(&title, &SWEEP_COLUMNS);
    for &value in &spec.values {
        for _ in 0..spec.repetitions {
            let kind = EllipticPrecond::Amg(spec.branch.with_value(&base_amg, value));
            let result = systems
                .replace_elliptic_precond(&kind)
                .and_then(|_| run_with_systems(&systems, &base));
            let row = match result {
                Ok(out) => {
                    let (all, rest) = (out.summary.all_steps, out.summary.after_first);
                    let amg = systems.amg_summary.as_ref();
                    vec![
                        num(value),
                        num(all.it_ellip),
                        num(all.t_ellip_s),
                        num(rest.it_ellip),
                        num(rest.t_ellip_s),
                        num(all.it_parab),
                        num(all.t_parab_s),
                        num(all.t_memb_s),
                        amg.map_or(String::new(), |s| s.levels.len().to_string()),
                        amg.map_or(String::new(), |s| num(s.operator_complexity)),
                        all.steps.to_string(),
                        "ok".into(),
                    ]
                }
                Err(e) => {
                    let mut r = vec![num(value)];
                    r.extend(std::iter::repeat_n("NaN".to_string(), 7));
                    r.extend([String::new(), String::new(), "0".into(), format!("failed: {e}")]);
                    r
                }
            };
            table.push(row)?;
        }
    }
    Ok(table)
}

/// A named elliptic preconditioner for refinement studies.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub label: String,
    pub elliptic: EllipticPrecond,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementSpec {
    pub meshes: Vec<MeshSpec>,
    pub solvers: Vec<SolverConfig>,
    pub base: SimulationConfig,
    /// Meshes with more nodes than this are reported as skipped.
    pub max_nodes: usize,
}

pub const REFINE_COLUMNS: [&str; 9] = [
    "solver",
    "nodes",
    "dofs",
    "it_ellip_mean",
    "t_ellip_mean_s",
    "it_parab_mean",
    "t_parab_mean_s",
    "growth",
    "status",
];

pub const GROWTH_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementReport {
    pub table: ReportTable,
    /// Per solver label: largest iteration growth between consecutive sizes
    /// and whether it stayed within [`GROWTH_LIMIT`].
    pub growth: Vec<(String, f64, bool)>,
}

/// Runs the same short window on each mesh with each solver.
pub fn cmd_refinement_study(spec: &RefinementSpec) -> Result<RefinementReport, HarnessError> {
    if spec.meshes.is_empty() || spec.solvers.is_empty() {
        return Err(HarnessError::Spec("refinement study needs meshes and solvers".into()));
    }
    let base = quiet(&spec.base);
    base.validate()?;
    let mut table = ReportTable::new(&format!("refinement study, {} ms window", base.t_end), &REFINE_COLUMNS);
    let mut results: Vec<Vec<Option<(usize, f64, TraceMeans)>>> = vec![Vec::new(); spec.solvers.len()];
    let mut prev_nodes = 0;
    for mesh_spec in &spec.meshes {
        let mesh = mesh_spec.build().map_err(SimError::from)?;
        let nodes = mesh.n_nodes();
        if nodes < prev_nodes {
            return Err(HarnessError::Spec("mesh sizes must be ascending".into()));
        }
        prev_nodes = nodes;
        if nodes > spec.max_nodes {
            for (k, s) in spec.solvers.iter().enumerate() {
                results[k].push(None);
                table.push(vec![
                    s.label.clone(),
                    nodes.to_string(),
                    mesh.bidomain_dofs().to_string(),
                    "NaN".into(),
                    "NaN".into(),
                    "NaN".into(),
                    "NaN".into(),
                    String::new(),
                    format!("skipped: {nodes} nodes exceed limit {}", spec.max_nodes),
                ])?;
            }
            continue;
        }
        let dofs = mesh.bidomain_dofs();
        let mut cfg = base.clone();
        cfg.mesh = mesh_spec.clone();
        cfg.elliptic = EllipticPrecond::Identity;
        let mut systems = Systems::build(mesh, &cfg)?;
        for (k, s) in spec.solvers.iter().enumerate() {
            let out = systems
                .replace_elliptic_precond(&s.elliptic)
                .and_then(|_| run_with_systems(&systems, &cfg));
            let (row_means, status) = match out {
                Ok(o) => (Some(o.summary.all_steps), "ok".to_string()),
                Err(e) => (None, format!("failed: {e}")),
            };
            let growth = match (results[k].iter().rev().flatten().next(), &row_means) {
                (Some((_, _, p)), Some(m)) if p.it_ellip > 0.0 => m.it_ellip / p.it_ellip,
                _ => f64::NAN,
            };
            results[k].push(row_means.map(|m| (nodes, growth, m)));
            let cell = |f: fn(&TraceMeans) -> f64| row_means.as_ref().map_or("NaN".to_string(), |m| num(f(m)));
            table.push(vec![
                s.label.clone(),
                nodes.to_string(),
                dofs.to_string(),
                cell(|m| m.it_ellip),
                cell(|m| m.t_ellip_s),
                cell(|m| m.it_parab),
                cell(|m| m.t_parab_s),
                if growth.is_nan() { String::new() } else { num(growth) },
                status,
            ])?;
        }
    }
    let growth = spec
        .solvers
        .iter()
        .zip(&results)
        .map(|(s, rs)| {
            let worst = rs
                .iter()
                .flatten()
                .map(|r| r.1)
                .filter(|g| !g.is_nan())
                .fold(1.0f64, f64::max);
            let failed = rs.iter().any(Option::is_none);
            (s.label.clone(), worst, !failed && worst <= GROWTH_LIMIT)
        })
        .collect();
    Ok(RefinementReport { table, growth })
}

/// Human-readable run summary.
pub fn summary_text(s: &crate::stepper::RunSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "nodes {}  dofs {}  dt {} ms  t_end {} ms",
        s.n_nodes, s.dofs, s.dt, s.t_end
    );
    for (label, m) in [("all steps", &s.all_steps), ("steps 2..", &s.after_first)] {
        let _ = writeln!(
            out,
            "{label:>10}: It_ellip {:.2}  T_ellip {:.4} s  It_parab {:.2}  T_parab {:.4} s  T_memb {:.5} s",
            m.it_ellip, m.t_ellip_s, m.it_parab, m.t_parab_s, m.t_memb_s
        );
    }
    let _ = writeln!(
        out,
        "v range [{:.2}, {:.2}] mV  activated {} nodes ({} outside the stimulus)",
        s.v_min, s.v_max, s.activated_nodes, s.activated_outside_stimulus
    );
    let _ = writeln!(out, "setup {:.3} s  time loop {:.3} s", s.setup_time_s, s.total_time_s);
    if let Some(a) = &s.amg {
        let sizes: Vec<String> = a.levels.iter().map(|l| l.rows.to_string()).collect();
        let _ = writeln!(
            out,
            "AMG levels {} ({})  operator complexity {:.3}",
            a.levels.len(),
            sizes.join(" / "),
            a.operator_complexity
        );
    }
    for w in &s.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base() -> SimulationConfig {
        SimulationConfig {
            mesh: MeshSpec::Box {
                lengths: [1.0, 1.0, 0.5],
                n: [5, 5, 3],
            },
            t_end: 0.1,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let mut t = ReportTable::new("x", &["a", "b"]);
        t.push(vec!["1.5".into(), "failed: x, \"y\"".into()]).unwrap();
        let back = ReportTable::from_csv(&t.to_csv()).unwrap();
        assert_eq!(back.rows, t.rows);
        assert_eq!(back.columns, t.columns);
        assert!(t.push(vec!["1".into()]).is_err());
    }

    #[test]
    fn aligned_text() {
        let mut t = ReportTable::new("title", &["threshold", "it"]);
        t.push(vec!["0.06".into(), "9.5".into()]).unwrap();
        let s = t.to_text();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "title");
        assert_eq!(lines[1].len(), lines[3].len());
    }

    #[test]
    fn single_value_sweep_has_one_row() {
        let spec = SweepSpec {
            branch: Branch::Mis,
            values: vec![0.06],
            base: tiny_base(),
            repetitions: 1,
        };
        let t = cmd_threshold_sweep(&spec).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].last().unwrap(), "ok");
    }

    #[test]
    fn invalid_sweep_values() {
        let spec = SweepSpec {
            branch: Branch::Strong,
            values: vec![1.5],
            base: tiny_base(),
            repetitions: 1,
        };
        assert!(cmd_threshold_sweep(&spec).is_err());
        let spec = SweepSpec { values: vec![], ..spec };
        assert!(cmd_threshold_sweep(&spec).is_err());
    }

    #[test]
    fn single_size_refinement_passes() {
        let spec = RefinementSpec {
            meshes: vec![tiny_base().mesh],
            solvers: vec![SolverConfig {
                label: "amg".into(),
                elliptic: EllipticPrecond::Amg(AmgConfig::default()),
            }],
            base: tiny_base(),
            max_nodes: usize::MAX,
        };
        let r = cmd_refinement_study(&spec).unwrap();
        assert_eq!(r.table.rows.len(), 1);
        assert!(r.growth[0].2);
    }

    #[test]
    fn oversized_mesh_is_skipped() {
        let spec = RefinementSpec {
            meshes: vec![tiny_base().mesh],
            solvers: vec![SolverConfig {
                label: "id".into(),
                elliptic: EllipticPrecond::Identity,
            }],
            base: tiny_base(),
            max_nodes: 10,
        };
        let r = cmd_refinement_study(&spec).unwrap();
        assert!(r.table.rows[0].last().unwrap().starts_with("skipped"));
        assert!(!r.growth[0].2);
    }
}
