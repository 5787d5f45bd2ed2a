use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cardio_amg::harness::summary_text;
use cardio_amg::mesh::{assign_fibers, load_mesh, save_mesh};
use cardio_amg::{
    cmd_refinement_study, cmd_threshold_sweep, generate_box_mesh, generate_ellipsoid_mesh, run_simulation,
    simulation_config, Branch, EllipsoidParams, EllipticPrecond, KvConfig, MeshSpec, RefinementSpec, ReportTable,
    SimulationConfig, SolverConfig, SweepSpec,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "cardio-amg",
    version,
    about = "Bidomain simulator and AMG preconditioner laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect meshes.
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Run a simulation and write trace, snapshots and summary.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Threshold calibration sweep.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "mis")]
        branch: BranchArg,
        /// Comma-separated threshold values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Refinement study: same window on a sequence of meshes.
    Refine {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Cells per direction of N x N x N meshes, ascending.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        sizes: Vec<usize>,
        /// Elliptic preconditioners to compare.
        #[arg(long, value_delimiter = ',', default_value = "amg,identity")]
        solvers: Vec<SolverArg>,
        #[arg(long, default_value_t = 2_000_000)]
        max_nodes: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Truncated-ellipsoid ventricle with rotating fibers.
    GenEllipsoid {
        /// Cells along theta, phi, r.
        #[arg(long, value_delimiter = ',', default_value = "32,32,16")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 60.0, allow_negative_numbers = true)]
        endo_deg: f64,
        #[arg(long, default_value_t = -60.0, allow_negative_numbers = true)]
        epi_deg: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Axis-aligned box slab.
    GenBox {
        #[arg(long, value_delimiter = ',', default_value = "1,1,1")]
        lengths: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "16,16,16")]
        n: Vec<usize>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print counts, volume and metadata of a mesh file.
    Info { path: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set amg.threshold=0.06`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(KvConfig, SimulationConfig)> {
        let mut kv = match &self.config {
            Some(p) => KvConfig::load(p)?,
            None => KvConfig::default(),
        };
        for s in &self.overrides {
            kv.set(s)?;
        }
        let cfg = simulation_config(&kv)?;
        Ok((kv, cfg))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Mis,
    Strong,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Amg,
    Jacobi,
    Identity,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn triple<T: Copy>(name: &str, v: &[T]) -> Result<[T; 3]> {
    match v {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("--{name} takes exactly 3 comma-separated values, got {}", v.len()),
    }
}

fn write_table(table: &ReportTable, csv: Option<&Path>) -> Result<()> {
    print!("{}", table.to_text());
    if let Some(p) = csv {
        std::fs::write(p, table.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Mesh(m) => mesh_command(m)?,
        Command::Simulate { cfg, out } => {
            let (_, mut config) = cfg.load()?;
            if let Some(o) = out {
                config.output.dir = Some(o);
            }
            let outcome = run_simulation(&config)?;
            print!("{}", summary_text(&outcome.summary));
            if let Some(d) = &config.output.dir {
                println!("artifacts in {}", d.display());
            }
        }
        Command::Sweep {
            cfg,
            branch,
            values,
            repetitions,
            csv,
        } => {
            let (_, base) = cfg.load()?;
            let spec = SweepSpec {
                branch: match branch {
                    BranchArg::Mis => Branch::Mis,
                    BranchArg::Strong => Branch::Strong,
                },
                values,
                base,
                repetitions,
            };
            write_table(&cmd_threshold_sweep(&spec)?, csv.as_deref())?;
        }
        Command::Refine {
            cfg,
            sizes,
            solvers,
            max_nodes,
            csv,
        } => {
            let (_, base) = cfg.load()?;
            let amg = match &base.elliptic {
                EllipticPrecond::Amg(a) => a.clone(),
                _ => Default::default(),
            };
            let meshes = sizes
                .iter()
                .map(|&n| match &base.mesh {
                    MeshSpec::Box { lengths, .. } => MeshSpec::Box {
                        lengths: *lengths,
                        n: [n; 3],
                    },
                    MeshSpec::File { .. } => MeshSpec::ellipsoid([n; 3]),
                    MeshSpec::Ellipsoid {
                        params,
                        endo_angle,
                        epi_angle,
                        ..
                    } => MeshSpec::Ellipsoid {
                        n: [n; 3],
                        params: *params,
                        endo_angle: *endo_angle,
                        epi_angle: *epi_angle,
                    },
                })
                .collect();
            let solvers = solvers
                .iter()
                .map(|s| match s {
                    SolverArg::Amg => SolverConfig {
                        label: "amg".into(),
                        elliptic: EllipticPrecond::Amg(amg.clone()),
                    },
                    SolverArg::Jacobi => SolverConfig {
                        label: "jacobi".into(),
                        elliptic: EllipticPrecond::Jacobi,
                    },
                    SolverArg::Identity => SolverConfig {
                        label: "identity".into(),
                        elliptic: EllipticPrecond::Identity,
                    },
                })
                .collect();
            let report = cmd_refinement_study(&RefinementSpec {
                meshes,
                solvers,
                base,
                max_nodes,
            })?;
            write_table(&report.table, csv.as_deref())?;
            for (label, growth, ok) in &report.growth {
                println!(
                    "{label}: max iteration growth {growth:.3} ({})",
                    if *ok { "bounded" } else { "NOT bounded" }
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn mesh_command(m: MeshCommand) -> Result<()> {
    match m {
        MeshCommand::GenEllipsoid {
            n,
            endo_deg,
            epi_deg,
            output,
        } => {
            let [a, b, c] = triple("n", &n)?;
            let mesh = generate_ellipsoid_mesh(&EllipsoidParams::default(), a, b, c)?;
            let mesh = assign_fibers(mesh, endo_deg.to_radians(), epi_deg.to_radians())?;
            save_mesh(&mesh, &output)?;
            println!(
                "{} nodes, {} elements, {} dofs -> {}",
                mesh.n_nodes(),
                mesh.n_elements(),
                mesh.bidomain_dofs(),
                output.display()
            );
        }
        MeshCommand::GenBox { lengths, n, output } => {
            let mesh = generate_box_mesh(triple("lengths", &lengths)?, triple("n", &n)?)?;
            save_mesh(&mesh, &output)?;
            println!(
                "{} nodes, {} elements, {} dofs -> {}",
                mesh.n_nodes(),
                mesh.n_elements(),
                mesh.bidomain_dofs(),
                output.display()
            );
        }
        MeshCommand::Info { path } => {
            let mesh = load_mesh(&path)?;
            let (lo, hi) = mesh.bounding_box();
            println!("nodes     {}", mesh.n_nodes());
            println!("elements  {}", mesh.n_elements());
            println!("dofs      {}", mesh.bidomain_dofs());
            println!("volume    {:.6}", mesh.volume());
            println!(
                "bbox      [{:.4}, {:.4}, {:.4}] - [{:.4}, {:.4}, {:.4}]",
                lo[0], lo[1], lo[2], hi[0], hi[1], hi[2]
            );
            for (k, v) in mesh.metadata() {
                println!("meta      {k} = {v}");
            }
            if mesh.n_elements() == 0 {
                bail!("mesh has no elements");
            }
        }
    }
    Ok(())
}
