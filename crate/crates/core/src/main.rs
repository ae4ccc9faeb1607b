//! `scherk`: command-line front end.
//!
//! Exit codes: 0 success, 1 I/O or failed acceptance checks, 2 invalid input,
//! 3 numerical divergence.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scherk::catenoid::{CatenoidProfile, EndExpansion};
use scherk::config::RunConfig;
use scherk::gluing::{self, GluingProblem};
use scherk::mesh::Mesh;
use scherk::neck::{BoundaryTrace, NeckReport, NeckSolver};
use scherk::outer::{OuterSolver, TailFit};
use scherk::scherk::{report as scherk_report, Scherk};
use scherk::sphere::InvariantSphereBasis;
use scherk::verify;
use scherk::{Error, Result};

#[derive(Parser)]
#[command(name = "scherk", version, about = "Scherk-type minimal hypersurfaces by catenoid gluing")]
struct Cli {
    /// Worker threads (default 1, or `threads` from the configuration); 1
    /// keeps every report bit-for-bit reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Outputs {
    /// ASCII OBJ output.
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// JSON report output; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Classical singly periodic Scherk surface in ℝ³ with wing angle ε.
    Scherk3d {
        #[arg(long)]
        eps: f64,
        /// Half-width of the meshed box in x₁.
        #[arg(long, default_value_t = 3.0)]
        half_width: f64,
        /// Half-height of the meshed box in z.
        #[arg(long, default_value_t = 3.0)]
        half_height: f64,
        #[arg(long, default_value_t = 48)]
        cells: usize,
        #[command(flatten)]
        out: Outputs,
    },
    /// Catenoid profile and the section of the ε-scaled catenoid.
    Catenoid {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Parameter range `|s| ≤ s_max` of the meshed section.
        #[arg(long, default_value_t = 2.0)]
        s_max: f64,
        #[arg(long, default_value_t = 41)]
        rings: usize,
        #[arg(long, default_value_t = 48)]
        segments: usize,
        #[command(flatten)]
        out: Outputs,
    },
    /// Perturbed neck with boundary data `h` (default zero).
    Neck {
        #[arg(long)]
        config: PathBuf,
        /// Sphere-mode coefficients of `h`, comma separated.
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[command(flatten)]
        out: Outputs,
    },
    /// Outer graph with boundary data `g` (default: the trace of the
    /// unperturbed neck).
    Outer {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        g: Vec<f64>,
        #[command(flatten)]
        out: Outputs,
    },
    /// Full gluing: matched neck and outer graph, section mesh and report.
    Glue {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: Outputs,
    },
    /// Runs the acceptance checks and prints one line per check.
    Verify {
        /// Check numbers to run, comma separated; all when absent.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct CatenoidReport {
    n: usize,
    eps: f64,
    c_inf: f64,
    c_inf_error: f64,
    energy_defect: f64,
    end_expansion: Option<EndExpansion>,
    mesh_vertices: usize,
    mesh_faces: usize,
}

#[derive(Serialize)]
struct NeckOutput {
    h: Vec<f64>,
    report: NeckReport,
    trace: BoundaryTrace,
    symmetry: f64,
}

#[derive(Serialize)]
struct OuterOutput {
    g: Vec<f64>,
    tail: TailFit,
    picard_history: Vec<f64>,
    residual: f64,
    correction_sup: f64,
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn write_mesh(mesh: &Mesh, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => mesh.write_obj(p),
        None => Ok(()),
    }
}

/// Command-line paths win over the ones in the configuration.
fn resolve(out: &Outputs, config: &RunConfig) -> (Option<PathBuf>, Option<PathBuf>) {
    (out.mesh.clone().or(config.mesh.clone()), out.report.clone().or(config.report.clone()))
}

fn pad(values: &[f64], len: usize) -> Result<Vec<f64>> {
    if values.len() > len {
        return Err(Error::InvalidParameter(format!("{} coefficients given, basis has {len}", values.len())));
    }
    let mut out = values.to_vec();
    out.resize(len, 0.0);
    Ok(out)
}

fn init_threads(flag: Option<usize>, config: Option<&RunConfig>) -> Result<()> {
    let threads = flag.or(config.map(|c| c.threads)).unwrap_or(1);
    if threads == 0 {
        return Err(Error::InvalidParameter("threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

/// Loads the configuration and sizes the thread pool from it.
fn load(path: &Path, flag: Option<usize>) -> Result<RunConfig> {
    let config = RunConfig::load(path)?;
    init_threads(flag, Some(&config))?;
    Ok(config)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let flag = cli.threads;
    if !matches!(cli.command, Command::Neck { .. } | Command::Outer { .. } | Command::Glue { .. }) {
        init_threads(flag, None)?;
    }
    match cli.command {
        Command::Scherk3d { eps, half_width, half_height, cells, out } => {
            let mesh = Scherk::new(eps)?.mesh(half_width, half_height, cells);
            write_mesh(&mesh, out.mesh.as_deref())?;
            emit(&scherk_report(eps, &mesh)?, out.report.as_deref())?;
        }
        Command::Catenoid { n, eps, s_max, rings, segments, out } => {
            let profile = CatenoidProfile::solve(n, s_max.max(8.0), 1e-8)?;
            let mesh = profile.section_mesh(eps, s_max, rings, segments)?;
            write_mesh(&mesh, out.mesh.as_deref())?;
            let report = CatenoidReport {
                n,
                eps,
                c_inf: profile.c_inf(),
                c_inf_error: profile.c_inf_error(),
                energy_defect: profile.energy_defect(),
                end_expansion: if n >= 3 { Some(profile.end_expansion()?) } else { None },
                mesh_vertices: mesh.vertices.len(),
                mesh_faces: mesh.faces.len(),
            };
            emit(&report, out.report.as_deref())?;
        }
        Command::Neck { config, h, out } => {
            let config = load(&config, flag)?;
            let params = config.gluing_params()?;
            let basis = InvariantSphereBasis::build(config.n, config.m, params.l_max)?;
            let profile = CatenoidProfile::solve(config.n, params.profile_s_max, params.profile_tol)?;
            let solver = NeckSolver::new(&profile, &basis, params.neck)?;
            let h = pad(&h, basis.len())?;
            let sol = solver.solve(&h, config.eps, config.rho)?;
            let output = NeckOutput { trace: sol.boundary_trace()?, symmetry: sol.symmetry_defect()?, report: sol.report.clone(), h };
            emit(&output, resolve(&out, &config).1.as_deref())?;
        }
        Command::Outer { config, g, out } => {
            let config = load(&config, flag)?;
            let problem = GluingProblem::new(config.n, config.lattice()?, config.gluing_params()?)?;
            let g = if g.is_empty() {
                let neck = problem.neck_solver()?;
                neck.solve(&vec![0.0; problem.basis.len()], config.eps, config.rho)?.boundary_trace()?.value
            } else {
                pad(&g, problem.basis.len())?
            };
            let outer = OuterSolver::new(&problem.basis, &problem.lattice, problem.params.outer.clone())?;
            let sol = outer.solve_graph(&g, config.eps)?;
            let output = OuterOutput {
                g,
                tail: sol.tail,
                correction_sup: sol.correction.sup(),
                picard_history: sol.picard_history.clone(),
                residual: sol.residual,
            };
            emit(&output, resolve(&out, &config).1.as_deref())?;
        }
        Command::Glue { config, out } => {
            let config = load(&config, flag)?;
            let (mesh_path, report_path) = resolve(&out, &config);
            let problem = GluingProblem::new(config.n, config.lattice()?, config.gluing_params()?)?;
            let neck = problem.neck_solver()?;
            let outer = problem.outer_solver()?;
            let (report, mesh) = gluing::glue(&problem, &neck, &outer, config.eps)?;
            write_mesh(&mesh, mesh_path.as_deref())?;
            emit(&report, report_path.as_deref())?;
        }
        Command::Verify { only, report } => {
            let results: Vec<verify::Criterion> = if only.is_empty() {
                verify::run_all()
            } else {
                let mut out = Vec::new();
                for id in only {
                    out.push(verify::run(id).ok_or_else(|| Error::InvalidParameter(format!("no check numbered {id}")))?);
                }
                out
            };
            for c in &results {
                println!("{}", c.line());
            }
            if let Some(path) = report {
                emit(&results, Some(&path))?;
            }
            if results.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
