//! `reflector-ot`: solve, study and ray-trace far-field reflector problems.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use reflector_ot::fem::FeSpace;
use reflector_ot::raytrace::{bin, compare, reference_image, trace, GridImage};
use reflector_ot::{CapMesh, ReflectorSolver};
use serde::Serialize;

use config::{ConfigError, Resolved, RunConfig};
use output::{Artifact, StudyRow};

const ARTIFACT: &str = "solution.json";

#[derive(Parser)]
#[command(name = "reflector-ot", version, about = "Far-field freeform reflector design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and export the potential, surface and convergence log.
    Solve(Common),
    /// Solve on a sequence of meshes and tabulate errors against mesh size.
    Study {
        #[command(flatten)]
        common: Common,
        /// Mesh sizes, overriding `[study] n`.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Trace rays through a saved solution and compare with the target.
    Raytrace {
        #[command(flatten)]
        common: Common,
        /// Solve artifact; defaults to `<out>/solution.json`.
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "REFLECTOR_OT_THREADS")]
    threads: Option<usize>,
}

enum Failure {
    Solver(String),
    Config(String),
    MissingArtifact(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) => 2,
            Failure::Config(_) => 3,
            Failure::MissingArtifact(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Solver(m) | Failure::Config(m) | Failure::MissingArtifact(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<reflector_ot::Error> for Failure {
    fn from(e: reflector_ot::Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Solver(format!("i/o: {e}"))
    }
}

type Outcome<T> = Result<T, Failure>;

struct Loaded {
    config: RunConfig,
    base: PathBuf,
    out: PathBuf,
}

fn load(common: &Common) -> Outcome<Loaded> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, base, out })
}

fn set_threads(threads: Option<usize>) -> Outcome<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Solver(e.to_string()))?;
    }
    Ok(())
}

fn solve_into(config: &RunConfig, resolved: Resolved, dir: &Path) -> Outcome<StudyRow> {
    let hash = config.hash();
    let n = resolved.solver.mesh.n;
    let sign = resolved.solver.cost_sign;
    let start = Instant::now();
    let solver = ReflectorSolver::new(resolved.solver)?;
    let solution = solver.run()?;
    let report = &solution.report;
    log::info!(
        "N = {n}: {:?} after {} iterations, residual {:e}, {:.1} s",
        report.termination,
        report.iterations,
        report.final_residual(),
        start.elapsed().as_secs_f64()
    );
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let space = solver.space();
    let errors = resolved.exact.map(|pr| {
        let pr = pr.zero_mean_on(space);
        (
            space.l2_error(&solution.u, |x| pr.value(x)),
            space.h1_seminorm_error(&solution.u, |x| pr.gradient(x)),
        )
    });
    std::fs::create_dir_all(dir)?;
    if config.output.vtk {
        output::write_vtk(&dir.join("u_h.vtk"), space, &solution.u, sign, &hash)?;
    }
    if config.output.obj {
        output::write_obj(&dir.join("surface.obj"), space, &solution.u, sign, &hash)?;
    }
    if config.output.csv {
        output::write_convergence(&dir.join("convergence.csv"), report)?;
        output::write_timings(&dir.join("timings.csv"), report)?;
    }
    Artifact {
        config_hash: hash,
        config: config.clone(),
        n,
        u: solution.u.clone(),
        report: report.clone(),
    }
    .save(&dir.join(ARTIFACT))?;
    Ok(StudyRow {
        n,
        h: space.mesh().h(),
        iterations: report.iterations,
        final_residual: report.final_residual(),
        errors,
    })
}

fn report_line(row: &StudyRow) -> String {
    let mut s = format!(
        "N = {}  h = {:.4e}  iterations = {}  residual = {:.4e}",
        row.n, row.h, row.iterations, row.final_residual
    );
    if let Some((l2, h1)) = row.errors {
        s.push_str(&format!("  L2 error = {l2:.4e}  H1 error = {h1:.4e}"));
    }
    s
}

fn cmd_solve(common: &Common) -> Outcome<()> {
    let loaded = load(common)?;
    let resolved = loaded.config.resolve(&loaded.base, None)?;
    set_threads(common.threads)?;
    let row = solve_into(&loaded.config, resolved, &loaded.out)?;
    println!("{}", report_line(&row));
    Ok(())
}

fn cmd_study(common: &Common, n: &[usize]) -> Outcome<()> {
    let loaded = load(common)?;
    let sizes = if !n.is_empty() {
        n.to_vec()
    } else if let Some(study) = &loaded.config.study {
        study.n.clone()
    } else {
        return Err(Failure::Config("no mesh sizes: pass --n or add a [study] section".into()));
    };
    let resolved: Vec<Resolved> = sizes
        .iter()
        .map(|&k| loaded.config.resolve(&loaded.base, Some(k)))
        .collect::<Result<_, _>>()?;
    set_threads(common.threads)?;
    let mut rows = Vec::new();
    for r in resolved {
        let dir = loaded.out.join(format!("n{}", r.solver.mesh.n));
        let row = solve_into(&loaded.config, r, &dir)?;
        println!("{}", report_line(&row));
        rows.push(row);
    }
    output::write_study(&loaded.out.join("errors.csv"), &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    config_hash: String,
    rays: usize,
    seed: u64,
    in_grid: usize,
    out_of_grid: usize,
    failed: usize,
    in_grid_fraction: f64,
    miss_fraction: f64,
    l1: f64,
    l2: f64,
    linf: f64,
    argmax: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    reference_l1: Option<f64>,
}

fn cmd_raytrace(common: &Common, artifact: Option<&Path>) -> Outcome<()> {
    let loaded = load(common)?;
    let path = artifact
        .map(Path::to_path_buf)
        .unwrap_or_else(|| loaded.out.join(ARTIFACT));
    let resolved = loaded.config.resolve(&loaded.base, None)?;
    if !path.is_file() {
        return Err(Failure::MissingArtifact(format!("no solve artifact at {}", path.display())));
    }
    let art = Artifact::load(&path)
        .map_err(|e| Failure::MissingArtifact(format!("unreadable artifact {}: {e}", path.display())))?;
    // geometry and cost come from the run that produced the potential
    let solved = art.config.resolve(&loaded.base, Some(art.n))?;
    set_threads(common.threads)?;
    let cfg = &solved.solver;
    let mesh = CapMesh::build(cfg.mesh.theta, cfg.mesh.n, cfg.mesh.order, cfg.mesh.center)?;
    let space = FeSpace::new(mesh, cfg.fe_degree)?;
    if art.u.len() != space.n_dofs() {
        return Err(Failure::MissingArtifact(format!(
            "artifact has {} values for {} unknowns",
            art.u.len(),
            space.n_dofs()
        )));
    }
    let rt = &loaded.config.raytrace;
    let samples = cfg.source.sample(rt.rays, loaded.config.seed)?;
    let traced = trace(&space, &art.u, cfg.cost_sign, &samples);
    let binned = bin(&traced, &resolved.grid, rt.smoothing)?;
    let reference = reference_image(&resolved.solver.target, &resolved.grid)?;
    let metrics = compare(&binned.image, &reference)?;
    let reference_l1 = match &rt.reference {
        Some(p) => {
            let p = loaded.base.join(p);
            let (rows, cols, values) = output::read_image_csv(&p).map_err(Failure::Config)?;
            if (rows, cols) != resolved.grid.shape() {
                return Err(Failure::Solver(
                    reflector_ot::Error::GridMismatch(format!(
                        "reference {} is {rows}x{cols}, grid is {:?}",
                        p.display(),
                        resolved.grid.shape()
                    ))
                    .to_string(),
                ));
            }
            let other = GridImage {
                spec: resolved.grid,
                values,
            };
            Some(compare(&binned.image, &other)?.l1)
        }
        None => None,
    };
    let hash = loaded.config.hash();
    std::fs::create_dir_all(&loaded.out)?;
    output::write_image_pgm(&loaded.out.join("image.pgm"), &binned.image, &hash)?;
    output::write_image_csv(&loaded.out.join("image.csv"), &binned.image)?;
    output::write_image_pgm(&loaded.out.join("error.pgm"), &metrics.error_map, &hash)?;
    let m = Metrics {
        config_hash: hash,
        rays: rt.rays,
        seed: loaded.config.seed,
        in_grid: binned.in_grid,
        out_of_grid: binned.out_of_grid,
        failed: binned.failed,
        in_grid_fraction: binned.in_grid_fraction(),
        miss_fraction: binned.miss_fraction(),
        l1: metrics.l1,
        l2: metrics.l2,
        linf: metrics.linf,
        argmax: metrics.argmax,
        reference_l1,
    };
    std::fs::write(
        loaded.out.join("metrics.json"),
        serde_json::to_string_pretty(&m).map_err(|e| Failure::Solver(e.to_string()))?,
    )?;
    println!(
        "rays = {}  in grid = {:.6}  missed = {:.6}  L1 = {:.4e}  L2 = {:.4e}  Linf = {:.4e}",
        m.rays, m.in_grid_fraction, m.miss_fraction, m.l1, m.l2, m.linf
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(common) => cmd_solve(common),
        Command::Study { common, n } => cmd_study(common, n),
        Command::Raytrace { common, artifact } => cmd_raytrace(common, artifact.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
