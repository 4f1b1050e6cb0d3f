//! Command-line front end for the umbilic analysis library: classify jets,
//! analyze Lie-Cartan suspensions, trace curvature-line portraits, scan
//! two-parameter families, and draw the stratified cubic-coefficient sphere.
//!
//! Every figure-producing command also writes the underlying data as CSV or
//! JSON next to the figure, and all non-SVG outputs are byte-reproducible
//! for a fixed command line and seed.

mod sphere;
mod svg;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::{Path, PathBuf};
use umbilic_core::classifier::{classify, compute_invariants};
use umbilic_core::family::{
    sheet_csv, stratify_sheet, umbilic_sheet, FamilyError, FamilySpec, SheetGrid,
};
use umbilic_core::jets::{normalize_monge_jet, RawMongeJet5};
use umbilic_core::liecartan::{
    blowup_field, lie_cartan_field, linearize_at_singularity, singular_points_on_fiber, Chart,
    LieCartanError,
};
use umbilic_core::scalar::{Scalar, ToleranceContext};
use umbilic_core::surfaces::{find_umbilics, Surface, SurfaceError};
use umbilic_core::tracer::{
    separatrix_census, trace_curvature_line, traces_csv, Branch, CurveTrace, StepControl,
    StopReason, TraceError, DEFAULT_CENSUS_RADIUS,
};

#[derive(Parser)]
#[command(
    name = "umbilic-atlas",
    version,
    about = "Umbilic points: classification, suspensions, portraits, and family scans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory for reports and figures (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Worker threads for parallel scans; 1 forces serial execution.
    #[arg(long, global = true, env = "UMBILIC_ATLAS_THREADS")]
    threads: Option<usize>,

    /// Seed for the sampling-based parts (portrait ring seeds).
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,

    /// Scale-free zero threshold override.
    #[arg(long, global = true)]
    eps_zero: Option<f64>,

    /// Eigenvalue comparison threshold override.
    #[arg(long, global = true)]
    eps_eig: Option<f64>,

    /// Curvature-line residual threshold override.
    #[arg(long, global = true)]
    eps_residual: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a Monge jet document into its umbilic type.
    Classify {
        /// JSON jet document (fields k, a, bprime, b, c, A..E, a50..a05).
        #[arg(long)]
        jet: PathBuf,
    },
    /// Print the full invariant report (tau, delta, delta1, chi, xi, ...).
    Invariants {
        #[arg(long)]
        jet: PathBuf,
    },
    /// Singular points of the suspended curvature-line field and their
    /// linearizations.
    Suspension {
        #[arg(long)]
        jet: PathBuf,
        /// Projective chart: p covers finite slopes, q the vertical one.
        #[arg(long, value_enum, default_value_t = ChartArg::P)]
        chart: ChartArg,
        /// Add the weighted blow-up analysis (requires a = b = 0, cB != 0).
        #[arg(long)]
        blowup: bool,
    },
    /// Trace the principal foliations around each umbilic into an SVG
    /// portrait plus the underlying trace data.
    #[command(group(ArgGroup::new("target").required(true).args(["jet", "surface"])))]
    Portrait {
        /// Jet document; the portrait is drawn around the origin of its graph.
        #[arg(long)]
        jet: Option<PathBuf>,
        /// Surface document; one portrait per detected umbilic.
        #[arg(long)]
        surface: Option<PathBuf>,
        /// Portrait radius in chart units.
        #[arg(long, default_value_t = DEFAULT_CENSUS_RADIUS)]
        radius: f64,
    },
    /// Trace a single curvature line from a seed point.
    Trace {
        #[arg(long)]
        surface: PathBuf,
        /// Seed point "u,v" in chart coordinates.
        #[arg(long, value_parser = parse_seed)]
        seed: SeedPoint,
        #[arg(long, value_enum)]
        branch: BranchArg,
        /// Chart index for multi-chart surfaces.
        #[arg(long, default_value_t = 0)]
        chart: usize,
        /// Stop after this much arclength (default: run to a stop condition).
        #[arg(long)]
        max_arclength: Option<f64>,
    },
    /// Scan a two-parameter family: umbilic sheet CSV plus strata JSON.
    Scan {
        #[arg(long)]
        family: PathBuf,
        /// Lambda grid nodes per axis.
        #[arg(long, default_value_t = 33)]
        lambda_res: usize,
        /// Per-slice seeding resolution in (u, v).
        #[arg(long, default_value_t = 24)]
        uv_res: usize,
    },
    /// Stratified unit sphere of cubic coefficients (a, b, c): regions
    /// colored by type, zero sets of delta1, tau, delta overlaid.
    StrataSphere {
        /// Latitude rows of the sampling grid (longitude gets twice that).
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ChartArg {
    P,
    Q,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Min,
    Max,
}

impl From<BranchArg> for Branch {
    fn from(b: BranchArg) -> Branch {
        match b {
            BranchArg::Min => Branch::Min,
            BranchArg::Max => Branch::Max,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct SeedPoint(f64, f64);

fn parse_seed(text: &str) -> Result<SeedPoint, String> {
    let (u, v) = text
        .split_once(',')
        .ok_or_else(|| format!("expected \"u,v\", got {text:?}"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad coordinate {s:?}: {e}"))
    };
    Ok(SeedPoint(parse(u)?, parse(v)?))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<LieCartanError> for CliError {
    fn from(e: LieCartanError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SurfaceError> for CliError {
    fn from(e: SurfaceError) -> Self {
        match e {
            SurfaceError::BadDocument(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FamilyError> for CliError {
    fn from(e: FamilyError) -> Self {
        match e {
            FamilyError::BadDocument(_) => CliError::Input(e.to_string()),
            FamilyError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut tol = ToleranceContext::default();
    if let Some(x) = cli.eps_zero {
        tol.eps_zero = x;
    }
    if let Some(x) = cli.eps_eig {
        tol.eps_eig = x;
    }
    if let Some(x) = cli.eps_residual {
        tol.eps_residual = x;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    let out = Out {
        dir: cli.out_dir.clone(),
    };

    match cli.command {
        Command::Classify { jet } => cmd_classify(&jet, &tol, &out),
        Command::Invariants { jet } => cmd_invariants(&jet, &tol, &out),
        Command::Suspension {
            jet,
            chart,
            blowup,
        } => cmd_suspension(&jet, chart, blowup, &tol, &out),
        Command::Portrait {
            jet,
            surface,
            radius,
        } => cmd_portrait(jet.as_deref(), surface.as_deref(), radius, cli.seed, &tol, &out),
        Command::Trace {
            surface,
            seed,
            branch,
            chart,
            max_arclength,
        } => cmd_trace(&surface, seed, branch.into(), chart, max_arclength, &tol, &out),
        Command::Scan {
            family,
            lambda_res,
            uv_res,
        } => cmd_scan(&family, lambda_res, uv_res, &tol, &out),
        Command::StrataSphere { resolution } => cmd_strata_sphere(resolution, &tol, &out),
    }
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), contents)?;
        Ok(())
    }

    /// Prints the report to stdout and persists it under `name`.
    fn emit_json(&self, name: &str, payload: &serde_json::Value) -> Result<(), CliError> {
        let text = format!("{:#}\n", payload);
        print!("{text}");
        self.write(name, &text)
    }
}

fn read_jet(path: &Path) -> Result<RawMongeJet5, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn read_surface(path: &Path) -> Result<Surface, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(Surface::from_json_str(&text)?)
}

fn cmd_classify(path: &Path, tol: &ToleranceContext, out: &Out) -> Result<(), CliError> {
    let raw = read_jet(path)?;
    let (jet, angle) = normalize_monge_jet(&raw, tol);
    let class = classify(&jet, tol);
    let payload = json!({
        "rotation_angle": angle.to_f64(),
        "normalized_jet": jet,
        "class": class,
        "tag": class.tag,
    });
    out.emit_json("classify.json", &payload)
}

fn cmd_invariants(path: &Path, tol: &ToleranceContext, out: &Out) -> Result<(), CliError> {
    let raw = read_jet(path)?;
    let (jet, angle) = normalize_monge_jet(&raw, tol);
    let report = compute_invariants(&jet);
    let payload = json!({
        "rotation_angle": angle.to_f64(),
        "normalized_jet": jet,
        "invariants": report,
    });
    out.emit_json("invariants.json", &payload)
}

fn cmd_suspension(
    path: &Path,
    chart: ChartArg,
    blowup: bool,
    tol: &ToleranceContext,
    out: &Out,
) -> Result<(), CliError> {
    let raw = read_jet(path)?;
    let (jet, _) = normalize_monge_jet(&raw, tol);
    let mut singular_points = Vec::new();
    match chart {
        ChartArg::P => {
            let roots = singular_points_on_fiber(&jet, tol)?;
            let field = lie_cartan_field(&jet, Chart::P);
            for (p, multiplicity) in roots {
                let analysis = linearize_at_singularity(&field, &p, tol);
                singular_points.push(json!({
                    "p": p.to_f64(),
                    "multiplicity": multiplicity,
                    "analysis": analysis,
                }));
            }
        }
        ChartArg::Q => {
            let field = lie_cartan_field(&jet, Chart::Q);
            let analysis = linearize_at_singularity(&field, &Scalar::zero(), tol);
            singular_points.push(json!({
                "q": 0.0,
                "analysis": analysis,
            }));
        }
    }
    let blowup_report = if blowup {
        Some(blowup_field(&jet, tol)?)
    } else {
        None
    };
    let payload = json!({
        "chart": match chart { ChartArg::P => "p", ChartArg::Q => "q" },
        "class": classify(&jet, tol),
        "singular_points": singular_points,
        "blowup": blowup_report,
    });
    out.emit_json("suspension.json", &payload)
}

fn portrait_step(radius: f64) -> StepControl {
    let h_max = (radius / 50.0).min(1e-3);
    StepControl {
        h_min: h_max * 1e-4,
        h_max,
        max_steps: 40_000,
        ..StepControl::default()
    }
}

fn cmd_portrait(
    jet: Option<&Path>,
    surface: Option<&Path>,
    radius: f64,
    seed: u64,
    tol: &ToleranceContext,
    out: &Out,
) -> Result<(), CliError> {
    if !(radius > 0.0) {
        return Err(CliError::Input("--radius must be positive".into()));
    }
    let (surface, grid_res) = match (jet, surface) {
        (Some(path), None) => {
            let raw = read_jet(path)?;
            (Surface::from_jet(&raw, 4.0 * radius), 24)
        }
        (None, Some(path)) => (read_surface(path)?, 48),
        _ => unreachable!("clap enforces exactly one target"),
    };
    let scan = find_umbilics(&surface, grid_res, tol);
    if !scan.non_isolated_charts.is_empty() {
        return Err(CliError::Numerical(format!(
            "{} chart(s) look non-isolated (umbilic everywhere?)",
            scan.non_isolated_charts.len()
        )));
    }
    if scan.umbilics.is_empty() {
        return Err(CliError::Numerical("no umbilics detected".into()));
    }
    let step = portrait_step(radius);
    let mut rng = splitmix(seed);
    let mut reports = Vec::new();
    for (idx, record) in scan.umbilics.iter().enumerate() {
        let chart = surface.charts[record.chart].as_ref();
        let census = separatrix_census(chart, record, radius, &step, tol)?;
        // ring of jittered seeds; every line is bounded to stay near the disk
        let mut lines: Vec<CurveTrace> = Vec::new();
        let n_ring = 12;
        for i in 0..n_ring {
            let jitter = next_unit(&mut rng);
            let phi = 2.0 * std::f64::consts::PI * (i as f64 + jitter) / n_ring as f64;
            let seed_pt = (
                record.u + 0.8 * radius * phi.cos(),
                record.v + 0.8 * radius * phi.sin(),
            );
            for branch in [Branch::Min, Branch::Max] {
                match trace_curvature_line(chart, seed_pt, branch, &step, tol) {
                    Ok(trace) => lines.push(trace),
                    // a seed can land on another umbilic; skip it
                    Err(TraceError::UmbilicPoint) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let svg_name = format!("portrait_{idx}.svg");
        let lines_name = format!("portrait_{idx}_lines.csv");
        let seps_name = format!("portrait_{idx}_separatrices.csv");
        out.write(
            &svg_name,
            &svg::portrait(
                (record.u, record.v),
                radius,
                &lines,
                &census.separatrices,
            ),
        )?;
        out.write(&lines_name, &traces_csv(&lines))?;
        out.write(&seps_name, &traces_csv(&census.separatrices))?;
        reports.push(json!({
            "chart": record.chart,
            "u": record.u,
            "v": record.v,
            "position": [record.position[0], record.position[1], record.position[2]],
            "class": record.class,
            "census": {
                "n_min": census.n_min,
                "n_max": census.n_max,
                "index": census.index,
            },
            "files": {
                "svg": svg_name,
                "lines_csv": lines_name,
                "separatrices_csv": seps_name,
            },
        }));
    }
    let payload = json!({ "radius": radius, "umbilics": reports });
    out.emit_json("portrait.json", &payload)
}

fn cmd_trace(
    path: &Path,
    seed: SeedPoint,
    branch: Branch,
    chart_index: usize,
    max_arclength: Option<f64>,
    tol: &ToleranceContext,
    out: &Out,
) -> Result<(), CliError> {
    let surface = read_surface(path)?;
    let chart = surface
        .charts
        .get(chart_index)
        .ok_or_else(|| {
            CliError::Input(format!(
                "chart {chart_index} out of range ({} charts)",
                surface.charts.len()
            ))
        })?
        .as_ref();
    let step = StepControl::default();
    let trace = match max_arclength {
        None => trace_curvature_line(chart, (seed.0, seed.1), branch, &step, tol)?,
        Some(limit) => {
            let pair =
                umbilic_core::tracer::principal_directions_at(chart, seed.0, seed.1, tol)?;
            let d0 = match branch {
                Branch::Min => pair.min_dir,
                Branch::Max => pair.max_dir,
            };
            umbilic_core::tracer::trace_directed(
                chart,
                &nalgebra::Vector2::new(seed.0, seed.1),
                &d0,
                branch,
                &step,
                tol,
                Some(limit),
            )
        }
    };
    out.write("trace.csv", &traces_csv(std::slice::from_ref(&trace)))?;
    let payload = json!({
        "branch": trace.branch,
        "stop": trace.stop,
        "closed": trace.stop == StopReason::Closed,
        "vertices": trace.points.len(),
        "arclength": trace.arclength.last().copied().unwrap_or(0.0),
        "max_residual": trace.max_residual,
        "files": { "csv": "trace.csv" },
    });
    out.emit_json("trace.json", &payload)
}

fn cmd_scan(
    path: &Path,
    lambda_res: usize,
    uv_res: usize,
    tol: &ToleranceContext,
    out: &Out,
) -> Result<(), CliError> {
    if lambda_res < 2 || uv_res < 2 {
        return Err(CliError::Input(
            "--lambda-res and --uv-res must be at least 2".into(),
        ));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let family = FamilySpec::from_json_str(&text)?;
    let grid = SheetGrid {
        lambda_res: [lambda_res, lambda_res],
        uv_res,
    };
    let sheet = umbilic_sheet(&family, &grid, tol);
    let strata = stratify_sheet(&family, &sheet, tol);
    out.write("sheet.csv", &sheet_csv(&sheet))?;
    let strata_json = serde_json::to_value(&strata)
        .map_err(|e| CliError::Numerical(format!("serializing strata: {e}")))?;
    out.write("strata.json", &format!("{strata_json:#}\n"))?;
    let payload = json!({
        "vertices": sheet.vertices.len(),
        "non_isolated_slices": sheet.non_isolated.len(),
        "codim1_curves": strata.codim1.iter().map(|c| json!({
            "tag": c.tag,
            "points": c.points.len(),
            "closed": c.closed,
        })).collect::<Vec<_>>(),
        "codim2_points": strata.codim2.iter().map(|p| json!({
            "tag": p.tag,
            "lambda": p.lambda,
            "residual": p.residual,
        })).collect::<Vec<_>>(),
        "files": { "sheet_csv": "sheet.csv", "strata_json": "strata.json" },
    });
    out.emit_json("scan.json", &payload)
}

fn cmd_strata_sphere(
    resolution: usize,
    tol: &ToleranceContext,
    out: &Out,
) -> Result<(), CliError> {
    if resolution < 8 {
        return Err(CliError::Input("--resolution must be at least 8".into()));
    }
    let map = sphere::stratified_sphere(resolution, tol);
    out.write("strata_sphere.svg", &svg::strata_sphere(&map))?;
    out.write("strata_sphere.csv", &sphere::sphere_csv(&map))?;
    let payload = json!({
        "resolution": resolution,
        "cells": map.cells.len(),
        "region_cells": map.tag_histogram(),
        "curves": {
            "delta1_segments": map.contours[0].len(),
            "tau_segments": map.contours[1].len(),
            "delta_segments": map.contours[2].len(),
        },
        "files": {
            "svg": "strata_sphere.svg",
            "csv": "strata_sphere.csv",
        },
    });
    out.emit_json("strata_sphere.json", &payload)
}

/// SplitMix64; enough for jittering portrait seed angles reproducibly
/// without pulling in an RNG dependency.
fn splitmix(seed: u64) -> u64 {
    seed
}

fn next_unit(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}
