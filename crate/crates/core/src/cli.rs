//! Command-line front end: `run`, `fields`, `sweep` and `version`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric degeneracy above
//! the exclusion budget, 4 I/O error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analysis::*;
use crate::config::RunConfig;
use crate::dynamics::{run_scenario_ensemble, with_threads, EnsembleSpec, Trajectory, TrajectoryOptions};
use crate::error::{Error, Result};
use crate::fields::sample_fields;
use crate::io::{self, GridRow, SweepRow};
use crate::scenarios::{build, Scenario};
use crate::svg::Figure;
use crate::wavepacket::{ConfigPoint, EntangledState};

/// Largest tolerated fraction of trajectories lost to nodes or domain exits.
pub const EXCLUSION_BUDGET: f64 = 1e-3;
/// Step of the continuity residual written to field grids.
pub const RESIDUAL_STEP: f64 = 1e-3;
/// Offset between the main ensemble seed and the detector-readout seed.
const READOUT_SEED_OFFSET: u64 = 0x5eed;

#[derive(Parser, Debug)]
#[command(name = "bohmflow", about = "Pilot-wave trajectories in a two-arm atom interferometer")]
pub struct Cli {
    /// Worker threads (falls back to BOHMFLOW_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate an ensemble and write trajectories, fields, report and figures.
    Run(Common),
    /// Evaluate the local fields on a grid and draw heatmaps.
    Fields(FieldsArgs),
    /// Vary one scalar key and tabulate P(D1), plane flux and visibility.
    Sweep(SweepArgs),
    /// Print the version.
    Version,
}

#[derive(Args, Debug)]
pub struct Common {
    /// Configuration file (same as --config).
    #[arg(value_name = "CONFIG")]
    pub config_path: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding output.dir.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed, overriding ensemble.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FieldsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, num_args = 2, value_names = ["NX", "NZ"])]
    pub grid: Option<Vec<usize>>,
    #[arg(long, allow_negative_numbers = true)]
    pub time: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dotted key to vary, e.g. device.alpha_re.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, required = true)]
    pub values: Vec<f64>,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::InvalidParameter(_) | Error::UnsupportedLayout(_) | Error::OutOfDomain { .. } => 2,
        Error::Io(_) => 4,
        Error::NodeDegeneracy { .. }
        | Error::SamplerFailure { .. }
        | Error::Refinement { .. }
        | Error::InsufficientStatistics(_) => 3,
    }
}

fn threads(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("BOHMFLOW_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::config("BOHMFLOW_THREADS", format!("not a thread count: `{v}`"))),
        Err(_) => Ok(0),
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let path = match (&self.config, &self.config_path) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::config("--config", "given twice with different paths"));
            }
            (Some(p), _) | (None, Some(p)) => p,
            (None, None) => return Err(Error::config("--config", "no configuration file given")),
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        if let Some(dir) = &self.out {
            cfg.output.dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Parse arguments, run, print and return the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    if let Command::Version = cli.command {
        println!("bohmflow {}", env!("CARGO_PKG_VERSION"));
        return Ok(0);
    }
    let n_threads = threads(cli.threads)?;
    match &cli.command {
        Command::Run(c) => {
            let cfg = c.resolve()?;
            let out = with_threads(n_threads, || cmd_run(&cfg))??;
            print!("{}", io::summary(&out.report));
            println!("wrote {} files to {}", out.files.len(), cfg.output.dir.display());
            Ok(if out.report.exclusion_rate >= EXCLUSION_BUDGET {
                eprintln!(
                    "error: exclusion rate {:.2e} exceeds the budget {EXCLUSION_BUDGET:e}",
                    out.report.exclusion_rate
                );
                3
            } else {
                0
            })
        }
        Command::Fields(f) => {
            let mut cfg = f.common.resolve()?;
            if let Some(g) = &f.grid {
                cfg.output.grid_nx = g[0];
                cfg.output.grid_nz = g[1];
                if g[0] < 2 || g[1] < 2 {
                    return Err(Error::config("--grid", "need at least 2 points per axis"));
                }
            }
            if let Some(t) = f.time {
                cfg.output.field_time = Some(t);
            }
            let files = with_threads(n_threads, || cmd_fields(&cfg))??;
            println!("wrote {} files to {}", files.len(), cfg.output.dir.display());
            Ok(0)
        }
        Command::Sweep(s) => {
            let cfg = s.common.resolve()?;
            let (path, rows) = with_threads(n_threads, || cmd_sweep(&cfg, &s.param, &s.values))??;
            for r in &rows {
                println!(
                    "{} = {:<12} P(D1) = {:.6}  flux = {:+.6e}  V = {:.6}",
                    s.param, r.value, r.p_d1, r.plane_flux, r.visibility
                );
            }
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Version => unreachable!(),
    }
}

/// What `run` produced.
pub struct RunOutput {
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

fn prefix(cfg: &RunConfig) -> String {
    format!("{}_s{}", cfg.kind.id(), cfg.seed)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes)?;
    files.push(path);
    Ok(())
}

/// Times at which the report samples the plane flux: evenly across region I.
fn flux_times(s: &Scenario) -> Vec<f64> {
    let w = s.window;
    (0..7).map(|k| w.t_in + (w.t_out - w.t_in) * k as f64 / 6.0).collect()
}

/// Integrate the ensemble, reduce it to a report and write every artifact.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput> {
    let scenario = build(&cfg.kind, &cfg.geometry)?;
    let g = &cfg.geometry;
    let w = scenario.window;
    let dt = cfg.dt.unwrap_or_else(|| g.default_dt());
    let t_end = scenario.t_readout();
    let opts = TrajectoryOptions {
        record_stride: cfg.output.record_stride,
        snapshot_times: vec![w.t_in, w.t_cross, w.t_out],
        audit_energy: true,
        bounds: Some(scenario.bounds(t_end)),
        refine_tolerance: (cfg.refine_tolerance > 0.0).then_some(cfg.refine_tolerance),
        ..Default::default()
    };
    let spec = EnsembleSpec::new(cfg.n, cfg.seed);
    let trs = run_scenario_ensemble(&scenario, &spec, g.t_launch, t_end, dt, &opts)?;

    let (p1, p2) = scenario.detector_probabilities();
    let counts = empirical_detector_counts(
        &scenario,
        &EnsembleSpec::new(cfg.n, cfg.seed.wrapping_add(READOUT_SEED_OFFSET)),
        dt,
    )?;
    let (f1, f2, fx) = counts.fractions();
    let total = counts.total();

    let x_slices = {
        let arm = g.arm1()?;
        let (c, s) = (arm.center(w.t_cross)[0], arm.width(w.t_cross));
        [-1.0, -0.5, 0.0, 0.5, 1.0].map(|k| c + k * s)
    };
    let fringe_visibility = x_slices
        .iter()
        .map(|&x| fringe_visibility_analytic(&scenario, x, w.t_cross).map(|v| (x, v)))
        .collect::<Result<Vec<_>>>()?;

    let completed: Vec<&Trajectory> = trs.iter().filter(|t| t.completed()).collect();
    let at = |t: f64| -> Vec<[f64; 2]> { completed.iter().map(|tr| tr.at_time(t).q.atom()).collect() };
    let crossing_points = at(w.t_cross);
    let zs: Vec<f64> = crossing_points.iter().map(|p| p[1]).collect();
    let k = 2.0 * g.mass * g.vz();
    let width = g.arm1()?.width(w.t_cross);
    let contrast = fringe_contrast_fourier(&zs, k, 0.0, 1.5 * width, incoherent_envelope(&scenario, w.t_cross)).ok();
    let bins = BinBox::covering(&scenario, w.t_out, 40, 40);
    let tv = equivariance_distance(&at(w.t_out), &scenario, w.t_out, &bins).ok();

    let crossing = crossing_count(&trs);
    let report = RunReport {
        scenario_id: scenario.id().to_string(),
        seed: cfg.seed,
        n: cfg.n,
        p_d1_analytic: p1,
        p_d2_analytic: p2,
        p_d1_empirical: f1,
        p_d2_empirical: f2,
        excluded_detector_fraction: fx,
        p_d1_ci: binomial_ci(counts.d1, total),
        p_d2_ci: binomial_ci(counts.d2, total),
        plane_flux: plane_flux_series(&scenario, &flux_times(&scenario))?,
        crossing,
        fringe_visibility,
        fringe_contrast_empirical: contrast,
        equivariance_tv: tv,
        exclusion_rate: crossing.excluded as f64 / trs.len().max(1) as f64,
        reflected_fraction: reflected_fraction(&trs, &scenario),
        energy: energy_audit_summary(&trs, &scenario),
        warnings: scenario.warnings.clone(),
        window: Some(w),
    };

    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let p = prefix(cfg);
    let mut files = Vec::new();
    let kept = &trs[..trs.len().min(cfg.output.max_trajectories)];
    let mut buf = Vec::new();
    io::write_trajectories(&mut buf, kept, scenario.aux_names())?;
    write_file(dir, &format!("{p}_trajectories.csv"), &buf, &mut files)?;
    buf.clear();
    io::write_flux(&mut buf, &report.plane_flux)?;
    write_file(dir, &format!("{p}_flux.csv"), &buf, &mut files)?;
    buf.clear();
    io::write_energy(&mut buf, &report.energy)?;
    write_file(dir, &format!("{p}_energy.csv"), &buf, &mut files)?;
    write_file(
        dir,
        &format!("{p}_report.toml"),
        io::render_report(&report, cfg).as_bytes(),
        &mut files,
    )?;
    files.extend(write_fields(cfg, &scenario)?);
    if cfg.output.figures {
        let svg = trajectory_figure(&scenario, kept).render();
        write_file(dir, &format!("{p}_trajectories.svg"), svg.as_bytes(), &mut files)?;
    }
    Ok(RunOutput { report, files })
}

/// Evaluate the fields on the configured grid and write CSV plus heatmaps.
pub fn cmd_fields(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scenario = build(&cfg.kind, &cfg.geometry)?;
    fs::create_dir_all(&cfg.output.dir)?;
    write_fields(cfg, &scenario)
}

/// The atom-plane rectangle covered by every branch at `t`, ±3 widths.
fn field_extent(scenario: &Scenario, t: f64) -> ((f64, f64), (f64, f64)) {
    let (mut x, mut z) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for comp in &scenario.components {
        for b in comp.state.branches() {
            let c = b.atom.center(t);
            let s = 3.0 * b.atom.width(t);
            x = (x.0.min(c[0] - s), x.1.max(c[0] + s));
            z = (z.0.min(c[1] - s), z.1.max(c[1] + s));
        }
    }
    (x, z)
}

/// Grid of local fields for one pure state on the atom plane at fixed `aux`.
pub fn field_grid(
    state: &EntangledState,
    t: f64,
    x: (f64, f64),
    z: (f64, f64),
    nx: usize,
    nz: usize,
    aux: &[f64],
) -> Result<Vec<GridRow>> {
    let points: Vec<(f64, f64)> = (0..nz)
        .flat_map(|iz| {
            (0..nx).map(move |ix| {
                (
                    x.0 + (x.1 - x.0) * ix as f64 / (nx - 1) as f64,
                    z.0 + (z.1 - z.0) * iz as f64 / (nz - 1) as f64,
                )
            })
        })
        .collect();
    points
        .par_iter()
        .map(|&(px, pz)| {
            let q = ConfigPoint::new([px, pz], aux);
            let f = sample_fields(state, &q, t, RESIDUAL_STEP)?;
            Ok(GridRow {
                x: px,
                z: pz,
                aux: aux.to_vec(),
                t,
                p: f.p,
                q: f.q_total(),
                j: f.j,
                residual: f.continuity_residual,
            })
        })
        .collect()
}

fn write_fields(cfg: &RunConfig, scenario: &Scenario) -> Result<Vec<PathBuf>> {
    let t = cfg.output.field_time.unwrap_or(scenario.window.t_cross);
    let (nx, nz) = (cfg.output.grid_nx, cfg.output.grid_nz);
    let (xr, zr) = field_extent(scenario, t);
    let dir = &cfg.output.dir;
    let p = prefix(cfg);
    let mut files = Vec::new();
    let mixed = scenario.is_mixture();
    let mut streams = Figure::new(xr, zr, &format!("current streamlines, t = {t:.3}"), "x", "z");
    let palette = ["#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad"];
    for (k, comp) in scenario.components.iter().enumerate() {
        let aux: Vec<f64> = match cfg.output.slice_aux {
            Some(a) => vec![a; comp.state.aux_count()],
            None => comp.state.branches()[0].factors.iter().map(|f| f.mean_position(t)).collect(),
        };
        let rows = field_grid(&comp.state, t, xr, zr, nx, nz, &aux)?;
        let tag = if mixed { format!("{p}_c{k}") } else { p.clone() };
        let mut buf = Vec::new();
        io::write_field_grid(&mut buf, &rows, comp.state.aux_names())?;
        write_file(dir, &format!("{tag}_fields.csv"), &buf, &mut files)?;
        if cfg.output.figures {
            let pv: Vec<f64> = rows.iter().map(|r| r.p).collect();
            let qv: Vec<f64> = rows.iter().map(|r| r.q.unwrap_or(f64::NAN)).collect();
            let mut fp = Figure::new(xr, zr, &format!("density P, t = {t:.3}"), "x", "z");
            fp.heatmap(nx, nz, &pv);
            write_file(dir, &format!("{tag}_P.svg"), fp.render().as_bytes(), &mut files)?;
            let mut fq = Figure::new(xr, zr, &format!("quantum potential Q, t = {t:.3}"), "x", "z");
            fq.heatmap(nx, nz, &clip_quantiles(&qv, 0.02));
            write_file(dir, &format!("{tag}_Q.svg"), fq.render().as_bytes(), &mut files)?;
            let jx: Vec<f64> = rows.iter().map(|r| r.j[0]).collect();
            let jz: Vec<f64> = rows.iter().map(|r| r.j[1]).collect();
            streams.streamlines(nx, nz, &jx, &jz, palette[k % palette.len()]);
        }
    }
    if cfg.output.figures {
        write_file(dir, &format!("{p}_j.svg"), streams.render().as_bytes(), &mut files)?;
    }
    Ok(files)
}

/// Clamp values to their `[q, 1 - q]` quantiles so a few near-node spikes of
/// Q do not wash out the colour scale.
fn clip_quantiles(v: &[f64], q: f64) -> Vec<f64> {
    let mut finite: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return v.to_vec();
    }
    finite.sort_by(f64::total_cmp);
    let at = |f: f64| finite[((finite.len() - 1) as f64 * f).round() as usize];
    let (lo, hi) = (at(q), at(1.0 - q));
    v.iter().map(|x| if x.is_finite() { x.clamp(lo, hi) } else { *x }).collect()
}

fn trajectory_figure(scenario: &Scenario, trs: &[Trajectory]) -> Figure {
    let (mut x, mut z) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for tr in trs {
        for s in &tr.samples {
            x = (x.0.min(s.q.x()), x.1.max(s.q.x()));
            z = (z.0.min(s.q.z()), z.1.max(s.q.z()));
        }
    }
    let mut f = Figure::new(x, z, &format!("{} trajectories", scenario.id()), "x", "z");
    for tr in trs {
        let pts: Vec<(f64, f64)> = tr.samples.iter().map(|s| (s.q.x(), s.q.z())).collect();
        let colour = if tr.initial_branch == 0 { "#1f4e9c" } else { "#c0392b" };
        f.polyline(&pts, colour, 0.6);
    }
    f
}

/// Tabulate P(D1), the plane flux and the visibility while one key varies.
///
/// The flux is taken halfway between the start of region I and the crossing,
/// since for any device overlap it vanishes exactly at the crossing itself.
pub fn cmd_sweep(cfg: &RunConfig, param: &str, values: &[f64]) -> Result<(PathBuf, Vec<SweepRow>)> {
    let rows = values
        .iter()
        .map(|&v| {
            let c = cfg.with_value(param, v)?;
            let s = build(&c.kind, &c.geometry)?;
            let w = s.window;
            let t_flux = 0.5 * (w.t_in + w.t_cross);
            let x = c.geometry.arm1()?.center(w.t_cross)[0];
            Ok(SweepRow {
                value: v,
                p_d1: s.detector_probabilities().0,
                plane_flux: plane_flux(&s, t_flux, &PlaneGrid::covering(&s, t_flux))?,
                visibility: fringe_visibility_analytic(&s, x, w.t_cross)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&cfg.output.dir)?;
    let path = cfg.output.dir.join(format!("{}_sweep_{}.csv", prefix(cfg), param.replace('.', "_")));
    let mut buf = Vec::new();
    io::write_sweep(&mut buf, param, &rows)?;
    fs::write(&path, buf)?;
    Ok((path, rows))
}
