//! Trajectory integration under the guidance equation and Born-rule sampling.
//!
//! Random numbers come from ChaCha12 (`rand_chacha`), a portable counter-mode
//! stream cipher generator, so a seed reproduces the same samples everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{energy_split, velocity_all, EnergySplit, EPS_P};
use crate::scenarios::{Bounds, Scenario};
use crate::wavepacket::{ConfigPoint, EntangledState, MAX_DIM};

/// How a trajectory ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Termination {
    Completed,
    NodeDegenerate,
    LeftDomain,
}

impl Termination {
    pub fn code(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::NodeDegenerate => "node",
            Termination::LeftDomain => "left_domain",
        }
    }
}

/// One recorded step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: ConfigPoint,
    pub v: [f64; MAX_DIM],
    pub energy: Option<EnergySplit>,
}

/// A guided path through configuration space.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub termination: Termination,
    pub dt: f64,
    /// Sign changes of the atom z coordinate over every integration step.
    pub z_crossings: u32,
    /// Index of the scenario component that guided this trajectory.
    pub component: usize,
    /// Steps that were split because the velocity varied too much across them.
    pub refined_steps: u32,
    /// Branch with the largest amplitude at the starting point.
    pub initial_branch: usize,
}

impl Trajectory {
    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectories hold at least one sample")
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }

    /// Sample recorded closest to time `t`.
    pub fn at_time(&self, t: f64) -> &TrajectorySample {
        self.samples
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("non-empty")
    }
}

/// What to record while integrating.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryOptions {
    /// Record every `record_stride`-th step (the first and last are always kept).
    pub record_stride: usize,
    /// Record every step with time inside this window.
    pub dense_window: Option<(f64, f64)>,
    /// Extra times (snapped to the step grid) to record.
    pub snapshot_times: Vec<f64>,
    /// Attach an energy split to every recorded sample.
    pub audit_energy: bool,
    pub bounds: Option<Bounds>,
    /// Largest tolerated `dt · max|k_i - k_1|` over the RK4 stages. A step
    /// above it is halved, recursively, so close passes by nodes are resolved
    /// without shrinking the step everywhere. `None` keeps the fixed step.
    pub refine_tolerance: Option<f64>,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            record_stride: 1,
            dense_window: None,
            snapshot_times: Vec::new(),
            audit_energy: false,
            bounds: None,
            refine_tolerance: Some(DEFAULT_REFINE_TOLERANCE),
        }
    }
}

/// Default stage-spread tolerance, in units of length.
pub const DEFAULT_REFINE_TOLERANCE: f64 = 1e-3;
/// Deepest step halving: the finest substep is `dt / 2^MAX_REFINE_DEPTH`.
pub const MAX_REFINE_DEPTH: u32 = 24;

/// Number of uniform steps covering `[t_start, t_end]` and the step that lands
/// exactly on `t_end`. The step never exceeds the requested `dt`.
fn step_count(t_start: f64, t_end: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(t_end >= t_start) {
        return Err(Error::invalid(format!("t_end {t_end} precedes t_start {t_start}")));
    }
    let span = t_end - t_start;
    if span == 0.0 {
        return Ok((0, dt));
    }
    let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, span / n as f64))
}

fn record(
    state: &EntangledState,
    q: ConfigPoint,
    t: f64,
    v: [f64; MAX_DIM],
    audit: bool,
    out: &mut Vec<TrajectorySample>,
) {
    let energy = if audit { energy_split(state, &q, t).ok() } else { None };
    out.push(TrajectorySample { t, q, v, energy });
}

/// Classical RK4 on `dq/dt = v(q, t)` for every block at once.
///
/// Node hits and domain exits end the trajectory with a termination code.
pub fn integrate_trajectory(
    state: &EntangledState,
    q0: ConfigPoint,
    t_start: f64,
    t_end: f64,
    dt: f64,
    opts: &TrajectoryOptions,
) -> Result<Trajectory> {
    let (n, dt) = step_count(t_start, t_end, dt)?;
    state.check_layout(&q0)?;
    let stride = opts.record_stride.max(1);
    let mut snaps: Vec<usize> = opts
        .snapshot_times
        .iter()
        .map(|&ts| ((ts - t_start) / dt).round())
        .filter(|k| *k >= 0.0)
        .map(|k| k as usize)
        .collect();
    snaps.sort_unstable();
    let in_dense = |t: f64| opts.dense_window.is_some_and(|(a, b)| t >= a && t <= b);
    let mut traj = Trajectory {
        samples: Vec::with_capacity(n / stride + 2 + snaps.len()),
        termination: Termination::Completed,
        dt,
        z_crossings: 0,
        component: 0,
        refined_steps: 0,
        initial_branch: state.occupied_branch(&q0, t_start)?,
    };
    let mut q = q0;
    let mut v = match velocity_all(state, &q, t_start) {
        Ok(v) => v,
        Err(e) if e.is_degenerate() => {
            record(state, q, t_start, [f64::NAN; MAX_DIM], false, &mut traj.samples);
            traj.termination = Termination::NodeDegenerate;
            return Ok(traj);
        }
        Err(e) => return Err(e),
    };
    record(state, q, t_start, v, opts.audit_energy, &mut traj.samples);
    let mut next_snap = 0;
    for k in 1..=n {
        let t0 = t_start + (k - 1) as f64 * dt;
        let t = if k == n { t_end } else { t_start + k as f64 * dt };
        let stepped = advance(state, &q, &v, t0, dt, opts.refine_tolerance, 0, &mut traj);
        let (qn, vn) = match stepped {
            Ok(r) => r,
            Err(e) if e.is_degenerate() => {
                traj.termination = Termination::NodeDegenerate;
                break;
            }
            Err(e) => return Err(e),
        };
        q = qn;
        v = vn;
        if let Some(b) = &opts.bounds {
            if !b.contains(&q) {
                record(state, q, t, v, false, &mut traj.samples);
                traj.termination = Termination::LeftDomain;
                return Ok(traj);
            }
        }
        while next_snap < snaps.len() && snaps[next_snap] < k {
            next_snap += 1;
        }
        let is_snap = next_snap < snaps.len() && snaps[next_snap] == k;
        if k % stride == 0 || k == n || is_snap || in_dense(t) {
            record(state, q, t, v, opts.audit_energy, &mut traj.samples);
        }
    }
    if traj.termination != Termination::Completed {
        let t = traj.samples.last().map_or(t_start, |s| s.t);
        if traj.samples.last().map(|s| s.q) != Some(q) {
            record(state, q, t, v, false, &mut traj.samples);
        }
    }
    Ok(traj)
}

/// One step of length `dt`, halved recursively while the stage velocities
/// spread by more than `tol / dt`. Crossings are counted on the substeps.
#[allow(clippy::too_many_arguments)]
fn advance(
    state: &EntangledState,
    q: &ConfigPoint,
    v: &[f64; MAX_DIM],
    t: f64,
    dt: f64,
    tol: Option<f64>,
    depth: u32,
    traj: &mut Trajectory,
) -> Result<(ConfigPoint, [f64; MAX_DIM])> {
    let (qn, vn, spread) = rk4_step(state, q, v, t, dt)?;
    if let Some(tol) = tol {
        if spread * dt > tol && depth < MAX_REFINE_DEPTH {
            if depth == 0 {
                traj.refined_steps += 1;
            }
            let h = 0.5 * dt;
            let (qm, vm) = advance(state, q, v, t, h, Some(tol), depth + 1, traj)?;
            return advance(state, &qm, &vm, t + h, h, Some(tol), depth + 1, traj);
        }
    }
    if qn.z() * q.z() < 0.0 || (q.z() == 0.0 && qn.z() != 0.0) {
        traj.z_crossings += 1;
    }
    Ok((qn, vn))
}

/// Classical RK4 step. Also returns the largest deviation of any later stage
/// velocity from the first, a cheap gauge of how far the field varies.
#[inline]
fn rk4_step(
    state: &EntangledState,
    q: &ConfigPoint,
    k1: &[f64; MAX_DIM],
    t: f64,
    dt: f64,
) -> Result<(ConfigPoint, [f64; MAX_DIM], f64)> {
    let h2 = 0.5 * dt;
    let k2 = velocity_all(state, &q.axpy(h2, k1), t + h2)?;
    let k3 = velocity_all(state, &q.axpy(h2, &k2), t + h2)?;
    let k4 = velocity_all(state, &q.axpy(dt, &k3), t + dt)?;
    let mut incr = [0.0; MAX_DIM];
    let mut spread: f64 = 0.0;
    for i in 0..q.dim() {
        incr[i] = (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) / 6.0;
        for k in [k2[i], k3[i], k4[i]] {
            spread = spread.max((k - k1[i]).abs());
        }
    }
    let qn = q.axpy(dt, &incr);
    let vn = velocity_all(state, &qn, t + dt)?;
    Ok((qn, vn, spread))
}

/// Initial-condition sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    /// Exact mixture sampling; requires branches with disjoint support.
    BranchWeighted,
    /// Exact rejection sampling from the branch-mixture proposal. With N branches,
    /// `|Σ c_i b_i|² ≤ N Σ |c_i|² |b_i|²`, so the mixture density times
    /// `N Σ|c_i|²` bounds the target everywhere.
    Rejection,
}

/// Ensemble size, seed and sampler choice (`None` picks automatically).
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub seed: u64,
    pub sampler: Option<SamplerKind>,
}

impl EnsembleSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, sampler: None }
    }
}

/// Minimum acceptance rate before rejection sampling gives up.
pub const MIN_ACCEPTANCE: f64 = 1e-4;

fn pick_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn branch_draw<R: Rng>(state: &EntangledState, i: usize, t: f64, rng: &mut R) -> ConfigPoint {
    let b = &state.branches()[i];
    let atom = b.atom.sample(t, rng);
    let mut aux = [0.0; MAX_DIM - 2];
    for (k, f) in b.factors.iter().enumerate() {
        aux[k] = f.sample(t, rng);
    }
    ConfigPoint::new(atom, &aux[..b.factors.len()])
}

/// Unit-normalized density of branch `i` without its coefficient.
fn branch_density(state: &EntangledState, i: usize, q: &ConfigPoint, t: f64) -> Result<f64> {
    let b = &state.branches()[i];
    let a = b.atom.evaluate(q.atom(), t)?.norm_sqr() / b.atom.amplitude.norm_sqr();
    let f: f64 = b
        .factors
        .iter()
        .zip(q.aux())
        .map(|(f, &x)| f.evaluate(x, t).norm_sqr())
        .product();
    Ok(a * f)
}

fn draw_one<R: Rng>(state: &EntangledState, kind: SamplerKind, t: f64, rng: &mut R, stats: &mut (u64, u64)) -> Result<ConfigPoint> {
    let weights: Vec<f64> = state.branches().iter().map(|b| b.coefficient.norm_sqr()).collect();
    match kind {
        SamplerKind::BranchWeighted => {
            let i = pick_weighted(&weights, rng);
            stats.0 += 1;
            stats.1 += 1;
            Ok(branch_draw(state, i, t, rng))
        }
        SamplerKind::Rejection => {
            let total: f64 = weights.iter().sum();
            let bound = state.branches().len() as f64 * total;
            loop {
                let i = pick_weighted(&weights, rng);
                let q = branch_draw(state, i, t, rng);
                let mix: f64 = (0..weights.len())
                    .map(|j| Ok(weights[j] * branch_density(state, j, &q, t)?))
                    .sum::<Result<f64>>()?;
                let target = state.evaluate(&q, t)?.norm_sqr();
                stats.0 += 1;
                if rng.random::<f64>() * bound * mix < target {
                    stats.1 += 1;
                    return Ok(q);
                }
                if stats.0 >= 10_000 && (stats.1 as f64) < MIN_ACCEPTANCE * stats.0 as f64 {
                    return Err(Error::SamplerFailure {
                        efficiency: stats.1 as f64 / stats.0 as f64,
                        proposals: stats.0,
                        accepted: stats.1,
                    });
                }
            }
        }
    }
}

fn resolve_sampler(state: &EntangledState, requested: Option<SamplerKind>, t: f64) -> Result<SamplerKind> {
    let disjoint = state.branches_disjoint(t);
    match requested {
        Some(SamplerKind::BranchWeighted) if !disjoint => Err(Error::invalid(
            "branch-weighted sampling needs disjoint branches at the sampling time",
        )),
        Some(k) => Ok(k),
        None if disjoint => Ok(SamplerKind::BranchWeighted),
        None => Ok(SamplerKind::Rejection),
    }
}

/// Draw `spec.n` points distributed as |Ψ(·, t)|².
pub fn sample_ensemble(state: &EntangledState, spec: &EnsembleSpec, t: f64) -> Result<Vec<ConfigPoint>> {
    let kind = resolve_sampler(state, spec.sampler, t)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut stats = (0, 0);
    (0..spec.n).map(|_| draw_one(state, kind, t, &mut rng, &mut stats)).collect()
}

/// Born sampling across a scenario: component by weight, then within it.
/// Returns `(component index, point)` pairs.
pub fn sample_scenario(scenario: &Scenario, spec: &EnsembleSpec, t: f64) -> Result<Vec<(usize, ConfigPoint)>> {
    let kinds: Vec<SamplerKind> = scenario
        .components
        .iter()
        .map(|c| resolve_sampler(&c.state, spec.sampler, t))
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = scenario.components.iter().map(|c| c.weight).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut stats = (0, 0);
    (0..spec.n)
        .map(|_| {
            let k = if weights.len() == 1 { 0 } else { pick_weighted(&weights, &mut rng) };
            let q = draw_one(&scenario.components[k].state, kinds[k], t, &mut rng, &mut stats)?;
            Ok((k, q))
        })
        .collect()
}

/// Evenly spaced starting points across one branch at time `t`, for figure-style
/// runs: `count` atom positions on the line through the packet centre normal to
/// its velocity, spanning ±`span` widths, each paired with `aux`.
pub fn fan_points(
    state: &EntangledState,
    branch: usize,
    t: f64,
    count: usize,
    span: f64,
    aux: &[f64],
) -> Result<Vec<ConfigPoint>> {
    let b = state
        .branches()
        .get(branch)
        .ok_or_else(|| Error::invalid(format!("state has no branch {branch}")))?;
    if aux.len() != state.aux_count() {
        return Err(Error::invalid("fan auxiliary values do not match the layout"));
    }
    let c = b.atom.center(t);
    let w = b.atom.width(t);
    let speed = b.atom.velocity[0].hypot(b.atom.velocity[1]);
    let normal = if speed > 0.0 {
        [-b.atom.velocity[1] / speed, b.atom.velocity[0] / speed]
    } else {
        [0.0, 1.0]
    };
    Ok((0..count)
        .map(|i| {
            let s = if count == 1 {
                0.0
            } else {
                -span + 2.0 * span * i as f64 / (count - 1) as f64
            };
            ConfigPoint::new([c[0] + s * w * normal[0], c[1] + s * w * normal[1]], aux)
        })
        .collect())
}

/// Integrate every starting point in parallel. Output order follows input order.
pub fn integrate_all(
    state: &EntangledState,
    starts: &[ConfigPoint],
    t_start: f64,
    t_end: f64,
    dt: f64,
    opts: &TrajectoryOptions,
) -> Result<Vec<Trajectory>> {
    starts
        .par_iter()
        .map(|q| integrate_trajectory(state, *q, t_start, t_end, dt, opts))
        .collect()
}

/// Born-sample a pure state and integrate the ensemble.
pub fn run_ensemble(
    state: &EntangledState,
    spec: &EnsembleSpec,
    t_start: f64,
    t_end: f64,
    dt: f64,
    opts: &TrajectoryOptions,
) -> Result<Vec<Trajectory>> {
    step_count(t_start, t_end, dt)?;
    let starts = sample_ensemble(state, spec, t_start)?;
    integrate_all(state, &starts, t_start, t_end, dt, opts)
}

/// Born-sample a scenario (pure or mixed) and integrate each trajectory under
/// its own component.
pub fn run_scenario_ensemble(
    scenario: &Scenario,
    spec: &EnsembleSpec,
    t_start: f64,
    t_end: f64,
    dt: f64,
    opts: &TrajectoryOptions,
) -> Result<Vec<Trajectory>> {
    step_count(t_start, t_end, dt)?;
    let starts = sample_scenario(scenario, spec, t_start)?;
    starts
        .par_iter()
        .map(|(k, q)| {
            let mut tr = integrate_trajectory(&scenario.components[*k].state, *q, t_start, t_end, dt, opts)?;
            tr.component = *k;
            Ok(tr)
        })
        .collect()
}

/// Run `f` on a dedicated pool of `threads` workers (0 means the rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// True when the density at `q` supports a velocity.
pub fn is_regular(state: &EntangledState, q: &ConfigPoint, t: f64) -> bool {
    state.evaluate(q, t).map(|a| a.norm_sqr() >= EPS_P).unwrap_or(false)
}
