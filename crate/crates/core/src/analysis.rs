//! Reductions of states and trajectory ensembles to interferometer diagnostics.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

use crate::dynamics::{run_scenario_ensemble, EnsembleSpec, Trajectory, TrajectoryOptions};
use crate::error::{Error, Result};
use crate::fields::reduced_current_atom_with;
use crate::quad::simpson;
use crate::scenarios::{Component, Detector, RegionWindow, Scenario};
use crate::wavepacket::EntangledState;

/// Quadrature grid along x on the plane z = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub intervals: usize,
}

impl PlaneGrid {
    /// Grid covering every branch of the scenario at time `t` with ±12 widths.
    pub fn covering(scenario: &Scenario, t: f64) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for comp in &scenario.components {
            for b in comp.state.branches() {
                let c = b.atom.center(t)[0];
                let w = b.atom.width(t);
                lo = lo.min(c - 12.0 * w);
                hi = hi.max(c + 12.0 * w);
            }
        }
        Self {
            x_min: lo,
            x_max: hi,
            intervals: 2000,
        }
    }
}

/// Relative tolerance on the quadrature error estimate for plane fluxes.
pub const FLUX_TOLERANCE: f64 = 1e-6;
/// Absolute floor on that tolerance, so integrands that vanish up to rounding
/// do not demand refinement.
pub const FLUX_ABS_FLOOR: f64 = 1e-12;

fn state_flux(state: &EntangledState, t: f64, grid: &PlaneGrid) -> Result<(f64, f64)> {
    if state.aux_count() > 1 {
        return Err(Error::UnsupportedLayout(format!(
            "plane flux marginalizes at most one auxiliary coordinate, state has {}",
            state.aux_count()
        )));
    }
    let s = state.aux_overlaps(t);
    let jz = |x: f64| reduced_current_atom_with(state, &s, [x, 0.0], t).map(|j| j[1]);
    let edge = jz(grid.x_min)?.abs().max(jz(grid.x_max)?.abs());
    let mut err = None;
    let mut eval = |x: f64| match jz(x) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let coarse = simpson(&mut eval, grid.x_min, grid.x_max, grid.intervals);
    let fine = simpson(&mut eval, grid.x_min, grid.x_max, 2 * grid.intervals);
    let scale = simpson(|x| eval(x).abs(), grid.x_min, grid.x_max, 2 * grid.intervals);
    if let Some(e) = err {
        return Err(e);
    }
    let estimate = (fine - coarse).abs() / 15.0;
    let tolerance = FLUX_TOLERANCE * scale + FLUX_ABS_FLOOR;
    let peak_scale = scale / (grid.x_max - grid.x_min);
    if estimate > tolerance || edge > 1e-9 * peak_scale + FLUX_ABS_FLOOR {
        return Err(Error::Refinement {
            estimate: estimate.max(edge),
            tolerance,
        });
    }
    Ok((fine, scale))
}

/// Net probability flux `∫ j_z(x, z=0, t) dx` upward through the plane z = 0.
/// Auxiliary coordinates are integrated out through their overlaps.
pub fn plane_flux_state(state: &EntangledState, t: f64, grid: &PlaneGrid) -> Result<f64> {
    Ok(state_flux(state, t, grid)?.0)
}

/// Per-component fluxes of a scenario, unweighted.
pub fn component_fluxes(scenario: &Scenario, t: f64, grid: &PlaneGrid) -> Result<Vec<f64>> {
    scenario
        .components
        .iter()
        .map(|c| plane_flux_state(&c.state, t, grid))
        .collect()
}

/// Weighted net flux of a scenario through z = 0.
pub fn plane_flux(scenario: &Scenario, t: f64, grid: &PlaneGrid) -> Result<f64> {
    Ok(component_fluxes(scenario, t, grid)?
        .iter()
        .zip(&scenario.components)
        .map(|(f, c)| f * c.weight)
        .sum())
}

/// Net flux at each of `times`, each on its own covering grid.
pub fn plane_flux_series(scenario: &Scenario, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .iter()
        .map(|&t| Ok((t, plane_flux(scenario, t, &PlaneGrid::covering(scenario, t))?)))
        .collect()
}

/// Crossing statistics of the plane z = 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CrossingSummary {
    /// Completed trajectories with at least one crossing.
    pub crossing_trajectories: usize,
    pub total_crossings: usize,
    pub completed: usize,
    pub excluded: usize,
}

pub fn crossing_count(trajectories: &[Trajectory]) -> CrossingSummary {
    let mut s = CrossingSummary::default();
    for tr in trajectories {
        if !tr.completed() {
            s.excluded += 1;
            continue;
        }
        s.completed += 1;
        if tr.z_crossings > 0 {
            s.crossing_trajectories += 1;
            s.total_crossings += tr.z_crossings as usize;
        }
    }
    s
}

/// Detector label from final lobe membership. `None` for excluded trajectories.
pub fn classify_detector(trajectory: &Trajectory, scenario: &Scenario) -> Option<Detector> {
    trajectory
        .completed()
        .then(|| scenario.classify(trajectory.last().q.z()))
}

/// `(max - min)/(max + min)` of a density slice.
pub fn fringe_visibility(slice: &[f64]) -> Result<f64> {
    if slice.is_empty() {
        return Err(Error::InsufficientStatistics("empty density slice".into()));
    }
    let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = slice.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max + min > 0.0) {
        return Err(Error::InsufficientStatistics("density slice is zero".into()));
    }
    Ok((max - min) / (max + min))
}

/// Atom marginal density of a (possibly mixed) scenario.
pub fn marginal_density(scenario: &Scenario, r_a: [f64; 2], t: f64) -> Result<f64> {
    let mut acc = 0.0;
    for c in &scenario.components {
        acc += c.weight * c.state.marginal_density(r_a, t)?;
    }
    Ok(acc)
}

/// Precomputed overlaps for repeated marginal evaluations.
pub struct Marginal<'a> {
    parts: Vec<(f64, &'a EntangledState, Vec<Vec<C64>>)>,
    t: f64,
}

impl<'a> Marginal<'a> {
    pub fn new(scenario: &'a Scenario, t: f64) -> Self {
        Self::from_components(&scenario.components, t)
    }

    pub fn from_components(components: &'a [Component], t: f64) -> Self {
        Self {
            parts: components
                .iter()
                .map(|c| (c.weight, &c.state, c.state.aux_overlaps(t)))
                .collect(),
            t,
        }
    }

    pub fn density(&self, r_a: [f64; 2]) -> Result<f64> {
        let mut acc = 0.0;
        for (w, s, ov) in &self.parts {
            acc += w * s.marginal_density_with(ov, r_a, self.t)?;
        }
        Ok(acc)
    }
}

/// Visibility of the analytic marginal along z at fixed `x`, over the central
/// three fringe periods around the axis.
pub fn fringe_visibility_analytic(scenario: &Scenario, x: f64, t: f64) -> Result<f64> {
    let period = scenario.geometry.fringe_period();
    let m = Marginal::new(scenario, t);
    let n = 601;
    let slice: Vec<f64> = (0..n)
        .map(|i| {
            let z = -1.5 * period + 3.0 * period * i as f64 / (n - 1) as f64;
            m.density([x, z])
        })
        .collect::<Result<_>>()?;
    fringe_visibility(&slice)
}

/// Visibility of a binned sample over the central three periods around `z_center`
/// (eight bins per period).
pub fn fringe_visibility_binned(zs: &[f64], z_center: f64, period: f64) -> Result<f64> {
    let bins = 24;
    let lo = z_center - 1.5 * period;
    let w = 3.0 * period / bins as f64;
    let mut counts = vec![0usize; bins];
    for &z in zs {
        let k = ((z - lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1;
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InsufficientStatistics("empty bin in fringe window".into()));
    }
    fringe_visibility(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
}

/// Fringe contrast of a sample at wavenumber `k`, with the smooth envelope
/// divided out: `2|Σ e^{ikz}/E(z)| / Σ 1/E(z)` over points with
/// `|z - z_center| ≤ half_width`. Rounding the window to whole periods keeps
/// the estimator unbiased for a pure cosine modulation.
pub fn fringe_contrast_fourier<E: Fn(f64) -> f64>(
    zs: &[f64],
    k: f64,
    z_center: f64,
    half_width: f64,
    envelope: E,
) -> Result<f64> {
    let period = 2.0 * std::f64::consts::PI / k;
    let hw = (half_width / period).floor().max(1.0) * period;
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    let mut used = 0usize;
    for &z in zs {
        if (z - z_center).abs() <= hw {
            let e = envelope(z);
            if e > 0.0 {
                num += C64::from_polar(1.0 / e, k * z);
                den += 1.0 / e;
                used += 1;
            }
        }
    }
    if used < 100 {
        return Err(Error::InsufficientStatistics(format!("{used} points in the fringe window")));
    }
    Ok((2.0 * num.norm() / den).min(1.0))
}

/// z-density of the scenario with every cross term dropped: the envelope
/// the fringes ride on, for [`fringe_contrast_fourier`].
pub fn incoherent_envelope(scenario: &Scenario, t: f64) -> impl Fn(f64) -> f64 {
    let parts: Vec<(f64, f64, f64)> = scenario
        .components
        .iter()
        .flat_map(|c| {
            c.state
                .branches()
                .iter()
                .map(move |b| (c.weight * b.coefficient.norm_sqr(), b.atom.center(t)[1], b.atom.width(t)))
        })
        .collect();
    move |z| {
        parts
            .iter()
            .map(|(w, c, s)| w * (-(z - c).powi(2) / (2.0 * s * s)).exp() / s)
            .sum()
    }
}

/// Absolute acceleration below which sign changes are treated as noise.
pub const WOBBLE_ACCEL_TOL: f64 = 1e-6;

/// Number of sign changes of dv_z/dt while inside region I.
pub fn wobble_signature(trajectory: &Trajectory, window: &RegionWindow) -> usize {
    let pts: Vec<_> = trajectory
        .samples
        .iter()
        .filter(|s| window.contains(s.t) && s.v[1].is_finite())
        .collect();
    let mut count = 0;
    let mut last_sign = 0i8;
    for w in pts.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt <= 0.0 {
            continue;
        }
        let a = (w[1].v[1] - w[0].v[1]) / dt;
        if a.abs() < WOBBLE_ACCEL_TOL {
            continue;
        }
        let s = if a > 0.0 { 1 } else { -1 };
        if last_sign != 0 && s != last_sign {
            count += 1;
        }
        last_sign = s;
    }
    count
}

/// Axis-aligned binning box in the atom plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinBox {
    pub x: (f64, f64),
    pub z: (f64, f64),
    pub nx: usize,
    pub nz: usize,
}

impl BinBox {
    /// Box spanning ±4 widths around every branch centre at `t`.
    pub fn covering(scenario: &Scenario, t: f64, nx: usize, nz: usize) -> Self {
        let mut x = (f64::INFINITY, f64::NEG_INFINITY);
        let mut z = (f64::INFINITY, f64::NEG_INFINITY);
        for comp in &scenario.components {
            for b in comp.state.branches() {
                let c = b.atom.center(t);
                let w = b.atom.width(t);
                x = (x.0.min(c[0] - 4.0 * w), x.1.max(c[0] + 4.0 * w));
                z = (z.0.min(c[1] - 4.0 * w), z.1.max(c[1] + 4.0 * w));
            }
        }
        Self { x, z, nx, nz }
    }
}

/// Analytic probability mass of every bin (row-major over z then x).
pub fn analytic_bin_masses(scenario: &Scenario, t: f64, bins: &BinBox) -> Result<Vec<f64>> {
    let m = Marginal::new(scenario, t);
    let wx = (bins.x.1 - bins.x.0) / bins.nx as f64;
    let wz = (bins.z.1 - bins.z.0) / bins.nz as f64;
    let period = scenario.geometry.fringe_period();
    let sub = ((wz.max(wx) / (period / 8.0)).ceil() as usize).clamp(4, 64);
    let mut out = Vec::with_capacity(bins.nx * bins.nz);
    for iz in 0..bins.nz {
        for ix in 0..bins.nx {
            let x0 = bins.x.0 + ix as f64 * wx;
            let z0 = bins.z.0 + iz as f64 * wz;
            let mut err = None;
            let mass = simpson(
                |x| {
                    simpson(
                        |z| {
                            m.density([x, z]).unwrap_or_else(|e| {
                                err.get_or_insert(e);
                                0.0
                            })
                        },
                        z0,
                        z0 + wz,
                        sub,
                    )
                },
                x0,
                x0 + wx,
                sub,
            );
            if let Some(e) = err {
                return Err(e);
            }
            out.push(mass);
        }
    }
    Ok(out)
}

/// Total-variation distance between binned atom positions and the analytic
/// marginal at `t`. Mass outside the box counts as one extra bin.
pub fn equivariance_distance(points: &[[f64; 2]], scenario: &Scenario, t: f64, bins: &BinBox) -> Result<f64> {
    if points.len() < 1000 {
        return Err(Error::InsufficientStatistics(format!(
            "equivariance needs at least 1000 points, got {}",
            points.len()
        )));
    }
    let analytic = analytic_bin_masses(scenario, t, bins)?;
    let n = points.len() as f64;
    let mut counts = vec![0usize; analytic.len()];
    let mut outside = 0usize;
    let wx = (bins.x.1 - bins.x.0) / bins.nx as f64;
    let wz = (bins.z.1 - bins.z.0) / bins.nz as f64;
    for p in points {
        let ix = ((p[0] - bins.x.0) / wx).floor();
        let iz = ((p[1] - bins.z.0) / wz).floor();
        if ix >= 0.0 && iz >= 0.0 && (ix as usize) < bins.nx && (iz as usize) < bins.nz {
            counts[iz as usize * bins.nx + ix as usize] += 1;
        } else {
            outside += 1;
        }
    }
    let inside_mass: f64 = analytic.iter().sum();
    let mut tv = ((outside as f64 / n) - (1.0 - inside_mass).max(0.0)).abs();
    for (c, a) in counts.iter().zip(&analytic) {
        tv += (*c as f64 / n - a).abs();
    }
    Ok(0.5 * tv)
}

/// Relative change of the total energy between the sample nearest `t_in` and
/// the last sample.
pub fn energy_drift(trajectory: &Trajectory, window: &RegionWindow) -> Option<f64> {
    let pre = trajectory.at_time(window.t_in).energy.as_ref()?;
    let post = trajectory.last().energy.as_ref()?;
    Some(((post.total - pre.total) / pre.total).abs())
}

/// One row of the energy audit: means per (detector, initial branch) class.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyClassRow {
    pub detector: Detector,
    pub initial_branch: usize,
    pub count: usize,
    pub pre_e_kin: f64,
    pub pre_q_aux: f64,
    pub post_e_kin: f64,
    pub post_q_aux: f64,
    pub max_relative_drift: f64,
}

/// Pre-I and post-I energies per trajectory class. Only completed trajectories
/// with audited samples contribute; `q_aux` is the first auxiliary block.
pub fn energy_audit_summary(trajectories: &[Trajectory], scenario: &Scenario) -> Vec<EnergyClassRow> {
    let mut acc: BTreeMap<(Detector, usize), (usize, [f64; 4], f64)> = BTreeMap::new();
    for tr in trajectories {
        let Some(det) = classify_detector(tr, scenario) else { continue };
        let pre = tr.at_time(scenario.window.t_in);
        let (Some(e0), Some(e1)) = (pre.energy.as_ref(), tr.last().energy.as_ref()) else { continue };
        let q0 = e0.q.get(1).copied().unwrap_or(0.0);
        let q1 = e1.q.get(1).copied().unwrap_or(0.0);
        let drift = ((e1.total - e0.total) / e0.total).abs();
        let entry = acc.entry((det, tr.initial_branch)).or_insert((0, [0.0; 4], 0.0));
        entry.0 += 1;
        entry.1[0] += e0.e_kin[0];
        entry.1[1] += q0;
        entry.1[2] += e1.e_kin[0];
        entry.1[3] += q1;
        entry.2 = entry.2.max(drift);
    }
    acc.into_iter()
        .map(|((detector, initial_branch), (n, s, drift))| {
            let k = n as f64;
            EnergyClassRow {
                detector,
                initial_branch,
                count: n,
                pre_e_kin: s[0] / k,
                pre_q_aux: s[1] / k,
                post_e_kin: s[2] / k,
                post_q_aux: s[3] / k,
                max_relative_drift: drift,
            }
        })
        .collect()
}

/// Detector counts after the closing splitter, from Bohm trajectories of the
/// closed state integrated from the end of region I to readout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorCounts {
    pub d1: usize,
    pub d2: usize,
    pub excluded: usize,
}

impl DetectorCounts {
    pub fn total(&self) -> usize {
        self.d1 + self.d2 + self.excluded
    }

    /// Fractions `(D1, D2, excluded)` of all trajectories; they sum to 1.
    pub fn fractions(&self) -> (f64, f64, f64) {
        let n = self.total().max(1) as f64;
        (self.d1 as f64 / n, self.d2 as f64 / n, self.excluded as f64 / n)
    }

    /// Whether the D1 frequency lies within `k` binomial standard deviations of `p`.
    pub fn consistent_with(&self, p_d1: f64, k: f64) -> bool {
        let n = (self.d1 + self.d2) as f64;
        let f = self.d1 as f64 / n;
        let sd = (p_d1 * (1.0 - p_d1) / n).sqrt();
        (f - p_d1).abs() <= k * sd + 0.5 / n
    }
}

/// Count detector clicks for the closed interferometer.
pub fn empirical_detector_counts(scenario: &Scenario, spec: &EnsembleSpec, dt: f64) -> Result<DetectorCounts> {
    let components: Vec<Component> = (0..scenario.components.len())
        .map(|i| scenario.closure_component(i))
        .collect::<Result<_>>()?;
    let mut closed = scenario.clone();
    closed.components = components;
    let t0 = scenario.window.t_out;
    let t1 = scenario.t_readout();
    let opts = TrajectoryOptions {
        record_stride: usize::MAX,
        bounds: Some(closed.bounds(t1)),
        ..Default::default()
    };
    let trs = run_scenario_ensemble(&closed, spec, t0, t1, dt, &opts)?;
    let mut c = DetectorCounts {
        d1: 0,
        d2: 0,
        excluded: 0,
    };
    for tr in &trs {
        match classify_detector(tr, scenario) {
            Some(Detector::D1) => c.d1 += 1,
            Some(Detector::D2) => c.d2 += 1,
            None => c.excluded += 1,
        }
    }
    Ok(c)
}

/// Fraction of completed trajectories whose final lobe differs from the lobe
/// their initial branch heads for in free flight.
pub fn reflected_fraction(trajectories: &[Trajectory], scenario: &Scenario) -> f64 {
    let mut n = 0usize;
    let mut refl = 0usize;
    for tr in trajectories.iter().filter(|t| t.completed()) {
        let comp = &scenario.components[tr.component];
        let vz = comp.state.branches()[tr.initial_branch].atom.velocity[1];
        n += 1;
        if (tr.last().q.z() > 0.0) != (vz > 0.0) {
            refl += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        refl as f64 / n as f64
    }
}

/// Wilson 95% interval for a binomial proportion.
pub fn binomial_ci(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let n = n as f64;
    let p = successes as f64 / n;
    let den = 1.0 + z * z / n;
    let mid = (p + z * z / (2.0 * n)) / den;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / den;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Everything a run reports.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunReport {
    pub scenario_id: String,
    pub seed: u64,
    pub n: usize,
    pub p_d1_analytic: f64,
    pub p_d2_analytic: f64,
    pub p_d1_empirical: f64,
    pub p_d2_empirical: f64,
    pub excluded_detector_fraction: f64,
    pub p_d1_ci: (f64, f64),
    pub p_d2_ci: (f64, f64),
    pub plane_flux: Vec<(f64, f64)>,
    pub crossing: CrossingSummary,
    pub fringe_visibility: Vec<(f64, f64)>,
    pub fringe_contrast_empirical: Option<f64>,
    pub equivariance_tv: Option<f64>,
    pub exclusion_rate: f64,
    pub reflected_fraction: f64,
    pub energy: Vec<EnergyClassRow>,
    pub warnings: Vec<String>,
    pub window: Option<RegionWindow>,
}
