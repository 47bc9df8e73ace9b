//! Local fields of the guidance formalism: density, current, velocity,
//! amplitude, quantum potential, energy split and continuity residual.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::wavepacket::{Block, ConfigPoint, EntangledState, MAX_DIM};

/// Density below which velocities are undefined.
pub const EPS_P: f64 = 1e-12;
/// Amplitude below which the quantum potential is undefined.
pub const EPS_R: f64 = 1e-9;
/// Finite-difference step for Q, relative to each coordinate's length scale.
pub const FD_REL_STEP: f64 = 1e-3;

/// Per-coordinate finite-difference steps for the quantum potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSteps {
    pub h: [f64; MAX_DIM],
}

impl FdSteps {
    /// `FD_REL_STEP` times the smallest length scale present on each coordinate:
    /// the packet width σ0 for the atom, `L/(nπ)` for well levels, σ for Gaussians.
    pub fn for_state(state: &EntangledState) -> Self {
        let mut h = [0.0; MAX_DIM];
        let s_atom = state
            .branches()
            .iter()
            .map(|b| b.atom.sigma0)
            .fold(f64::INFINITY, f64::min);
        h[0] = FD_REL_STEP * s_atom;
        h[1] = h[0];
        for k in 0..state.aux_count() {
            let s = state
                .branches()
                .iter()
                .map(|b| b.factors[k].length_scale())
                .fold(f64::INFINITY, f64::min);
            h[2 + k] = FD_REL_STEP * s;
        }
        Self { h }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut h = self.h;
        h.iter_mut().for_each(|v| *v *= factor);
        Self { h }
    }
}

/// All local fields at one configuration point. Quantities that are undefined
/// at a node are `None` rather than fabricated.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub p: f64,
    pub r: f64,
    /// Current per configuration coordinate.
    pub j: Vec<f64>,
    pub v: Option<Vec<f64>>,
    /// Quantum potential per block, ordered atom then auxiliaries.
    pub q: Option<Vec<f64>>,
    pub e_kin: Option<Vec<f64>>,
    pub continuity_residual: f64,
}

impl FieldSample {
    pub fn q_total(&self) -> Option<f64> {
        self.q.as_ref().map(|q| q.iter().sum())
    }
}

/// Kinetic and quantum-potential energy per block and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySplit {
    pub e_kin: Vec<f64>,
    pub q: Vec<f64>,
    pub total: f64,
}

impl EnergySplit {
    pub fn e_kin_total(&self) -> f64 {
        self.e_kin.iter().sum()
    }
}

pub fn density(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<f64> {
    Ok(state.evaluate(q, t)?.norm_sqr())
}

fn block_check(state: &EntangledState, block: Block) -> Result<()> {
    match block {
        Block::Aux(k) if k >= state.aux_count() => Err(Error::invalid(format!("state has no auxiliary coordinate {k}"))),
        _ => Ok(()),
    }
}

fn mass_of_coord(state: &EntangledState, i: usize) -> f64 {
    if i < 2 {
        state.atom_mass()
    } else {
        state.block_mass(Block::Aux(i - 2))
    }
}

/// `Im(Ψ*∂Ψ)/m` for every configuration coordinate.
pub fn current_all(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<[f64; MAX_DIM]> {
    let a = state.amplitude(q, t)?;
    let mut j = [0.0; MAX_DIM];
    for (i, ji) in j.iter_mut().enumerate().take(q.dim()) {
        *ji = (a.value.conj() * a.grad[i]).im / mass_of_coord(state, i);
    }
    Ok(j)
}

/// Current restricted to one block.
pub fn current(state: &EntangledState, q: &ConfigPoint, t: f64, block: Block) -> Result<Vec<f64>> {
    block_check(state, block)?;
    let j = current_all(state, q, t)?;
    Ok(block.coords().map(|i| j[i]).collect())
}

/// Velocity `Im(Ψ*∂Ψ)/(m|Ψ|²)` for every coordinate, the right-hand side of the
/// guidance equation.
#[inline]
pub fn velocity_all(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<[f64; MAX_DIM]> {
    let a = state.amplitude(q, t)?;
    let p = a.value.norm_sqr();
    if !(p >= EPS_P) {
        return Err(Error::NodeDegeneracy {
            quantity: "P",
            value: p,
            threshold: EPS_P,
        });
    }
    let mut v = [0.0; MAX_DIM];
    for (i, vi) in v.iter_mut().enumerate().take(q.dim()) {
        *vi = (a.value.conj() * a.grad[i]).im / (mass_of_coord(state, i) * p);
    }
    Ok(v)
}

pub fn velocity(state: &EntangledState, q: &ConfigPoint, t: f64, block: Block) -> Result<Vec<f64>> {
    block_check(state, block)?;
    let v = velocity_all(state, q, t)?;
    Ok(block.coords().map(|i| v[i]).collect())
}

fn amplitude_r(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<f64> {
    Ok(state.evaluate(q, t)?.norm())
}

/// `-(1/2m) ∇²R/R` on one block by central differences with the given steps.
pub fn quantum_potential_with(
    state: &EntangledState,
    q: &ConfigPoint,
    t: f64,
    block: Block,
    steps: &FdSteps,
) -> Result<f64> {
    block_check(state, block)?;
    let r0 = amplitude_r(state, q, t)?;
    if !(r0 >= EPS_R) {
        return Err(Error::NodeDegeneracy {
            quantity: "R",
            value: r0,
            threshold: EPS_R,
        });
    }
    let mut lap = 0.0;
    for i in block.coords() {
        let h = steps.h[i];
        let rp = amplitude_r(state, &q.shifted(i, h), t)?;
        let rm = amplitude_r(state, &q.shifted(i, -h), t)?;
        lap += (rp + rm - 2.0 * r0) / (h * h);
    }
    Ok(-lap / (2.0 * state.block_mass(block) * r0))
}

pub fn quantum_potential(state: &EntangledState, q: &ConfigPoint, t: f64, block: Block) -> Result<f64> {
    quantum_potential_with(state, q, t, block, &FdSteps::for_state(state))
}

/// Quantum potential summed over all blocks.
pub fn quantum_potential_total(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<f64> {
    let steps = FdSteps::for_state(state);
    state
        .blocks()
        .into_iter()
        .map(|b| quantum_potential_with(state, q, t, b, &steps))
        .sum()
}

/// Kinetic energy `m|v|²/2` and quantum potential per block; V = 0 throughout.
pub fn energy_split(state: &EntangledState, q: &ConfigPoint, t: f64) -> Result<EnergySplit> {
    let v = velocity_all(state, q, t)?;
    let steps = FdSteps::for_state(state);
    let mut e_kin = Vec::new();
    let mut qs = Vec::new();
    for b in state.blocks() {
        let m = state.block_mass(b);
        e_kin.push(0.5 * m * b.coords().map(|i| v[i] * v[i]).sum::<f64>());
        qs.push(quantum_potential_with(state, q, t, b, &steps)?);
    }
    let total = e_kin.iter().sum::<f64>() + qs.iter().sum::<f64>();
    Ok(EnergySplit { e_kin, q: qs, total })
}

/// `-∂S/∂t` by a central difference of the phase, which is the local energy
/// wherever S is smooth.
pub fn phase_energy(state: &EntangledState, q: &ConfigPoint, t: f64, h: f64) -> Result<f64> {
    let a = state.evaluate(q, t + h)?;
    let b = state.evaluate(q, t - h)?;
    if a.norm_sqr() < EPS_P || b.norm_sqr() < EPS_P {
        return Err(Error::NodeDegeneracy {
            quantity: "P",
            value: a.norm_sqr().min(b.norm_sqr()),
            threshold: EPS_P,
        });
    }
    Ok(-(a * b.conj()).arg() / (2.0 * h))
}

/// `|∂P/∂t + Σ ∂j_i/∂q_i|` by central differences of step `h` in time and in
/// every configuration coordinate.
pub fn continuity_residual(state: &EntangledState, q: &ConfigPoint, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("continuity step must be positive"));
    }
    let dpdt = (density(state, q, t + h)? - density(state, q, t - h)?) / (2.0 * h);
    let mut div = 0.0;
    for i in 0..q.dim() {
        let jp = current_all(state, &q.shifted(i, h), t)?[i];
        let jm = current_all(state, &q.shifted(i, -h), t)?[i];
        div += (jp - jm) / (2.0 * h);
    }
    Ok((dpdt + div).abs())
}

/// Every field at one point. Node-sensitive quantities are left empty at nodes.
pub fn sample_fields(state: &EntangledState, q: &ConfigPoint, t: f64, h_continuity: f64) -> Result<FieldSample> {
    let a = state.amplitude(q, t)?;
    let p = a.value.norm_sqr();
    let j: Vec<f64> = current_all(state, q, t)?[..q.dim()].to_vec();
    let v = match velocity_all(state, q, t) {
        Ok(v) => Some(v[..q.dim()].to_vec()),
        Err(e) if e.is_degenerate() => None,
        Err(e) => return Err(e),
    };
    let (qs, e_kin) = match energy_split(state, q, t) {
        Ok(es) => (Some(es.q), Some(es.e_kin)),
        Err(e) if e.is_degenerate() => (None, None),
        Err(e) => return Err(e),
    };
    Ok(FieldSample {
        p,
        r: p.sqrt(),
        j,
        v,
        q: qs,
        e_kin,
        continuity_residual: continuity_residual(state, q, t, h_continuity)?,
    })
}

/// Atom current with the single auxiliary coordinate integrated out:
/// `Im Σ_ij c_i* c_j S_ij ψ_i* ∇ψ_j / m`, where `S_ij` is the device-factor overlap.
pub fn reduced_current_atom(state: &EntangledState, r_a: [f64; 2], t: f64) -> Result<[f64; 2]> {
    if state.aux_count() != 1 {
        return Err(Error::UnsupportedLayout(format!(
            "reduced atom current needs exactly one auxiliary coordinate, state has {}",
            state.aux_count()
        )));
    }
    let s = state.aux_overlaps(t);
    reduced_current_atom_with(state, &s, r_a, t)
}

/// As [`reduced_current_atom`] with a precomputed overlap matrix; also valid
/// for states without auxiliaries (all overlaps 1).
pub fn reduced_current_atom_with(state: &EntangledState, s: &[Vec<C64>], r_a: [f64; 2], t: f64) -> Result<[f64; 2]> {
    let mut vals = Vec::with_capacity(state.branches().len());
    for b in state.branches() {
        let (psi, g) = b.atom.value_and_gradient(r_a, t)?;
        vals.push((b.coefficient * psi, [b.coefficient * g[0], b.coefficient * g[1]]));
    }
    let mut acc = [C64::new(0.0, 0.0); 2];
    for (i, (vi, _)) in vals.iter().enumerate() {
        for (j, (_, gj)) in vals.iter().enumerate() {
            let w = vi.conj() * s[i][j];
            acc[0] += w * gj[0];
            acc[1] += w * gj[1];
        }
    }
    let m = state.atom_mass();
    Ok([acc[0].im / m, acc[1].im / m])
}
