//! The interferometer configurations: geometry, the six scenario builders,
//! the Mach-Zehnder closure and its detector probabilities.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::wavepacket::{BoxState, Branch, ConfigPoint, EntangledState, GaussianPacket, MAX_DIM};

/// Packet overlap integral above which two arms count as being inside region I.
pub const REGION_OVERLAP: f64 = 1e-6;
/// Minimum pointer separation, in pointer widths, for an irreversible detector.
pub const POINTER_SEPARATION_MIN: f64 = 12.0;

/// Interferometer geometry. The two arms cross at z = 0 with half-angle θ.
///
/// Arm 1 is launched below the axis moving up and arm 2 above it moving down,
/// so after the crossing arm 1 occupies the upper lobe.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub theta: f64,
    /// Transverse distance between the two launch points.
    pub separation: f64,
    pub speed: f64,
    pub sigma0: f64,
    pub mass: f64,
    pub t_launch: f64,
    /// Lobe separation, in packet widths, at which detectors are read out.
    pub readout_separation: f64,
    /// Labels the upper outgoing lobe as D1 when true.
    pub upper_is_d1: bool,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            theta: 0.05,
            separation: 200.0,
            speed: 100.0,
            sigma0: 10.0,
            mass: 1.0,
            t_launch: 0.0,
            readout_separation: 24.0,
            upper_is_d1: true,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < PI / 2.0) {
            return Err(Error::invalid(format!("theta must lie in (0, π/2), got {}", self.theta)));
        }
        for (name, v) in [
            ("separation", self.separation),
            ("speed", self.speed),
            ("sigma0", self.sigma0),
            ("mass", self.mass),
            ("readout_separation", self.readout_separation),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.t_launch.is_finite() {
            return Err(Error::invalid("t_launch must be finite"));
        }
        Ok(())
    }

    pub fn vx(&self) -> f64 {
        self.speed * self.theta.cos()
    }

    pub fn vz(&self) -> f64 {
        self.speed * self.theta.sin()
    }

    /// Time at which the packet centres meet on the axis.
    pub fn t_cross(&self) -> f64 {
        self.t_launch + 0.5 * self.separation / self.vz()
    }

    /// Spatial fringe period `π/(m v_z)` in the overlap region.
    pub fn fringe_period(&self) -> f64 {
        PI / (self.mass * self.vz())
    }

    /// Arm-1 packet (launched at z < 0 moving up).
    pub fn arm1(&self) -> Result<GaussianPacket> {
        GaussianPacket::new(
            [0.0, -0.5 * self.separation],
            [self.vx(), self.vz()],
            self.sigma0,
            self.t_launch,
            self.mass,
        )
    }

    /// Arm-2 packet (launched at z > 0 moving down). Lowering its kinetic energy by
    /// `energy_loss` slows the x motion only, with the launch point shifted so the
    /// centres still meet on the axis at [`Self::t_cross`].
    pub fn arm2(&self, energy_loss: f64) -> Result<GaussianPacket> {
        let vx2sq = self.vx() * self.vx() - 2.0 * energy_loss / self.mass;
        if !(vx2sq > 0.0) {
            return Err(Error::invalid(format!(
                "an energy transfer of {energy_loss} exceeds the atom's longitudinal kinetic energy"
            )));
        }
        let vx2 = vx2sq.sqrt();
        let x20 = (self.vx() - vx2) * (self.t_cross() - self.t_launch);
        GaussianPacket::new(
            [x20, 0.5 * self.separation],
            [vx2, -self.vz()],
            self.sigma0,
            self.t_launch,
            self.mass,
        )
    }

    /// Default integration step `σ0·m/(50·speed)`.
    pub fn default_dt(&self) -> f64 {
        self.sigma0 * self.mass / (50.0 * self.speed)
    }
}

/// Region-I window: times and atom x positions where the arm packets overlap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionWindow {
    pub t_in: f64,
    pub t_out: f64,
    pub t_cross: f64,
    pub x_in: f64,
    pub x_out: f64,
}

impl RegionWindow {
    /// Locate the interval where `∫|ψ1||ψ2| > REGION_OVERLAP` by bisection.
    pub fn locate(a: &GaussianPacket, b: &GaussianPacket, t_cross: f64) -> Result<Self> {
        let f = |t: f64| a.modulus_overlap(b, t) - REGION_OVERLAP;
        if f(t_cross) <= 0.0 {
            return Err(Error::invalid("arm packets never overlap; geometry has no region I"));
        }
        let t_lo = a.t0.max(b.t0);
        if f(t_lo) > 0.0 {
            return Err(Error::invalid("arm packets already overlap at launch; increase the separation"));
        }
        let bisect = |mut lo: f64, mut hi: f64, rising: bool| {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == rising {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let t_in = bisect(t_lo, t_cross, true);
        let mut hi = t_cross + (t_cross - t_lo).max(1.0);
        while f(hi) > 0.0 {
            hi = t_cross + 2.0 * (hi - t_cross);
        }
        let t_out = bisect(t_cross, hi, false);
        Ok(Self {
            t_in,
            t_out,
            t_cross,
            x_in: a.center(t_in)[0],
            x_out: a.center(t_out)[0],
        })
    }

    pub fn contains(&self, t: f64) -> bool {
        (self.t_in..=self.t_out).contains(&t)
    }
}

/// Which-way device parameters for the cavity and density-operator scenarios.
#[derive(Clone, Debug, PartialEq)]
pub struct CavitySpec {
    pub length: f64,
    pub mass: f64,
    pub n0: u32,
    pub n1: u32,
    /// Arm 2 hands the excitation energy to the cavity before reaching region I.
    pub energy_exchange: bool,
    /// Attach `exp(-iE t)` to the box levels. Only then does the state solve
    /// the full two-particle Schrödinger equation inside region I.
    pub dynamic_phase: bool,
}

impl Default for CavitySpec {
    fn default() -> Self {
        Self {
            length: PI,
            mass: 1.0,
            n0: 1,
            n1: 2,
            energy_exchange: true,
            dynamic_phase: false,
        }
    }
}

/// Device states η0, η1 with prescribed overlap α.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapSpec {
    pub alpha: C64,
    pub sigma: f64,
    pub mass: f64,
}

impl Default for OverlapSpec {
    fn default() -> Self {
        Self {
            alpha: C64::new(0.0, 0.5),
            sigma: 1.0,
            mass: 1.0,
        }
    }
}

/// Gaussian pointer of the irreversible detector.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerSpec {
    pub d: f64,
    pub sigma: f64,
    pub mass: f64,
}

impl Default for PointerSpec {
    fn default() -> Self {
        Self {
            d: 12.0,
            sigma: 1.0,
            mass: 1.0,
        }
    }
}

/// Ionization model for the bubble-chamber scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct IonizationSpec {
    pub probability: f64,
    /// Distance between bound and ionized electron packets.
    pub displacement: f64,
    pub sigma: f64,
    pub mass: f64,
}

impl Default for IonizationSpec {
    fn default() -> Self {
        Self {
            probability: 1.0,
            displacement: 12.0,
            sigma: 1.0,
            mass: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioKind {
    NoDevice,
    Cavity(CavitySpec),
    OverlapDevice(OverlapSpec),
    DetectorD3(PointerSpec),
    Bubble(IonizationSpec),
    DensityOperatorMode(CavitySpec),
}

impl ScenarioKind {
    pub fn id(&self) -> &'static str {
        match self {
            ScenarioKind::NoDevice => "no_device",
            ScenarioKind::Cavity(_) => "cavity",
            ScenarioKind::OverlapDevice(_) => "overlap_device",
            ScenarioKind::DetectorD3(_) => "detector_d3",
            ScenarioKind::Bubble(_) => "bubble",
            ScenarioKind::DensityOperatorMode(_) => "density_operator_mode",
        }
    }
}

/// Interferometer arm a branch belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Arm {
    One,
    Two,
}

/// One pure member of the (possibly mixed) scenario state.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub state: EntangledState,
    /// Arm of each branch, parallel to `state.branches()`.
    pub arms: Vec<Arm>,
}

/// Detector readout label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    D1,
    D2,
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
        })
    }
}

/// Axis-aligned configuration-space box outside which trajectories stop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

impl Bounds {
    pub fn contains(&self, q: &ConfigPoint) -> bool {
        q.as_slice()
            .iter()
            .enumerate()
            .all(|(i, &c)| c >= self.lo[i] && c <= self.hi[i])
    }
}

/// A fully assembled interferometer configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub geometry: Geometry,
    pub components: Vec<Component>,
    pub window: RegionWindow,
    /// Phase of the closing splitter's reflection amplitude for the arm-2 input.
    pub closure_phase: f64,
    pub warnings: Vec<String>,
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn pure(state: EntangledState, arms: Vec<Arm>) -> Vec<Component> {
    vec![Component {
        weight: 1.0,
        state,
        arms,
    }]
}

impl Scenario {
    fn assemble(
        kind: ScenarioKind,
        geometry: &Geometry,
        components: Vec<Component>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let (a, b) = (geometry.arm1()?, {
            let mut arm2 = None;
            for comp in &components {
                for (br, arm) in comp.state.branches().iter().zip(&comp.arms) {
                    if *arm == Arm::Two && arm2.is_none() {
                        arm2 = Some(br.atom.clone());
                    }
                }
            }
            arm2.map_or_else(|| geometry.arm2(0.0), Ok)?
        });
        let window = RegionWindow::locate(&a, &b, geometry.t_cross())?;
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("component weights sum to {total}")));
        }
        Ok(Self {
            kind,
            geometry: geometry.clone(),
            components,
            window,
            closure_phase: PI,
            warnings,
        })
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    pub fn is_mixture(&self) -> bool {
        self.components.len() > 1
    }

    /// The single pure state. Fails for mixtures.
    pub fn pure_state(&self) -> Result<&EntangledState> {
        match self.components.as_slice() {
            [c] => Ok(&c.state),
            _ => Err(Error::UnsupportedLayout("scenario is a mixture; use its components".into())),
        }
    }

    pub fn aux_names(&self) -> &[String] {
        self.components[0].state.aux_names()
    }

    /// Readout time: the first time after the crossing at which the lobe centres
    /// are `readout_separation` widths apart.
    pub fn t_readout(&self) -> f64 {
        let g = &self.geometry;
        let p = g.arm1().expect("validated geometry");
        let need = |t: f64| {
            let gap = 2.0 * (p.center(t)[1]).abs();
            gap - g.readout_separation * p.width(t)
        };
        let mut lo = self.window.t_cross;
        let mut hi = lo + 1.0;
        while need(hi) < 0.0 {
            hi = lo + 2.0 * (hi - lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if need(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    /// Detector plane: the atom x position at readout.
    pub fn x_detector(&self) -> f64 {
        self.geometry.arm1().expect("validated geometry").center(self.t_readout())[0]
    }

    /// Integration box covering every branch up to `t_end` with a wide margin.
    pub fn bounds(&self, t_end: f64) -> Bounds {
        let mut lo = [f64::INFINITY; MAX_DIM];
        let mut hi = [f64::NEG_INFINITY; MAX_DIM];
        for comp in &self.components {
            for b in comp.state.branches() {
                let w = b.atom.width(t_end).max(b.atom.sigma0);
                for t in [b.atom.t0, t_end] {
                    let c = b.atom.center(t);
                    for d in 0..2 {
                        lo[d] = lo[d].min(c[d] - 20.0 * w);
                        hi[d] = hi[d].max(c[d] + 20.0 * w);
                    }
                }
                for (k, f) in b.factors.iter().enumerate() {
                    let (a, z) = f.support(t_end);
                    lo[2 + k] = lo[2 + k].min(a - f.length);
                    hi[2 + k] = hi[2 + k].max(z + f.length);
                }
            }
        }
        for d in 0..MAX_DIM {
            if lo[d] > hi[d] {
                (lo[d], hi[d]) = (f64::NEG_INFINITY, f64::INFINITY);
            }
        }
        Bounds { lo, hi }
    }

    /// Mach-Zehnder readout probabilities `(P_D1, P_D2)` after a 50/50 closing splitter.
    ///
    /// With arm amplitudes A1, A2 and mirror M (z → -z) the D1 port carries
    /// `(A1 + e^{iφ} M A2)/√2`, so `P_D1 = (N + 2 Re(e^{iφ}⟨A1|M A2⟩))/(2N)` with N the total norm.
    pub fn detector_probabilities(&self) -> (f64, f64) {
        let r = C64::from_polar(1.0, self.closure_phase);
        let t = self.window.t_out;
        let mut p1 = 0.0;
        for comp in &self.components {
            let br = comp.state.branches();
            let mut norm = 0.0;
            let mut cross = C64::new(0.0, 0.0);
            for (i, bi) in br.iter().enumerate() {
                for (j, bj) in br.iter().enumerate() {
                    if comp.arms[i] == comp.arms[j] {
                        norm += bi.overlap(bj, t).re;
                    } else if comp.arms[i] == Arm::One {
                        let mirrored = Branch::new(bj.atom.mirrored(), bj.factors.clone(), bj.coefficient);
                        cross += bi.overlap(&mirrored, t);
                    }
                }
            }
            p1 += comp.weight * (norm + 2.0 * (r * cross).re) / (2.0 * norm);
        }
        let p1 = p1.clamp(0.0, 1.0);
        let (p1, p2) = (p1, 1.0 - p1);
        if self.geometry.upper_is_d1 {
            (p1, p2)
        } else {
            (p2, p1)
        }
    }

    /// State after the closing splitter, valid once the packets have left region I.
    ///
    /// Upper port: `(A1 + e^{iφ} M A2)/√2`; lower port: `(A2 - e^{-iφ} M A1)/√2`.
    pub fn closure_component(&self, index: usize) -> Result<Component> {
        let comp = &self.components[index];
        let r = C64::from_polar(1.0, self.closure_phase);
        let r_prime = -r.conj();
        let mut branches = Vec::new();
        let mut arms = Vec::new();
        for (b, arm) in comp.state.branches().iter().zip(&comp.arms) {
            let refl = match arm {
                Arm::One => r_prime,
                Arm::Two => r,
            };
            branches.push(Branch::new(b.atom.clone(), b.factors.clone(), b.coefficient * FRAC_1_SQRT_2));
            arms.push(*arm);
            branches.push(Branch::new(
                b.atom.mirrored(),
                b.factors.clone(),
                b.coefficient * refl * FRAC_1_SQRT_2,
            ));
            arms.push(match arm {
                Arm::One => Arm::Two,
                Arm::Two => Arm::One,
            });
        }
        let (branches, arms) = merge_branches(branches, arms);
        let state = EntangledState::new(branches, comp.state.aux_names().to_vec())?;
        Ok(Component {
            weight: comp.weight,
            state,
            arms,
        })
    }

    /// Detector label from the final lobe of an atom position.
    pub fn classify(&self, z: f64) -> Detector {
        let upper = z > 0.0;
        if upper == self.geometry.upper_is_d1 {
            Detector::D1
        } else {
            Detector::D2
        }
    }

    /// Mixture of the individual branches, each a pure component weighted by
    /// its share of the norm. Only valid when branches are mutually orthogonal
    /// through their device factors at `t`.
    pub fn decohered(&self, t: f64) -> Result<Self> {
        let mut components = Vec::new();
        for comp in &self.components {
            if comp.state.branches().len() > 1 && !comp.state.aux_disjoint(t) {
                return Err(Error::invalid("decoherence needs orthogonal device factors"));
            }
            let total: f64 = comp.state.branches().iter().map(|b| b.coefficient.norm_sqr()).sum();
            for (b, arm) in comp.state.branches().iter().zip(&comp.arms) {
                let w = b.coefficient.norm_sqr();
                let unit = b.coefficient / w.sqrt();
                let state = EntangledState::new(
                    vec![Branch::new(b.atom.clone(), b.factors.clone(), unit)],
                    comp.state.aux_names().to_vec(),
                )?;
                components.push(Component {
                    weight: comp.weight * w / total,
                    state,
                    arms: vec![*arm],
                });
            }
        }
        let mut out = self.clone();
        out.components = components;
        Ok(out)
    }

    /// Same scenario with the atom packets reflected through z = 0, which for
    /// the symmetric geometry exchanges the arms while leaving device factors in place.
    pub fn swapped_arms(&self) -> Result<Self> {
        let mut out = self.clone();
        for comp in &mut out.components {
            let branches: Vec<Branch> = comp
                .state
                .branches()
                .iter()
                .map(|b| Branch::new(b.atom.mirrored(), b.factors.clone(), b.coefficient))
                .collect();
            let selection = comp.state.selection();
            let mut state = EntangledState::new(branches, comp.state.aux_names().to_vec())?;
            if selection == crate::wavepacket::Selection::Exact {
                state = state.with_exact_selection(self.geometry.t_launch)?;
            }
            comp.state = state;
            for a in &mut comp.arms {
                *a = match a {
                    Arm::One => Arm::Two,
                    Arm::Two => Arm::One,
                };
            }
        }
        Ok(out)
    }
}

/// Coefficient magnitude below which a merged branch is dropped as cancelled.
const CANCELLED: f64 = 1e-12;

/// Add up branches that carry the same packet and device factors, then drop
/// the ones that cancel. A dark output port disappears entirely this way.
fn merge_branches(branches: Vec<Branch>, arms: Vec<Arm>) -> (Vec<Branch>, Vec<Arm>) {
    let mut out: Vec<(Branch, Arm)> = Vec::new();
    for (b, a) in branches.into_iter().zip(arms) {
        match out.iter_mut().find(|(o, _)| o.atom == b.atom && o.factors == b.factors) {
            Some((o, _)) => o.coefficient += b.coefficient,
            None => out.push((b, a)),
        }
    }
    out.retain(|(b, _)| b.coefficient.norm() > CANCELLED);
    out.into_iter().unzip()
}

/// Two mirrored packets in coherent superposition, no device.
pub fn build_no_device(g: &Geometry) -> Result<Scenario> {
    g.validate()?;
    let s = FRAC_1_SQRT_2;
    let state = EntangledState::new(
        vec![
            Branch::new(g.arm1()?, vec![], c(s)),
            Branch::new(g.arm2(0.0)?, vec![], c(s)),
        ],
        vec![],
    )?;
    Scenario::assemble(ScenarioKind::NoDevice, g, pure(state, vec![Arm::One, Arm::Two]), vec![])
}

fn cavity_levels(spec: &CavitySpec) -> Result<(BoxState, BoxState)> {
    if spec.n0 == spec.n1 {
        return Err(Error::invalid(
            "cavity levels must be distinct (orthogonal); use the overlap device for partial overlap",
        ));
    }
    Ok((
        BoxState::well(spec.n0, spec.length, spec.mass)?.with_dynamic_phase(spec.dynamic_phase),
        BoxState::well(spec.n1, spec.length, spec.mass)?.with_dynamic_phase(spec.dynamic_phase),
    ))
}

/// Atom entangled with a two-level box: `(ψ1 Φ0 + ψ2 ΦE)/√2`.
pub fn build_cavity(g: &Geometry, spec: &CavitySpec) -> Result<Scenario> {
    g.validate()?;
    let (phi0, phie) = cavity_levels(spec)?;
    let loss = if spec.energy_exchange {
        phie.energy() - phi0.energy()
    } else {
        0.0
    };
    let s = FRAC_1_SQRT_2;
    let state = EntangledState::new(
        vec![
            Branch::new(g.arm1()?, vec![phi0], c(s)),
            Branch::new(g.arm2(loss)?, vec![phie], c(s)),
        ],
        vec!["r_b".into()],
    )?;
    Scenario::assemble(
        ScenarioKind::Cavity(spec.clone()),
        g,
        pure(state, vec![Arm::One, Arm::Two]),
        vec![],
    )
}

/// Device states realizing a prescribed overlap α.
pub fn overlap_states(spec: &OverlapSpec) -> Result<(BoxState, BoxState)> {
    let a = spec.alpha.norm();
    if !(a <= 1.0 + 1e-15) || !spec.alpha.re.is_finite() {
        return Err(Error::invalid(format!("|alpha| must not exceed 1, got {a}")));
    }
    // |⟨0|β⟩| = exp(-|β|²/2); β = 40 already underflows the overlap to exactly 0.
    let beta = if a >= 1.0 {
        0.0
    } else if a < 1e-300 {
        40.0
    } else {
        (-2.0 * a.ln()).sqrt().min(40.0)
    };
    let phase = if a > 0.0 { spec.alpha / a } else { c(1.0) };
    let eta0 = BoxState::displaced_gaussian(c(0.0), spec.sigma, spec.mass)?;
    let eta1 = BoxState::displaced_gaussian(c(beta), spec.sigma, spec.mass)?.with_phase(phase);
    Ok((eta0, eta1))
}

/// Generic device with overlap α: `(ψ1 η0 + ψ2 η1)/√2`.
pub fn build_overlap_device(g: &Geometry, spec: &OverlapSpec) -> Result<Scenario> {
    g.validate()?;
    let (eta0, eta1) = overlap_states(spec)?;
    let s = FRAC_1_SQRT_2;
    let state = EntangledState::new(
        vec![
            Branch::new(g.arm1()?, vec![eta0], c(s)),
            Branch::new(g.arm2(0.0)?, vec![eta1], c(s)),
        ],
        vec!["r_b".into()],
    )?;
    Scenario::assemble(
        ScenarioKind::OverlapDevice(spec.clone()),
        g,
        pure(state, vec![Arm::One, Arm::Two]),
        vec![],
    )
}

/// Irreversible detector on arm 2: `(ψ1 Λ_unfired + ψ2 Λ_fired)/√2`.
pub fn build_detector_d3(g: &Geometry, spec: &PointerSpec) -> Result<Scenario> {
    g.validate()?;
    let unfired = BoxState::pointer(0.0, spec.sigma, spec.mass)?;
    let fired = BoxState::pointer(spec.d, spec.sigma, spec.mass)?;
    let s = FRAC_1_SQRT_2;
    let mut state = EntangledState::new(
        vec![
            Branch::new(g.arm1()?, vec![unfired], c(s)),
            Branch::new(g.arm2(0.0)?, vec![fired], c(s)),
        ],
        vec!["r_c".into()],
    )?;
    let mut warnings = Vec::new();
    if spec.d / spec.sigma >= POINTER_SEPARATION_MIN && state.aux_disjoint(g.t_launch) {
        state = state.with_exact_selection(g.t_launch)?;
    } else {
        warnings.push(format!(
            "pointer separation d/sigma = {:.3} is below {POINTER_SEPARATION_MIN}: not a valid irreversible detector",
            spec.d / spec.sigma
        ));
    }
    Scenario::assemble(
        ScenarioKind::DetectorD3(spec.clone()),
        g,
        pure(state, vec![Arm::One, Arm::Two]),
        warnings,
    )
}

/// Ionizable atom on arm 2: `(ψ1 φ_b + √(1-p) ψ2 φ_b + √p ψ2 φ_ion)/√2`.
pub fn build_bubble(g: &Geometry, spec: &IonizationSpec) -> Result<Scenario> {
    g.validate()?;
    let p = spec.probability;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("ionization probability must lie in [0, 1], got {p}")));
    }
    let bound = BoxState::pointer(0.0, spec.sigma, spec.mass)?;
    let ionized = BoxState::pointer(spec.displacement, spec.sigma, spec.mass)?;
    let s = FRAC_1_SQRT_2;
    let mut branches = vec![Branch::new(g.arm1()?, vec![bound.clone()], c(s))];
    let mut arms = vec![Arm::One];
    if p < 1.0 {
        branches.push(Branch::new(g.arm2(0.0)?, vec![bound], c(s * (1.0 - p).sqrt())));
        arms.push(Arm::Two);
    }
    if p > 0.0 {
        branches.push(Branch::new(g.arm2(0.0)?, vec![ionized], c(s * p.sqrt())));
        arms.push(Arm::Two);
    }
    let mut state = EntangledState::new(branches, vec!["r_e".into()])?;
    let mut warnings = Vec::new();
    if state.aux_disjoint(g.t_launch) {
        state = state.with_exact_selection(g.t_launch)?;
    } else {
        warnings.push("ionization incomplete: electron states overlap, interference persists".to_string());
    }
    Scenario::assemble(ScenarioKind::Bubble(spec.clone()), g, pure(state, arms), warnings)
}

/// Decohered mixture `½|ψ1 Φ0⟩⟨·| + ½|ψ2 ΦE⟩⟨·|`, simulated per component.
pub fn build_density_operator_mode(g: &Geometry, spec: &CavitySpec) -> Result<Scenario> {
    g.validate()?;
    let (phi0, phie) = cavity_levels(spec)?;
    let loss = if spec.energy_exchange {
        phie.energy() - phi0.energy()
    } else {
        0.0
    };
    let names = vec!["r_b".to_string()];
    let comp1 = EntangledState::new(vec![Branch::new(g.arm1()?, vec![phi0], c(1.0))], names.clone())?;
    let comp2 = EntangledState::new(vec![Branch::new(g.arm2(loss)?, vec![phie], c(1.0))], names)?;
    Scenario::assemble(
        ScenarioKind::DensityOperatorMode(spec.clone()),
        g,
        vec![
            Component {
                weight: 0.5,
                state: comp1,
                arms: vec![Arm::One],
            },
            Component {
                weight: 0.5,
                state: comp2,
                arms: vec![Arm::Two],
            },
        ],
        vec![],
    )
}

/// Build any scenario from its kind.
pub fn build(kind: &ScenarioKind, g: &Geometry) -> Result<Scenario> {
    match kind {
        ScenarioKind::NoDevice => build_no_device(g),
        ScenarioKind::Cavity(s) => build_cavity(g, s),
        ScenarioKind::OverlapDevice(s) => build_overlap_device(g, s),
        ScenarioKind::DetectorD3(s) => build_detector_d3(g, s),
        ScenarioKind::Bubble(s) => build_bubble(g, s),
        ScenarioKind::DensityOperatorMode(s) => build_density_operator_mode(g, s),
    }
}
