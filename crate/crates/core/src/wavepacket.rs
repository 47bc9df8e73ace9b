//! Closed-form wavefunctions: free Gaussian packets for the atom, 1D device
//! states, and branch sums over configuration space.
//!
//! Units: ħ = 1. Positions, times and masses are dimensionless.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quad::{simpson, simpson_c};

/// Largest configuration dimension handled: the 2D atom plus two 1D auxiliaries.
pub const MAX_DIM: usize = 4;

// 2π split into pieces with 30 significant bits each, so that `n * piece`
// is exact for any multiple count below 2^22.
const TWO_PI_HI: f64 = 6.283185303211212;
const TWO_PI_MID: f64 = 3.9683743166540886e-09;
const TWO_PI_LO: f64 = 2.068073192717642e-18;

/// Reduces a large phase to roughly [-π, π] without losing the low bits.
/// Packet phases reach 1e5 rad and libm's slow path for those is costly.
#[inline]
fn reduce_angle(x: f64) -> f64 {
    if x.abs() < 1e3 || !x.is_finite() || x.abs() > 2.0e6 {
        return x;
    }
    let n = (x * (1.0 / (2.0 * PI))).round();
    ((x - n * TWO_PI_HI) - n * TWO_PI_MID) - n * TWO_PI_LO
}

/// A free 2D Gaussian packet evolved analytically.
///
/// At `t0` the packet is `(2πσ0²)^(-1/2) exp(-|r-c0|²/(4σ0²) + i m v·(r-c0))`
/// times `amplitude`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPacket {
    pub center0: [f64; 2],
    pub velocity: [f64; 2],
    pub sigma0: f64,
    pub amplitude: C64,
    pub t0: f64,
    pub mass: f64,
}

impl GaussianPacket {
    pub fn new(center0: [f64; 2], velocity: [f64; 2], sigma0: f64, t0: f64, mass: f64) -> Result<Self> {
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::invalid(format!("sigma0 must be positive, got {sigma0}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(format!("mass must be positive, got {mass}")));
        }
        if !(center0.iter().chain(&velocity).all(|c| c.is_finite()) && t0.is_finite()) {
            return Err(Error::invalid("packet center, velocity and t0 must be finite"));
        }
        Ok(Self {
            center0,
            velocity,
            sigma0,
            amplitude: C64::new(1.0, 0.0),
            t0,
            mass,
        })
    }

    pub fn with_amplitude(mut self, amplitude: C64) -> Self {
        self.amplitude = amplitude;
        self
    }

    fn elapsed(&self, t: f64) -> Result<f64> {
        if t < self.t0 {
            return Err(Error::OutOfDomain { t, t0: self.t0 });
        }
        Ok(t - self.t0)
    }

    /// RMS width of |ψ|² along each axis at time `t`.
    pub fn width(&self, t: f64) -> f64 {
        let s = (t - self.t0) / (2.0 * self.mass * self.sigma0 * self.sigma0);
        self.sigma0 * (1.0 + s * s).sqrt()
    }

    pub fn center(&self, t: f64) -> [f64; 2] {
        let tau = t - self.t0;
        [
            self.center0[0] + self.velocity[0] * tau,
            self.center0[1] + self.velocity[1] * tau,
        ]
    }

    /// Value and analytic gradient in one pass. This is the hot path for
    /// trajectory integration, so it is written out in real arithmetic.
    #[inline]
    pub fn value_and_gradient(&self, r: [f64; 2], t: f64) -> Result<(C64, [C64; 2])> {
        let tau = self.elapsed(t)?;
        let m = self.mass;
        let s2 = self.sigma0 * self.sigma0;
        // a = s2 + i b
        let b = tau / (2.0 * m);
        let inv_a2 = 1.0 / (s2 * s2 + b * b);
        // 1/(2a) = (g_re - i g_im)
        let g_re = 0.5 * s2 * inv_a2;
        let g_im = 0.5 * b * inv_a2;
        let mut d2 = 0.0;
        let mut phase = -0.5 * m * (self.velocity[0] * self.velocity[0] + self.velocity[1] * self.velocity[1]) * tau;
        let mut dx = [0.0; 2];
        for d in 0..2 {
            let rel = r[d] - self.center0[d];
            dx[d] = rel - self.velocity[d] * tau;
            d2 += dx[d] * dx[d];
            phase += m * self.velocity[d] * rel;
        }
        // exponent -d2/(4a) = -(d2/2)(g_re - i g_im)
        let expo_re = -0.5 * d2 * g_re;
        phase += 0.5 * d2 * g_im;
        // prefactor s2/a = s2 (s2 - i b)/|a|^2
        let norm = 1.0 / ((2.0 * PI).sqrt() * self.sigma0) * s2 * inv_a2 * expo_re.exp();
        let (sn, cs) = reduce_angle(phase).sin_cos();
        let psi = self.amplitude * C64::new(s2, -b) * C64::new(norm * cs, norm * sn);
        let mut grad = [C64::new(0.0, 0.0); 2];
        for d in 0..2 {
            grad[d] = psi * C64::new(-dx[d] * g_re, dx[d] * g_im + m * self.velocity[d]);
        }
        Ok((psi, grad))
    }

    /// `ln|ψ|` up to the time-dependent prefactor shared by every packet of
    /// one family. Cheap enough to rank branches before full evaluation.
    #[inline]
    fn log_envelope(&self, r: [f64; 2], t: f64) -> Result<f64> {
        let tau = self.elapsed(t)?;
        let s2 = self.sigma0 * self.sigma0;
        let b = tau / (2.0 * self.mass);
        let mut d2 = 0.0;
        for d in 0..2 {
            let dx = r[d] - self.center0[d] - self.velocity[d] * tau;
            d2 += dx * dx;
        }
        Ok(-0.25 * d2 * s2 / (s2 * s2 + b * b))
    }

    pub fn evaluate(&self, r: [f64; 2], t: f64) -> Result<C64> {
        Ok(self.value_and_gradient(r, t)?.0)
    }

    pub fn gradient(&self, r: [f64; 2], t: f64) -> Result<[C64; 2]> {
        Ok(self.value_and_gradient(r, t)?.1)
    }

    pub fn laplacian(&self, r: [f64; 2], t: f64) -> Result<C64> {
        let tau = self.elapsed(t)?;
        let a = C64::new(self.sigma0 * self.sigma0, tau / (2.0 * self.mass));
        let (psi, g) = self.value_and_gradient(r, t)?;
        if psi == C64::new(0.0, 0.0) {
            return Ok(psi);
        }
        let inv2a = (2.0 * a).inv();
        let mut acc = C64::new(0.0, 0.0);
        for gd in g {
            let dlog = gd / psi;
            acc += dlog * dlog - inv2a;
        }
        Ok(psi * acc)
    }

    /// Reflection through the plane z = 0.
    pub fn mirrored(&self) -> Self {
        let mut p = self.clone();
        p.center0[1] = -p.center0[1];
        p.velocity[1] = -p.velocity[1];
        p
    }

    fn same_family(&self, other: &Self) -> bool {
        self.sigma0 == other.sigma0 && self.mass == other.mass && self.t0 == other.t0
    }

    /// ⟨self|other⟩, which free evolution leaves constant in time.
    pub fn overlap(&self, other: &Self) -> C64 {
        if self.same_family(other) {
            let s2 = self.sigma0 * self.sigma0;
            let m = self.mass;
            let mut log = C64::new(0.0, 0.0);
            for d in 0..2 {
                let (a1, a2) = (self.center0[d], other.center0[d]);
                let (u1, u2) = (self.velocity[d], other.velocity[d]);
                let du = u2 - u1;
                log += C64::new(
                    -(a2 - a1).powi(2) / (8.0 * s2) - 0.5 * s2 * m * m * du * du,
                    0.5 * m * (u1 + u2) * (a1 - a2),
                );
            }
            return self.amplitude.conj() * other.amplitude * log.exp();
        }
        self.overlap_by_quadrature(other)
    }

    fn overlap_by_quadrature(&self, other: &Self) -> C64 {
        let t = self.t0.max(other.t0);
        let (c1, c2) = (self.center(t), other.center(t));
        let (w1, w2) = (self.width(t), other.width(t));
        let span = |d: usize| {
            let lo = (c1[d] - 10.0 * w1).min(c2[d] - 10.0 * w2);
            let hi = (c1[d] + 10.0 * w1).max(c2[d] + 10.0 * w2);
            (lo, hi)
        };
        let (x0, x1) = span(0);
        let (z0, z1) = span(1);
        let kmax = self.mass * self.velocity[0].abs().max(self.velocity[1].abs())
            + other.mass * other.velocity[0].abs().max(other.velocity[1].abs())
            + 1.0 / w1.min(w2);
        let n = |lo: f64, hi: f64| (((hi - lo) * kmax * 4.0) as usize).clamp(200, 4000);
        let (nx, nz) = (n(x0, x1), n(z0, z1));
        simpson_c(
            |x| {
                simpson_c(
                    |z| {
                        let a = self.evaluate([x, z], t).unwrap_or_default();
                        let b = other.evaluate([x, z], t).unwrap_or_default();
                        a.conj() * b
                    },
                    z0,
                    z1,
                    nz,
                )
            },
            x0,
            x1,
            nx,
        )
    }

    /// ∫|ψ_self||ψ_other| d²r at time `t`, closed form for Gaussians.
    pub fn modulus_overlap(&self, other: &Self, t: f64) -> f64 {
        let (c1, c2) = (self.center(t), other.center(t));
        let (s1, s2) = (self.width(t), other.width(t));
        let ss = s1 * s1 + s2 * s2;
        let pref = (2.0 * s1 * s2 / ss).sqrt();
        let mut bc = self.amplitude.norm() * other.amplitude.norm();
        for d in 0..2 {
            bc *= pref * (-(c1[d] - c2[d]).powi(2) / (4.0 * ss)).exp();
        }
        bc
    }

    /// Draw a point from |ψ(·, t)|² (normal with mean `center(t)` and width `width(t)`).
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> [f64; 2] {
        let c = self.center(t);
        let w = self.width(t);
        let nx: f64 = StandardNormal.sample(rng);
        let nz: f64 = StandardNormal.sample(rng);
        [c[0] + w * nx, c[1] + w * nz]
    }
}

/// Shape of a 1D device factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoxKind {
    /// Infinite-square-well eigenfunction on `[0, L]`.
    Well { n: u32 },
    /// Coherent-state Gaussian `(πσ²)^(-1/4) exp(-(x-δ)²/(2σ²) + ik(x-δ/2))`
    /// with `δ = √2 σ Re β` and `k = √2 Im β / σ`. β = 0 is the ground state.
    DisplacedGaussian { displacement: C64 },
}

/// A 1D device factor: a cavity level or a displaced-Gaussian device/pointer state.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxState {
    pub kind: BoxKind,
    /// Well length `L` or Gaussian width `σ_b`.
    pub length: f64,
    pub mass: f64,
    pub include_dynamic_phase: bool,
    /// Constant unit-modulus factor. Lets a Gaussian pair realize a complex overlap.
    pub phase: C64,
}

impl BoxState {
    pub fn well(n: u32, length: f64, mass: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("well level must be a positive integer"));
        }
        Self::checked(BoxKind::Well { n }, length, mass)
    }

    pub fn displaced_gaussian(displacement: C64, sigma: f64, mass: f64) -> Result<Self> {
        if !(displacement.re.is_finite() && displacement.im.is_finite()) {
            return Err(Error::invalid("displacement must be finite"));
        }
        Self::checked(BoxKind::DisplacedGaussian { displacement }, sigma, mass)
    }

    /// Gaussian pointer centred at `center` with amplitude width `sigma`.
    pub fn pointer(center: f64, sigma: f64, mass: f64) -> Result<Self> {
        Self::displaced_gaussian(C64::new(center / (2f64.sqrt() * sigma), 0.0), sigma, mass)
    }

    fn checked(kind: BoxKind, length: f64, mass: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::invalid(format!("device length scale must be positive, got {length}")));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(format!("device mass must be positive, got {mass}")));
        }
        Ok(Self {
            kind,
            length,
            mass,
            include_dynamic_phase: false,
            phase: C64::new(1.0, 0.0),
        })
    }

    pub fn with_phase(mut self, phase: C64) -> Self {
        self.phase = phase / phase.norm();
        self
    }

    pub fn with_dynamic_phase(mut self, on: bool) -> Self {
        self.include_dynamic_phase = on;
        self
    }

    /// Energy of the level: `n²π²/(2mL²)` for wells, `ω(|β|² + 1/2)` for Gaussians.
    pub fn energy(&self) -> f64 {
        match self.kind {
            BoxKind::Well { n } => {
                let k = n as f64 * PI / self.length;
                k * k / (2.0 * self.mass)
            }
            BoxKind::DisplacedGaussian { displacement } => self.omega() * (displacement.norm_sqr() + 0.5),
        }
    }

    fn omega(&self) -> f64 {
        1.0 / (self.mass * self.length * self.length)
    }

    /// Natural length over which the factor varies; used to scale finite-difference steps.
    pub fn length_scale(&self) -> f64 {
        match self.kind {
            BoxKind::Well { n } => self.length / (n as f64 * PI),
            BoxKind::DisplacedGaussian { .. } => self.length,
        }
    }

    /// Coherent-state parameters (δ, k, global phase) at time `t`.
    fn gaussian_params(&self, beta: C64, t: f64) -> (f64, f64, C64) {
        let (beta, global) = if self.include_dynamic_phase {
            let w = self.omega();
            (beta * C64::from_polar(1.0, -w * t), C64::from_polar(1.0, -0.5 * w * t))
        } else {
            (beta, C64::new(1.0, 0.0))
        };
        let s = self.length;
        (2f64.sqrt() * s * beta.re, 2f64.sqrt() * beta.im / s, global * self.phase)
    }

    /// Value and x-derivative at `x`, time `t`.
    #[inline]
    pub fn value_and_derivative(&self, x: f64, t: f64) -> (C64, C64) {
        match self.kind {
            BoxKind::Well { n } => {
                if !(0.0..=self.length).contains(&x) {
                    return (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
                }
                let k = n as f64 * PI / self.length;
                let amp = (2.0 / self.length).sqrt();
                let (s, c) = (k * x).sin_cos();
                if !self.include_dynamic_phase && self.phase == C64::new(1.0, 0.0) {
                    return (C64::new(amp * s, 0.0), C64::new(amp * k * c, 0.0));
                }
                let mut ph = self.phase;
                if self.include_dynamic_phase {
                    ph *= C64::from_polar(1.0, -self.energy() * t);
                }
                (ph * (amp * s), ph * (amp * k * c))
            }
            BoxKind::DisplacedGaussian { displacement } => {
                let (delta, k, ph) = self.gaussian_params(displacement, t);
                let s = self.length;
                let norm = (PI * s * s).powf(-0.25);
                let dx = x - delta;
                let val = ph * norm * C64::new(-dx * dx / (2.0 * s * s), k * (x - 0.5 * delta)).exp();
                (val, val * C64::new(-dx / (s * s), k))
            }
        }
    }

    /// Upper bound of `|value|` over the whole line.
    pub fn max_modulus(&self) -> f64 {
        let base = match self.kind {
            BoxKind::Well { .. } => (2.0 / self.length).sqrt(),
            BoxKind::DisplacedGaussian { .. } => (PI * self.length * self.length).powf(-0.25),
        };
        base * self.phase.norm()
    }

    pub fn evaluate(&self, x: f64, t: f64) -> C64 {
        self.value_and_derivative(x, t).0
    }

    /// Interval outside which the factor is zero or negligible (below e^-60 relative).
    pub fn support(&self, t: f64) -> (f64, f64) {
        match self.kind {
            BoxKind::Well { .. } => (0.0, self.length),
            BoxKind::DisplacedGaussian { displacement } => {
                let (delta, _, _) = self.gaussian_params(displacement, t);
                (delta - 11.0 * self.length, delta + 11.0 * self.length)
            }
        }
    }

    /// ⟨self|other⟩ at time `t`.
    pub fn overlap(&self, other: &BoxState, t: f64) -> C64 {
        match (self.kind, other.kind) {
            (BoxKind::Well { n: m }, BoxKind::Well { n }) if self.length == other.length => {
                if m != n {
                    return C64::new(0.0, 0.0);
                }
                self.evaluate(self.length * 0.5 / m as f64, t).conj()
                    * other.evaluate(self.length * 0.5 / m as f64, t)
                    / (2.0 / self.length)
            }
            (BoxKind::DisplacedGaussian { displacement: b1 }, BoxKind::DisplacedGaussian { displacement: b2 })
                if self.length == other.length =>
            {
                let (d1, k1, p1) = self.gaussian_params(b1, t);
                let (d2, k2, p2) = other.gaussian_params(b2, t);
                let s = self.length;
                let re = -(d2 - d1).powi(2) / (4.0 * s * s) - (k2 - k1).powi(2) * s * s / 4.0;
                let im = 0.5 * (k2 * d1 - k1 * d2);
                p1.conj() * p2 * C64::new(re, im).exp()
            }
            _ => {
                let (lo, hi) = self.quadrature_span(other, t);
                simpson_c(|x| self.evaluate(x, t).conj() * other.evaluate(x, t), lo, hi, 8000)
            }
        }
    }

    /// ∫|self||other| dx at time `t`.
    pub fn modulus_overlap(&self, other: &BoxState, t: f64) -> f64 {
        if let (BoxKind::DisplacedGaussian { displacement: b1 }, BoxKind::DisplacedGaussian { displacement: b2 }) =
            (self.kind, other.kind)
        {
            if self.length == other.length {
                let (d1, _, _) = self.gaussian_params(b1, t);
                let (d2, _, _) = other.gaussian_params(b2, t);
                return (-(d2 - d1).powi(2) / (4.0 * self.length * self.length)).exp();
            }
        }
        let (lo, hi) = self.quadrature_span(other, t);
        simpson(|x| self.evaluate(x, t).norm() * other.evaluate(x, t).norm(), lo, hi, 8000)
    }

    fn quadrature_span(&self, other: &BoxState, t: f64) -> (f64, f64) {
        let (a0, a1) = self.support(t);
        let (b0, b1) = other.support(t);
        (a0.max(b0), a1.min(b1).max(a0.max(b0)))
    }

    /// Draw from |factor|²: rejection for wells, exact normal for Gaussians.
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        match self.kind {
            BoxKind::Well { n } => {
                let k = n as f64 * PI / self.length;
                loop {
                    let x = rng.random::<f64>() * self.length;
                    let s = (k * x).sin();
                    if rng.random::<f64>() < s * s {
                        return x;
                    }
                }
            }
            BoxKind::DisplacedGaussian { displacement } => {
                let (delta, _, _) = self.gaussian_params(displacement, t);
                let n: f64 = StandardNormal.sample(rng);
                delta + n * self.length / 2f64.sqrt()
            }
        }
    }

    /// Mean position of |factor|² at time `t`.
    pub fn mean_position(&self, t: f64) -> f64 {
        match self.kind {
            BoxKind::Well { .. } => 0.5 * self.length,
            BoxKind::DisplacedGaussian { displacement } => self.gaussian_params(displacement, t).0,
        }
    }
}

/// A point of configuration space: atom `(x, z)` followed by auxiliary coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfigPoint {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl ConfigPoint {
    pub fn new(atom: [f64; 2], aux: &[f64]) -> Self {
        assert!(aux.len() + 2 <= MAX_DIM, "at most {} auxiliary coordinates", MAX_DIM - 2);
        let mut coords = [0.0; MAX_DIM];
        coords[..2].copy_from_slice(&atom);
        coords[2..2 + aux.len()].copy_from_slice(aux);
        Self {
            coords,
            dim: 2 + aux.len(),
        }
    }

    pub fn from_slice(c: &[f64]) -> Result<Self> {
        if c.len() < 2 || c.len() > MAX_DIM {
            return Err(Error::invalid(format!("configuration points have 2..={MAX_DIM} coordinates, got {}", c.len())));
        }
        Ok(Self::new([c[0], c[1]], &c[2..]))
    }

    pub fn atom(&self) -> [f64; 2] {
        [self.coords[0], self.coords[1]]
    }
    pub fn x(&self) -> f64 {
        self.coords[0]
    }
    pub fn z(&self) -> f64 {
        self.coords[1]
    }
    pub fn aux(&self) -> &[f64] {
        &self.coords[2..self.dim]
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }
    pub fn get(&self, i: usize) -> f64 {
        self.coords[i]
    }
    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(i < self.dim);
        self.coords[i] = v;
    }

    /// Copy with coordinate `i` shifted by `h`.
    pub fn shifted(&self, i: usize, h: f64) -> Self {
        let mut p = *self;
        p.coords[i] += h;
        p
    }

    /// `self + s·dir` over the active coordinates.
    pub fn axpy(&self, s: f64, dir: &[f64; MAX_DIM]) -> Self {
        let mut p = *self;
        for i in 0..self.dim {
            p.coords[i] += s * dir[i];
        }
        p
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// A coordinate block: the atom plane or one auxiliary coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    Atom,
    Aux(usize),
}

impl Block {
    /// Indices of the configuration coordinates belonging to the block.
    pub fn coords(self) -> std::ops::Range<usize> {
        match self {
            Block::Atom => 0..2,
            Block::Aux(k) => 2 + k..3 + k,
        }
    }
}

/// One product term: coefficient × atom packet × device factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub atom: GaussianPacket,
    pub factors: Vec<BoxState>,
    pub coefficient: C64,
}

impl Branch {
    pub fn new(atom: GaussianPacket, factors: Vec<BoxState>, coefficient: C64) -> Self {
        Self {
            atom,
            factors,
            coefficient,
        }
    }

    /// Value and gradient over all configuration coordinates.
    #[inline]
    fn amplitude(&self, q: &ConfigPoint, t: f64) -> Result<Amplitude> {
        let (psi, g) = self.atom.value_and_gradient(q.atom(), t)?;
        let c = self.coefficient;
        let mut out = Amplitude::zero(q.dim());
        match self.factors.as_slice() {
            [] => {
                out.value = c * psi;
                out.grad[0] = c * g[0];
                out.grad[1] = c * g[1];
            }
            [f] => {
                let (v, d) = f.value_and_derivative(q.aux()[0], t);
                let cv = c * v;
                out.value = cv * psi;
                out.grad[0] = cv * g[0];
                out.grad[1] = cv * g[1];
                out.grad[2] = c * psi * d;
            }
            factors => {
                let k = factors.len();
                let mut fv = [C64::new(0.0, 0.0); MAX_DIM - 2];
                let mut fd = [C64::new(0.0, 0.0); MAX_DIM - 2];
                let mut prod = C64::new(1.0, 0.0);
                for (i, f) in factors.iter().enumerate() {
                    let (v, d) = f.value_and_derivative(q.aux()[i], t);
                    fv[i] = v;
                    fd[i] = d;
                    prod *= v;
                }
                out.value = c * psi * prod;
                out.grad[0] = c * g[0] * prod;
                out.grad[1] = c * g[1] * prod;
                for i in 0..k {
                    let mut others = C64::new(1.0, 0.0);
                    for (j, v) in fv.iter().enumerate().take(k) {
                        if j != i {
                            others *= v;
                        }
                    }
                    out.grad[2 + i] = c * psi * fd[i] * others;
                }
            }
        }
        Ok(out)
    }

    /// Modulus of the device-factor product at the auxiliary coordinates of `q`.
    fn aux_weight(&self, q: &ConfigPoint, t: f64) -> f64 {
        self.factors
            .iter()
            .zip(q.aux())
            .map(|(f, &x)| f.evaluate(x, t).norm())
            .product()
    }

    /// ⟨self|other⟩ over the full configuration space.
    pub fn overlap(&self, other: &Branch, t: f64) -> C64 {
        let aux: C64 = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| a.overlap(b, t))
            .product();
        self.coefficient.conj() * other.coefficient * self.atom.overlap(&other.atom) * aux
    }

    /// ∫|self||other| over configuration space at time `t`, coefficients excluded.
    pub fn modulus_overlap(&self, other: &Branch, t: f64) -> f64 {
        let aux: f64 = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| a.modulus_overlap(b, t))
            .product();
        self.atom.modulus_overlap(&other.atom, t) * aux
    }
}

/// Wavefunction value with its gradient over all active coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Amplitude {
    pub value: C64,
    pub grad: [C64; MAX_DIM],
    pub dim: usize,
}

impl Amplitude {
    fn zero(dim: usize) -> Self {
        Self {
            value: C64::new(0.0, 0.0),
            grad: [C64::new(0.0, 0.0); MAX_DIM],
            dim,
        }
    }

    fn add(&mut self, other: &Amplitude) {
        self.value += other.value;
        for i in 0..self.dim {
            self.grad[i] += other.grad[i];
        }
    }
}

/// How the state is evaluated when auxiliary supports separate the branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Coherent sum over all branches.
    Coherent,
    /// Evaluate only the branch whose device factors dominate at the query point.
    /// Valid when the branches' auxiliary supports are disjoint.
    Exact,
}

/// A normalized sum of branches over (r_a, aux_1, …, aux_k).
#[derive(Clone, Debug, PartialEq)]
pub struct EntangledState {
    branches: Vec<Branch>,
    aux_names: Vec<String>,
    selection: Selection,
    /// Per-branch `ln` of the coefficient times the peak device factor
    /// moduli. `None` when the atom packets do not share one family.
    log_bounds: Option<Vec<f64>>,
}

/// Branches whose envelope bound sits this many e-folds below the largest
/// one contribute below double precision and are skipped.
const CULL_MARGIN: f64 = 80.0;
const MAX_CULLED_BRANCHES: usize = 8;

/// Overlap threshold below which two supports count as disjoint.
pub const DISJOINT_THRESHOLD: f64 = 1e-12;

impl EntangledState {
    /// Build and validate a state. The norm (from analytic branch overlaps) must be 1 within 1e-9.
    pub fn new(branches: Vec<Branch>, aux_names: Vec<String>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::invalid("a state needs at least one branch"));
        }
        let k = aux_names.len();
        if k + 2 > MAX_DIM {
            return Err(Error::UnsupportedLayout(format!("{k} auxiliary coordinates exceed the maximum of {}", MAX_DIM - 2)));
        }
        for (i, b) in branches.iter().enumerate() {
            if b.factors.len() != k {
                return Err(Error::invalid(format!(
                    "branch {i} has {} device factors but the layout has {k} auxiliary coordinates",
                    b.factors.len()
                )));
            }
            for (j, f) in b.factors.iter().enumerate() {
                if f.mass != branches[0].factors[j].mass {
                    return Err(Error::invalid(format!("auxiliary coordinate {j} has inconsistent masses across branches")));
                }
            }
            if b.atom.mass != branches[0].atom.mass {
                return Err(Error::invalid("atom packets must share one mass"));
            }
        }
        let same_family = branches.iter().all(|b| b.atom.same_family(&branches[0].atom));
        let log_bounds = (same_family && branches.len() <= MAX_CULLED_BRANCHES).then(|| {
            branches
                .iter()
                .map(|b| {
                    let aux: f64 = b.factors.iter().map(|f| f.max_modulus().ln()).sum();
                    (b.coefficient * b.atom.amplitude).norm().ln() + aux
                })
                .collect()
        });
        let state = Self {
            branches,
            aux_names,
            selection: Selection::Coherent,
            log_bounds,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("state norm is {norm}, expected 1")));
        }
        Ok(state)
    }

    /// Enable exact branch selection. Fails unless the auxiliary factors of
    /// every branch pair are disjoint at `t`.
    pub fn with_exact_selection(mut self, t: f64) -> Result<Self> {
        if !self.aux_disjoint(t) {
            return Err(Error::invalid("branch selection needs disjoint auxiliary supports"));
        }
        self.selection = Selection::Exact;
        Ok(self)
    }

    /// True when every pair of branches has auxiliary modulus overlap below
    /// [`DISJOINT_THRESHOLD`].
    pub fn aux_disjoint(&self, t: f64) -> bool {
        if self.aux_names.is_empty() {
            return self.branches.len() == 1;
        }
        for i in 0..self.branches.len() {
            for j in i + 1..self.branches.len() {
                let ov: f64 = self.branches[i]
                    .factors
                    .iter()
                    .zip(&self.branches[j].factors)
                    .map(|(a, b)| a.modulus_overlap(b, t))
                    .product();
                if ov >= DISJOINT_THRESHOLD {
                    return false;
                }
            }
        }
        true
    }

    /// True when every branch pair has configuration-space modulus overlap below
    /// [`DISJOINT_THRESHOLD`], so |Ψ|² is a plain mixture of branch densities.
    pub fn branches_disjoint(&self, t: f64) -> bool {
        for i in 0..self.branches.len() {
            for j in i + 1..self.branches.len() {
                if self.branches[i].modulus_overlap(&self.branches[j], t) >= DISJOINT_THRESHOLD {
                    return false;
                }
            }
        }
        true
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }
    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }
    pub fn aux_count(&self) -> usize {
        self.aux_names.len()
    }
    pub fn dim(&self) -> usize {
        2 + self.aux_names.len()
    }
    pub fn selection(&self) -> Selection {
        self.selection
    }
    pub fn atom_mass(&self) -> f64 {
        self.branches[0].atom.mass
    }

    pub fn block_mass(&self, block: Block) -> f64 {
        match block {
            Block::Atom => self.atom_mass(),
            Block::Aux(k) => self.branches[0].factors[k].mass,
        }
    }

    pub fn blocks(&self) -> Vec<Block> {
        std::iter::once(Block::Atom).chain((0..self.aux_count()).map(Block::Aux)).collect()
    }

    /// Latest packet birth time; the state is defined for t at or after it.
    pub fn t_min(&self) -> f64 {
        self.branches.iter().map(|b| b.atom.t0).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gram matrix ⟨b_i|b_j⟩ including coefficients.
    pub fn gram(&self, t: f64) -> Vec<Vec<C64>> {
        let n = self.branches.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.branches[i].overlap(&self.branches[j], t)).collect())
            .collect()
    }

    /// ∫|Ψ|² from analytic branch overlaps (time independent for static factors).
    pub fn norm(&self) -> f64 {
        let t = self.t_min();
        self.gram(t).iter().flatten().map(|c| c.re).sum()
    }

    pub fn check_layout(&self, q: &ConfigPoint) -> Result<()> {
        if q.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "configuration point has {} coordinates, state layout needs {}",
                q.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Index of the branch carrying the largest device-factor weight at `q`.
    pub fn dominant_branch(&self, q: &ConfigPoint, t: f64) -> usize {
        let mut best = 0;
        let mut w_best = f64::NEG_INFINITY;
        for (i, b) in self.branches.iter().enumerate() {
            let w = b.aux_weight(q, t) * b.coefficient.norm();
            if w > w_best {
                best = i;
                w_best = w;
            }
        }
        best
    }

    /// Index of the branch with the largest |value| at `q`.
    pub fn occupied_branch(&self, q: &ConfigPoint, t: f64) -> Result<usize> {
        self.check_layout(q)?;
        let mut best = 0;
        let mut w_best = f64::NEG_INFINITY;
        for (i, b) in self.branches.iter().enumerate() {
            let w = b.amplitude(q, t)?.value.norm();
            if w > w_best {
                best = i;
                w_best = w;
            }
        }
        Ok(best)
    }

    /// Value and full gradient at `q`, honouring branch selection.
    #[inline]
    pub fn amplitude(&self, q: &ConfigPoint, t: f64) -> Result<Amplitude> {
        self.check_layout(q)?;
        match self.selection {
            Selection::Exact if self.branches.len() > 1 => {
                let i = self.dominant_branch(q, t);
                self.branches[i].amplitude(q, t)
            }
            _ => {
                let mut acc = Amplitude::zero(q.dim());
                if let (Some(bounds), true) = (&self.log_bounds, self.branches.len() > 1) {
                    let mut score = [f64::NEG_INFINITY; MAX_CULLED_BRANCHES];
                    let mut best = f64::NEG_INFINITY;
                    for (j, b) in self.branches.iter().enumerate() {
                        score[j] = bounds[j] + b.atom.log_envelope(q.atom(), t)?;
                        best = best.max(score[j]);
                    }
                    for (j, b) in self.branches.iter().enumerate() {
                        if score[j] >= best - CULL_MARGIN {
                            acc.add(&b.amplitude(q, t)?);
                        }
                    }
                    return Ok(acc);
                }
                for b in &self.branches {
                    acc.add(&b.amplitude(q, t)?);
                }
                Ok(acc)
            }
        }
    }

    pub fn evaluate(&self, q: &ConfigPoint, t: f64) -> Result<C64> {
        Ok(self.amplitude(q, t)?.value)
    }

    /// Gradient restricted to one coordinate block.
    pub fn grad_block(&self, q: &ConfigPoint, t: f64, block: Block) -> Result<Vec<C64>> {
        if let Block::Aux(k) = block {
            if k >= self.aux_count() {
                return Err(Error::invalid(format!("state has no auxiliary coordinate {k}")));
            }
        }
        let a = self.amplitude(q, t)?;
        Ok(block.coords().map(|i| a.grad[i]).collect())
    }

    /// Pairwise device-factor overlap matrix `S_ij = Π_k ⟨f_ik|f_jk⟩`.
    pub fn aux_overlaps(&self, t: f64) -> Vec<Vec<C64>> {
        let n = self.branches.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        self.branches[i]
                            .factors
                            .iter()
                            .zip(&self.branches[j].factors)
                            .map(|(a, b)| a.overlap(b, t))
                            .product()
                    })
                    .collect()
            })
            .collect()
    }

    /// Atom-plane marginal ∫|Ψ|² d(aux) at `r_a`.
    pub fn marginal_density(&self, r_a: [f64; 2], t: f64) -> Result<f64> {
        let s = self.aux_overlaps(t);
        self.marginal_density_with(&s, r_a, t)
    }

    /// As [`Self::marginal_density`] with a precomputed overlap matrix.
    pub fn marginal_density_with(&self, s: &[Vec<C64>], r_a: [f64; 2], t: f64) -> Result<f64> {
        let vals: Vec<C64> = self
            .branches
            .iter()
            .map(|b| Ok(b.coefficient * b.atom.evaluate(r_a, t)?))
            .collect::<Result<_>>()?;
        let mut acc = 0.0;
        for i in 0..vals.len() {
            acc += vals[i].norm_sqr() * s[i][i].re;
            for j in i + 1..vals.len() {
                acc += 2.0 * (vals[i].conj() * vals[j] * s[i][j]).re;
            }
        }
        Ok(acc)
    }
}
