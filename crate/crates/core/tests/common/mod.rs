//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the crate's field code: wavefunctions are written
//! out again from their textbook forms so a shared mistake cannot hide.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Free 2D Gaussian packet of width `s0` launched at `c0` with velocity `v` at t = 0.
#[derive(Clone, Copy, Debug)]
pub struct Packet {
    pub c0: [f64; 2],
    pub v: [f64; 2],
    pub s0: f64,
    pub m: f64,
}

impl Packet {
    pub fn psi(&self, r: [f64; 2], t: f64) -> C64 {
        let i = C64::i();
        let a = C64::new(self.s0 * self.s0, t / (2.0 * self.m));
        let mut expo = -i * self.m * (self.v[0] * self.v[0] + self.v[1] * self.v[1]) * t / 2.0;
        for d in 0..2 {
            let dx = r[d] - self.c0[d] - self.v[d] * t;
            expo += -dx * dx / (4.0 * a) + i * self.m * self.v[d] * (r[d] - self.c0[d]);
        }
        (self.s0 * self.s0 / a) / (2.0 * PI * self.s0 * self.s0).sqrt() * expo.exp()
    }

    pub fn mirrored(&self) -> Self {
        Self {
            c0: [self.c0[0], -self.c0[1]],
            v: [self.v[0], -self.v[1]],
            ..*self
        }
    }
}

/// Harmonic-oscillator eigenfunctions of length scale `s` (n = 0, 1).
pub fn hermite(n: u32, x: f64, s: f64) -> f64 {
    let g = (PI * s * s).powf(-0.25) * (-x * x / (2.0 * s * s)).exp();
    match n {
        0 => g,
        1 => g * 2f64.sqrt() * x / s,
        _ => panic!("only the two lowest levels are needed"),
    }
}

/// Infinite-well eigenfunction on [0, L].
pub fn well(n: u32, x: f64, l: f64) -> f64 {
    if !(0.0..=l).contains(&x) {
        return 0.0;
    }
    (2.0 / l).sqrt() * (n as f64 * PI * x / l).sin()
}

/// Composite Simpson rule with `n` (made even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Fourth-order central difference.
pub fn d4(f: impl Fn(f64) -> C64, x: f64, h: f64) -> C64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// The default interferometer arms: θ = 0.05, separation 200, speed 100, σ0 = 10, m = 1.
pub fn default_arms() -> (Packet, Packet) {
    let (theta, sep, speed, s0) = (0.05f64, 200.0, 100.0, 10.0);
    let v = [speed * theta.cos(), speed * theta.sin()];
    let p1 = Packet {
        c0: [0.0, -sep / 2.0],
        v,
        s0,
        m: 1.0,
    };
    (p1, p1.mirrored())
}

/// Net flux ∫∫ j_z(x, 0, r_b) dx dr_b for `(ψ1 η0 + ψ2 η1)/√2`, with device
/// states built as `η0 = h0` and `η1 = α h0 + √(1-|α|²) h1`, so `⟨η0|η1⟩ = α`.
/// Brute force in both variables with a numerical z-derivative.
pub fn overlap_device_flux(alpha: C64, t: f64) -> f64 {
    let (p1, p2) = default_arms();
    let s = 1.0;
    let beta = (1.0 - alpha.norm_sqr()).max(0.0).sqrt();
    let psi = |x: f64, z: f64, rb: f64| {
        let e0 = hermite(0, rb, s);
        let e1 = alpha * e0 + beta * hermite(1, rb, s);
        (p1.psi([x, z], t) * e0 + p2.psi([x, z], t) * e1) / 2f64.sqrt()
    };
    let xc = p1.c0[0] + p1.v[0] * t;
    let w = p1.s0 * (1.0 + (t / (2.0 * p1.s0 * p1.s0)).powi(2)).sqrt();
    let jz = |x: f64, rb: f64| {
        let v = psi(x, 0.0, rb);
        let dz = d4(|z| psi(x, z, rb), 0.0, 1e-3);
        (v.conj() * dz).im
    };
    simpson(
        |x| simpson(|rb| jz(x, rb), -12.0 * s, 12.0 * s, 600),
        xc - 12.0 * w,
        xc + 12.0 * w,
        3000,
    )
}
