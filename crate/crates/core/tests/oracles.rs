mod common;

use std::f64::consts::PI;

use bohmflow::analysis::{plane_flux, PlaneGrid};
use bohmflow::dynamics::{integrate_trajectory, sample_ensemble, EnsembleSpec, SamplerKind, TrajectoryOptions};
use bohmflow::fields::{current_all, density, quantum_potential_total, velocity_all};
use bohmflow::scenarios::{build_no_device, build_overlap_device, Geometry, OverlapSpec};
use bohmflow::wavepacket::{ConfigPoint, GaussianPacket};
use common::{d4, default_arms, simpson, Packet};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn no_device_oracle(r: [f64; 2], t: f64) -> C64 {
    let (p1, p2) = default_arms();
    (p1.psi(r, t) + p2.psi(r, t)) / 2f64.sqrt()
}

#[test]
fn packet_matches_closed_form_oracle() {
    let p = Packet {
        c0: [3.0, -7.0],
        v: [40.0, 2.5],
        s0: 4.0,
        m: 1.3,
    };
    let g = GaussianPacket::new(p.c0, p.v, p.s0, 0.0, p.m).unwrap();
    for &t in &[0.0, 0.7, 5.0, 31.0] {
        let c = g.center(t);
        for (dx, dz) in [(0.0, 0.0), (3.0, -2.0), (-6.5, 8.0)] {
            let r = [c[0] + dx, c[1] + dz];
            let (a, b) = (g.evaluate(r, t).unwrap(), p.psi(r, t));
            // Phases reach 3e4 rad, so both sides carry rounding near 1e-12.
            assert!((a - b).norm() < 1e-10 * b.norm().max(1e-3), "t={t} r={r:?}: {a} vs {b}");
        }
    }
}

/// 2D FFT of a row-major `n × n` array, applied to rows then columns.
fn fft2(data: &mut [C64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = data[i * n + j];
        }
        fft.process(&mut col);
        for i in 0..n {
            data[i * n + j] = col[i];
        }
    }
}

#[test]
fn free_evolution_matches_spectral_propagation() {
    // A free packet is propagated exactly in momentum space on a periodic grid.
    // The box is wide enough that the spread packet never wraps around.
    let (n, half, m, t) = (192usize, 24.0, 1.0, 3.0);
    let dx = 2.0 * half / n as f64;
    let g = GaussianPacket::new([-4.0, 2.0], [2.0, -1.0], 1.0, 0.0, m).unwrap();
    let coord = |i: usize| -half + i as f64 * dx;
    let mut psi: Vec<C64> = (0..n * n)
        .map(|k| g.evaluate([coord(k / n), coord(k % n)], 0.0).unwrap())
        .collect();
    fft2(&mut psi, n, false);
    let wavenumber = |i: usize| {
        let j = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
        2.0 * PI * j / (n as f64 * dx)
    };
    for (k, v) in psi.iter_mut().enumerate() {
        let (kx, kz) = (wavenumber(k / n), wavenumber(k % n));
        *v *= C64::from_polar(1.0, -(kx * kx + kz * kz) * t / (2.0 * m));
    }
    fft2(&mut psi, n, true);
    let scale = 1.0 / (n * n) as f64;
    let mut worst: f64 = 0.0;
    for (k, v) in psi.iter().enumerate() {
        let exact = g.evaluate([coord(k / n), coord(k % n)], t).unwrap();
        worst = worst.max((v * scale - exact).norm());
    }
    assert!(worst < 1e-9, "spectral and closed-form evolution differ by {worst:e}");
}

#[test]
fn velocity_and_current_match_finite_difference_oracle() {
    let s = build_no_device(&Geometry::default()).unwrap();
    let state = s.pure_state().unwrap();
    let t = s.window.t_cross + 1.3;
    let c = state.branches()[0].atom.center(t);
    for (dx, z) in [(0.0, 0.1), (4.0, -3.3), (-7.0, 6.05), (2.0, 12.0)] {
        let r = [c[0] + dx, z];
        let q = ConfigPoint::new(r, &[]);
        let psi = no_device_oracle(r, t);
        let gx = d4(|x| no_device_oracle([x, r[1]], t), r[0], 1e-4);
        let gz = d4(|z| no_device_oracle([r[0], z], t), r[1], 1e-4);
        let p = psi.norm_sqr();
        let j = [(psi.conj() * gx).im, (psi.conj() * gz).im];
        let v = velocity_all(state, &q, t).unwrap();
        let jl = current_all(state, &q, t).unwrap();
        // Packet phases near 1e5 rad limit both sides to about 1e-11 relative.
        let pl = density(state, &q, t).unwrap();
        assert!((pl - p).abs() < 1e-9 * p, "P at {r:?}: {pl} vs {p}");
        for d in 0..2 {
            let scale = j[d].abs().max(1e-6 * p * 100.0);
            assert!((jl[d] - j[d]).abs() < 1e-6 * scale, "j[{d}] at {r:?}: {} vs {}", jl[d], j[d]);
            assert!((v[d] - j[d] / p).abs() < 1e-6 * (j[d] / p).abs().max(1.0), "v[{d}] at {r:?}");
        }
    }
}

#[test]
fn quantum_potential_matches_second_difference_oracle() {
    let s = build_no_device(&Geometry::default()).unwrap();
    let state = s.pure_state().unwrap();
    let t = s.window.t_cross - 2.0;
    let c = state.branches()[0].atom.center(t);
    let h = 1e-3;
    for (dx, z) in [(1.0, 0.2), (-5.0, 3.0)] {
        let r = [c[0] + dx, z];
        let amp = |x: f64, z: f64| no_device_oracle([x, z], t).norm();
        let a = amp(r[0], r[1]);
        let lap = (amp(r[0] + h, r[1]) + amp(r[0] - h, r[1]) + amp(r[0], r[1] + h) + amp(r[0], r[1] - h) - 4.0 * a)
            / (h * h);
        let oracle = -lap / (2.0 * a);
        let q = quantum_potential_total(state, &ConfigPoint::new(r, &[]), t).unwrap();
        assert!((q - oracle).abs() < 1e-3 * oracle.abs().max(1.0), "Q at {r:?}: {q} vs {oracle}");
    }
}

#[test]
fn plane_flux_matches_brute_force_oracle() {
    let alpha = C64::new(0.3, 0.4);
    let s = build_overlap_device(
        &Geometry::default(),
        &OverlapSpec {
            alpha,
            ..Default::default()
        },
    )
    .unwrap();
    let t = 0.5 * (s.window.t_in + s.window.t_cross);
    let f = plane_flux(&s, t, &PlaneGrid::covering(&s, t)).unwrap();
    let oracle = common::overlap_device_flux(alpha, t);
    assert!((f - oracle).abs() < 1e-6 * oracle.abs(), "{f:e} vs {oracle:e}");
}

#[test]
fn rejection_sampler_passes_chi_square_against_oracle_density() {
    // Inside the overlap region the two branches interfere, so exact sampling
    // must reproduce the fringed density rather than the branch mixture.
    let s = build_no_device(&Geometry::default()).unwrap();
    let state = s.pure_state().unwrap();
    let t = s.window.t_cross - 1.0;
    let n = 40_000;
    let spec = EnsembleSpec {
        sampler: Some(SamplerKind::Rejection),
        ..EnsembleSpec::new(n, 77)
    };
    let pts = sample_ensemble(state, &spec, t).unwrap();

    let (nb, c, w) = (20usize, state.branches()[0].atom.center(t), state.branches()[0].atom.width(t));
    let (x0, x1) = (c[0] - 3.0 * w, c[0] + 3.0 * w);
    let (z0, z1) = (-3.0 * w, 3.0 * w);
    // Bins are narrower than a fringe in neither direction, so integrate each
    // bin's oracle mass on a fine grid.
    let bx = (x1 - x0) / nb as f64;
    let bz = (z1 - z0) / nb as f64;
    let mut expected = vec![0.0; nb * nb];
    for i in 0..nb {
        for k in 0..nb {
            let (xa, za) = (x0 + i as f64 * bx, z0 + k as f64 * bz);
            expected[i * nb + k] = n as f64
                * simpson(
                    |x| simpson(|z| no_device_oracle([x, z], t).norm_sqr(), za, za + bz, 80),
                    xa,
                    xa + bx,
                    16,
                );
        }
    }
    let mut observed = vec![0.0; nb * nb];
    for p in &pts {
        let (x, z) = (p.x(), p.z());
        if x >= x0 && x < x1 && z >= z0 && z < z1 {
            let i = ((x - x0) / bx) as usize;
            let k = ((z - z0) / bz) as usize;
            observed[i.min(nb - 1) * nb + k.min(nb - 1)] += 1.0;
        }
    }
    // Pool sparse bins so every cell expects at least five counts.
    let (mut chi2, mut dof) = (0.0, 0usize);
    let (mut pool_e, mut pool_o) = (0.0, 0.0);
    for (e, o) in expected.iter().zip(&observed) {
        if *e >= 5.0 {
            chi2 += (o - e).powi(2) / e;
            dof += 1;
        } else {
            pool_e += e;
            pool_o += o;
        }
    }
    let outside_e = n as f64 - expected.iter().sum::<f64>() + pool_e;
    let outside_o = n as f64 - observed.iter().sum::<f64>() + pool_o;
    chi2 += (outside_o - outside_e).powi(2) / outside_e;
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(chi2);
    assert!(dof > 200, "too few populated bins: {dof}");
    assert!(p > 1e-3, "chi2 = {chi2:.1} on {dof} dof, p = {p:e}");
}

#[test]
fn rk4_error_falls_by_sixteen_when_the_step_halves() {
    // Narrow packets give smooth flight before overlap, where RK4 shows its order.
    let g = Geometry {
        sigma0: 1.0,
        ..Geometry::default()
    };
    let s = build_no_device(&g).unwrap();
    let state = s.pure_state().unwrap();
    let t_end = 0.5 * s.window.t_in;
    let opts = TrajectoryOptions {
        record_stride: usize::MAX,
        refine_tolerance: None,
        ..Default::default()
    };
    let end = |q0: &ConfigPoint, dt: f64| integrate_trajectory(state, q0.clone(), 0.0, t_end, dt, &opts).unwrap();
    for q0 in [ConfigPoint::new([0.7, -100.4], &[]), ConfigPoint::new([-1.1, 101.3], &[])] {
        let reference = end(&q0, 0.000625).last().q.clone();
        let e1 = end(&q0, 0.08).last().q.distance(&reference);
        let e2 = end(&q0, 0.04).last().q.distance(&reference);
        let ratio = e1 / e2;
        assert!((14.0..18.0).contains(&ratio), "error ratio {ratio} (errors {e1:e}, {e2:e})");
    }
}
