//! Small composite quadrature helpers shared by overlap and flux integrals.

use num_complex::Complex64 as C64;

/// Composite Simpson rule on `[a, b]` with `n` intervals (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2) + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Complex-valued version of [`simpson`].
pub fn simpson_c<F: FnMut(f64) -> C64>(mut f: F, a: f64, b: f64, n: usize) -> C64 {
    let n = n.max(2) + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + h * i as f64) * w;
    }
    acc * (h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 4);
        // integral = [x^4/4 - x^2 + x] from -1 to 3
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn odd_interval_count_is_rounded_up() {
        let v = simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 201);
        assert!((v - 2.0).abs() < 1e-8);
    }
}
