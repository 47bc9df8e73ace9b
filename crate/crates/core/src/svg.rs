//! Minimal native SVG figures: heatmaps, polylines and streamlines on a
//! shared data frame with axis labels. Diagnostic lookalikes, not publication
//! graphics.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 50.0;

/// A plot frame mapping a data rectangle onto the canvas.
pub struct Figure {
    x: (f64, f64),
    y: (f64, f64),
    title: String,
    xlabel: String,
    ylabel: String,
    body: String,
}

/// Sequential colour map from dark blue through teal to yellow.
pub fn colormap(u: f64) -> (u8, u8, u8) {
    const STOPS: [(f64, f64, f64); 5] = [
        (0.07, 0.04, 0.33),
        (0.23, 0.32, 0.55),
        (0.13, 0.57, 0.55),
        (0.37, 0.79, 0.38),
        (0.99, 0.91, 0.14),
    ];
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let s = u * (STOPS.len() - 1) as f64;
    let i = (s.floor() as usize).min(STOPS.len() - 2);
    let f = s - i as f64;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    let mix = |p: f64, q: f64| ((p + (q - p) * f) * 255.0).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Figure {
    pub fn new(x: (f64, f64), y: (f64, f64), title: &str, xlabel: &str, ylabel: &str) -> Self {
        let widen = |r: (f64, f64)| if r.1 > r.0 { r } else { (r.0 - 0.5, r.0 + 0.5) };
        Self {
            x: widen(x),
            y: widen(y),
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }

    /// Cell-centred heatmap of `values[iz * nx + ix]`. Non-finite cells are
    /// drawn grey so degenerate points stay visible instead of being filled in.
    pub fn heatmap(&mut self, nx: usize, nz: usize, values: &[f64]) -> &mut Self {
        let finite = values.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let dx = (self.x.1 - self.x.0) / nx as f64;
        let dy = (self.y.1 - self.y.0) / nz as f64;
        for iz in 0..nz {
            for ix in 0..nx {
                let v = values[iz * nx + ix];
                let fill = if v.is_finite() {
                    let (r, g, b) = colormap((v - lo) / span);
                    format!("#{r:02x}{g:02x}{b:02x}")
                } else {
                    "#9a9a9a".to_string()
                };
                let x0 = self.px(self.x.0 + ix as f64 * dx);
                let x1 = self.px(self.x.0 + (ix + 1) as f64 * dx);
                let y0 = self.py(self.y.0 + (iz + 1) as f64 * dy);
                let y1 = self.py(self.y.0 + iz as f64 * dy);
                let _ = writeln!(
                    self.body,
                    r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    x1 - x0 + 0.3,
                    y1 - y0 + 0.3
                );
            }
        }
        self
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], colour: &str, width: f64) -> &mut Self {
        if points.len() < 2 {
            return self;
        }
        let mut d = String::new();
        for (k, (x, y)) in points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { "M" } else { "L" }, self.px(*x), self.py(*y));
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{}" fill="none" stroke="{colour}" stroke-width="{width}" stroke-opacity="0.8"/>"#,
            d.trim_end()
        );
        self
    }

    /// Streamlines of a gridded vector field, traced both ways from a regular
    /// set of seeds with midpoint steps through bilinear interpolation.
    pub fn streamlines(&mut self, nx: usize, nz: usize, u: &[f64], w: &[f64], colour: &str) -> &mut Self {
        let at = |f: &[f64], gx: f64, gz: f64| -> f64 {
            let ix = (gx.floor() as usize).min(nx - 2);
            let iz = (gz.floor() as usize).min(nz - 2);
            let (fx, fz) = (gx - ix as f64, gz - iz as f64);
            let v = |a: usize, b: usize| f[b * nx + a];
            (1.0 - fx) * (1.0 - fz) * v(ix, iz)
                + fx * (1.0 - fz) * v(ix + 1, iz)
                + (1.0 - fx) * fz * v(ix, iz + 1)
                + fx * fz * v(ix + 1, iz + 1)
        };
        // Work in grid-index space so both axes have unit spacing.
        let sx = (self.x.1 - self.x.0) / (nx - 1) as f64;
        let sz = (self.y.1 - self.y.0) / (nz - 1) as f64;
        let dir = |gx: f64, gz: f64| -> Option<(f64, f64)> {
            let (a, b) = (at(u, gx, gz) / sx, at(w, gx, gz) / sz);
            let n = a.hypot(b);
            (n.is_finite() && n > 0.0).then(|| (a / n, b / n))
        };
        let inside = |gx: f64, gz: f64| gx >= 0.0 && gz >= 0.0 && gx <= (nx - 1) as f64 && gz <= (nz - 1) as f64;
        let seeds = 12;
        for i in 0..seeds {
            for k in 0..seeds {
                let gx0 = (i as f64 + 0.5) / seeds as f64 * (nx - 1) as f64;
                let gz0 = (k as f64 + 0.5) / seeds as f64 * (nz - 1) as f64;
                let mut line = Vec::new();
                for sign in [-1.0, 1.0] {
                    let (mut gx, mut gz) = (gx0, gz0);
                    let mut half = Vec::new();
                    for _ in 0..(2 * nx.max(nz)) {
                        let Some((a, b)) = dir(gx, gz) else { break };
                        let (mx, mz) = (gx + 0.25 * sign * a, gz + 0.25 * sign * b);
                        if !inside(mx, mz) {
                            break;
                        }
                        let Some((a, b)) = dir(mx, mz) else { break };
                        let (nxp, nzp) = (gx + 0.5 * sign * a, gz + 0.5 * sign * b);
                        if !inside(nxp, nzp) {
                            break;
                        }
                        gx = nxp;
                        gz = nzp;
                        half.push((self.x.0 + gx * sx, self.y.0 + gz * sz));
                    }
                    if sign < 0.0 {
                        half.reverse();
                        line.extend(half);
                        line.push((self.x.0 + gx0 * sx, self.y.0 + gz0 * sz));
                    } else {
                        line.extend(half);
                    }
                }
                self.polyline(&line, colour, 0.8);
            }
        }
        self
    }

    fn ticks(lo: f64, hi: f64) -> Vec<f64> {
        let raw = (hi - lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut t = (lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= hi + 1e-9 * step {
            out.push(t);
            t += step;
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        s += &self.body;
        let (l, r, t, b) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
        let _ = writeln!(
            s,
            r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for x in Self::ticks(self.x.0, self.x.1) {
            let p = self.px(x);
            let _ = writeln!(
                s,
                r#"<line x1="{p:.2}" y1="{b}" x2="{p:.2}" y2="{}" stroke="black"/><text x="{p:.2}" y="{}" text-anchor="middle">{}</text>"#,
                b + 5.0,
                b + 18.0,
                format_tick(x)
            );
        }
        for y in Self::ticks(self.y.0, self.y.1) {
            let p = self.py(y);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{p:.2}" x2="{l}" y2="{p:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
                l - 5.0,
                l - 8.0,
                p + 4.0,
                format_tick(y)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            (l + r) / 2.0,
            HEIGHT - 12.0,
            escape(&self.xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (t + b) / 2.0,
            (t + b) / 2.0,
            escape(&self.ylabel)
        );
        s += "</svg>\n";
        s
    }
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
