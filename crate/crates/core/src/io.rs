//! CSV and report writers.
//!
//! Every number is printed with 9 significant digits in scientific notation,
//! columns come in a fixed order and lines end in LF, so identical runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::io::Write;

use crate::analysis::{EnergyClassRow, RunReport};
use crate::config::RunConfig;
use crate::dynamics::Trajectory;
use crate::error::Result;

/// One number in the house format. Non-finite values print as `nan`/`inf`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// `traj_id,t,x,z,<aux>,vx,vz,<v_aux>,Ekin,Q,term` with one row per recorded
/// sample. Energy columns are empty when the run did not audit energies.
pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Trajectory], aux_names: &[String]) -> Result<()> {
    let mut header = String::from("traj_id,t,x,z");
    for a in aux_names {
        header += &format!(",{a}");
    }
    header += ",vx,vz";
    for a in aux_names {
        header += &format!(",v_{a}");
    }
    header += ",Ekin,Q,term\n";
    w.write_all(header.as_bytes())?;
    let dim = 2 + aux_names.len();
    let mut line = String::new();
    for (id, tr) in trajectories.iter().enumerate() {
        let term = tr.termination.code();
        for s in &tr.samples {
            line.clear();
            let _ = write!(line, "{id},{}", num(s.t));
            for i in 0..dim {
                let _ = write!(line, ",{}", num(s.q.get(i)));
            }
            for i in 0..dim {
                let _ = write!(line, ",{}", num(s.v[i]));
            }
            let (ek, q) = match &s.energy {
                Some(e) => (Some(e.e_kin_total()), Some(e.q.iter().sum())),
                None => (None, None),
            };
            let _ = writeln!(line, ",{},{},{term}", opt(ek), opt(q));
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

/// One point of a field grid. Node-sensitive entries are `None` at nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub x: f64,
    pub z: f64,
    pub aux: Vec<f64>,
    pub t: f64,
    pub p: f64,
    pub j: Vec<f64>,
    pub q: Option<f64>,
    pub residual: f64,
}

/// `x,z,<aux>,t,P,jx,jz,<j_aux>,Q,resid`.
pub fn write_field_grid<W: Write>(mut w: W, rows: &[GridRow], aux_names: &[String]) -> Result<()> {
    let mut header = String::from("x,z");
    for a in aux_names {
        header += &format!(",{a}");
    }
    header += ",t,P,jx,jz";
    for a in aux_names {
        header += &format!(",j_{a}");
    }
    header += ",Q,resid\n";
    w.write_all(header.as_bytes())?;
    let mut line = String::new();
    for r in rows {
        line.clear();
        let _ = write!(line, "{},{}", num(r.x), num(r.z));
        for a in &r.aux {
            let _ = write!(line, ",{}", num(*a));
        }
        let _ = write!(line, ",{},{}", num(r.t), num(r.p));
        for j in &r.j {
            let _ = write!(line, ",{}", num(*j));
        }
        let _ = writeln!(line, ",{},{}", opt(r.q), num(r.residual));
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// `t,flux`.
pub fn write_flux<W: Write>(mut w: W, series: &[(f64, f64)]) -> Result<()> {
    w.write_all(b"t,flux\n")?;
    for (t, f) in series {
        writeln!(w, "{},{}", num(*t), num(*f))?;
    }
    Ok(())
}

/// One energy-audit row per (detector, initial branch) class.
pub fn write_energy<W: Write>(mut w: W, rows: &[EnergyClassRow]) -> Result<()> {
    w.write_all(b"detector,initial_branch,count,pre_Ekin,pre_Q_aux,post_Ekin,post_Q_aux,max_drift\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.detector,
            r.initial_branch,
            r.count,
            num(r.pre_e_kin),
            num(r.pre_q_aux),
            num(r.post_e_kin),
            num(r.post_q_aux),
            num(r.max_relative_drift)
        )?;
    }
    Ok(())
}

/// One sweep point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub p_d1: f64,
    pub plane_flux: f64,
    pub visibility: f64,
}

/// `<param>,P_D1,plane_flux,V`.
pub fn write_sweep<W: Write>(mut w: W, param: &str, rows: &[SweepRow]) -> Result<()> {
    writeln!(w, "{param},P_D1,plane_flux,V")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", num(r.value), num(r.p_d1), num(r.plane_flux), num(r.visibility))?;
    }
    Ok(())
}

fn pairs(v: &[(f64, f64)]) -> String {
    let items: Vec<String> = v.iter().map(|(a, b)| format!("[{}, {}]", num(*a), num(*b))).collect();
    format!("[{}]", items.join(", "))
}

/// The report as TOML: a `[report]` table of results followed by the
/// resolved configuration under `[config]`, so the file can be fed back to
/// `run` to repeat the run.
pub fn render_report(report: &RunReport, config: &RunConfig) -> String {
    let r = report;
    let mut s = String::from("[report]\n");
    let _ = writeln!(s, "scenario = \"{}\"", r.scenario_id);
    let _ = writeln!(s, "seed = {}", r.seed);
    let _ = writeln!(s, "n = {}", r.n);
    let _ = writeln!(s, "p_d1_analytic = {}", num(r.p_d1_analytic));
    let _ = writeln!(s, "p_d2_analytic = {}", num(r.p_d2_analytic));
    let _ = writeln!(s, "p_d1_empirical = {}", num(r.p_d1_empirical));
    let _ = writeln!(s, "p_d2_empirical = {}", num(r.p_d2_empirical));
    let _ = writeln!(s, "excluded_detector_fraction = {}", num(r.excluded_detector_fraction));
    let _ = writeln!(s, "p_d1_ci = [{}, {}]", num(r.p_d1_ci.0), num(r.p_d1_ci.1));
    let _ = writeln!(s, "p_d2_ci = [{}, {}]", num(r.p_d2_ci.0), num(r.p_d2_ci.1));
    let _ = writeln!(s, "plane_flux = {}", pairs(&r.plane_flux));
    let _ = writeln!(s, "crossing_count = {}", r.crossing.total_crossings);
    let _ = writeln!(s, "crossing_trajectories = {}", r.crossing.crossing_trajectories);
    let _ = writeln!(s, "crossing_completed = {}", r.crossing.completed);
    let _ = writeln!(s, "crossing_excluded = {}", r.crossing.excluded);
    let _ = writeln!(s, "fringe_visibility = {}", pairs(&r.fringe_visibility));
    if let Some(c) = r.fringe_contrast_empirical {
        let _ = writeln!(s, "fringe_contrast_empirical = {}", num(c));
    }
    if let Some(tv) = r.equivariance_tv {
        let _ = writeln!(s, "equivariance_tv = {}", num(tv));
    }
    let _ = writeln!(s, "exclusion_rate = {}", num(r.exclusion_rate));
    let _ = writeln!(s, "reflected_fraction = {}", num(r.reflected_fraction));
    if let Some(w) = &r.window {
        let _ = writeln!(
            s,
            "region_window = {{ t_in = {}, t_cross = {}, t_out = {}, x_in = {}, x_out = {} }}",
            num(w.t_in),
            num(w.t_cross),
            num(w.t_out),
            num(w.x_in),
            num(w.x_out)
        );
    }
    let warnings: Vec<String> = r.warnings.iter().map(|w| toml::Value::String(w.clone()).to_string()).collect();
    let _ = writeln!(s, "warnings = [{}]", warnings.join(", "));
    for row in &r.energy {
        let _ = writeln!(
            s,
            "\n[[report.energy]]\ndetector = \"{}\"\ninitial_branch = {}\ncount = {}\npre_e_kin = {}\npre_q_aux = {}\npost_e_kin = {}\npost_q_aux = {}\nmax_relative_drift = {}",
            row.detector,
            row.initial_branch,
            row.count,
            num(row.pre_e_kin),
            num(row.pre_q_aux),
            num(row.post_e_kin),
            num(row.post_q_aux),
            num(row.max_relative_drift)
        );
    }
    s += "\n";
    s += &config.to_embedded_toml();
    s
}

/// Short human-readable summary for the terminal.
pub fn summary(report: &RunReport) -> String {
    let r = report;
    let mut s = String::new();
    let _ = writeln!(s, "scenario {} (seed {}, n = {})", r.scenario_id, r.seed, r.n);
    let _ = writeln!(
        s,
        "  P(D1) = {:.6} analytic, {:.4} empirical [{:.4}, {:.4}]",
        r.p_d1_analytic, r.p_d1_empirical, r.p_d1_ci.0, r.p_d1_ci.1
    );
    let _ = writeln!(
        s,
        "  P(D2) = {:.6} analytic, {:.4} empirical [{:.4}, {:.4}]",
        r.p_d2_analytic, r.p_d2_empirical, r.p_d2_ci.0, r.p_d2_ci.1
    );
    let max_flux = r.plane_flux.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let _ = writeln!(s, "  max |plane flux| over region I = {max_flux:.3e}");
    let _ = writeln!(
        s,
        "  crossing_count = {} ({} of {} trajectories)",
        r.crossing.total_crossings, r.crossing.crossing_trajectories, r.crossing.completed
    );
    if let Some((_, v)) = r.fringe_visibility.get(r.fringe_visibility.len() / 2) {
        let _ = writeln!(s, "  fringe visibility at crossing = {v:.4}");
    }
    if let Some(c) = r.fringe_contrast_empirical {
        let _ = writeln!(s, "  empirical fringe contrast = {c:.4}");
    }
    if let Some(tv) = r.equivariance_tv {
        let _ = writeln!(s, "  equivariance TV = {tv:.4}");
    }
    let _ = writeln!(s, "  exclusion rate = {:.2e}", r.exclusion_rate);
    let _ = writeln!(s, "  reflected fraction = {:.4}", r.reflected_fraction);
    for row in &r.energy {
        let _ = writeln!(
            s,
            "  energy {} from branch {}: {} trajectories, box Q {:.6} -> {:.6}, max drift {:.2e}",
            row.detector, row.initial_branch, row.count, row.pre_q_aux, row.post_q_aux, row.max_relative_drift
        );
    }
    for w in &r.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
    s
}
