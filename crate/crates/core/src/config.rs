//! Run configuration: a TOML file whose tables mirror the flat dotted keys
//! (`geometry.theta = 0.05` and `[geometry]\ntheta = 0.05` are the same key).
//!
//! Parsing is strict. Every key is checked against the schema of the chosen
//! scenario kind, and the first unknown or mistyped key aborts with its name.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use toml::{Table, Value};

use crate::dynamics::DEFAULT_REFINE_TOLERANCE;
use crate::error::{Error, Result};
use crate::scenarios::{CavitySpec, Geometry, IonizationSpec, OverlapSpec, PointerSpec, ScenarioKind};

/// Output controls for the command-line runs.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub grid_nx: usize,
    pub grid_nz: usize,
    /// Time of the field grid; `None` means the crossing time.
    pub field_time: Option<f64>,
    /// Auxiliary coordinate of the field grid slice; `None` picks the mean
    /// position of the first device factor.
    pub slice_aux: Option<f64>,
    pub record_stride: usize,
    pub max_trajectories: usize,
    pub figures: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            grid_nx: 120,
            grid_nz: 120,
            field_time: None,
            slice_aux: None,
            record_stride: 100,
            max_trajectories: 200,
            figures: true,
        }
    }
}

/// A fully validated run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ScenarioKind,
    pub geometry: Geometry,
    pub n: usize,
    pub seed: u64,
    /// Integration step; `None` uses the geometry default.
    pub dt: Option<f64>,
    /// Stage-spread tolerance for step halving; zero keeps the fixed step.
    pub refine_tolerance: f64,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::NoDevice,
            geometry: Geometry::default(),
            n: 1000,
            seed: 1,
            dt: None,
            refine_tolerance: DEFAULT_REFINE_TOLERANCE,
            output: OutputConfig::default(),
        }
    }
}

/// Keys that `sweep` may vary. All are plain floating-point keys.
pub const SWEEPABLE: &[&str] = &[
    "geometry.theta",
    "geometry.separation",
    "geometry.speed",
    "geometry.sigma0",
    "device.alpha_re",
    "device.alpha_im",
    "device.sigma",
    "device.L",
    "device.mass",
    "pointer.d",
    "pointer.sigma",
    "ionization.probability",
    "ionization.displacement",
];

/// Consumes keys from one table and remembers which were read.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::config(name, "expected a table")),
        };
        Ok(Self {
            name,
            table,
            seen: Vec::new(),
        })
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn raw(&mut self, k: &'static str) -> Option<&'a Value> {
        self.seen.push(k);
        self.table.and_then(|t| t.get(k))
    }

    fn f64(&mut self, k: &'static str, default: f64) -> Result<f64> {
        match self.raw(k) {
            None => Ok(default),
            Some(Value::Float(x)) => Ok(*x),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(Error::config(self.key(k), "expected a number")),
        }
    }

    fn opt_f64(&mut self, k: &'static str) -> Result<Option<f64>> {
        if self.table.is_some_and(|t| t.contains_key(k)) {
            self.f64(k, 0.0).map(Some)
        } else {
            self.seen.push(k);
            Ok(None)
        }
    }

    fn uint(&mut self, k: &'static str, default: u64) -> Result<u64> {
        match self.raw(k) {
            None => Ok(default),
            Some(Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(Error::config(self.key(k), "expected a non-negative integer")),
        }
    }

    fn bool(&mut self, k: &'static str, default: bool) -> Result<bool> {
        match self.raw(k) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(Error::config(self.key(k), "expected true or false")),
        }
    }

    fn string(&mut self, k: &'static str) -> Result<Option<String>> {
        match self.raw(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(Error::config(self.key(k), "expected a string")),
        }
    }

    /// Fails on the first key of this table that was never read.
    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            if let Some(k) = t.keys().find(|k| !self.seen.contains(&k.as_str())) {
                return Err(Error::config(format!("{}.{}", self.name, k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn positive(key: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {x}")))
    }
}

fn level(key: &str, n: u64) -> Result<u32> {
    if n >= 1 && n <= u32::MAX as u64 {
        Ok(n as u32)
    } else {
        Err(Error::config(key, "well levels start at 1"))
    }
}

const SECTIONS: &[&str] = &[
    "scenario",
    "geometry",
    "device",
    "pointer",
    "ionization",
    "ensemble",
    "integrator",
    "output",
];

impl RunConfig {
    /// Parse TOML text. A report file is accepted too: its `[config]` table
    /// holds the resolved configuration of the run that wrote it.
    pub fn parse(text: &str) -> Result<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        match root.get("config") {
            Some(Value::Table(inner)) => Self::from_table(inner),
            Some(_) => Err(Error::config("config", "expected a table")),
            None => Self::from_table(&root),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn from_table(root: &Table) -> Result<Self> {
        if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::config(k.clone(), "unknown section"));
        }

        let mut sc = Section::new(root, "scenario")?;
        let kind_name = sc.string("kind")?.ok_or_else(|| Error::config("scenario.kind", "missing"))?;
        sc.finish()?;

        let d = Geometry::default();
        let mut g = Section::new(root, "geometry")?;
        let geometry = Geometry {
            theta: g.f64("theta", d.theta)?,
            separation: g.f64("separation", d.separation)?,
            speed: g.f64("speed", d.speed)?,
            sigma0: g.f64("sigma0", d.sigma0)?,
            mass: g.f64("mass", d.mass)?,
            t_launch: g.f64("t_launch", d.t_launch)?,
            readout_separation: g.f64("readout_separation", d.readout_separation)?,
            upper_is_d1: g.bool("upper_is_d1", d.upper_is_d1)?,
        };
        g.finish()?;
        geometry
            .validate()
            .map_err(|e| Error::config("geometry", e.to_string()))?;

        let mut dev = Section::new(root, "device")?;
        let mut ptr = Section::new(root, "pointer")?;
        let mut ion = Section::new(root, "ionization")?;
        let kind = match kind_name.as_str() {
            "no_device" => ScenarioKind::NoDevice,
            "cavity" | "density_operator_mode" => {
                let c = CavitySpec::default();
                let spec = CavitySpec {
                    length: positive("device.L", dev.f64("L", c.length)?)?,
                    mass: positive("device.mass", dev.f64("mass", c.mass)?)?,
                    n0: level("device.n0", dev.uint("n0", c.n0 as u64)?)?,
                    n1: level("device.n1", dev.uint("n1", c.n1 as u64)?)?,
                    energy_exchange: dev.bool("energy_exchange", c.energy_exchange)?,
                    dynamic_phase: dev.bool("dynamic_phase", c.dynamic_phase)?,
                };
                if spec.n0 == spec.n1 {
                    return Err(Error::config("device.n1", "must differ from device.n0"));
                }
                if kind_name == "cavity" {
                    ScenarioKind::Cavity(spec)
                } else {
                    ScenarioKind::DensityOperatorMode(spec)
                }
            }
            "overlap_device" => {
                let o = OverlapSpec::default();
                let alpha = C64::new(dev.f64("alpha_re", o.alpha.re)?, dev.f64("alpha_im", o.alpha.im)?);
                if !(alpha.norm() <= 1.0) {
                    return Err(Error::config("device.alpha_re", format!("|alpha| = {} exceeds 1", alpha.norm())));
                }
                ScenarioKind::OverlapDevice(OverlapSpec {
                    alpha,
                    sigma: positive("device.sigma", dev.f64("sigma", o.sigma)?)?,
                    mass: positive("device.mass", dev.f64("mass", o.mass)?)?,
                })
            }
            "detector_d3" => {
                let p = PointerSpec::default();
                ScenarioKind::DetectorD3(PointerSpec {
                    d: positive("pointer.d", ptr.f64("d", p.d)?)?,
                    sigma: positive("pointer.sigma", ptr.f64("sigma", p.sigma)?)?,
                    mass: positive("pointer.mass", ptr.f64("mass", p.mass)?)?,
                })
            }
            "bubble" => {
                let b = IonizationSpec::default();
                let probability = ion.f64("probability", b.probability)?;
                if !(0.0..=1.0).contains(&probability) {
                    return Err(Error::config("ionization.probability", "must lie in [0, 1]"));
                }
                ScenarioKind::Bubble(IonizationSpec {
                    probability,
                    displacement: positive("ionization.displacement", ion.f64("displacement", b.displacement)?)?,
                    sigma: positive("ionization.sigma", ion.f64("sigma", b.sigma)?)?,
                    mass: positive("ionization.mass", ion.f64("mass", b.mass)?)?,
                })
            }
            other => return Err(Error::config("scenario.kind", format!("unknown scenario `{other}`"))),
        };
        dev.finish()?;
        ptr.finish()?;
        ion.finish()?;

        let dflt = RunConfig::default();
        let mut en = Section::new(root, "ensemble")?;
        let n = en.uint("n", dflt.n as u64)? as usize;
        let seed = en.uint("seed", dflt.seed)?;
        en.finish()?;
        if n == 0 {
            return Err(Error::config("ensemble.n", "must be at least 1"));
        }

        let mut it = Section::new(root, "integrator")?;
        let dt = it.opt_f64("dt")?.map(|x| positive("integrator.dt", x)).transpose()?;
        let refine_tolerance = it.f64("refine_tolerance", dflt.refine_tolerance)?;
        it.finish()?;
        if !(refine_tolerance >= 0.0 && refine_tolerance.is_finite()) {
            return Err(Error::config(
                "integrator.refine_tolerance",
                format!("must be zero or positive, got {refine_tolerance}"),
            ));
        }

        let o = OutputConfig::default();
        let mut out = Section::new(root, "output")?;
        let output = OutputConfig {
            dir: out.string("dir")?.map_or(o.dir, PathBuf::from),
            grid_nx: out.uint("grid_nx", o.grid_nx as u64)? as usize,
            grid_nz: out.uint("grid_nz", o.grid_nz as u64)? as usize,
            field_time: out.opt_f64("field_time")?,
            slice_aux: out.opt_f64("slice_aux")?,
            record_stride: out.uint("record_stride", o.record_stride as u64)? as usize,
            max_trajectories: out.uint("max_trajectories", o.max_trajectories as u64)? as usize,
            figures: out.bool("figures", o.figures)?,
        };
        out.finish()?;
        if output.grid_nx < 2 || output.grid_nz < 2 {
            return Err(Error::config("output.grid_nx", "field grids need at least 2 points per axis"));
        }
        if output.record_stride == 0 {
            return Err(Error::config("output.record_stride", "must be at least 1"));
        }

        Ok(Self {
            kind,
            geometry,
            n,
            seed,
            dt,
            refine_tolerance,
            output,
        })
    }

    /// Every key with its resolved value, in a fixed order. Parsing the
    /// result gives back the same configuration.
    pub fn to_toml(&self) -> String {
        self.to_toml_under("")
    }

    /// Same as [`RunConfig::to_toml`] with every table nested under `[config]`,
    /// for embedding in a report.
    pub fn to_embedded_toml(&self) -> String {
        self.to_toml_under("config.")
    }

    fn to_toml_under(&self, prefix: &str) -> String {
        let g = &self.geometry;
        let mut s = String::new();
        s += &format!("[{prefix}scenario]\nkind = \"{}\"\n\n", self.kind.id());
        s += &format!(
            "[{prefix}geometry]\ntheta = {:?}\nseparation = {:?}\nspeed = {:?}\nsigma0 = {:?}\nmass = {:?}\nt_launch = {:?}\nreadout_separation = {:?}\nupper_is_d1 = {}\n\n",
            g.theta, g.separation, g.speed, g.sigma0, g.mass, g.t_launch, g.readout_separation, g.upper_is_d1
        );
        match &self.kind {
            ScenarioKind::NoDevice => {}
            ScenarioKind::Cavity(c) | ScenarioKind::DensityOperatorMode(c) => {
                s += &format!(
                    "[{prefix}device]\nL = {:?}\nmass = {:?}\nn0 = {}\nn1 = {}\nenergy_exchange = {}\ndynamic_phase = {}\n\n",
                    c.length, c.mass, c.n0, c.n1, c.energy_exchange, c.dynamic_phase
                );
            }
            ScenarioKind::OverlapDevice(o) => {
                s += &format!(
                    "[{prefix}device]\nalpha_re = {:?}\nalpha_im = {:?}\nsigma = {:?}\nmass = {:?}\n\n",
                    o.alpha.re, o.alpha.im, o.sigma, o.mass
                );
            }
            ScenarioKind::DetectorD3(p) => {
                s += &format!("[{prefix}pointer]\nd = {:?}\nsigma = {:?}\nmass = {:?}\n\n", p.d, p.sigma, p.mass);
            }
            ScenarioKind::Bubble(b) => {
                s += &format!(
                    "[{prefix}ionization]\nprobability = {:?}\ndisplacement = {:?}\nsigma = {:?}\nmass = {:?}\n\n",
                    b.probability, b.displacement, b.sigma, b.mass
                );
            }
        }
        s += &format!("[{prefix}ensemble]\nn = {}\nseed = {}\n\n", self.n, self.seed);
        s += &format!("[{prefix}integrator]\n");
        if let Some(dt) = self.dt {
            s += &format!("dt = {dt:?}\n");
        }
        s += &format!("refine_tolerance = {:?}\n", self.refine_tolerance);
        let o = &self.output;
        s += &format!(
            "\n[{prefix}output]\ndir = {}\ngrid_nx = {}\ngrid_nz = {}\n",
            Value::String(o.dir.display().to_string()),
            o.grid_nx,
            o.grid_nz
        );
        if let Some(t) = o.field_time {
            s += &format!("field_time = {t:?}\n");
        }
        if let Some(a) = o.slice_aux {
            s += &format!("slice_aux = {a:?}\n");
        }
        s += &format!(
            "record_stride = {}\nmax_trajectories = {}\nfigures = {}\n",
            o.record_stride, o.max_trajectories, o.figures
        );
        s
    }

    /// Copy of this configuration with one sweepable key set to `value`.
    pub fn with_value(&self, key: &str, value: f64) -> Result<Self> {
        if !SWEEPABLE.contains(&key) {
            return Err(Error::config(key, "not a sweepable key"));
        }
        let mut root: Table = self.to_toml().parse().expect("emitted config is valid TOML");
        let (section, name) = key.split_once('.').expect("sweepable keys are dotted");
        let table = root
            .entry(section)
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("sections are tables");
        table.insert(name.to_string(), Value::Float(value));
        Self::from_table(&root)
    }
}
