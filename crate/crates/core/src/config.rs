//! Run configuration: a flat `key = value` file with dotted section names,
//! overridden by command-line values.
//!
//! ```text
//! # comment
//! surface.name = eggcarton
//! surface.amp = 0.2
//! flow.nu = 1
//! residual.eps = 0.1, 0.05, 0.025
//! ```

use crate::channel::SGrid;
use crate::error::{Error, Result};
use crate::expansion::Transcription;
use crate::geometry::{build_geometry, Surface, SurfaceGeometry};
use crate::initial::InitialData;
use crate::io::read_dump;
use crate::layer::{BLGrid, LayerOps};
use crate::spectral::{Grid2D, VecField2};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceSpec {
    Named { name: String, amp: f64 },
    Fourier(String),
    Dump(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowSpec {
    Catalog { name: String, amp: f64 },
    /// Two dumps holding the `x` and `y` components.
    Dump(PathBuf, PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub surface: SurfaceSpec,
    pub nu: f64,
    pub eps: Vec<f64>,
    pub nx: usize,
    pub ny: usize,
    pub ns: usize,
    pub nz: usize,
    pub zmax: f64,
    pub u0: FlowSpec,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    /// Time at which the approximation is assembled.
    pub t: f64,
    pub transcription: Transcription,
    pub out: PathBuf,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            surface: SurfaceSpec::Named { name: "eggcarton".into(), amp: 0.2 },
            nu: 1.0,
            eps: vec![0.1, 0.05, 0.025],
            nx: 64,
            ny: 64,
            ns: 257,
            nz: 256,
            zmax: 40.0,
            u0: FlowSpec::Catalog { name: "cellular".into(), amp: 0.2 },
            seed: 7,
            t_end: 2.0,
            dt: 1e-3,
            t: 0.5,
            transcription: Transcription::Consistent,
            out: std::env::var_os("EKMAN_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ekman-out")),
            threads: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "surface.name",
    "surface.amp",
    "surface.modes",
    "surface.dump",
    "flow.nu",
    "flow.u0",
    "flow.u0_amp",
    "flow.seed",
    "grid.nx",
    "grid.ny",
    "grid.ns",
    "layer.nz",
    "layer.zmax",
    "time.t_end",
    "time.dt",
    "time.t",
    "residual.eps",
    "residual.transcription",
    "output.dir",
    "run.threads",
];

/// Raw settings, each remembering where it came from.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, String)>,
}

impl Settings {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let at = format!("{origin}:{}", i + 1);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{at}: expected 'key = value', got '{line}'")))?;
            s.set(k.trim(), v.trim(), &at)?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str, at: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("{at}: unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), (value.to_string(), at.to_string()));
        Ok(())
    }

    /// Later settings win.
    pub fn merge(&mut self, other: Settings) {
        self.values.extend(other.values);
    }

    fn get(&self, key: &str) -> Option<(&str, &str)> {
        self.values.get(key).map(|(v, a)| (v.as_str(), a.as_str()))
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        let num = |key: &str| -> Result<Option<f64>> {
            match self.get(key) {
                None => Ok(None),
                Some((v, at)) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("{at}: {key} = '{v}' is not a number"))),
            }
        };
        let int = |key: &str| -> Result<Option<usize>> {
            match self.get(key) {
                None => Ok(None),
                Some((v, at)) => v
                    .parse::<usize>()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("{at}: {key} = '{v}' is not a non-negative integer"))),
            }
        };
        let positive = |key: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                let at = self.get(key).map(|p| p.1).unwrap_or("default");
                Err(Error::Config(format!("{at}: {key} must be positive, got {v}")))
            }
        };

        let amp = num("surface.amp")?;
        if let Some((d, _)) = self.get("surface.dump") {
            c.surface = SurfaceSpec::Dump(PathBuf::from(d));
        } else if let Some((m, _)) = self.get("surface.modes") {
            c.surface = SurfaceSpec::Fourier(m.to_string());
        } else if let Some((n, at)) = self.get("surface.name") {
            if n == "fourier" {
                return Err(Error::Config(format!("{at}: surface 'fourier' needs surface.modes")));
            }
            let default_amp = if n == "flat" { 0.0 } else { 0.2 };
            c.surface = SurfaceSpec::Named { name: n.to_string(), amp: amp.unwrap_or(default_amp) };
            self.surface(&c.surface)
                .map_err(|e| Error::Config(format!("{at}: {e}")))?;
        } else if let Some(a) = amp {
            c.surface = SurfaceSpec::Named { name: "eggcarton".into(), amp: a };
        }

        if let Some(v) = num("flow.nu")? {
            c.nu = positive("flow.nu", v)?;
        }
        let u0_amp = num("flow.u0_amp")?;
        if let Some((u, at)) = self.get("flow.u0") {
            c.u0 = match u.split_once(',') {
                Some((a, b)) => FlowSpec::Dump(PathBuf::from(a.trim()), PathBuf::from(b.trim())),
                None => {
                    let default_amp = 0.2;
                    let spec = FlowSpec::Catalog { name: u.to_string(), amp: u0_amp.unwrap_or(default_amp) };
                    InitialData::from_name(u, 1.0, 0).map_err(|e| Error::Config(format!("{at}: {e}")))?;
                    spec
                }
            };
        } else if let Some(a) = u0_amp {
            c.u0 = FlowSpec::Catalog { name: "cellular".into(), amp: a };
        }
        if let Some(v) = int("flow.seed")? {
            c.seed = v as u64;
        }
        for (key, slot) in [("grid.nx", &mut c.nx), ("grid.ny", &mut c.ny), ("grid.ns", &mut c.ns), ("layer.nz", &mut c.nz)] {
            if let Some(v) = int(key)? {
                if v == 0 {
                    let at = self.get(key).unwrap().1;
                    return Err(Error::Config(format!("{at}: {key} must be positive")));
                }
                *slot = v;
            }
        }
        if let Some(v) = num("layer.zmax")? {
            c.zmax = positive("layer.zmax", v)?;
        }
        if let Some(v) = num("time.t_end")? {
            c.t_end = positive("time.t_end", v)?;
        }
        if let Some(v) = num("time.dt")? {
            c.dt = positive("time.dt", v)?;
        }
        if let Some(v) = num("time.t")? {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{}: time.t must be non-negative", self.get("time.t").unwrap().1)));
            }
            c.t = v;
        }
        if let Some((list, at)) = self.get("residual.eps") {
            let eps: Vec<f64> = list
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Config(format!("{at}: residual.eps = '{list}' is not a list of numbers")))?;
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::Config(format!("{at}: every eps must be positive")));
            }
            if !eps.windows(2).all(|w| w[1] < w[0]) {
                return Err(Error::Config(format!("{at}: eps values must be strictly decreasing, got {list}")));
            }
            c.eps = eps;
        }
        if let Some((v, at)) = self.get("residual.transcription") {
            c.transcription = v.parse().map_err(|e| Error::Config(format!("{at}: {e}")))?;
        }
        if let Some((v, _)) = self.get("output.dir") {
            c.out = PathBuf::from(v);
        }
        if let Some(v) = int("run.threads")? {
            if v == 0 {
                return Err(Error::Config(format!("{}: run.threads must be at least 1", self.get("run.threads").unwrap().1)));
            }
            c.threads = v;
        }
        Ok(c)
    }

    fn surface(&self, s: &SurfaceSpec) -> Result<Surface> {
        RunConfig::surface_of(s)
    }

    /// The settings in file syntax, one key per line, sorted.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, (v, a))| format!("{k} = {v}  # {a}\n")).collect()
    }
}

impl RunConfig {
    fn surface_of(s: &SurfaceSpec) -> Result<Surface> {
        match s {
            SurfaceSpec::Named { name, amp } => Surface::from_name(name, *amp),
            SurfaceSpec::Fourier(m) => Surface::parse_modes(m),
            SurfaceSpec::Dump(p) => Err(Error::Config(format!("{} is a dump, not a catalog surface", p.display()))),
        }
    }

    /// Catalog surface, if the bottom is not read from a dump.
    pub fn catalog_surface(&self) -> Result<Option<Surface>> {
        match &self.surface {
            SurfaceSpec::Dump(_) => Ok(None),
            s => Self::surface_of(s).map(Some),
        }
    }

    pub fn initial_data(&self) -> Result<Option<InitialData>> {
        match &self.u0 {
            FlowSpec::Catalog { name, amp } => InitialData::from_name(name, *amp, self.seed).map(Some),
            FlowSpec::Dump(..) => Ok(None),
        }
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::periodic(self.nx, self.ny)
    }

    /// Bottom height on the configured grid, or as read from its dump.
    pub fn bottom(&self) -> Result<crate::spectral::Field2<f64>> {
        match &self.surface {
            SurfaceSpec::Dump(p) => read_dump(p),
            s => Ok(Self::surface_of(s)?.sample(self.grid()?)),
        }
    }

    pub fn geometry(&self) -> Result<Arc<SurfaceGeometry>> {
        Ok(Arc::new(build_geometry(&self.bottom()?)?))
    }

    pub fn velocity(&self, g: Grid2D) -> Result<VecField2<f64>> {
        match &self.u0 {
            FlowSpec::Catalog { name, amp } => Ok(InitialData::from_name(name, *amp, self.seed)?.sample(g)),
            FlowSpec::Dump(a, b) => {
                let (u, v) = (read_dump(a)?, read_dump(b)?);
                if u.grid != g || v.grid != g {
                    return Err(Error::GridMismatch(format!("velocity dumps do not match the {}x{} surface grid", g.nx, g.ny)));
                }
                Ok(VecField2 { u, v })
            }
        }
    }

    /// Paths of every input dump.
    pub fn input_dumps(&self) -> Vec<PathBuf> {
        let mut v = Vec::new();
        if let SurfaceSpec::Dump(p) = &self.surface {
            v.push(p.clone());
        }
        if let FlowSpec::Dump(a, b) = &self.u0 {
            v.push(a.clone());
            v.push(b.clone());
        }
        v
    }

    pub fn layer_ops(&self, geom: Arc<SurfaceGeometry>) -> Result<Arc<LayerOps>> {
        Ok(Arc::new(LayerOps::new(geom, Arc::new(BLGrid::new(self.zmax, self.nz, 1.01)?))))
    }

    pub fn sgrid(&self) -> Result<SGrid> {
        SGrid::new(self.ns, 2.0, 7)
    }

    /// Resolved values in file syntax.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match &self.surface {
            SurfaceSpec::Named { name, amp } => s.push_str(&format!("surface.name = {name}\nsurface.amp = {amp}\n")),
            SurfaceSpec::Fourier(m) => s.push_str(&format!("surface.modes = {m}\n")),
            SurfaceSpec::Dump(p) => s.push_str(&format!("surface.dump = {}\n", p.display())),
        }
        s.push_str(&format!("flow.nu = {}\n", self.nu));
        match &self.u0 {
            FlowSpec::Catalog { name, amp } => s.push_str(&format!("flow.u0 = {name}\nflow.u0_amp = {amp}\n")),
            FlowSpec::Dump(a, b) => s.push_str(&format!("flow.u0 = {},{}\n", a.display(), b.display())),
        }
        s.push_str(&format!("flow.seed = {}\n", self.seed));
        s.push_str(&format!("grid.nx = {}\ngrid.ny = {}\ngrid.ns = {}\n", self.nx, self.ny, self.ns));
        s.push_str(&format!("layer.nz = {}\nlayer.zmax = {}\n", self.nz, self.zmax));
        s.push_str(&format!("time.t_end = {}\ntime.dt = {}\ntime.t = {}\n", self.t_end, self.dt, self.t));
        let eps: Vec<String> = self.eps.iter().map(|e| e.to_string()).collect();
        s.push_str(&format!("residual.eps = {}\n", eps.join(",")));
        s.push_str(&format!("residual.transcription = {}\n", self.transcription));
        s.push_str(&format!("output.dir = {}\nrun.threads = {}\n", self.out.display(), self.threads));
        s
    }
}
