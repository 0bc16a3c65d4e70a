use clap::{Args, Parser, Subcommand};
use ekman_layer::config::{RunConfig, Settings};
use ekman_layer::error::Error;
use ekman_layer::expansion::Expansion;
use ekman_layer::geometry::check_admissibility;
use ekman_layer::interior::{Profile, NB};
use ekman_layer::io::{encode_layer_dump, read_dump, sha256_file, write_dump};
use ekman_layer::jet::Jet;
use ekman_layer::layer::Side;
use ekman_layer::limiting::LimitingSystem;
use ekman_layer::residual::sweep;
use ekman_layer::spectral::{Field2, VecField2};
use ekman_layer::verify;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ekman", version, about = "Rotating-channel layer expansion over periodic terrain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Surface geometry fields and the admissibility report.
    Geometry {
        #[command(flatten)]
        common: Common,
        /// Admissibility report CSV (default: <out-dir>/admissibility.csv).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evolve the limiting two-dimensional system.
    LimitSolve {
        #[command(flatten)]
        common: Common,
        /// Decay trace CSV (default: <out-dir>/trace.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build interior and layer fields from a limiting-flow snapshot.
    BuildApprox {
        #[command(flatten)]
        common: Common,
        /// Directory holding ubar_u.eka and ubar_v.eka (default: <out-dir>).
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Residual norms over a decreasing list of eps.
    ResidualSweep {
        #[command(flatten)]
        common: Common,
        /// Residual CSV (default: <out-dir>/residual.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Run the invariant battery and write a pass/fail CSV.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Default: <out-dir>/verify.csv.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Flat key-value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// flat, ridge, eggcarton, fourier, or the path of a height dump.
    #[arg(long)]
    surface: Option<String>,
    #[arg(long)]
    amp: Option<f64>,
    /// Fourier modes `mx:my:c:s,...`.
    #[arg(long)]
    modes: Option<String>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// Channel nodes in s.
    #[arg(long)]
    ns: Option<usize>,
    /// Layer nodes in Z.
    #[arg(long)]
    nz: Option<usize>,
    /// Catalog name (shear, ridge-wave, cellular, random) or `u.eka,v.eka`.
    #[arg(long)]
    u0: Option<String>,
    #[arg(long = "u0-amp")]
    u0_amp: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Time at which the approximation is assembled.
    #[arg(long)]
    t: Option<f64>,
    /// Comma-separated, decreasing.
    #[arg(long)]
    eps: Option<String>,
    /// consistent or verbatim.
    #[arg(long)]
    transcription: Option<String>,
    /// Output directory (default: $EKMAN_OUT or ./ekman-out).
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn settings(&self) -> Result<Settings, Error> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let mut f = Settings::default();
        let mut put = |k: &str, flag: &str, v: Option<String>| -> Result<(), Error> {
            match v {
                Some(v) => f.set(k, &v, &format!("flag --{flag}")),
                None => Ok(()),
            }
        };
        match &self.surface {
            Some(name) if Path::new(name).is_file() => put("surface.dump", "surface", Some(name.clone()))?,
            Some(name) if name == "fourier" => {}
            other => put("surface.name", "surface", other.clone())?,
        }
        put("surface.amp", "amp", self.amp.map(|v| v.to_string()))?;
        put("surface.modes", "modes", self.modes.clone())?;
        put("flow.nu", "nu", self.nu.map(|v| v.to_string()))?;
        put("grid.nx", "nx", self.nx.map(|v| v.to_string()))?;
        put("grid.ny", "ny", self.ny.map(|v| v.to_string()))?;
        put("grid.ns", "ns", self.ns.map(|v| v.to_string()))?;
        put("layer.nz", "nz", self.nz.map(|v| v.to_string()))?;
        put("flow.u0", "u0", self.u0.clone())?;
        put("flow.u0_amp", "u0-amp", self.u0_amp.map(|v| v.to_string()))?;
        put("flow.seed", "seed", self.seed.map(|v| v.to_string()))?;
        put("time.t_end", "t-end", self.t_end.map(|v| v.to_string()))?;
        put("time.dt", "dt", self.dt.map(|v| v.to_string()))?;
        put("time.t", "t", self.t.map(|v| v.to_string()))?;
        put("residual.eps", "eps", self.eps.clone())?;
        put("residual.transcription", "transcription", self.transcription.clone())?;
        put("output.dir", "out-dir", self.out_dir.as_ref().map(|p| p.display().to_string()))?;
        put("run.threads", "threads", self.threads.map(|v| v.to_string()))?;
        s.merge(f);
        Ok(s)
    }
}

/// Config echo, versions and input/output hashes.
struct Manifest {
    command: String,
    config: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        Manifest { command: command.into(), config: cfg.to_text(), inputs: cfg.input_dumps(), outputs: Vec::new() }
    }

    fn write(&self, dir: &Path) -> Result<PathBuf, Error> {
        let mut s = format!("command = {}\nversion = {} {}\n", self.command, env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        s.push_str("\n[config]\n");
        s.push_str(&self.config);
        s.push_str("\n[inputs]\n");
        for p in &self.inputs {
            s.push_str(&format!("{} sha256={}\n", p.display(), sha256_file(p)?));
        }
        s.push_str("\n[outputs]\n");
        for p in &self.outputs {
            s.push_str(&format!("{} sha256={}\n", p.display(), sha256_file(p)?));
        }
        let path = dir.join(format!("manifest-{}.txt", self.command));
        std::fs::write(&path, s)?;
        Ok(path)
    }
}

enum Outcome {
    Pass,
    Fail(String),
}

fn write_text(m: &mut Manifest, path: PathBuf, text: &str) -> Result<(), Error> {
    if let Some(d) = path.parent() {
        if !d.as_os_str().is_empty() {
            std::fs::create_dir_all(d)?;
        }
    }
    std::fs::write(&path, text)?;
    m.outputs.push(path);
    Ok(())
}

fn write_field(m: &mut Manifest, path: PathBuf, f: &Field2<f64>) -> Result<(), Error> {
    write_dump(&path, f)?;
    m.outputs.push(path);
    Ok(())
}

fn run_geometry(cfg: &RunConfig, report: Option<PathBuf>) -> Result<Outcome, Error> {
    let mut m = Manifest::new("geometry", cfg);
    let geom = cfg.geometry()?;
    let rep = check_admissibility(&geom, cfg.nu, None)?;
    write_text(&mut m, report.unwrap_or_else(|| cfg.out.join("admissibility.csv")), &rep.to_csv())?;
    let dir = cfg.out.join("geometry");
    std::fs::create_dir_all(&dir)?;
    for (name, f) in [
        ("b", &geom.b),
        ("bx", &geom.bx),
        ("by", &geom.by),
        ("cos_gamma", &geom.cos_g),
        ("gauss_curvature", &geom.kg),
        ("lap_b", &geom.lap_b),
    ] {
        write_field(&mut m, dir.join(format!("{name}.eka")), f)?;
    }
    m.write(&cfg.out)?;
    print!("{}", rep.to_csv());
    Ok(if rep.geometry_ok() { Outcome::Pass } else { Outcome::Fail(rep.failures().join("; ")) })
}

fn run_limit(cfg: &RunConfig, trace: Option<PathBuf>) -> Result<Outcome, Error> {
    let mut m = Manifest::new("limit-solve", cfg);
    let geom = cfg.geometry()?;
    let u0 = cfg.velocity(geom.grid())?;
    let sys = LimitingSystem::new(geom, cfg.nu)?;
    let (s, tr) = sys.integrate(&u0, cfg.t_end, cfg.dt, 10)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_text(&mut m, trace.unwrap_or_else(|| cfg.out.join("trace.csv")), &tr.to_csv())?;
    write_field(&mut m, cfg.out.join("ubar_u.eka"), &s.u.u)?;
    write_field(&mut m, cfg.out.join("ubar_v.eka"), &s.u.v)?;
    m.write(&cfg.out)?;
    let total = tr.total();
    let grew = total.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12));
    println!("t = {} energy+enstrophy {:.6e} -> {:.6e}", s.t, total[0], total[total.len() - 1]);
    Ok(if grew { Outcome::Fail("energy + enstrophy increased".into()) } else { Outcome::Pass })
}

fn run_build(cfg: &RunConfig, snapshot: Option<PathBuf>) -> Result<Outcome, Error> {
    let mut m = Manifest::new("build-approx", cfg);
    let dir = snapshot.unwrap_or_else(|| cfg.out.clone());
    let (pu, pv) = (dir.join("ubar_u.eka"), dir.join("ubar_v.eka"));
    let ubar = VecField2 { u: read_dump(&pu)?, v: read_dump(&pv)? };
    m.inputs.push(pu);
    m.inputs.push(pv);
    let geom = cfg.geometry()?;
    if ubar.u.grid != geom.grid() {
        return Err(Error::GridMismatch("snapshot and surface grids differ".into()));
    }
    let sys = LimitingSystem::new(geom.clone(), cfg.nu)?;
    let ops = cfg.layer_ops(geom)?;
    let z = ops.bl.z().to_vec();
    let jet: VecField2<Jet<5>> = sys.taylor_jet(&ubar);
    let eps = cfg.eps[0];
    let e = Expansion::build(&sys, ops, &jet, eps, cfg.transcription)?;
    let out = cfg.out.join(format!("approx_eps{eps}"));
    std::fs::create_dir_all(&out)?;
    let comp = ["x", "y", "z"];
    for side in Side::BOTH {
        let tag = if side == Side::Bottom { "B" } else { "T" };
        let l = e.layer(side);
        for j in 0..3 {
            for (c, f) in comp.iter().zip(&l.u[j]) {
                let path = out.join(format!("u_{tag}{j}.{c}.eka"));
                std::fs::write(&path, encode_layer_dump(&f.value(), &z))?;
                m.outputs.push(path);
            }
            let path = out.join(format!("p_{tag}{}.eka", j + 1));
            std::fs::write(&path, encode_layer_dump(&l.p[j].value(), &z))?;
            m.outputs.push(path);
        }
    }
    let int = &e.interior;
    write_field(&mut m, out.join("p_I0.eka"), &int.p0.value())?;
    write_field(&mut m, out.join("p_I1.eka"), &int.p1.value())?;
    write_field(&mut m, out.join("u_I0.z.eka"), &int.u3bar.value())?;
    let basis = ["one", "s", "x_chi", "chi", "chi1", "chi2"];
    let profile = |m: &mut Manifest, name: &str, p: &Profile<Jet<5>>| -> Result<(), Error> {
        for b in 0..NB {
            if p.coef[b].max_abs() > 0.0 {
                write_field(m, out.join(format!("{name}.{}.eka", basis[b])), &p.coef[b].value())?;
            }
        }
        Ok(())
    };
    for (j, u) in [(1, &int.u1), (2, &int.u2)] {
        for (c, p) in comp.iter().zip(u.iter()) {
            profile(&mut m, &format!("u_I{j}.{c}"), p)?;
        }
    }
    profile(&mut m, "p_I2", &int.p2)?;
    m.write(&cfg.out)?;
    let d = e.decay_ratio();
    println!("eps = {eps}: {} fields, decay at Z_max {d:.3e}", m.outputs.len());
    Ok(if d <= 1e-5 { Outcome::Pass } else { Outcome::Fail(format!("layer fields not decayed at Z_max ({d:e})")) })
}

fn run_sweep(cfg: &RunConfig, out: Option<PathBuf>, svg: Option<PathBuf>) -> Result<Outcome, Error> {
    let mut m = Manifest::new("residual-sweep", cfg);
    let geom = cfg.geometry()?;
    let u0 = cfg.velocity(geom.grid())?;
    let sys = LimitingSystem::new(geom.clone(), cfg.nu)?;
    let (st, _) = sys.integrate(&u0, cfg.t, cfg.dt, usize::MAX)?;
    let ops = cfg.layer_ops(geom)?;
    let sg = cfg.sgrid()?;
    let sw = sweep(&sys, ops, &st.u, &cfg.eps, cfg.transcription, &sg, cfg.t, |r| {
        eprintln!("eps = {}: |rho| = {:.4e}, |d_t rho| = {:.4e}", r.eps, r.l2_total, r.l2_dt_total)
    })?;
    std::fs::create_dir_all(&cfg.out)?;
    write_text(&mut m, out.unwrap_or_else(|| cfg.out.join("residual.csv")), &sw.to_csv())?;
    if let Some(p) = svg {
        write_text(&mut m, p, &sw.to_svg())?;
    }
    m.write(&cfg.out)?;
    let show = |s: Option<f64>| s.map(|v| format!("{v:.3}")).unwrap_or_else(|| "degenerate".into());
    println!("slope |rho| {}  slope |d_t rho| {}", show(sw.residual_slope()), show(sw.residual_dt_slope()));
    let bad: Vec<String> = sw
        .rows
        .iter()
        .filter_map(|r| {
            let rel = r.mismatch_l2 / r.l2_total;
            if r.divergence > 1e-6 || r.trace > 1e-10 || rel > 1e-2 {
                Some(format!("eps = {}: divergence {:.2e}, trace {:.2e}, formula/direct {:.2e}", r.eps, r.divergence, r.trace, rel))
            } else {
                None
            }
        })
        .collect();
    Ok(if bad.is_empty() { Outcome::Pass } else { Outcome::Fail(bad.join("; ")) })
}

fn run_verify(cfg: &RunConfig, report: Option<PathBuf>) -> Result<Outcome, Error> {
    let mut m = Manifest::new("verify", cfg);
    let (checks, _) = verify::battery(cfg, |stage| eprintln!("done: {stage}"))?;
    std::fs::create_dir_all(&cfg.out)?;
    let csv = verify::to_csv(&checks);
    write_text(&mut m, report.unwrap_or_else(|| cfg.out.join("verify.csv")), &csv)?;
    m.write(&cfg.out)?;
    print!("{csv}");
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    Ok(if failed.is_empty() { Outcome::Pass } else { Outcome::Fail(format!("failed: {}", failed.join(", "))) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, name) = match &cli.cmd {
        Cmd::Geometry { common, .. } => (common, "geometry"),
        Cmd::LimitSolve { common, .. } => (common, "limit-solve"),
        Cmd::BuildApprox { common, .. } => (common, "build-approx"),
        Cmd::ResidualSweep { common, .. } => (common, "residual-sweep"),
        Cmd::Verify { common, .. } => (common, "verify"),
    };
    let cfg = match common.settings().and_then(|s| s.resolve()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ekman {name}: {e}");
            return ExitCode::from(2);
        }
    };
    let res = match cli.cmd {
        Cmd::Geometry { report, .. } => run_geometry(&cfg, report),
        Cmd::LimitSolve { trace, .. } => run_limit(&cfg, trace),
        Cmd::BuildApprox { snapshot, .. } => run_build(&cfg, snapshot),
        Cmd::ResidualSweep { out, svg, .. } => run_sweep(&cfg, out, svg),
        Cmd::Verify { report, .. } => run_verify(&cfg, report),
    };
    match res {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail(why)) => {
            eprintln!("ekman {name}: invariant failure: {why}");
            ExitCode::from(1)
        }
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidGrid(_))) => {
            eprintln!("ekman {name}: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("ekman {name}: {e}");
            ExitCode::from(1)
        }
    }
}
