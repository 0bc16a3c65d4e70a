//! Invariant battery over one configuration.

use crate::config::RunConfig;
use crate::diagnostics::{rk4, saturating_trace, tan_bound, TanBoundCase};
use crate::error::Result;
use crate::expansion::Expansion;
use crate::geometry::check_admissibility;
use crate::jet::Jet;
use crate::limiting::LimitingSystem;
use crate::residual::{evaluate, sweep, Sweep};
use crate::spectral::VecField2;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, threshold: format!("<= {limit:e}"), pass: value <= limit }
    }

    fn within(name: &str, value: Option<f64>, lo: f64, hi: f64) -> Self {
        let v = value.unwrap_or(f64::NAN);
        Check { name: name.into(), value: v, threshold: format!("[{lo}, {hi}]"), pass: (lo..=hi).contains(&v) }
    }
}

pub fn to_csv(checks: &[Check]) -> String {
    let mut s = String::from("check,value,threshold,pass\n");
    for c in checks {
        s.push_str(&format!("{},{:.6e},{},{}\n", c.name, c.value, c.threshold, if c.pass { "pass" } else { "fail" }));
    }
    s
}

/// Run every check; the residual sweep uses the configured `eps` list.
pub fn battery(cfg: &RunConfig, mut progress: impl FnMut(&str)) -> Result<(Vec<Check>, Option<Sweep>)> {
    let mut out = Vec::new();
    let geom = cfg.geometry()?;
    let u0 = cfg.velocity(geom.grid())?;
    let rep = check_admissibility(&geom, cfg.nu, Some(&u0))?;
    out.push(Check { name: "geometry.admissible".into(), value: rep.max_curv_expr, threshold: "all constraints".into(), pass: rep.geometry_ok() });
    progress("geometry");

    let sys = LimitingSystem::new(geom.clone(), cfg.nu)?;
    let (state, trace) = sys.integrate(&u0, cfg.t_end, cfg.dt, 10)?;
    let total = trace.total();
    let rate = (2.0 * cfg.nu).sqrt() / 8.0;
    let worst = trace
        .times
        .iter()
        .zip(&total)
        .map(|(t, e)| e / (total[0] * (-rate * t).exp()))
        .fold(0.0, f64::max);
    out.push(Check::at_most("limit.energy_decay", worst, 1.02));
    let nonincreasing = total.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    out.push(Check::at_most("limit.energy_monotone", nonincreasing / total[0].max(f64::MIN_POSITIVE), 1e-12));
    progress("limiting system");

    let (ubar, _) = sys.integrate(&u0, cfg.t, cfg.dt, usize::MAX)?;
    drop(state);
    let ops = cfg.layer_ops(geom.clone())?;
    let sg = cfg.sgrid()?;
    let jet: VecField2<Jet<5>> = sys.taylor_jet(&ubar.u);
    let e0 = cfg.eps[0];
    let full = Expansion::build(&sys, ops.clone(), &jet, e0, cfg.transcription)?;
    out.push(Check::at_most("expansion.decay_at_zmax", full.decay_ratio(), 1e-5));
    let exp = full.truncate::<3>();
    drop(full);
    progress("expansion");

    let sw = if cfg.eps.len() >= 3 {
        let s = sweep(&sys, ops, &ubar.u, &cfg.eps, cfg.transcription, &sg, cfg.t, |r| progress(&format!("residual eps={}", r.eps)))?;
        Some(s)
    } else {
        None
    };
    let rows = match &sw {
        Some(s) => s.rows.clone(),
        None => vec![crate::residual::SweepRow::from_evaluation(&evaluate(&exp, &sg, cfg.t, "verify")?)],
    };
    drop(exp);
    for r in &rows {
        let e = r.eps;
        for j in 1..3 {
            out.push(Check::at_most(&format!("corrector{j}.mean_removed[eps={e}]"), r.correctors[j].relative, 1e-6));
        }
        out.push(Check::at_most(&format!("assembly.divergence[eps={e}]"), r.divergence, 1e-6));
        out.push(Check::at_most(&format!("assembly.trace[eps={e}]"), r.trace, 1e-10));
        out.push(Check::at_most(&format!("residual.formula_vs_direct[eps={e}]"), r.mismatch_l2 / r.l2_total, 1e-2));
    }
    if let Some(s) = &sw {
        out.push(Check::within("residual.slope", s.residual_slope(), 1.7, 2.3));
        out.push(Check::within("residual.dt_slope", s.residual_dt_slope(), 1.7, 2.3));
    }

    let g = rk4(|g| g * g + 1.0, 0.0, 0.5, 1000);
    out.push(Check::at_most("lemma.tan_value", (g.v[1000] - 0.5f64.tan()).abs(), 1e-6));
    let tb = tan_bound(&TanBoundCase::new(1.0, 1.0, saturating_trace(1.0, 1.0, 10_000))?);
    out.push(Check::at_most("lemma.tan_bound", tb.max_excess.max(0.0), 1e-6));
    Ok((out, sw))
}
