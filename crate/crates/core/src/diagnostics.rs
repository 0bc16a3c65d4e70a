//! Trace validators for two comparison inequalities.

use crate::error::{Error, Result};

/// Samples `(t_k, v_k)` with increasing `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub t: Vec<f64>,
    pub v: Vec<f64>,
}

impl Trace {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() || t.is_empty() {
            return Err(Error::InvalidParameter(format!("trace needs matching non-empty samples, got {} and {}", t.len(), v.len())));
        }
        if !t.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("trace times must increase".into()));
        }
        Ok(Trace { t, v })
    }

    pub fn from_fn(t_end: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let t: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
        let v = t.iter().map(|&s| f(s)).collect();
        Trace { t, v }
    }

    pub fn zeros_like(&self) -> Self {
        Trace { t: self.t.clone(), v: vec![0.0; self.t.len()] }
    }

    /// Trapezoidal integral over the whole trace.
    pub fn integral(&self) -> f64 {
        self.t.windows(2).zip(self.v.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
    }

    pub fn max(&self) -> f64 {
        self.v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn end(&self) -> f64 {
        *self.t.last().unwrap()
    }
}

/// `d/dt f^2 <= a0 f^2 + a1 f + a2` with budgets `int a_i <= C eps0^i` and
/// `f(0) <= C eps0`.
#[derive(Clone, Debug)]
pub struct GronwallCase {
    pub a: [Trace; 3],
    pub f: Trace,
    pub eps0: f64,
    pub c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GronwallReport {
    pub passed: bool,
    /// `max f / eps0` along the trace.
    pub observed_m: f64,
    /// Constant of the explicit estimate built from the actual budgets.
    pub bound_m: f64,
}

/// Check the trace against `f <= M eps0` with
/// `M^2 eps0^2 = (f0^2 + A1 eps0 / 2 + A2) exp(A0 + A1 / (2 eps0))`, `A_i = int a_i`,
/// which follows from `a1 f <= a1 (eps0 + f^2 / eps0) / 2`.
pub fn gronwall_bound(case: &GronwallCase) -> Result<GronwallReport> {
    let GronwallCase { a, f, eps0, c } = case;
    if !(*eps0 > 0.0 && *c > 0.0) {
        return Err(Error::InvalidParameter(format!("eps0 = {eps0} and C = {c} must be positive")));
    }
    if !(f.end() > 0.0) {
        return Err(Error::InvalidParameter("trace must cover a positive time".into()));
    }
    for (i, ai) in a.iter().enumerate() {
        if ai.v.iter().any(|v| *v < 0.0) || ai.t.len() != f.t.len() {
            return Err(Error::InvalidParameter(format!("a{i} must be nonnegative and sampled with f")));
        }
    }
    if f.v.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("f must be nonnegative".into()));
    }
    let tol = 1e-12;
    let f0 = f.v[0];
    if f0 > c * eps0 * (1.0 + tol) {
        return Err(Error::Hypothesis(format!("f(0) = {f0:e} exceeds C eps0 = {:e}", c * eps0)));
    }
    let ai: Vec<f64> = a.iter().map(Trace::integral).collect();
    for (i, v) in ai.iter().enumerate() {
        let budget = c * eps0.powi(i as i32);
        if *v > budget * (1.0 + tol) {
            return Err(Error::Hypothesis(format!("int a{i} = {v:e} exceeds C eps0^{i} = {budget:e}")));
        }
    }
    let y = (f0 * f0 + 0.5 * ai[1] * eps0 + ai[2]) * (ai[0] + 0.5 * ai[1] / eps0).exp();
    let bound_m = y.sqrt() / eps0;
    let observed_m = f.max() / eps0;
    Ok(GronwallReport { passed: observed_m <= bound_m * (1.0 + 1e-9), observed_m, bound_m })
}

/// `g' <= C1^2 g^2 + C2^2`, `g(0) = 0`.
#[derive(Clone, Debug)]
pub struct TanBoundCase {
    pub c1: f64,
    pub c2: f64,
    pub g: Trace,
}

impl TanBoundCase {
    pub fn new(c1: f64, c2: f64, g: Trace) -> Result<Self> {
        if !(c1 > 0.0 && c2 > 0.0) {
            return Err(Error::InvalidParameter(format!("C1 = {c1} and C2 = {c2} must be positive")));
        }
        Ok(TanBoundCase { c1, c2, g })
    }

    /// Last time at which the bound is checked.
    pub fn horizon(&self) -> f64 {
        0.9 * std::f64::consts::FRAC_PI_2 / (self.c1 * self.c2)
    }

    pub fn bound(&self, t: f64) -> f64 {
        (self.c1 * self.c2 * t).tan() * self.c2 / self.c1
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TanReport {
    pub passed: bool,
    /// Largest `g - bound` over the checked samples.
    pub max_excess: f64,
    pub checked: usize,
}

pub fn tan_bound(case: &TanBoundCase) -> TanReport {
    let h = case.horizon();
    let mut max_excess = f64::NEG_INFINITY;
    let mut checked = 0;
    for (&t, &g) in case.g.t.iter().zip(&case.g.v) {
        if t > h {
            break;
        }
        max_excess = max_excess.max(g - case.bound(t));
        checked += 1;
    }
    TanReport { passed: max_excess <= 1e-6, max_excess, checked }
}

/// Classical RK4 for a scalar autonomous ODE, sampled every step.
pub fn rk4(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, n: usize) -> Trace {
    let dt = t_end / n as f64;
    let mut t = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    let mut y = y0;
    t.push(0.0);
    v.push(y);
    for k in 0..n {
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t.push((k + 1) as f64 * dt);
        v.push(y);
    }
    Trace { t, v }
}

/// The equality case `g' = C1^2 g^2 + C2^2` up to the check horizon.
pub fn saturating_trace(c1: f64, c2: f64, n: usize) -> Trace {
    let h = 0.9 * std::f64::consts::FRAC_PI_2 / (c1 * c2);
    rk4(|g| c1 * c1 * g * g + c2 * c2, 0.0, h, n)
}
