//! Two-dimensional damped Euler limiting system
//!
//! `d_t u = -P[(u . grad) u + sqrt(nu/2) (H0 - E1) u]`
//!
//! with `u` horizontal and periodic, integrated by RK4 with projection at
//! every stage. The same tendency runs on plain fields and on time jets,
//! which is how downstream modules get exact time derivatives.

use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use crate::jet::{Elem, Jet};
use crate::spectral::{
    curl, ddx, ddy, dealias, div, hs_norm, inv_laplacian, leray_project, Field2, VecField2,
};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DampingForm {
    /// `sqrt(nu/2) (H0 - E1)`.
    #[default]
    Constant,
    /// `sqrt(nu/(2 cos g)) (H0 - E1 / cos g)`.
    Variable,
}

#[derive(Clone, Debug)]
pub struct LimitingSystem {
    pub geom: Arc<SurfaceGeometry>,
    pub nu: f64,
    pub damping: DampingForm,
}

#[derive(Clone, Debug)]
pub struct LimitState {
    pub t: f64,
    pub u: VecField2<f64>,
}

/// Advection `(u . grad) u` with the two-thirds filter.
pub fn advection<T: Elem>(u: &VecField2<T>) -> VecField2<T> {
    let (ux, uy, vx, vy) = (ddx(&u.u), ddy(&u.u), ddx(&u.v), ddy(&u.v));
    VecField2 {
        u: dealias(&(&u.u.mul(&ux) + &u.v.mul(&uy))),
        v: dealias(&(&u.u.mul(&vx) + &u.v.mul(&vy))),
    }
}

impl LimitingSystem {
    pub fn new(geom: Arc<SurfaceGeometry>, nu: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
        }
        Ok(LimitingSystem { geom, nu, damping: DampingForm::Constant })
    }

    pub fn with_damping(mut self, d: DampingForm) -> Self {
        self.damping = d;
        self
    }

    /// Decay rate of the exact solutions, `sqrt(nu/2)`.
    pub fn rate(&self) -> f64 {
        (self.nu / 2.0).sqrt()
    }

    /// Damping term applied pointwise.
    pub fn damping_term<T: Elem>(&self, u: &VecField2<T>) -> VecField2<T> {
        let g = &self.geom;
        let [a, b, c, d] = g.h0();
        let h0u = u.apply_matrix(&a, &b, &c, &d);
        match self.damping {
            DampingForm::Constant => (&h0u - &u.e1()).scale(self.rate()),
            DampingForm::Variable => {
                let inv_c = g.cos_g.map(|c| 1.0 / c);
                let coef = g.cos_g.map(|c| (self.nu / (2.0 * c)).sqrt());
                (&h0u - &u.e1().mulf(&inv_c)).mulf(&coef)
            }
        }
    }

    /// Unprojected right-hand side `(u . grad) u + damping`.
    pub fn forcing<T: Elem>(&self, u: &VecField2<T>) -> VecField2<T> {
        &advection(u) + &self.damping_term(u)
    }

    pub fn tendency<T: Elem>(&self, u: &VecField2<T>) -> VecField2<T> {
        -&leray_project(&self.forcing(u))
    }

    /// Largest stable step accepted by [`Self::step`].
    pub fn cfl_limit(&self, u: &VecField2<f64>) -> f64 {
        let g = u.grid();
        let h = g.hx().min(g.hy());
        let m = u.linf();
        if m == 0.0 {
            f64::INFINITY
        } else {
            0.5 * h / m
        }
    }

    pub fn step(&self, s: &LimitState, dt: f64) -> Result<LimitState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let lim = self.cfl_limit(&s.u);
        if dt > lim {
            return Err(Error::Cfl { dt, limit: lim });
        }
        let stage = |base: &VecField2<f64>, k: &VecField2<f64>, h: f64| {
            let mut w = base.clone();
            w.axpy(h, k);
            leray_project(&w)
        };
        let k1 = self.tendency(&s.u);
        let k2 = self.tendency(&stage(&s.u, &k1, 0.5 * dt));
        let k3 = self.tendency(&stage(&s.u, &k2, 0.5 * dt));
        let k4 = self.tendency(&stage(&s.u, &k3, dt));
        let mut u = s.u.clone();
        u.axpy(dt / 6.0, &k1);
        u.axpy(dt / 3.0, &k2);
        u.axpy(dt / 3.0, &k3);
        u.axpy(dt / 6.0, &k4);
        let u = leray_project(&u);
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("limiting state at t = {}", s.t + dt)));
        }
        Ok(LimitState { t: s.t + dt, u })
    }

    /// Taylor jet of the trajectory through `u`, from the ODE recursion.
    pub fn taylor_jet<const N: usize>(&self, u: &VecField2<f64>) -> VecField2<Jet<N>> {
        let mut j: VecField2<Jet<N>> = u.lift();
        for k in 0..N - 1 {
            let f = self.tendency(&j);
            let s = 1.0 / (k + 1) as f64;
            j.u.set_lane(k + 1, &f.u.lane(k).scale(s));
            j.v.set_lane(k + 1, &f.v.lane(k).scale(s));
        }
        j
    }

    /// Zero-mean pressure closing the momentum balance.
    pub fn recover_pressure<T: Elem>(&self, u: &VecField2<T>) -> Field2<T> {
        -&inv_laplacian(&div(&self.forcing(u)))
    }

    /// Momentum residual `d_t u + forcing + grad p` for a state and its pressure.
    pub fn momentum_residual(&self, u: &VecField2<f64>, p: &Field2<f64>) -> VecField2<f64> {
        let mut r = &self.tendency(u) + &self.forcing(u);
        r.u.add_assign(&ddx(p));
        r.v.add_assign(&ddy(p));
        r
    }

    pub fn vertical_component<T: Elem>(&self, u: &VecField2<T>) -> Field2<T> {
        u.dotf(&self.geom.grad_b())
    }

    /// `u - e^{-rate t} u0` and its vorticity.
    pub fn tilde_fields(&self, s: &LimitState, u0: &VecField2<f64>) -> (VecField2<f64>, Field2<f64>) {
        let mut w = s.u.clone();
        w.axpy(-(-self.rate() * s.t).exp(), u0);
        let om = curl(&w);
        (w, om)
    }

    /// Material derivative `d_t u3 + u . grad u3` of the vertical component.
    pub fn vertical_material_derivative(&self, u: &VecField2<f64>) -> Field2<f64> {
        let j: VecField2<Jet<2>> = self.taylor_jet(u);
        let u3 = self.vertical_component(&j);
        let u3v = u3.value();
        let dt = u3.lane(1);
        &dt + &(&u.u.mul(&ddx(&u3v)) + &u.v.mul(&ddy(&u3v)))
    }

    pub fn integrate(
        &self,
        u0: &VecField2<f64>,
        t_end: f64,
        dt: f64,
        record_every: usize,
    ) -> Result<(LimitState, DecayTrace)> {
        if !(t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!("end time must be non-negative, got {t_end}")));
        }
        let nsteps = (t_end / dt).round() as usize;
        let dt = if nsteps > 0 { t_end / nsteps as f64 } else { dt };
        let mut s = LimitState { t: 0.0, u: leray_project(u0) };
        let mut tr = DecayTrace::default();
        tr.record(self, &s, u0);
        for n in 1..=nsteps {
            s = self.step(&s, dt)?;
            if n % record_every.max(1) == 0 || n == nsteps {
                tr.record(self, &s, u0);
            }
        }
        Ok((s, tr))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecayTrace {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub enstrophy: Vec<f64>,
    pub tilde_energy: Vec<f64>,
    pub tilde_ens_h1: Vec<f64>,
}

impl DecayTrace {
    pub fn record(&mut self, sys: &LimitingSystem, s: &LimitState, u0: &VecField2<f64>) {
        let (ut, wt) = sys.tilde_fields(s, u0);
        self.times.push(s.t);
        self.energy.push(s.u.l2().powi(2));
        self.enstrophy.push(curl(&s.u).l2().powi(2));
        self.tilde_energy.push(ut.l2().powi(2));
        self.tilde_ens_h1.push(hs_norm(&wt, 1.0).powi(2));
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `energy + enstrophy` at each record.
    pub fn total(&self) -> Vec<f64> {
        self.energy.iter().zip(&self.enstrophy).map(|(a, b)| a + b).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,energy,enstrophy,tilde_energy,tilde_ens_h1\n");
        for k in 0..self.len() {
            s.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                self.times[k], self.energy[k], self.enstrophy[k], self.tilde_energy[k], self.tilde_ens_h1[k]
            ));
        }
        s
    }
}

/// Data of the compatibility test.
#[derive(Clone, Debug)]
pub struct Compatibility {
    /// `|| P[(u0 . grad) u0 + sqrt(nu/2) (grad B grad B^T) u0] ||`.
    pub residual: f64,
    /// `|| P[E1 u0] ||`, zero when `E1 u0` is a gradient.
    pub rotation_residual: f64,
    /// `Delta^{-1} div(E1 u0)`.
    pub phi: Field2<f64>,
    pub p0: Field2<f64>,
}

pub fn compatibility_residual(u0: &VecField2<f64>, geom: &SurfaceGeometry, nu: f64) -> Compatibility {
    let gb = geom.grad_b();
    let f = &advection(u0) + &VecField2 {
        u: geom.bx.mul(&u0.dot(&gb)),
        v: geom.by.mul(&u0.dot(&gb)),
    }
    .scale((nu / 2.0).sqrt());
    let e1 = u0.e1();
    Compatibility {
        residual: leray_project(&f).l2(),
        rotation_residual: leray_project(&e1).l2(),
        phi: inv_laplacian(&div(&e1)),
        p0: -&inv_laplacian(&div(&f)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Surface};
    use crate::spectral::{grad_perp, Grid2D};
    use std::f64::consts::PI;

    fn sys(s: Surface, nu: f64) -> LimitingSystem {
        let g = Grid2D::periodic(64, 64).unwrap();
        LimitingSystem::new(Arc::new(build_geometry(&s.sample(g)).unwrap()), nu).unwrap()
    }

    fn grid() -> Grid2D {
        Grid2D::periodic(64, 64).unwrap()
    }

    #[test]
    fn tendency_examples() {
        let s = sys(Surface::Flat, 2.0);
        assert_eq!(s.tendency(&VecField2::<f64>::zeros(grid())).linf(), 0.0);
        let u = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        assert!((&s.tendency(&u) + &u).linf() < 1e-12);
        let r = sys(Surface::Ridge(0.2), 1.0);
        let u = VecField2::from_fn(grid(), |x, _| (0.0, 0.2 * x.cos()));
        assert!((&r.tendency(&u) + &u.scale(r.rate())).linf() < 1e-12);
    }

    #[test]
    fn shear_decays_exactly() {
        let s = sys(Surface::Flat, 2.0);
        let u0 = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let (end, tr) = s.integrate(&u0, 1.0, 1e-3, 100).unwrap();
        assert!((&end.u - &u0.scale((-1.0f64).exp())).linf() < 1e-8);
        assert!(tr.tilde_energy.iter().all(|&v| v < 1e-16));
    }

    #[test]
    fn ridge_wave_decays_exactly() {
        let s = sys(Surface::Ridge(0.2), 1.0);
        let u0 = VecField2::from_fn(grid(), |x, _| (0.0, 0.2 * x.cos()));
        let (end, _) = s.integrate(&u0, 1.0, 1e-3, 1000).unwrap();
        assert!((&end.u - &u0.scale((-0.5f64.sqrt()).exp())).linf() < 1e-7);
    }

    #[test]
    fn step_rejects_cfl_violation() {
        let s = sys(Surface::Flat, 1.0);
        let u0 = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let st = LimitState { t: 0.0, u: u0 };
        assert!(matches!(s.step(&st, 1.0), Err(Error::Cfl { .. })));
        let z = LimitState { t: 0.0, u: VecField2::zeros(grid()) };
        assert_eq!(s.step(&z, 10.0).unwrap().u.linf(), 0.0);
    }

    #[test]
    fn pressure_of_shear_flow() {
        let s = sys(Surface::Flat, 2.0);
        let u = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let p = s.recover_pressure(&u);
        let want = Field2::from_fn(grid(), |_, y| y.cos());
        assert!((&p - &want).linf() < 1e-12);
        assert!(s.momentum_residual(&u, &p).linf() < 1e-12);
    }

    #[test]
    fn vertical_component_examples() {
        let e = sys(Surface::EggCarton(0.2), 1.0);
        let u = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let u3 = e.vertical_component(&u);
        // (pi/2, pi/4) is grid point (16, 8)
        assert!(u3.at(16, 8).abs() < 1e-13);
        let r = sys(Surface::Ridge(0.2), 1.0);
        let w = VecField2::from_fn(grid(), |x, _| (0.0, (2.0 * x).sin()));
        assert!(r.vertical_component(&w).linf() < 1e-13);
    }

    #[test]
    fn jet_matches_tendency_and_exact_decay() {
        let s = sys(Surface::Flat, 2.0);
        let u = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        let j: VecField2<Jet<5>> = s.taylor_jet(&u);
        // exact solution e^{-t} u: coefficients (-1)^k / k!
        let mut fact = 1.0;
        for k in 0..5 {
            if k > 0 {
                fact *= k as f64;
            }
            let want = u.scale((-1.0f64).powi(k as i32) / fact);
            assert!((&j.lane(k) - &want).linf() < 1e-12);
        }
    }

    #[test]
    fn compatibility_examples() {
        let f = sys(Surface::Flat, 1.0);
        let u = VecField2::from_fn(grid(), |_, y| (y.sin(), 0.0));
        assert!(compatibility_residual(&u, &f.geom, 1.0).residual < 1e-12);
        let r = sys(Surface::Ridge(0.2), 1.0);
        let w = VecField2::from_fn(grid(), |x, _| (0.0, 0.2 * x.cos()));
        assert!(compatibility_residual(&w, &r.geom, 1.0).residual < 1e-12);
        // (sin y, sin 2x): rotational part of the advection is
        // (-3/5 sin 2x cos y, 6/5 cos 2x sin y), norm sqrt(1.8) pi.
        let q = VecField2::from_fn(grid(), |x, y| (y.sin(), (2.0 * x).sin()));
        let c = compatibility_residual(&q, &f.geom, 1.0);
        assert!((c.residual - 1.8f64.sqrt() * PI).abs() < 1e-10);
    }

    #[test]
    fn cellular_flow_is_compatible_and_exact() {
        let e = sys(Surface::EggCarton(0.2), 1.0);
        let psi = Field2::from_fn(grid(), |x, y| 0.2 * x.sin() * y.sin());
        let u0 = grad_perp(&psi);
        assert!(e.vertical_component(&u0).linf() < 1e-13);
        let c = compatibility_residual(&u0, &e.geom, 1.0);
        assert!(c.residual < 1e-12 && c.rotation_residual < 1e-12);
        assert!((&e.tendency(&u0) + &u0.scale(e.rate())).linf() < 1e-12);
        assert!(e.vertical_material_derivative(&u0).linf() < 1e-12);
    }
}
