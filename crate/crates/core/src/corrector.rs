//! Divergence lifting in terrain coordinates.
//!
//! Given a scalar `f(x, y, s)`, builds `u` with terrain divergence `f` and
//! zero trace on both walls: the column integral `F` is lifted horizontally by
//! a bump `g(s)` times `grad Phi` with `Delta Phi = F - <F>`, and the rest is
//! carried by the wall-normal flux.

use crate::channel::{terrain_divergence, ChannelField, SGrid};
use crate::column::Col3;
use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use crate::jet::Elem;
use crate::spectral::{grad, inv_laplacian, laplacian, Field2};

/// Smooth bump `(t (1 - t))^5` on `(1/4, 7/4)`, `t = (s - 1/4) / (3/2)`, with
/// unit integral.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bump;

impl Bump {
    pub const START: f64 = 0.25;
    pub const END: f64 = 1.75;
    /// `1 / (3/2 * B(6, 6))`.
    const NORM: f64 = 1848.0;

    pub fn eval(&self, s: f64) -> f64 {
        if s <= Self::START || s >= Self::END {
            return 0.0;
        }
        let t = (s - Self::START) / (Self::END - Self::START);
        Self::NORM * (t * (1.0 - t)).powi(5)
    }

    /// Samples rescaled so the node quadrature integrates them to exactly 1.
    pub fn samples(&self, sg: &SGrid) -> Vec<f64> {
        let g: Vec<f64> = sg.s().iter().map(|&s| self.eval(s)).collect();
        let q = sg.nodes.integral(&g);
        g.iter().map(|v| v / q).collect()
    }
}

fn lane_means<T: Elem>(f: &Field2<T>) -> T {
    let mut m = T::zero();
    for &v in &f.data {
        m += v;
    }
    m * (1.0 / f.data.len() as f64)
}

/// Corrector together with the mean that had to be removed from its source.
#[derive(Clone, Debug)]
pub struct Lifted<T> {
    pub u: Col3<T>,
    /// `int_Omega f`, per Taylor lane.
    pub integral: Vec<f64>,
    /// `|int_Omega f| / ||f||`, largest over lanes.
    pub relative: f64,
}

fn lift<T: Elem>(f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid) -> Lifted<T> {
    let grid = f.grid;
    let nodes = &sg.nodes;
    let big_f = f.integrate(nodes);
    let mean = lane_means(&big_f);
    let area = grid.area();
    let integral: Vec<f64> = (0..T::LANES).map(|k| mean.lane(k) * area).collect();
    let norm: Vec<f64> = (0..T::LANES).map(|k| f.lane(k).l2_sq(nodes).sqrt()).collect();
    let relative = integral
        .iter()
        .zip(&norm)
        .map(|(i, n)| if *n > 0.0 { i.abs() / n } else { 0.0 })
        .fold(0.0, f64::max);
    let g = Bump.samples(sg);
    let phi = inv_laplacian(&big_f);
    let gp = grad(&phi);
    let lap = laplacian(&phi);
    let n2 = grid.len();
    let ns = f.n;
    let mut ux = ChannelField::zeros(grid, ns);
    let mut uy = ChannelField::zeros(grid, ns);
    let mut src = f.clone();
    for k in 0..ns {
        for c in 0..n2 {
            let i = k * n2 + c;
            ux.data[i] = gp.u.data[c] * g[k];
            uy.data[i] = gp.v.data[c] * g[k];
            // lifted part plus the removed mean, both carried by the bump
            src.data[i] -= (lap.data[c] + mean) * g[k];
        }
    }
    let mut w = src.cumulative(nodes);
    w.add_assign(&ux.mul2f(&geom.bx));
    w.add_assign(&uy.mul2f(&geom.by));
    for c in 0..n2 {
        // exact zero trace; the residual of the column balance is roundoff
        w.data[(ns - 1) * n2 + c] = T::zero();
    }
    Lifted { u: [ux, uy, w], integral, relative }
}

/// Corrector for a compatible source; rejects a mean above `tol` relative.
pub fn solve_corrector<T: Elem>(f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid, tol: f64) -> Result<Col3<T>> {
    let l = lift(f, geom, sg);
    if l.relative > tol {
        let mean = l.integral.iter().cloned().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
        return Err(Error::Incompatible { mean, relative: l.relative, tol });
    }
    Ok(l.u)
}

/// Corrector for the source with its mean removed through the bump; the
/// removed mean is reported.
pub fn solve_corrector_balanced<T: Elem>(f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid) -> Lifted<T> {
    lift(f, geom, sg)
}

/// Largest wall value of a three-component field.
pub fn wall_trace<T: Elem>(u: &Col3<T>) -> f64 {
    let n = u[0].n;
    u.iter()
        .map(|f| (0..f.n2()).fold(0.0f64, |m, c| m.max(f.at(0, c).max_abs()).max(f.at(n - 1, c).max_abs())))
        .fold(0.0, f64::max)
}

/// `||div u - f|| / ||f||` in terrain coordinates, value lane.
pub fn divergence_defect<T: Elem>(u: &Col3<T>, f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid) -> f64 {
    let d = terrain_divergence(u, geom, sg).value();
    let fv = f.value();
    let e = d.sub(&fv).l2_sq(&sg.nodes).sqrt();
    let n = fv.l2_sq(&sg.nodes).sqrt();
    if n > 0.0 {
        e / n
    } else {
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Surface};
    use crate::interior::Cutoff;
    use crate::spectral::Grid2D;

    fn setup() -> (SurfaceGeometry, SGrid) {
        let g = Grid2D::periodic(16, 16).unwrap();
        (build_geometry(&Surface::EggCarton(0.2).sample(g)).unwrap(), SGrid::default())
    }

    #[test]
    fn bump_is_normalized_and_supported() {
        let sg = SGrid::default();
        let g = Bump.samples(&sg);
        assert!((sg.nodes.integral(&g) - 1.0).abs() < 1e-14);
        // the analytic normalization is already close on a fine grid
        let raw: Vec<f64> = sg.s().iter().map(|&s| Bump.eval(s)).collect();
        assert!((sg.nodes.integral(&raw) - 1.0).abs() < 1e-7);
        assert_eq!(Bump.eval(0.25), 0.0);
        assert_eq!(Bump.eval(1.8), 0.0);
    }

    #[test]
    fn zero_source_gives_zero() {
        let (geom, sg) = setup();
        let f = ChannelField::<f64>::zeros(geom.grid(), sg.len());
        let u = solve_corrector(&f, &geom, &sg, 1e-8).unwrap();
        assert_eq!(u.iter().map(|c| c.max_abs()).fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn lifts_a_zero_mean_source() {
        let (geom, sg) = setup();
        let g = geom.grid();
        let f = ChannelField::from_fn(g, sg.len(), |k, c| Cutoff.d1(sg.s()[k]) * g.x(c % g.nx).sin());
        let u = solve_corrector(&f, &geom, &sg, 1e-8).unwrap();
        assert!(divergence_defect(&u, &f, &geom, &sg) < 1e-8, "{}", divergence_defect(&u, &f, &geom, &sg));
        let m = u.iter().map(|c| c.max_abs()).fold(0.0, f64::max);
        assert!(wall_trace(&u) <= 1e-12 * m);
    }

    #[test]
    fn rejects_a_nonzero_mean() {
        let (geom, sg) = setup();
        let f = ChannelField::from_fn(geom.grid(), sg.len(), |k, _| Cutoff.d1(sg.s()[k]));
        match solve_corrector(&f, &geom, &sg, 1e-8) {
            Err(Error::Incompatible { mean, .. }) => {
                let area = geom.grid().area();
                assert!((mean - area).abs() < 1e-9 * area, "{mean}");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
        let l = solve_corrector_balanced(&f, &geom, &sg);
        assert!(wall_trace(&l.u) < 1e-12);
    }
}
