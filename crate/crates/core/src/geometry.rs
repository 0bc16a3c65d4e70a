//! Surface geometry of the bottom `z = B(x, y)` and the admissibility gate.

use crate::error::{Error, Result};
use crate::spectral::{curl, ddx, ddy, div, grad, Field2, Grid2D, VecField2};
use std::fmt;

/// Built-in bottom shapes.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    Flat,
    /// `a sin x`
    Ridge(f64),
    /// `a sin x sin y`
    EggCarton(f64),
    /// Sum of `c cos(mx x + my y) + s sin(mx x + my y)`.
    Fourier(Vec<FourierMode>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierMode {
    pub mx: i32,
    pub my: i32,
    pub c: f64,
    pub s: f64,
}

impl Surface {
    pub fn from_name(name: &str, amp: f64) -> Result<Self> {
        match name {
            "flat" => Ok(Surface::Flat),
            "ridge" => Ok(Surface::Ridge(amp)),
            "eggcarton" => Ok(Surface::EggCarton(amp)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown surface '{name}' (expected flat, ridge, eggcarton, fourier or a dump path)"
            ))),
        }
    }

    /// Parse `mx:my:c:s` entries separated by commas.
    pub fn parse_modes(spec: &str) -> Result<Self> {
        let mut modes = Vec::new();
        for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
            let p: Vec<&str> = item.trim().split(':').collect();
            let bad = || Error::InvalidParameter(format!("bad Fourier mode '{item}', want mx:my:c:s"));
            if p.len() != 4 {
                return Err(bad());
            }
            modes.push(FourierMode {
                mx: p[0].parse().map_err(|_| bad())?,
                my: p[1].parse().map_err(|_| bad())?,
                c: p[2].parse().map_err(|_| bad())?,
                s: p[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(Surface::Fourier(modes))
    }

    pub fn sample(&self, g: Grid2D) -> Field2<f64> {
        let (kx, ky) = (2.0 * std::f64::consts::PI / g.lx, 2.0 * std::f64::consts::PI / g.ly);
        match self {
            Surface::Flat => Field2::constant(g, 0.0),
            Surface::Ridge(a) => Field2::from_fn(g, |x, _| a * (kx * x).sin()),
            Surface::EggCarton(a) => Field2::from_fn(g, |x, y| a * (kx * x).sin() * (ky * y).sin()),
            Surface::Fourier(m) => Field2::from_fn(g, |x, y| {
                m.iter()
                    .map(|q| {
                        let th = q.mx as f64 * kx * x + q.my as f64 * ky * y;
                        q.c * th.cos() + q.s * th.sin()
                    })
                    .sum()
            }),
        }
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Surface::Flat => write!(f, "flat"),
            Surface::Ridge(a) => write!(f, "ridge(a={a})"),
            Surface::EggCarton(a) => write!(f, "eggcarton(a={a})"),
            Surface::Fourier(m) => write!(f, "fourier({} modes)", m.len()),
        }
    }
}

/// Pointwise geometric data of the bottom surface.
#[derive(Clone, Debug)]
pub struct SurfaceGeometry {
    pub b: Field2<f64>,
    pub bx: Field2<f64>,
    pub by: Field2<f64>,
    pub hxx: Field2<f64>,
    pub hxy: Field2<f64>,
    pub hyy: Field2<f64>,
    pub cos_a: Field2<f64>,
    pub cos_b: Field2<f64>,
    pub cos_g: Field2<f64>,
    pub det_h0: Field2<f64>,
    pub kg: Field2<f64>,
    pub grad_cos_g: VecField2<f64>,
    /// `Delta B`.
    pub lap_b: Field2<f64>,
    /// `a = (3/2) grad(cos g) / cos g = -grad(delta)/delta`.
    pub a: VecField2<f64>,
    /// `div a`, differentiated spectrally.
    pub div_a: Field2<f64>,
}

impl SurfaceGeometry {
    pub fn grid(&self) -> Grid2D {
        self.b.grid
    }

    pub fn grad_b(&self) -> VecField2<f64> {
        VecField2 { u: self.bx.clone(), v: self.by.clone() }
    }

    /// `(-B_y, B_x)`.
    pub fn grad_perp_b(&self) -> VecField2<f64> {
        VecField2 { u: self.by.scale(-1.0), v: self.bx.clone() }
    }

    /// `cos(g)^p`.
    pub fn cos_pow(&self, p: f64) -> Field2<f64> {
        self.cos_g.map(|c| c.powf(p))
    }

    /// Entries `(a, b, c, d)` of `H0 = E + grad B grad B^T`.
    pub fn h0(&self) -> [Field2<f64>; 4] {
        let bxy = self.bx.mul(&self.by);
        [
            self.bx.map(|v| 1.0 + v * v),
            bxy.clone(),
            bxy,
            self.by.map(|v| 1.0 + v * v),
        ]
    }

    pub fn h0_inv(&self) -> [Field2<f64>; 4] {
        // det H0 = cos^-2; inverse = adj / det
        let c2 = self.cos_g.map(|c| c * c);
        let bxy = self.bx.mul(&self.by);
        [
            self.by.map(|v| 1.0 + v * v).mul(&c2),
            bxy.mul(&c2).scale(-1.0),
            bxy.mul(&c2).scale(-1.0),
            self.bx.map(|v| 1.0 + v * v).mul(&c2),
        ]
    }

    pub fn is_flat(&self) -> bool {
        self.bx.linf() == 0.0 && self.by.linf() == 0.0
    }
}

pub fn build_geometry(b: &Field2<f64>) -> Result<SurfaceGeometry> {
    if !b.is_finite() {
        return Err(Error::NonFinite("bottom surface".into()));
    }
    let bx = ddx(b);
    let by = ddy(b);
    let hxx = ddx(&bx);
    let hxy = ddy(&bx);
    let hyy = ddy(&by);
    let det_h0 = bx.zip(&by, |p, q| 1.0 + p * p + q * q);
    let cos_g = det_h0.map(|d| 1.0 / d.sqrt());
    let cos_a = bx.zip(&cos_g, |p, c| -p * c);
    let cos_b = by.zip(&cos_g, |q, c| -q * c);
    let det_h = &hxx.mul(&hyy) - &hxy.mul(&hxy);
    let kg = det_h.zip(&cos_g, |d, c| c.powi(4) * d);
    let grad_cos_g = grad(&cos_g);
    let inv_c = cos_g.map(|c| 1.5 / c);
    let a = grad_cos_g.mulf(&inv_c);
    let div_a = div(&a);
    let lap_b = &hxx + &hyy;
    Ok(SurfaceGeometry {
        b: b.clone(),
        bx,
        by,
        hxx,
        hxy,
        hyy,
        cos_a,
        cos_b,
        cos_g,
        det_h0,
        kg,
        grad_cos_g,
        lap_b,
        a,
        div_a,
    })
}

/// Constraint thresholds of the admissibility gate.
pub const RATIO_LIMIT: f64 = 1.0 / 8.0;
pub const CURV_LIMIT: f64 = 8.0 / 9.0;
pub const HEIGHT_LIMIT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub max_ratio: f64,
    pub max_curv_expr: f64,
    pub max_abs_b: f64,
    pub max_grad_u0: Option<f64>,
    pub grad_u0_limit: f64,
    pub pass_ratio: bool,
    pub pass_curv: bool,
    pub pass_height: bool,
    pub pass_data: Option<bool>,
}

impl AdmissibilityReport {
    /// Geometric constraints only.
    pub fn geometry_ok(&self) -> bool {
        self.pass_ratio && self.pass_curv && self.pass_height
    }

    pub fn all_ok(&self) -> bool {
        self.geometry_ok() && self.pass_data.unwrap_or(true)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut f = Vec::new();
        if !self.pass_ratio {
            f.push(format!("max |grad B|^2 = {:.6} >= 1/8", self.max_ratio));
        }
        if !self.pass_curv {
            f.push(format!("curvature bound {:.6} >= 8/9", self.max_curv_expr));
        }
        if !self.pass_height {
            f.push(format!("max |B| = {:.6} >= 1/4", self.max_abs_b));
        }
        if self.pass_data == Some(false) {
            f.push(format!(
                "initial data W1,inf norm {:.6} > {:.6}",
                self.max_grad_u0.unwrap_or(f64::NAN),
                self.grad_u0_limit
            ));
        }
        f
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        let optb = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "quantity,value,limit,pass\nmax_ratio,{:.17e},{:.17e},{}\nmax_curv_expr,{:.17e},{:.17e},{}\nmax_absB,{:.17e},{:.17e},{}\nmax_grad_u0,{},{:.17e},{}\n",
            self.max_ratio,
            RATIO_LIMIT,
            self.pass_ratio,
            self.max_curv_expr,
            CURV_LIMIT,
            self.pass_curv,
            self.max_abs_b,
            HEIGHT_LIMIT,
            self.pass_height,
            opt(self.max_grad_u0),
            self.grad_u0_limit,
            optb(self.pass_data)
        )
    }
}

/// `max |u| + max |grad u|` with the Frobenius norm of the gradient.
pub fn w1inf_norm(u: &VecField2<f64>) -> f64 {
    let (ux, uy, vx, vy) = (ddx(&u.u), ddy(&u.u), ddx(&u.v), ddy(&u.v));
    let mut g = 0.0f64;
    for k in 0..ux.data.len() {
        let s = ux.data[k].powi(2) + uy.data[k].powi(2) + vx.data[k].powi(2) + vy.data[k].powi(2);
        g = g.max(s.sqrt());
    }
    u.linf() + g
}

pub fn check_admissibility(
    geom: &SurfaceGeometry,
    nu: f64,
    u0: Option<&VecField2<f64>>,
) -> Result<AdmissibilityReport> {
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
    }
    let max_ratio = geom.bx.zip(&geom.by, |p, q| p * p + q * q).linf();
    let max_curv_expr = (1.0 + (2.0 / nu).sqrt()) * geom.kg.map(|k| k.abs().sqrt()).linf();
    let max_abs_b = geom.b.linf();
    let lim = (nu / 3.0).sqrt();
    let max_grad_u0 = u0.map(w1inf_norm);
    Ok(AdmissibilityReport {
        max_ratio,
        max_curv_expr,
        max_abs_b,
        max_grad_u0,
        grad_u0_limit: lim,
        pass_ratio: max_ratio < RATIO_LIMIT,
        pass_curv: max_curv_expr < CURV_LIMIT,
        pass_height: max_abs_b < HEIGHT_LIMIT,
        pass_data: max_grad_u0.map(|m| m <= lim),
    })
}

/// Layer depth `sqrt(nu) eps cos(g)^(-3/2)`.
pub fn bl_depth(geom: &SurfaceGeometry, eps: f64, nu: f64) -> Result<Field2<f64>> {
    if !(eps > 0.0 && nu > 0.0) {
        return Err(Error::InvalidParameter(format!("need eps > 0 and nu > 0, got {eps}, {nu}")));
    }
    let s = nu.sqrt() * eps;
    Ok(geom.cos_g.map(|c| s * c.powf(-1.5)))
}

/// Vorticity helper shared by several modules.
pub fn vorticity(u: &VecField2<f64>) -> Field2<f64> {
    curl(u)
}

/// Gradient of `gamma` by the closed-form map `cos^3 / sin * H grad B`;
/// singular at critical points of `B`, used only for comparison.
pub fn grad_gamma_closed_form(geom: &SurfaceGeometry) -> VecField2<f64> {
    let g = geom.grid();
    let mut out = VecField2::zeros(g);
    for k in 0..g.len() {
        let c = geom.cos_g.data[k];
        let s = (1.0 - c * c).max(0.0).sqrt();
        let f = if s > 0.0 { c.powi(3) / s } else { f64::NAN };
        let (bx, by) = (geom.bx.data[k], geom.by.data[k]);
        out.u.data[k] = f * (geom.hxx.data[k] * bx + geom.hxy.data[k] * by);
        out.v.data[k] = f * (geom.hxy.data[k] * bx + geom.hyy.data[k] * by);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid2D {
        Grid2D::periodic(64, 64).unwrap()
    }

    #[test]
    fn flat_surface() {
        let g = build_geometry(&Surface::Flat.sample(grid())).unwrap();
        assert_eq!(g.cos_g.min(), 1.0);
        assert_eq!(g.kg.linf(), 0.0);
        assert_eq!(g.hxx.linf() + g.hxy.linf() + g.hyy.linf(), 0.0);
        let r = check_admissibility(&g, 1.0, None).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert_eq!(r.max_curv_expr, 0.0);
        assert!(r.geometry_ok());
    }

    #[test]
    fn eggcarton_pointwise_values() {
        let g = build_geometry(&Surface::EggCarton(0.2).sample(grid())).unwrap();
        // grid point (16, 16) is (pi/2, pi/2)
        let k = 16 * 64 + 16;
        assert!((g.bx.data[k]).abs() < 1e-13 && (g.by.data[k]).abs() < 1e-13);
        assert!((g.cos_g.data[k] - 1.0).abs() < 1e-13);
        assert!((g.hxx.data[k] + 0.2).abs() < 1e-13);
        assert!((g.hyy.data[k] + 0.2).abs() < 1e-13);
        assert!(g.hxy.data[k].abs() < 1e-13);
        assert!((g.kg.data[k] - 0.04).abs() < 1e-13);
    }

    #[test]
    fn ridge_at_origin() {
        let geo = build_geometry(&Surface::Ridge(0.2).sample(grid())).unwrap();
        assert!((geo.bx.data[0] - 0.2).abs() < 1e-13);
        assert!((geo.cos_g.data[0] - 1.0 / 1.04f64.sqrt()).abs() < 1e-13);
        assert!(geo.kg.linf() < 1e-13);
        let d = bl_depth(&geo, 0.05, 1.0).unwrap();
        assert!((d.data[0] - 0.05 * 1.04f64.powf(0.75)).abs() < 1e-13);
        assert!((d.data[0] - 0.0514926).abs() < 1e-7);
    }

    #[test]
    fn depth_scaling() {
        let geo = build_geometry(&Surface::Flat.sample(grid())).unwrap();
        assert!((bl_depth(&geo, 0.05, 1.0).unwrap().linf() - 0.05).abs() < 1e-15);
        assert!((bl_depth(&geo, 0.1, 4.0).unwrap().linf() - 0.2).abs() < 1e-15);
        assert!(bl_depth(&geo, 0.0, 1.0).is_err());
    }

    #[test]
    fn admissibility_of_eggcartons() {
        // dense-grid closed-form oracle
        let n = 512;
        let oracle = |a: f64| {
            let (mut r, mut c) = (0.0f64, 0.0f64);
            for j in 0..n {
                for i in 0..n {
                    let (x, y) = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64);
                    let (bx, by) = (a * x.cos() * y.sin(), a * x.sin() * y.cos());
                    let (hxx, hxy) = (-a * x.sin() * y.sin(), a * x.cos() * y.cos());
                    let det = hxx * hxx - hxy * hxy;
                    let c2 = 1.0 / (1.0 + bx * bx + by * by);
                    r = r.max(bx * bx + by * by);
                    c = c.max(c2 * det.abs().sqrt());
                }
            }
            (r, (1.0 + 2f64.sqrt()) * c)
        };
        let geo = build_geometry(&Surface::EggCarton(0.2).sample(Grid2D::periodic(512, 512).unwrap())).unwrap();
        let rep = check_admissibility(&geo, 1.0, None).unwrap();
        let (r, c) = oracle(0.2);
        assert!((rep.max_ratio - r).abs() < 1e-10);
        assert!((rep.max_curv_expr - c).abs() < 1e-10);
        assert!((rep.max_ratio - 0.04).abs() < 1e-10);
        assert!((rep.max_curv_expr - 0.4828).abs() < 1e-3);
        assert!(rep.geometry_ok());
        let bad = build_geometry(&Surface::EggCarton(0.5).sample(grid())).unwrap();
        let rep = check_admissibility(&bad, 1.0, None).unwrap();
        assert!((rep.max_ratio - 0.25).abs() < 1e-10);
        assert!(!rep.pass_ratio);
    }

    #[test]
    fn data_constraint_uses_w1inf() {
        let geo = build_geometry(&Surface::Flat.sample(grid())).unwrap();
        let u = VecField2::from_fn(grid(), |_, y| (0.1 * y.sin(), 0.0));
        let rep = check_admissibility(&geo, 1.0, Some(&u)).unwrap();
        assert!((rep.max_grad_u0.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(rep.pass_data, Some(true));
        let big = u.scale(10.0);
        let rep = check_admissibility(&geo, 1.0, Some(&big)).unwrap();
        assert_eq!(rep.pass_data, Some(false));
    }

    #[test]
    fn parses_fourier_modes() {
        let s = Surface::parse_modes("1:0:0.1:0, 0:2:0:0.05").unwrap();
        let f = s.sample(grid());
        let want = Field2::from_fn(grid(), |x, y| 0.1 * x.cos() + 0.05 * (2.0 * y).sin());
        assert!((&f - &want).linf() < 1e-15);
        assert!(Surface::parse_modes("1:0:0.1").is_err());
    }
}
