//! Boundary-layer coordinate, scaled differential operators and the Ekman
//! column solver.
//!
//! Layer fields depend on `(x, y, Z)` with `Z` the stretched distance from a
//! wall, `Z = (z - B)/delta` at the bottom and `Z = (B + 2 - z)/delta` at the
//! top. In these variables the gradient splits as
//! `grad = grad0 + delta^-1 n d_Z` with `n = sigma (-grad B, 1)`, and the
//! Laplacian as `lap0 + delta^-1 lapm1 + delta^-2 lapm2`.

use crate::column::{ColumnField, Col3};
use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use crate::jet::Elem;
use crate::nodes::{graded_nodes, CStencil, Nodes};
use crate::spectral::{Field2, Grid2D, VecField2};
use num_complex::Complex64;
use std::f64::consts::SQRT_2;
use std::sync::Arc;

pub type BLField<T> = ColumnField<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Top,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Bottom => 1.0,
            Side::Top => -1.0,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Bottom => 0,
            Side::Top => 1,
        }
    }

    pub const BOTH: [Side; 2] = [Side::Bottom, Side::Top];
}

/// Decay rate `kappa = (1 - i)/sqrt 2` of the solutions `e^{-kappa Z}` of
/// `w'' + i w = 0`.
pub fn ekman_kappa() -> Complex64 {
    Complex64::new(1.0, -1.0) / SQRT_2
}

/// Stretched-coordinate grid with precomputed exponential kernels.
#[derive(Clone, Debug)]
pub struct BLGrid {
    pub nodes: Nodes,
    pub zmax: f64,
    pub ratio: f64,
    fw: Vec<CStencil>,
    bw: Vec<CStencil>,
    decay: Vec<Complex64>,
}

impl BLGrid {
    pub fn new(zmax: f64, nz: usize, ratio: f64) -> Result<Self> {
        if !(zmax >= 20.0) {
            return Err(Error::InvalidGrid(format!("layer truncation Z_max = {zmax} must be at least 20")));
        }
        if !(1.0..=1.05).contains(&ratio) {
            return Err(Error::InvalidGrid(format!("layer grading ratio {ratio} must lie in [1, 1.05]")));
        }
        if nz < 32 {
            return Err(Error::InvalidGrid(format!("need at least 32 layer nodes, got {nz}")));
        }
        let nodes = Nodes::new(graded_nodes(zmax, nz, ratio), 7);
        let (fw, bw, decay) = nodes.exp_kernels(ekman_kappa());
        Ok(BLGrid { nodes, zmax, ratio, fw, bw, decay })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn z(&self) -> &[f64] {
        &self.nodes.x
    }
}

impl Default for BLGrid {
    fn default() -> Self {
        BLGrid::new(40.0, 256, 1.01).expect("default layer grid")
    }
}

/// `K = cos(g) E1 H0` as entries `[[k11, k12], [k21, k22]]`; `K^2 = -E`.
pub fn ekman_matrix(geom: &SurfaceGeometry) -> [Field2<f64>; 4] {
    let [a, b, _, d] = geom.h0();
    let c = &geom.cos_g;
    [b.mul(c), d.mul(c), a.mul(c).scale(-1.0), b.mul(c).scale(-1.0)]
}

/// Layer propagator `M(Z) = -e^{-Z} (cos Z E + sin Z K)` for one column.
pub fn propagator(k: [f64; 4], z: f64) -> [f64; 4] {
    let e = (-z).exp();
    let (cz, sz) = (z.cos(), z.sin());
    [-e * (cz + sz * k[0]), -e * sz * k[1], -e * sz * k[2], -e * (cz + sz * k[3])]
}

/// Scalars `(alpha, beta)` of `d^n/dZ^n M(Z/sqrt 2) = alpha E + beta K`.
pub fn order0_coeffs(z: f64, n: u32) -> (f64, f64) {
    let k = ekman_kappa();
    let v = -(-k * z).exp() * (-k).powu(n);
    (v.re, v.im)
}

/// `int_Z^inf` of the order-0 coefficients.
fn order0_tails(z: f64) -> (f64, f64) {
    let v = -(-ekman_kappa() * z).exp() / ekman_kappa();
    (v.re, v.im)
}

/// Geometry per column, with the operator coefficients of both layers.
#[derive(Clone, Debug)]
pub struct LayerOps {
    pub geom: Arc<SurfaceGeometry>,
    pub bl: Arc<BLGrid>,
    pub a_sq: Field2<f64>,
    /// `|a|^2 + div a`.
    pub c0: Field2<f64>,
    pub cos_inv2: Field2<f64>,
    pub k: [Field2<f64>; 4],
    /// Eigenvector `q` of `K` for `+i` and the row `l` with `l . q = 1`, `l . conj(q) = 0`.
    eig: Vec<([Complex64; 2], [Complex64; 2])>,
}

impl LayerOps {
    pub fn new(geom: Arc<SurfaceGeometry>, bl: Arc<BLGrid>) -> Self {
        let a_sq = geom.a.norm_sq();
        let c0 = &a_sq + &geom.div_a;
        let cos_inv2 = geom.cos_g.map(|c| 1.0 / (c * c));
        let k = ekman_matrix(&geom);
        let n2 = geom.grid().len();
        let i = Complex64::i();
        let eig = (0..n2)
            .map(|c| {
                let (k11, k12) = (k[0].data[c], k[1].data[c]);
                // (K - i) q = 0 with q = (k12, i - k11); k12 = cos g (1 + By^2) > 0
                let q = [Complex64::new(k12, 0.0), i - k11];
                let det = q[0] * q[1].conj() - q[0].conj() * q[1];
                let l = [q[1].conj() / det, -q[0].conj() / det];
                (q, l)
            })
            .collect();
        LayerOps { geom, bl, a_sq, c0, cos_inv2, k, eig }
    }

    pub fn grid(&self) -> Grid2D {
        self.geom.grid()
    }

    pub fn nz(&self) -> usize {
        self.bl.len()
    }

    pub fn z(&self) -> &[f64] {
        self.bl.z()
    }

    pub fn dz<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        f.d1(&self.bl.nodes)
    }

    pub fn dzz<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        f.d2(&self.bl.nodes)
    }

    /// `int_Z^inf f`.
    pub fn tail<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        f.tail(&self.bl.nodes)
    }

    /// Horizontal part of the gradient at fixed physical height.
    pub fn grad0<T: Elem>(&self, f: &BLField<T>) -> [BLField<T>; 2] {
        let zf = self.dz(f).mul_nodes(self.z());
        let mut gx = f.ddx();
        gx.add_assign(&zf.mul2f(&self.geom.a.u));
        let mut gy = f.ddy();
        gy.add_assign(&zf.mul2f(&self.geom.a.v));
        [gx, gy]
    }

    /// Divergence of a horizontal layer vector at fixed physical height.
    pub fn div0<T: Elem>(&self, v: &[BLField<T>; 2]) -> BLField<T> {
        let mut out = v[0].ddx();
        out.add_assign(&v[1].ddy());
        let av = v[0].mul2f(&self.geom.a.u).add(&v[1].mul2f(&self.geom.a.v));
        out.add_assign(&self.dz(&av).mul_nodes(self.z()));
        out
    }

    /// Order-one part of the Laplacian.
    pub fn lap0<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        let a = &self.geom.a;
        let fz = self.dz(f);
        let mut out = f.hmap(crate::spectral::laplacian);
        let cross = fz.ddx().mul2f(&a.u).add(&fz.ddy().mul2f(&a.v));
        out.axpy(2.0, &cross.mul_nodes(self.z()));
        out.add_assign(&fz.mul2f(&self.c0).mul_nodes(self.z()));
        let z2: Vec<f64> = self.z().iter().map(|z| z * z).collect();
        out.add_assign(&self.dzz(f).mul2f(&self.a_sq).mul_nodes(&z2));
        out
    }

    /// Coefficient of `delta^-1` in the Laplacian.
    pub fn lapm1<T: Elem>(&self, side: Side, f: &BLField<T>) -> BLField<T> {
        let g = &self.geom;
        let s = -side.sign();
        let fz = self.dz(f);
        let adb = &g.a.u.mul(&g.bx) + &g.a.v.mul(&g.by);
        let mut out = fz.ddx().mul2f(&g.bx).add(&fz.ddy().mul2f(&g.by)).scale(2.0 * s);
        out.add_assign(&fz.mul2f(&(&g.lap_b.scale(s) + &adb.scale(2.0 * s))));
        out.add_assign(&self.dzz(f).mul2f(&adb.scale(2.0 * s)).mul_nodes(self.z()));
        out
    }

    /// Coefficient of `delta^-2` in the Laplacian, `cos^-2 d_ZZ`.
    pub fn lapm2<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        self.dzz(f).mul2f(&self.cos_inv2)
    }

    /// Full layer Laplacian for a given depth field.
    pub fn laplacian<T: Elem>(&self, side: Side, f: &BLField<T>, delta: &Field2<f64>) -> BLField<T> {
        let di = delta.map(|d| 1.0 / d);
        let di2 = di.mul(&di);
        let mut out = self.lap0(f);
        out.add_assign(&self.lapm1(side, f).mul2f(&di));
        out.add_assign(&self.lapm2(f).mul2f(&di2));
        out
    }

    /// `n . v = sigma (v3 - grad B . v_h)`.
    pub fn normal_component<T: Elem>(&self, side: Side, v: &Col3<T>) -> BLField<T> {
        let g = &self.geom;
        let mut w = v[2].clone();
        w.sub_assign(&v[0].mul2f(&g.bx));
        w.sub_assign(&v[1].mul2f(&g.by));
        w.scale(side.sign())
    }

    /// Decaying solution of `u'' + K u = G` on every column with `u(0) = u0`.
    pub fn solve_ekman<T: Elem>(&self, u0: &VecField2<T>, g: &[BLField<T>; 2]) -> [BLField<T>; 2] {
        let bl = &self.bl;
        let nz = bl.len();
        let n2 = self.grid().len();
        let kappa = ekman_kappa();
        let inv2k = -1.0 / (2.0 * kappa);
        let mut out = [BLField::zeros(self.grid(), nz), BLField::zeros(self.grid(), nz)];
        let cmul = |w: Complex64, (re, im): (T, T)| (re * w.re - im * w.im, re * w.im + im * w.re);
        let cadd = |a: (T, T), b: (T, T)| (a.0 + b.0, a.1 + b.1);
        let zero = (T::zero(), T::zero());
        let mut gc = vec![zero; nz];
        let mut fwd = vec![zero; nz];
        let mut bwd = vec![zero; nz];
        for c in 0..n2 {
            let (q, l) = self.eig[c];
            for k in 0..nz {
                let (gx, gy) = (g[0].at(k, c), g[1].at(k, c));
                gc[k] = cadd(cmul(l[0], (gx, T::zero())), cmul(l[1], (gy, T::zero())));
            }
            let conv = |st: &CStencil, gc: &[(T, T)]| {
                st.w.iter().enumerate().fold((T::zero(), T::zero()), |acc, (m, &w)| cadd(acc, cmul(w, gc[st.start + m])))
            };
            fwd[0] = zero;
            for i in 0..nz - 1 {
                fwd[i + 1] = cadd(cmul(bl.decay[i], fwd[i]), conv(&bl.fw[i], &gc));
            }
            bwd[nz - 1] = zero;
            for i in (0..nz - 1).rev() {
                bwd[i] = cadd(cmul(bl.decay[i], bwd[i + 1]), conv(&bl.bw[i], &gc));
            }
            let w0 = cadd(cmul(l[0], (u0.u.data[c], T::zero())), cmul(l[1], (u0.v.data[c], T::zero())));
            let b0 = bwd[0];
            for k in 0..nz {
                let e = (-kappa * bl.z()[k]).exp();
                let hom = cmul(e, w0);
                let part = cadd(cadd(fwd[k], bwd[k]), cmul(-e, b0));
                let w = cadd(hom, cmul(inv2k, part));
                // u = 2 Re(q w)
                let ux = (w.0 * q[0].re - w.1 * q[0].im) * 2.0;
                let uy = (w.0 * q[1].re - w.1 * q[1].im) * 2.0;
                out[0].set(k, c, ux);
                out[1].set(k, c, uy);
            }
        }
        out
    }
}

/// Leading-order layer velocity `M(Z/sqrt 2) u_bar`, identical in shape for
/// both walls, evaluated in closed form at arbitrary `Z`.
#[derive(Clone, Debug)]
pub struct Order0<T> {
    pub ubar: VecField2<T>,
    /// `K u_bar`.
    pub kub: VecField2<T>,
}

impl<T: Elem> Order0<T> {
    pub fn new(ops: &LayerOps, ubar: &VecField2<T>) -> Self {
        let k = &ops.k;
        Order0 { ubar: ubar.clone(), kub: ubar.apply_matrix(&k[0], &k[1], &k[2], &k[3]) }
    }

    /// `d^n/dZ^n` of the horizontal velocity at column `c`.
    #[inline]
    pub fn uh_at(&self, c: usize, z: f64, n: u32) -> [T; 2] {
        let (al, be) = order0_coeffs(z, n);
        [
            self.ubar.u.data[c] * al + self.kub.u.data[c] * be,
            self.ubar.v.data[c] * al + self.kub.v.data[c] * be,
        ]
    }

    /// Horizontal velocity (or its `n`-th `Z`-derivative) on the layer grid.
    pub fn uh(&self, ops: &LayerOps, n: u32) -> [BLField<T>; 2] {
        let g = ops.grid();
        let z = ops.z();
        let mut out = [BLField::zeros(g, z.len()), BLField::zeros(g, z.len())];
        for (k, &zk) in z.iter().enumerate() {
            for c in 0..g.len() {
                let v = self.uh_at(c, zk, n);
                out[0].set(k, c, v[0]);
                out[1].set(k, c, v[1]);
            }
        }
        out
    }

    /// Three-component velocity, tangent to the wall.
    pub fn velocity(&self, ops: &LayerOps, n: u32) -> Col3<T> {
        let [u, v] = self.uh(ops, n);
        let w = u.mul2f(&ops.geom.bx).add(&v.mul2f(&ops.geom.by));
        [u, v, w]
    }

    /// Leading layer pressure `sigma cos(g) grad B . d_Z u_h`.
    pub fn pressure(&self, ops: &LayerOps, side: Side) -> BLField<T> {
        let [u, v] = self.uh(ops, 1);
        let g = &ops.geom;
        u.mul2f(&g.bx).add(&v.mul2f(&g.by)).mul2f(&g.cos_g).scale(side.sign())
    }
}

/// Closed form of the order-one wall-normal flux `n . u^1 = int_Z^inf div0 u^0`
/// at every layer node. `top_cos3` multiplies the `a . K u` term by an extra
/// `cos g`, the printed form of the top-wall flux.
pub fn order1_flux_closed<T: Elem>(ops: &LayerOps, o0: &Order0<T>, top_cos3: bool) -> BLField<T> {
    let g = &ops.geom;
    let divk = crate::spectral::div(&o0.kub);
    let au = o0.ubar.dotf(&g.a);
    let mut ak = o0.kub.dotf(&g.a);
    if top_cos3 {
        ak = ak.mulf(&g.cos_g);
    }
    let z = ops.z();
    BLField::from_fn(ops.grid(), z.len(), |k, c| {
        let zk = z[k];
        let (al, be) = order0_coeffs(zk, 0);
        let (ia, ib) = order0_tails(zk);
        divk.data[c] * ib + au.data[c] * (-zk * al - ia) + ak.data[c] * (-zk * be - ib)
    })
}

/// Scalar closed form of the trace `n . u^1 |_{Z=0}` for one column, used as
/// an independent check.
pub fn order1_flux_at_wall(divk: f64, au: f64, ak: f64) -> f64 {
    (-divk + au + ak) / SQRT_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Surface};
    use crate::initial::InitialData;

    fn ops(n: usize, amp: f64) -> LayerOps {
        let g = Grid2D::periodic(n, n).unwrap();
        let b = Surface::EggCarton(amp).sample(g);
        let geom = Arc::new(build_geometry(&b).unwrap());
        LayerOps::new(geom, Arc::new(BLGrid::default()))
    }

    #[test]
    fn propagator_at_wall_and_far_field() {
        let o = ops(16, 0.2);
        for c in [0, 37, 200] {
            let k = [o.k[0].data[c], o.k[1].data[c], o.k[2].data[c], o.k[3].data[c]];
            assert_eq!(propagator(k, 0.0), [-1.0, 0.0, 0.0, -1.0]);
            let m = propagator(k, 20.0);
            let knorm = (k.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let mnorm = (m.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(mnorm <= 2.1e-9 * (1.0 + knorm));
            // K^2 = -E
            let k2 = [k[0] * k[0] + k[1] * k[2], k[0] * k[1] + k[1] * k[3], k[2] * k[0] + k[3] * k[2], k[2] * k[1] + k[3] * k[3]];
            assert!((k2[0] + 1.0).abs() < 1e-12 && k2[1].abs() < 1e-12 && (k2[3] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn lapm2_of_exponential() {
        let o = ops(16, 0.2);
        let f = BLField::from_fn(o.grid(), o.nz(), |k, _| (-o.z()[k]).exp());
        let l = o.lapm2(&f);
        for k in [0, 20, 90] {
            for c in [0, 100] {
                let want = o.cos_inv2.data[c] * (-o.z()[k]).exp();
                assert!((l.at(k, c) - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ekman_solver_matches_closed_form_homogeneous() {
        let o = ops(16, 0.2);
        let u = InitialData::Cellular(0.3).sample(o.grid());
        let zero = [BLField::zeros(o.grid(), o.nz()), BLField::zeros(o.grid(), o.nz())];
        let sol = o.solve_ekman(&u.scale(-1.0), &zero);
        let o0 = Order0::new(&o, &u);
        let want = o0.uh(&o, 0);
        assert!(sol[0].sub(&want[0]).max_abs() < 1e-12);
        assert!(sol[1].sub(&want[1]).max_abs() < 1e-12);
    }

    #[test]
    fn ekman_solver_satisfies_forced_ode() {
        let o = ops(16, 0.25);
        let g0 = BLField::from_fn(o.grid(), o.nz(), |k, c| {
            let z = o.z()[k];
            (1.0 + 0.1 * c as f64 / 256.0) * z * (-z / 1.5).exp()
        });
        let g1 = BLField::from_fn(o.grid(), o.nz(), |k, _| (-o.z()[k] / 2.0).exp() * o.z()[k].cos());
        let u0 = VecField2::from_fn(o.grid(), |x, y| (x.sin(), y.cos()));
        let u = o.solve_ekman(&u0, &[g0.clone(), g1.clone()]);
        let (uxx, uyy) = (o.dzz(&u[0]), o.dzz(&u[1]));
        for c in [0, 45, 130] {
            let k = [o.k[0].data[c], o.k[1].data[c], o.k[2].data[c], o.k[3].data[c]];
            assert!((u[0].at(0, c) - u0.u.data[c]).abs() < 1e-12);
            for kk in 3..150 {
                let r0 = uxx.at(kk, c) + k[0] * u[0].at(kk, c) + k[1] * u[1].at(kk, c) - g0.at(kk, c);
                let r1 = uyy.at(kk, c) + k[2] * u[0].at(kk, c) + k[3] * u[1].at(kk, c) - g1.at(kk, c);
                assert!(r0.abs() < 1e-5 && r1.abs() < 1e-5, "residual {r0} {r1} at {kk}");
            }
        }
    }

    #[test]
    fn order0_pressure_matches_phase_form() {
        let o = ops(16, 0.2);
        let u = InitialData::Cellular(0.3).sample(o.grid());
        let o0 = Order0::new(&o, &u);
        let p = o0.pressure(&o, Side::Bottom);
        let pt = o0.pressure(&o, Side::Top);
        let g = &o.geom;
        let q = std::f64::consts::FRAC_PI_4;
        for k in [0, 30, 80] {
            let zeta = o.z()[k] / SQRT_2;
            for c in [3, 77] {
                let cg = g.cos_g.data[c];
                let (bx, by) = (g.bx.data[c], g.by.data[c]);
                let (ux, uy) = (u.u.data[c], u.v.data[c]);
                let perp = -by * ux + bx * uy;
                let par = bx * ux + by * uy;
                let want = (-zeta).exp() * cg * ((zeta - q).sin() * cg * perp + (zeta - q).cos() * par);
                assert!((p.at(k, c) - want).abs() < 1e-12);
                let want_t = (-zeta).exp() * cg * ((q - zeta).sin() * cg * perp - (q - zeta).cos() * par);
                assert!((pt.at(k, c) - want_t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order1_flux_closed_form_matches_tail_integral() {
        let o = ops(32, 0.2);
        let u = InitialData::Random { w1inf: 0.3, kmax: 3, seed: 2 }.sample(o.grid());
        let o0 = Order0::new(&o, &u);
        let num = o.tail(&o.div0(&o0.uh(&o, 0)));
        let cf = order1_flux_closed(&o, &o0, false);
        assert!(num.sub(&cf).max_abs() < 1e-8, "{}", num.sub(&cf).max_abs());
        let divk = crate::spectral::div(&o0.kub);
        let au = u.dotf(&o.geom.a);
        let ak = o0.kub.dotf(&o.geom.a);
        for c in [0, 511, 1000] {
            let w0 = order1_flux_at_wall(divk.data[c], au.data[c], ak.data[c]);
            assert!((cf.at(0, c) - w0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_wall_flux_is_ekman_pumping() {
        // int_0^inf e^{-Z/sqrt2} sin(Z/sqrt2) dZ = 1/sqrt2, so the wall flux is -omega/sqrt2
        let o = ops(32, 0.0);
        let u = InitialData::Shear(1.0).sample(o.grid());
        let o0 = Order0::new(&o, &u);
        let cf = order1_flux_closed(&o, &o0, false);
        let g = o.grid();
        for c in 0..g.len() {
            let omega = -g.y(c / g.nx).cos();
            assert!((cf.at(0, c) + omega / 2f64.sqrt()).abs() < 1e-12, "{} vs {}", cf.at(0, c), -omega / 2f64.sqrt());
        }
    }

    #[test]
    fn layer_grid_validation() {
        assert!(BLGrid::new(18.0, 192, 1.01).is_err());
        assert!(BLGrid::new(24.0, 192, 1.08).is_err());
        assert!(BLGrid::new(24.0, 192, 1.01).is_ok());
    }
}
