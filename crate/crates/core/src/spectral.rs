//! Doubly periodic Fourier pseudo-spectral operators on a uniform grid.
//!
//! Fields are stored row-major with `ny` rows of `nx` samples, sample
//! `(i, j)` sitting at `(i Lx / nx, j Ly / ny)`. Odd-order derivatives drop
//! the Nyquist mode; the Laplacian keeps it.

use crate::error::{Error, Result};
use crate::jet::Elem;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Neg, Sub};
use std::rc::Rc;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 16 || ny < 16 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "nx={nx}, ny={ny}: sizes must be even and at least 16"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!("periods must be positive, got {lx}, {ly}")));
        }
        Ok(Grid2D { nx, ny, lx, ly })
    }

    /// Grid on the torus `[0, 2 pi)^2`.
    pub fn periodic(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 2.0 * PI, 2.0 * PI)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    fn check(&self, other: &Grid2D) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Signed mode index of FFT bin `m` on `n` points.
pub fn signed_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

struct Engine {
    nx: usize,
    ny: usize,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    /// Wavenumbers with the Nyquist entry, for even-order operators.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Wavenumbers with the Nyquist entry zeroed, for odd-order operators.
    kxo: Vec<f64>,
    kyo: Vec<f64>,
    scratch: RefCell<Vec<Complex64>>,
}

impl Engine {
    fn new(g: &Grid2D) -> Self {
        let mut p = FftPlanner::new();
        let wave = |n: usize, l: f64, odd: bool| -> Vec<f64> {
            (0..n)
                .map(|m| {
                    if odd && m == n / 2 {
                        0.0
                    } else {
                        2.0 * PI / l * signed_mode(m, n) as f64
                    }
                })
                .collect()
        };
        Engine {
            nx: g.nx,
            ny: g.ny,
            fx: p.plan_fft_forward(g.nx),
            ix: p.plan_fft_inverse(g.nx),
            fy: p.plan_fft_forward(g.ny),
            iy: p.plan_fft_inverse(g.ny),
            kx: wave(g.nx, g.lx, false),
            ky: wave(g.ny, g.ly, false),
            kxo: wave(g.nx, g.lx, true),
            kyo: wave(g.ny, g.ly, true),
            scratch: RefCell::new(vec![Complex64::new(0.0, 0.0); g.len()]),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (fx, fy) = if inverse { (&self.ix, &self.iy) } else { (&self.fx, &self.fy) };
        fx.process(buf);
        let mut t = self.scratch.borrow_mut();
        let (nx, ny) = (self.nx, self.ny);
        for j in 0..ny {
            for i in 0..nx {
                t[i * ny + j] = buf[j * nx + i];
            }
        }
        fy.process(&mut t[..]);
        for j in 0..ny {
            for i in 0..nx {
                buf[j * nx + i] = t[i * ny + j];
            }
        }
    }

    fn forward(&self, re: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = re.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        buf
    }

    fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut c, true);
        let s = 1.0 / (self.nx * self.ny) as f64;
        c.iter().map(|z| z.re * s).collect()
    }
}

thread_local! {
    static ENGINES: RefCell<HashMap<(usize, usize, u64, u64), Rc<Engine>>> = RefCell::new(HashMap::new());
}

fn engine(g: &Grid2D) -> Rc<Engine> {
    ENGINES.with(|m| {
        m.borrow_mut()
            .entry((g.nx, g.ny, g.lx.to_bits(), g.ly.to_bits()))
            .or_insert_with(|| Rc::new(Engine::new(g)))
            .clone()
    })
}

/// Scalar field on a [`Grid2D`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field2<T> {
    pub grid: Grid2D,
    pub data: Vec<T>,
}

pub type ScalarField2D = Field2<f64>;
pub type VectorField2D = VecField2<f64>;

impl<T: Elem> Field2<T> {
    pub fn zeros(grid: Grid2D) -> Self {
        Field2 { grid, data: vec![T::zero(); grid.len()] }
    }

    pub fn from_vec(grid: Grid2D, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "payload of {} values for a {}x{} grid",
                data.len(),
                grid.nx,
                grid.ny
            )));
        }
        Ok(Field2 { grid, data })
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[j * self.grid.nx + i]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field2 { grid: self.grid, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, o: &Field2<T>, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.grid, o.grid);
        Field2 {
            grid: self.grid,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Pointwise product.
    pub fn mul(&self, o: &Field2<T>) -> Self {
        self.zip(o, |a, b| a * b)
    }

    /// Pointwise product with a time-independent coefficient.
    pub fn mulf(&self, c: &Field2<f64>) -> Self {
        debug_assert_eq!(self.grid, c.grid);
        Field2 {
            grid: self.grid,
            data: self.data.iter().zip(&c.data).map(|(&a, &b)| a * b).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| a * s)
    }

    pub fn axpy(&mut self, s: f64, o: &Field2<T>) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b * s;
        }
    }

    pub fn add_assign(&mut self, o: &Field2<T>) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, o: &Field2<T>) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a -= b;
        }
    }

    /// Lane `k` of the element type as a plain field.
    pub fn lane(&self, k: usize) -> Field2<f64> {
        Field2 { grid: self.grid, data: self.data.iter().map(|v| v.lane(k)).collect() }
    }

    pub fn set_lane(&mut self, k: usize, f: &Field2<f64>) {
        for (a, &b) in self.data.iter_mut().zip(&f.data) {
            a.set_lane(k, b);
        }
    }

    pub fn value(&self) -> Field2<f64> {
        self.lane(0)
    }

    pub fn dt(&self) -> Self {
        self.map(|a| a.dt())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| (0..T::LANES).all(|k| v.lane(k).is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }
}

impl Field2<f64> {
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.x(i), grid.y(j)));
            }
        }
        Field2 { grid, data }
    }

    pub fn constant(grid: Grid2D, v: f64) -> Self {
        Field2 { grid, data: vec![v; grid.len()] }
    }

    /// Promote to a time-independent field of another element type.
    pub fn lift<T: Elem>(&self) -> Field2<T> {
        Field2 { grid: self.grid, data: self.data.iter().map(|&v| T::constant(v)).collect() }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn l2(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()).sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Point evaluation by trigonometric interpolation.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let e = engine(&self.grid);
        let c = e.forward(&self.data);
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut s = Complex64::new(0.0, 0.0);
        for j in 0..ny {
            for i in 0..nx {
                let mut kx = e.kx[i];
                let mut ky = e.ky[j];
                let mut w = 1.0;
                if i == nx / 2 {
                    kx = 0.0;
                    w *= (e.kx[i] * x).cos();
                }
                if j == ny / 2 {
                    ky = 0.0;
                    w *= (e.ky[j] * y).cos();
                }
                s += c[j * nx + i] * Complex64::from_polar(w, kx * x + ky * y);
            }
        }
        s.re / (nx * ny) as f64
    }
}

impl<T: Elem> Add for &Field2<T> {
    type Output = Field2<T>;
    fn add(self, o: &Field2<T>) -> Field2<T> {
        self.zip(o, |a, b| a + b)
    }
}

impl<T: Elem> Sub for &Field2<T> {
    type Output = Field2<T>;
    fn sub(self, o: &Field2<T>) -> Field2<T> {
        self.zip(o, |a, b| a - b)
    }
}

impl<T: Elem> Neg for &Field2<T> {
    type Output = Field2<T>;
    fn neg(self) -> Field2<T> {
        self.map(|a| -a)
    }
}

/// Horizontal vector field.
#[derive(Clone, Debug, PartialEq)]
pub struct VecField2<T> {
    pub u: Field2<T>,
    pub v: Field2<T>,
}

impl<T: Elem> VecField2<T> {
    pub fn new(u: Field2<T>, v: Field2<T>) -> Result<Self> {
        u.grid.check(&v.grid)?;
        Ok(VecField2 { u, v })
    }

    pub fn zeros(g: Grid2D) -> Self {
        VecField2 { u: Field2::zeros(g), v: Field2::zeros(g) }
    }

    pub fn grid(&self) -> Grid2D {
        self.u.grid
    }

    pub fn map(&self, f: impl Fn(&Field2<T>) -> Field2<T>) -> Self {
        VecField2 { u: f(&self.u), v: f(&self.v) }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|c| c.scale(s))
    }

    pub fn mulf(&self, c: &Field2<f64>) -> Self {
        self.map(|f| f.mulf(c))
    }

    /// Multiply by a scalar field.
    pub fn mul_scalar(&self, c: &Field2<T>) -> Self {
        self.map(|f| f.mul(c))
    }

    pub fn dot(&self, o: &VecField2<T>) -> Field2<T> {
        &self.u.mul(&o.u) + &self.v.mul(&o.v)
    }

    /// Dot product with a time-independent vector field.
    pub fn dotf(&self, o: &VecField2<f64>) -> Field2<T> {
        &self.u.mulf(&o.u) + &self.v.mulf(&o.v)
    }

    pub fn axpy(&mut self, s: f64, o: &VecField2<T>) {
        self.u.axpy(s, &o.u);
        self.v.axpy(s, &o.v);
    }

    pub fn add_assign(&mut self, o: &VecField2<T>) {
        self.u.add_assign(&o.u);
        self.v.add_assign(&o.v);
    }

    /// Apply the fixed rotation `E1 (u, v) = (v, -u)`.
    pub fn e1(&self) -> Self {
        VecField2 { u: self.v.clone(), v: -&self.u }
    }

    /// Apply a pointwise symmetric or general 2x2 matrix field `[[a, b], [c, d]]`.
    pub fn apply_matrix(
        &self,
        a: &Field2<f64>,
        b: &Field2<f64>,
        c: &Field2<f64>,
        d: &Field2<f64>,
    ) -> Self {
        VecField2 {
            u: &self.u.mulf(a) + &self.v.mulf(b),
            v: &self.u.mulf(c) + &self.v.mulf(d),
        }
    }

    pub fn lane(&self, k: usize) -> VecField2<f64> {
        VecField2 { u: self.u.lane(k), v: self.v.lane(k) }
    }

    pub fn value(&self) -> VecField2<f64> {
        self.lane(0)
    }

    pub fn dt(&self) -> Self {
        self.map(|c| c.dt())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }
}

impl VecField2<f64> {
    pub fn from_fn(g: Grid2D, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        VecField2 {
            u: Field2::from_fn(g, |x, y| f(x, y).0),
            v: Field2::from_fn(g, |x, y| f(x, y).1),
        }
    }

    pub fn lift<T: Elem>(&self) -> VecField2<T> {
        VecField2 { u: self.u.lift(), v: self.v.lift() }
    }

    pub fn l2(&self) -> f64 {
        (self.u.l2().powi(2) + self.v.l2().powi(2)).sqrt()
    }

    /// Pointwise maximum of the Euclidean length.
    pub fn linf(&self) -> f64 {
        self.u
            .data
            .iter()
            .zip(&self.v.data)
            .fold(0.0, |m, (a, b)| m.max((a * a + b * b).sqrt()))
    }

    pub fn norm_sq(&self) -> Field2<f64> {
        self.dot(self)
    }
}

impl<T: Elem> Add for &VecField2<T> {
    type Output = VecField2<T>;
    fn add(self, o: &VecField2<T>) -> VecField2<T> {
        VecField2 { u: &self.u + &o.u, v: &self.v + &o.v }
    }
}

impl<T: Elem> Sub for &VecField2<T> {
    type Output = VecField2<T>;
    fn sub(self, o: &VecField2<T>) -> VecField2<T> {
        VecField2 { u: &self.u - &o.u, v: &self.v - &o.v }
    }
}

impl<T: Elem> Neg for &VecField2<T> {
    type Output = VecField2<T>;
    fn neg(self) -> VecField2<T> {
        VecField2 { u: -&self.u, v: -&self.v }
    }
}

/// Apply a Fourier multiplier lane by lane.
fn multiplier<T: Elem>(f: &Field2<T>, m: impl Fn(&Engine, usize, usize) -> Complex64) -> Field2<T> {
    let e = engine(&f.grid);
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let mut out: Field2<T> = Field2::zeros(f.grid);
    for k in 0..T::LANES {
        let re: Vec<f64> = f.data.iter().map(|v| v.lane(k)).collect();
        if re.iter().all(|&v| v == 0.0) {
            continue;
        }
        let mut c = e.forward(&re);
        for j in 0..ny {
            for i in 0..nx {
                c[j * nx + i] *= m(&e, i, j);
            }
        }
        let r = e.inverse(c);
        for (o, v) in out.data.iter_mut().zip(r) {
            o.set_lane(k, v);
        }
    }
    out
}

pub fn ddx<T: Elem>(f: &Field2<T>) -> Field2<T> {
    multiplier(f, |e, i, _| Complex64::new(0.0, e.kxo[i]))
}

pub fn ddy<T: Elem>(f: &Field2<T>) -> Field2<T> {
    multiplier(f, |e, _, j| Complex64::new(0.0, e.kyo[j]))
}

pub fn grad<T: Elem>(f: &Field2<T>) -> VecField2<T> {
    VecField2 { u: ddx(f), v: ddy(f) }
}

/// Perpendicular gradient `(-d_y f, d_x f)`.
pub fn grad_perp<T: Elem>(f: &Field2<T>) -> VecField2<T> {
    VecField2 { u: -&ddy(f), v: ddx(f) }
}

pub fn div<T: Elem>(w: &VecField2<T>) -> Field2<T> {
    &ddx(&w.u) + &ddy(&w.v)
}

/// Scalar curl `d_x v - d_y u`.
pub fn curl<T: Elem>(w: &VecField2<T>) -> Field2<T> {
    &ddx(&w.v) - &ddy(&w.u)
}

pub fn laplacian<T: Elem>(f: &Field2<T>) -> Field2<T> {
    multiplier(f, |e, i, j| Complex64::new(-(e.kx[i] * e.kx[i] + e.ky[j] * e.ky[j]), 0.0))
}

/// Mean-free inverse Laplacian: the zero mode is removed.
pub fn inv_laplacian<T: Elem>(f: &Field2<T>) -> Field2<T> {
    multiplier(f, |e, i, j| {
        let k2 = e.kx[i] * e.kx[i] + e.ky[j] * e.ky[j];
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(-1.0 / k2, 0.0)
        }
    })
}

/// Two-thirds truncation filter.
pub fn dealias<T: Elem>(f: &Field2<T>) -> Field2<T> {
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    multiplier(f, move |_, i, j| {
        let mx = signed_mode(i, nx).unsigned_abs() as f64;
        let my = signed_mode(j, ny).unsigned_abs() as f64;
        if mx > nx as f64 / 3.0 || my > ny as f64 / 3.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    })
}

/// Product of two fields followed by the two-thirds filter.
pub fn dealiased_product<T: Elem>(a: &Field2<T>, b: &Field2<T>) -> Field2<T> {
    dealias(&a.mul(b))
}

/// Leray projection onto divergence-free fields; the mean flow is kept.
pub fn leray_project<T: Elem>(w: &VecField2<T>) -> VecField2<T> {
    let g = w.grid();
    let e = engine(&g);
    let (nx, ny) = (g.nx, g.ny);
    let mut out: VecField2<T> = VecField2::zeros(g);
    for k in 0..T::LANES {
        let a: Vec<f64> = w.u.data.iter().map(|v| v.lane(k)).collect();
        let b: Vec<f64> = w.v.data.iter().map(|v| v.lane(k)).collect();
        let mut ca = e.forward(&a);
        let mut cb = e.forward(&b);
        for j in 0..ny {
            for i in 0..nx {
                let (kx, ky) = (e.kxo[i], e.kyo[j]);
                let k2 = kx * kx + ky * ky;
                if k2 == 0.0 {
                    continue;
                }
                let idx = j * nx + i;
                let d = (ca[idx] * kx + cb[idx] * ky) / k2;
                ca[idx] -= d * kx;
                cb[idx] -= d * ky;
            }
        }
        let ra = e.inverse(ca);
        let rb = e.inverse(cb);
        for idx in 0..g.len() {
            out.u.data[idx].set_lane(k, ra[idx]);
            out.v.data[idx].set_lane(k, rb[idx]);
        }
    }
    out
}

/// Sum of `|c_k|^2 w(k)` over Fourier modes, scaled so that `w = 1` gives the
/// squared L2 norm.
fn spectral_sum(f: &Field2<f64>, w: impl Fn(f64) -> f64) -> f64 {
    let e = engine(&f.grid);
    let c = e.forward(&f.data);
    let (nx, ny) = (f.grid.nx, f.grid.ny);
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let k2 = e.kx[i] * e.kx[i] + e.ky[j] * e.ky[j];
            s += c[j * nx + i].norm_sqr() * w(k2);
        }
    }
    s * f.grid.area() / (nx * ny) as f64 / (nx * ny) as f64
}

/// Squared L2 norm computed from Fourier coefficients.
pub fn parseval_l2_sq(f: &Field2<f64>) -> f64 {
    spectral_sum(f, |_| 1.0)
}

/// Sobolev norm with multiplier `(1 + |k|^2)^(s/2)`.
pub fn hs_norm(f: &Field2<f64>, s: f64) -> f64 {
    spectral_sum(f, |k2| (1.0 + k2).powf(s)).sqrt()
}

pub fn hs_norm_vec(w: &VecField2<f64>, s: f64) -> f64 {
    (hs_norm(&w.u, s).powi(2) + hs_norm(&w.v, s).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g64() -> Grid2D {
        Grid2D::periodic(64, 64).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid2D::periodic(15, 64).is_err());
        assert!(Grid2D::periodic(64, 14).is_err());
        assert!(Grid2D::periodic(33, 64).is_err());
        assert!(Grid2D::new(64, 64, -1.0, 1.0).is_err());
    }

    #[test]
    fn derivative_of_sine() {
        let g = g64();
        let f = Field2::from_fn(g, |x, _| x.sin());
        let d = ddx(&f);
        let want = Field2::from_fn(g, |x, _| x.cos());
        assert!((&d - &want).linf() < 1e-12);
    }

    #[test]
    fn mixed_derivative_in_y() {
        let g = g64();
        let f = Field2::from_fn(g, |x, y| (3.0 * x).sin() * (2.0 * y).cos());
        let want = Field2::from_fn(g, |x, y| -2.0 * (3.0 * x).sin() * (2.0 * y).sin());
        assert!((&ddy(&f) - &want).linf() < 1e-12);
    }

    #[test]
    fn inverse_laplacian_of_eigenfunction() {
        let g = g64();
        let f = Field2::from_fn(g, |x, y| -13.0 * (2.0 * x).sin() * (3.0 * y).cos() + 4.0);
        let want = Field2::from_fn(g, |x, y| (2.0 * x).sin() * (3.0 * y).cos());
        assert!((&inv_laplacian(&f) - &want).linf() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let g = g64();
        let w = VecField2::from_fn(g, |x, y| (y.sin(), x.sin()));
        assert!((&leray_project(&w) - &w).linf() < 1e-12);
        let grad_like = VecField2::from_fn(g, |_, y| (0.0, -y.sin()));
        assert!(leray_project(&grad_like).linf() < 1e-12);
    }

    #[test]
    fn dealiased_square_matches_fine_reference() {
        let g = g64();
        let f = Field2::from_fn(g, |x, _| (20.0 * x).sin());
        let p = dealiased_product(&f, &f);
        // Exact square is 1/2 - cos(40 x)/2; mode 40 lies above the kept band.
        let gf = Grid2D::periodic(256, 16).unwrap();
        let ff = Field2::from_fn(gf, |x, _| (20.0 * x).sin());
        let pf = ff.mul(&ff);
        let kept = multiplier(&pf, |_, i, _| {
            if signed_mode(i, 256).unsigned_abs() as f64 > 64.0 / 3.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        let mean_ref = kept.mean();
        assert!((p.linf() - 0.5).abs() < 1e-12);
        assert!((p.mean() - mean_ref).abs() < 1e-12);
        assert!((p.max_abs() - p.min()).abs() < 1e-12);
    }

    #[test]
    fn hs_norm_of_shear() {
        let g = g64();
        let w = VecField2::from_fn(g, |_, y| (y.sin(), 0.0));
        assert!((hs_norm_vec(&w, 0.0) - (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        // one mode with |k| = 1
        assert!((hs_norm_vec(&w, 1.0) - (4.0 * PI * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jets_differentiate_lane_by_lane() {
        use crate::jet::Jet;
        let g = g64();
        let mut f: Field2<Jet<2>> = Field2::zeros(g);
        f.set_lane(0, &Field2::from_fn(g, |x, _| x.sin()));
        f.set_lane(1, &Field2::from_fn(g, |_, y| y.cos()));
        let d = ddy(&f);
        assert!(d.lane(0).linf() < 1e-12);
        let want = Field2::from_fn(g, |_, y| -y.sin());
        assert!((&d.lane(1) - &want).linf() < 1e-12);
    }

    #[test]
    fn point_evaluation_interpolates() {
        let g = g64();
        let f = Field2::from_fn(g, |x, y| (2.0 * x).sin() * y.cos() + 0.3);
        let (x, y) = (0.123, 2.5);
        assert!((f.eval(x, y) - ((2.0 * x).sin() * y.cos() + 0.3)).abs() < 1e-12);
    }
}
