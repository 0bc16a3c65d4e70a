//! Terrain-following channel grid and sampling of layer fields on it.
//!
//! Channel fields live on `(x, y, s)` with `s = z - B` in `[0, 2]`. Layer
//! profiles built on the stretched grid are mapped to the channel through
//! `Z = s / delta` (bottom) and `Z = (2 - s) / delta` (top), and vanish
//! beyond the layer truncation.

use crate::column::{Col3, ColumnField};
use crate::error::{Error, Result};
use crate::interior::Cutoff;
use crate::jet::Elem;
use crate::layer::{order0_coeffs, BLField, BLGrid, Order0, Side};
use crate::nodes::{tanh_nodes, Nodes};
use crate::spectral::{ddx, ddy, Field2, Grid2D, VecField2};
use crate::geometry::SurfaceGeometry;

pub type ChannelField<T> = ColumnField<T>;

/// Heights where the cutoff and the corrector bump lose smoothness.
pub const BREAKS: [f64; 4] = [0.25, Cutoff::START, Cutoff::END, 1.75];

/// Cutoff and its first two derivatives at the channel nodes.
#[derive(Clone, Debug)]
pub struct CutoffSamples {
    pub chi: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
}

pub fn make_cutoff(s: &[f64]) -> CutoffSamples {
    CutoffSamples {
        chi: s.iter().map(|&v| Cutoff.chi(v)).collect(),
        d1: s.iter().map(|&v| Cutoff.d1(v)).collect(),
        d2: s.iter().map(|&v| Cutoff.d2(v)).collect(),
    }
}

impl CutoffSamples {
    /// Weight of the given wall's layer, `1 - chi` at the bottom and `chi` at the top.
    pub fn weight(&self, side: Side) -> Vec<f64> {
        match side {
            Side::Bottom => self.chi.iter().map(|c| 1.0 - c).collect(),
            Side::Top => self.chi.clone(),
        }
    }
}

/// Boundary-clustered nodes on `[0, 2]`.
#[derive(Clone, Debug)]
pub struct SGrid {
    pub nodes: Nodes,
    pub beta: f64,
    pub cutoff: CutoffSamples,
    /// Node indices pinned to [`BREAKS`].
    pub breaks: Vec<usize>,
}

impl SGrid {
    pub fn new(ns: usize, beta: f64, width: usize) -> Result<Self> {
        if ns < 65 {
            return Err(Error::InvalidGrid(format!("need at least 65 channel nodes, got {ns}")));
        }
        if !(beta > 0.0 && beta <= 4.0) {
            return Err(Error::InvalidGrid(format!("clustering strength {beta} must lie in (0, 4]")));
        }
        if !(5..=11).contains(&width) {
            return Err(Error::InvalidGrid(format!("stencil width {width} must lie in [5, 11]")));
        }
        let mut x = tanh_nodes(ns, beta);
        let mut breaks = Vec::with_capacity(BREAKS.len());
        for &b in &BREAKS {
            let i = (0..ns)
                .min_by(|&i, &j| (x[i] - b).abs().partial_cmp(&(x[j] - b).abs()).unwrap())
                .unwrap();
            x[i] = b;
            breaks.push(i);
        }
        let cutoff = make_cutoff(&x);
        let nodes = Nodes::with_breaks(x, width, &breaks);
        Ok(SGrid { nodes, beta, cutoff, breaks })
    }

    pub fn s(&self) -> &[f64] {
        &self.nodes.x
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn min_spacing(&self) -> f64 {
        self.s().windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min)
    }
}

impl Default for SGrid {
    fn default() -> Self {
        SGrid::new(257, 2.0, 7).expect("default channel grid")
    }
}

/// Layer coordinate of channel node `s` for a column of depth `delta`.
#[inline]
pub fn layer_coordinate(side: Side, s: f64, delta: f64) -> f64 {
    match side {
        Side::Bottom => s / delta,
        Side::Top => (2.0 - s) / delta,
    }
}

const NONE: u32 = u32::MAX;

/// Interpolation from the layer grid to the channel nodes of one wall.
#[derive(Clone, Debug)]
pub struct Remap {
    pub side: Side,
    grid: Grid2D,
    ns: usize,
    entries: Vec<(u32, [f64; 7])>,
}

impl Remap {
    pub fn new(side: Side, bl: &BLGrid, sg: &SGrid, delta: &Field2<f64>) -> Self {
        assert_eq!(bl.nodes.width, 7, "layer grid interpolation width");
        let n2 = delta.grid.len();
        let mut entries = Vec::with_capacity(n2 * sg.len());
        for &s in sg.s() {
            for c in 0..n2 {
                let z = layer_coordinate(side, s, delta.data[c]);
                if z <= bl.zmax {
                    let st = bl.nodes.interp(z);
                    let mut w = [0.0; 7];
                    w.copy_from_slice(&st.w);
                    entries.push((st.start as u32, w));
                } else {
                    entries.push((NONE, [0.0; 7]));
                }
            }
        }
        Remap { side, grid: delta.grid, ns: sg.len(), entries }
    }

    pub fn apply<T: Elem>(&self, f: &BLField<T>) -> ChannelField<T> {
        let n2 = self.grid.len();
        let mut out = ChannelField::zeros(self.grid, self.ns);
        for (i, (start, w)) in self.entries.iter().enumerate() {
            if *start == NONE {
                continue;
            }
            let c = i % n2;
            let mut v = T::zero();
            for (m, &wm) in w.iter().enumerate() {
                v += f.data[(*start as usize + m) * n2 + c] * wm;
            }
            out.data[i] = v;
        }
        out
    }
}

/// One wall's layer field of order `j` seen from the channel, with the
/// factors of `delta` included: `v = delta^j u`, `a` its horizontal gradient
/// at fixed height, `n = delta^{j-1} d_Z u` and `p = delta^{j+1} p^{j+1}`.
/// The full gradient of `v` is `(a, 0) + sigma n_B n`.
#[derive(Clone, Debug)]
pub struct LayerSample<T> {
    pub v: Col3<T>,
    pub a: [[ChannelField<T>; 2]; 3],
    pub n: Col3<T>,
    pub p: ChannelField<T>,
}

/// Closed-form order-0 sample, exact at every channel node.
pub fn sample_order0<T: Elem>(
    o0: &Order0<T>,
    geom: &SurfaceGeometry,
    sg: &SGrid,
    delta: &Field2<f64>,
    side: Side,
) -> LayerSample<T> {
    let g = geom.grid();
    let ns = sg.len();
    let n2 = g.len();
    let du = [ddx(&o0.ubar.u), ddy(&o0.ubar.u), ddx(&o0.ubar.v), ddy(&o0.ubar.v)];
    let dk = [ddx(&o0.kub.u), ddy(&o0.kub.u), ddx(&o0.kub.v), ddy(&o0.kub.v)];
    let z = || ChannelField::zeros(g, ns);
    let mut out = LayerSample { v: [z(), z(), z()], a: [[z(), z()], [z(), z()], [z(), z()]], n: [z(), z(), z()], p: z() };
    let sig = side.sign();
    for (k, &s) in sg.s().iter().enumerate() {
        for c in 0..n2 {
            let d = delta.data[c];
            let zz = layer_coordinate(side, s, d);
            let (a0, b0) = order0_coeffs(zz, 0);
            let (a1, b1) = order0_coeffs(zz, 1);
            let (ub, vb) = (o0.ubar.u.data[c], o0.ubar.v.data[c]);
            let (ku, kv) = (o0.kub.u.data[c], o0.kub.v.data[c]);
            let u = [ub * a0 + ku * b0, vb * a0 + kv * b0];
            let uz = [ub * a1 + ku * b1, vb * a1 + kv * b1];
            let (bx, by) = (geom.bx.data[c], geom.by.data[c]);
            let av = [geom.a.u.data[c], geom.a.v.data[c]];
            let mut a = [[T::zero(); 2]; 3];
            for dir in 0..2 {
                a[0][dir] = du[dir].data[c] * a0 + dk[dir].data[c] * b0 + uz[0] * (zz * av[dir]);
                a[1][dir] = du[2 + dir].data[c] * a0 + dk[2 + dir].data[c] * b0 + uz[1] * (zz * av[dir]);
            }
            let hx = [geom.hxx.data[c], geom.hxy.data[c]];
            let hy = [geom.hxy.data[c], geom.hyy.data[c]];
            for dir in 0..2 {
                a[2][dir] = u[0] * hx[dir] + a[0][dir] * bx + u[1] * hy[dir] + a[1][dir] * by;
            }
            let i = k * n2 + c;
            out.v[0].data[i] = u[0];
            out.v[1].data[i] = u[1];
            out.v[2].data[i] = u[0] * bx + u[1] * by;
            out.n[0].data[i] = uz[0] * (1.0 / d);
            out.n[1].data[i] = uz[1] * (1.0 / d);
            out.n[2].data[i] = (uz[0] * bx + uz[1] * by) * (1.0 / d);
            for m in 0..3 {
                out.a[m][0].data[i] = a[m][0];
                out.a[m][1].data[i] = a[m][1];
            }
            out.p.data[i] = (uz[0] * bx + uz[1] * by) * (sig * geom.cos_g.data[c] * d);
        }
    }
    out
}

/// Powers `delta^j` for `j` in `-1..=3`, indexed by `j + 1`.
pub fn delta_powers(delta: &Field2<f64>) -> [Field2<f64>; 5] {
    std::array::from_fn(|i| delta.map(|d| d.powi(i as i32 - 1)))
}

/// Order-`j` sample for `j >= 1` from a layer profile on the stretched grid.
pub fn sample_layer<T: Elem>(
    u: &Col3<T>,
    p: &BLField<T>,
    j: usize,
    ops: &crate::layer::LayerOps,
    remap: &Remap,
    delta: &Field2<f64>,
) -> LayerSample<T> {
    let dp = delta_powers(delta);
    let geom = &ops.geom;
    let w = &dp[j + 1];
    let v: Col3<T> = std::array::from_fn(|m| remap.apply(&u[m]).mul2f(w));
    let a = std::array::from_fn(|m| {
        let g0 = ops.grad0(&u[m]);
        let av = [&geom.a.u, &geom.a.v];
        std::array::from_fn(|dir| {
            let mut f = remap.apply(&g0[dir]).mul2f(w);
            f.axpy(-(j as f64), &v[m].mul2f(av[dir]));
            f
        })
    });
    let n = std::array::from_fn(|m| remap.apply(&ops.dz(&u[m])).mul2f(&dp[j]));
    let p = remap.apply(p).mul2f(&dp[j + 2]);
    LayerSample { v, a, n, p }
}

/// Horizontal 2D vector of a channel field pair at one slice.
pub fn slice_vec<T: Elem>(u: &ChannelField<T>, v: &ChannelField<T>, k: usize) -> VecField2<T> {
    VecField2 { u: u.slice(k), v: v.slice(k) }
}

/// Gradient of a channel field in physical coordinates,
/// `(d_x|_s - B_x d_s, d_y|_s - B_y d_s, d_s)`.
pub fn grad3<T: Elem>(f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid) -> Col3<T> {
    let fs = f.d1(&sg.nodes);
    let mut gx = f.ddx();
    gx.sub_assign(&fs.mul2f(&geom.bx));
    let mut gy = f.ddy();
    gy.sub_assign(&fs.mul2f(&geom.by));
    [gx, gy, fs]
}

/// Three-dimensional Laplacian of a channel field.
pub fn laplacian3<T: Elem>(f: &ChannelField<T>, geom: &SurfaceGeometry, sg: &SGrid) -> ChannelField<T> {
    let fs = f.d1(&sg.nodes);
    let mut out = f.hmap(crate::spectral::laplacian);
    let cross = fs.ddx().mul2f(&geom.bx).add(&fs.ddy().mul2f(&geom.by));
    out.axpy(-2.0, &cross);
    out.sub_assign(&fs.mul2f(&geom.lap_b));
    let ci2 = geom.cos_g.map(|c| 1.0 / (c * c));
    out.add_assign(&f.d2(&sg.nodes).mul2f(&ci2));
    out
}

/// Divergence in terrain coordinates, `div_h u_h|_s + d_s(u_3 - grad B . u_h)`.
pub fn terrain_divergence<T: Elem>(u: &Col3<T>, geom: &SurfaceGeometry, sg: &SGrid) -> ChannelField<T> {
    let mut w = u[2].clone();
    w.sub_assign(&u[0].mul2f(&geom.bx));
    w.sub_assign(&u[1].mul2f(&geom.by));
    let mut out = u[0].ddx();
    out.add_assign(&u[1].ddy());
    out.add_assign(&w.d1(&sg.nodes));
    out
}

/// `n_B . v = v_3 - grad B . v_h`.
pub fn normal_part<T: Elem>(v: &Col3<T>, geom: &SurfaceGeometry) -> ChannelField<T> {
    let mut w = v[2].clone();
    w.sub_assign(&v[0].mul2f(&geom.bx));
    w.sub_assign(&v[1].mul2f(&geom.by));
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Surface};
    use crate::initial::InitialData;
    use crate::layer::LayerOps;
    use std::sync::Arc;

    #[test]
    fn grid_is_clustered_and_pinned() {
        let sg = SGrid::default();
        let s = sg.s();
        assert_eq!(s[0], 0.0);
        assert!((s[s.len() - 1] - 2.0).abs() < 1e-15);
        for (b, &i) in BREAKS.iter().zip(&sg.breaks) {
            assert_eq!(s[i], *b);
        }
        assert!(sg.min_spacing() <= 0.025 / 6.0);
        assert!(s.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn cutoff_samples() {
        let c = make_cutoff(&[0.5, 1.0, 1.5]);
        assert_eq!(c.chi[0], 0.0);
        assert!((c.chi[1] - 0.5).abs() < 1e-15);
        assert_eq!(c.chi[2], 1.0);
        assert!((c.d1[1] - 1.875).abs() < 1e-15);
        let sg = SGrid::default();
        assert!((sg.nodes.integral(&sg.cutoff.d1) - 1.0).abs() < 1e-12);
        let m = sg.cutoff.d1.iter().cloned().fold(0.0, f64::max);
        assert!((m - 1.875).abs() < 1e-3);
    }

    #[test]
    fn remapped_order0_matches_closed_form() {
        let g = Grid2D::periodic(16, 16).unwrap();
        let geom = Arc::new(build_geometry(&Surface::EggCarton(0.2).sample(g)).unwrap());
        let ops = LayerOps::new(geom.clone(), Arc::new(BLGrid::default()));
        let u = InitialData::Cellular(0.3).sample(g);
        let o0 = Order0::new(&ops, &u);
        let sg = SGrid::default();
        let delta = geom.cos_g.map(|c| 0.05 * c.powf(-1.5));
        for side in Side::BOTH {
            let exact = sample_order0(&o0, &geom, &sg, &delta, side);
            let remap = Remap::new(side, &ops.bl, &sg, &delta);
            let o = o0.velocity(&ops, 0);
            let p = o0.pressure(&ops, side);
            let num = sample_layer(&o, &p, 0, &ops, &remap, &delta);
            for m in 0..3 {
                assert!(num.v[m].sub(&exact.v[m]).max_abs() < 1e-6, "v {m}");
                assert!(num.n[m].sub(&exact.n[m]).max_abs() < 1e-4 / 0.05, "n {m}");
                for d in 0..2 {
                    assert!(num.a[m][d].sub(&exact.a[m][d]).max_abs() < 1e-5, "a {m} {d}");
                }
            }
            // order-0 pressure enters with one power of delta
            assert!(num.p.sub(&exact.p).max_abs() < 1e-7);
        }
    }

    #[test]
    fn channel_calculus_on_a_polynomial() {
        let g = Grid2D::periodic(16, 16).unwrap();
        let geom = build_geometry(&Surface::Ridge(0.2).sample(g)).unwrap();
        let sg = SGrid::default();
        // f = sin(x) s^2 at fixed s; in physical variables s = z - B(x)
        let f = ChannelField::from_fn(g, sg.len(), |k, c| g.x(c % g.nx).sin() * sg.s()[k].powi(2));
        let gr = grad3(&f, &geom, &sg);
        let lap = laplacian3(&f, &geom, &sg);
        for &(k, c) in &[(40usize, 3usize), (128, 9), (200, 14)] {
            let (x, s) = (g.x(c % g.nx), sg.s()[k]);
            let bx = 0.2 * x.cos();
            let bxx = -0.2 * x.sin();
            let want_x = x.cos() * s * s - bx * 2.0 * s * x.sin();
            assert!((gr[0].at(k, c) - want_x).abs() < 1e-9);
            assert!((gr[2].at(k, c) - 2.0 * s * x.sin()).abs() < 1e-9);
            // d_xx|_z of sin(x) (z - B)^2 plus d_zz
            let want = -x.sin() * s * s - 4.0 * bx * s * x.cos() + x.sin() * (2.0 * bx * bx - 2.0 * s * bxx) + 2.0 * x.sin();
            assert!((lap.at(k, c) - want).abs() < 1e-8, "{} vs {want}", lap.at(k, c));
        }
    }
}
