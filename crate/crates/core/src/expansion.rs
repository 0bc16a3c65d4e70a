//! Per-`eps` construction of the layer and interior terms of orders 0, 1, 2.
//!
//! Sources of the layer equations couple both walls and the interior through
//! the cutoff, so the whole stack is rebuilt for every `eps`. Fields are
//! generic over the element type; building on Taylor jets of the limiting
//! trajectory makes every `d/dt` exact.

use crate::column::{Col3, ColumnField};
use crate::error::{Error, Result};
use crate::interior::{Cutoff, Profile, CHI, ONE, S, X};
use crate::jet::{Elem, Jet};
use crate::layer::{order1_flux_closed, BLField, LayerOps, Order0, Side};
use crate::limiting::LimitingSystem;
use crate::nodes::fornberg;
use crate::spectral::{curl, ddx, ddy, grad, inv_laplacian, laplacian, Field2, VecField2};
use std::sync::Arc;

/// Which reading of the printed construction to follow where it is not
/// self-consistent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Transcription {
    /// Every term derived from the chain rule in layer variables.
    #[default]
    Consistent,
    /// The printed displays, term by term.
    Verbatim,
}

impl std::str::FromStr for Transcription {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consistent" => Ok(Transcription::Consistent),
            "verbatim" => Ok(Transcription::Verbatim),
            _ => Err(Error::InvalidParameter(format!("unknown transcription '{s}' (consistent or verbatim)"))),
        }
    }
}

impl std::fmt::Display for Transcription {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Transcription::Consistent => "consistent",
            Transcription::Verbatim => "verbatim",
        })
    }
}

/// Sources of one order of one layer equation.
#[derive(Clone, Debug)]
pub struct SourceStack<T> {
    pub d: Col3<T>,
    pub d0: BLField<T>,
    /// `H0^-1 (D_h + grad B D_3 + sigma d_Z D0 grad B)`.
    pub g: [BLField<T>; 2],
}

/// Cutoff weights and opposite-wall sampling at the layer nodes.
///
/// A node `Z` of either layer sits at distance `delta Z` from its own wall,
/// where the own layer carries weight `1 - chi` and the opposite layer,
/// sampled at `2/delta - Z`, carries `chi`.
#[derive(Clone, Debug)]
pub struct Coupling {
    pub own: ColumnField<f64>,
    pub other: ColumnField<f64>,
    /// Distance from the own wall, clamped to the channel.
    pub dist: ColumnField<f64>,
    pub z_other: ColumnField<f64>,
    stencils: Vec<(u32, [f64; 7])>,
}

const NO_STENCIL: u32 = u32::MAX;

impl Coupling {
    pub fn new(ops: &LayerOps, delta: &Field2<f64>) -> Self {
        let g = ops.grid();
        let z = ops.z();
        let nz = z.len();
        let n2 = g.len();
        let nodes = &ops.bl.nodes;
        let zmax = ops.bl.zmax;
        let mut own = ColumnField::zeros(g, nz);
        let mut other = ColumnField::zeros(g, nz);
        let mut dist = ColumnField::zeros(g, nz);
        let mut z_other = ColumnField::zeros(g, nz);
        let mut stencils = Vec::with_capacity(nz * n2);
        for (k, &zk) in z.iter().enumerate() {
            for c in 0..n2 {
                let d = delta.data[c];
                let s = (d * zk).min(2.0);
                let chi = Cutoff.chi(s);
                own.set(k, c, 1.0 - chi);
                other.set(k, c, chi);
                dist.set(k, c, s);
                let zo = (2.0 / d - zk).max(0.0);
                z_other.set(k, c, zo);
                if zo <= zmax {
                    let st = nodes.interp(zo);
                    let mut w = [0.0; 7];
                    w[..st.w.len()].copy_from_slice(&st.w);
                    stencils.push((st.start as u32, w));
                } else {
                    stencils.push((NO_STENCIL, [0.0; 7]));
                }
            }
        }
        Coupling { own, other, dist, z_other, stencils }
    }

    /// Opposite-layer field sampled at `2/delta - Z`, zero beyond the truncation.
    pub fn opposite<T: Elem>(&self, f: &BLField<T>) -> BLField<T> {
        let n2 = f.n2();
        let mut out = BLField::zeros(f.grid, f.n);
        for k in 0..f.n {
            for c in 0..n2 {
                let (start, w) = &self.stencils[k * n2 + c];
                if *start == NO_STENCIL {
                    continue;
                }
                let mut v = T::zero();
                for (m, &wm) in w.iter().enumerate() {
                    v += f.at(*start as usize + m, c) * wm;
                }
                out.set(k, c, v);
            }
        }
        out
    }

    /// Physical height `s = z - B` of the layer nodes of `side`.
    pub fn height(&self, side: Side) -> ColumnField<f64> {
        match side {
            Side::Bottom => self.dist.clone(),
            Side::Top => self.dist.map(|s| 2.0 - s),
        }
    }
}

/// Evaluate an interior profile at the heights `s`.
pub fn profile_at<T: Elem>(p: &Profile<T>, s: &ColumnField<f64>) -> ColumnField<T> {
    let n2 = s.n2();
    let mut out = ColumnField::zeros(s.grid, s.n);
    for k in 0..s.n {
        for c in 0..n2 {
            out.set(k, c, p.eval(c, s.at(k, c)));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Interior<T> {
    pub ubar: VecField2<T>,
    /// `grad B . u_bar`.
    pub u3bar: Field2<T>,
    pub p0: Field2<T>,
    pub p1: Field2<T>,
    pub u1: [Profile<T>; 3],
    pub p2: Profile<T>,
    pub u2: [Profile<T>; 3],
}

impl<T: Elem> Interior<T> {
    /// Order-0 velocity as three flat profiles.
    pub fn u0(&self) -> [Profile<T>; 3] {
        [Profile::flat(&self.ubar.u), Profile::flat(&self.ubar.v), Profile::flat(&self.u3bar)]
    }

    pub fn velocity(&self, order: usize) -> [Profile<T>; 3] {
        match order {
            0 => self.u0(),
            1 => self.u1.clone(),
            2 => self.u2.clone(),
            _ => panic!("interior order {order} not constructed"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer<T> {
    pub side: Side,
    /// `u^{side,i}` for `i = 0, 1, 2`.
    pub u: [Col3<T>; 3],
    /// `p^{side,i+1}`.
    pub p: [BLField<T>; 3],
    /// `n . u^{side,i}`, zero at order 0.
    pub flux: [BLField<T>; 3],
}

#[derive(Clone, Debug)]
pub struct Expansion<T> {
    pub eps: f64,
    pub nu: f64,
    pub transcription: Transcription,
    pub ops: Arc<LayerOps>,
    /// `sqrt(nu) cos^{-3/2}`, so that `delta = eps delta1`.
    pub delta1: Field2<f64>,
    pub delta: Field2<f64>,
    pub coupling: Arc<Coupling>,
    pub interior: Interior<T>,
    pub layers: [Layer<T>; 2],
}

fn conv2<T: Elem, U: Elem>(f: &Field2<T>, m: &impl Fn(T) -> U) -> Field2<U> {
    Field2 { grid: f.grid, data: f.data.iter().map(|&v| m(v)).collect() }
}

fn conv_profile<T: Elem, U: Elem>(p: &Profile<T>, m: &impl Fn(T) -> U) -> Profile<U> {
    Profile { coef: std::array::from_fn(|b| conv2(&p.coef[b], m)) }
}

fn conv3<T: Elem, U: Elem>(f: &Col3<T>, m: &impl Fn(T) -> U) -> Col3<U> {
    std::array::from_fn(|i| f[i].convert(m))
}

impl<const N: usize> Expansion<Jet<N>> {
    /// Drop the higher Taylor coefficients.
    pub fn truncate<const M: usize>(&self) -> Expansion<Jet<M>> {
        let m = |v: Jet<N>| v.resize::<M>();
        let i = &self.interior;
        let interior = Interior {
            ubar: VecField2 { u: conv2(&i.ubar.u, &m), v: conv2(&i.ubar.v, &m) },
            u3bar: conv2(&i.u3bar, &m),
            p0: conv2(&i.p0, &m),
            p1: conv2(&i.p1, &m),
            u1: std::array::from_fn(|k| conv_profile(&i.u1[k], &m)),
            p2: conv_profile(&i.p2, &m),
            u2: std::array::from_fn(|k| conv_profile(&i.u2[k], &m)),
        };
        let layers = std::array::from_fn(|s| {
            let l = &self.layers[s];
            Layer {
                side: l.side,
                u: std::array::from_fn(|k| conv3(&l.u[k], &m)),
                p: std::array::from_fn(|k| l.p[k].convert(m)),
                flux: std::array::from_fn(|k| l.flux[k].convert(m)),
            }
        });
        Expansion {
            eps: self.eps,
            nu: self.nu,
            transcription: self.transcription,
            ops: self.ops.clone(),
            delta1: self.delta1.clone(),
            delta: self.delta.clone(),
            coupling: self.coupling.clone(),
            interior,
            layers,
        }
    }
}

impl<T: Elem> Expansion<T> {
    pub fn layer(&self, side: Side) -> &Layer<T> {
        &self.layers[side.index()]
    }
}

/// Per-column constants shared by the source builders.
struct Consts {
    cos: Field2<f64>,
    cos2: Field2<f64>,
    inv_cos: Field2<f64>,
    /// `sqrt(cos / nu)`.
    adv: Field2<f64>,
    h0inv: [Field2<f64>; 4],
}

impl Consts {
    fn new(ops: &LayerOps, nu: f64) -> Self {
        let g = &ops.geom;
        Consts {
            cos: g.cos_g.clone(),
            cos2: g.cos_g.map(|c| c * c),
            inv_cos: g.cos_g.map(|c| 1.0 / c),
            adv: g.cos_g.map(|c| (c / nu).sqrt()),
            h0inv: g.h0_inv(),
        }
    }
}

/// Three scalar layer fields times a horizontal vector, `v_h . grad0 f_i` style helper.
fn dot_h<T: Elem>(vx: &BLField<T>, vy: &BLField<T>, gx: &BLField<T>, gy: &BLField<T>) -> BLField<T> {
    let mut out = vx.mul(gx);
    out.add_assign(&vy.mul(gy));
    out
}

/// Horizontal interior field gradient sampled at layer nodes.
fn interior_grad_at<T: Elem>(p: &Profile<T>, s: &ColumnField<f64>) -> [BLField<T>; 2] {
    [profile_at(&p.dx_s(), s), profile_at(&p.dy_s(), s)]
}

struct Builder<'a, T: Elem> {
    ops: &'a LayerOps,
    k: Consts,
    tr: Transcription,
    coupling: &'a Coupling,
    delta1: Field2<f64>,
    o0: Order0<T>,
    u0: Col3<T>,
    u0z: Col3<T>,
    /// Order-0 velocity of the opposite layer at the coupled nodes.
    u0_opp: [BLField<T>; 2],
}

impl<'a, T: Elem> Builder<'a, T> {
    fn new(ops: &'a LayerOps, nu: f64, coupling: &'a Coupling, delta1: Field2<f64>, ubar: &VecField2<T>, tr: Transcription) -> Self {
        let o0 = Order0::new(ops, ubar);
        let u0 = o0.velocity(ops, 0);
        let u0z = o0.velocity(ops, 1);
        let g = ops.grid();
        let n2 = g.len();
        let mut u0_opp = [BLField::zeros(g, ops.nz()), BLField::zeros(g, ops.nz())];
        for k in 0..ops.nz() {
            for c in 0..n2 {
                let v = o0.uh_at(c, coupling.z_other.at(k, c), 0);
                u0_opp[0].set(k, c, v[0]);
                u0_opp[1].set(k, c, v[1]);
            }
        }
        Builder { ops, k: Consts::new(ops, nu), tr, coupling, delta1, o0, u0, u0z, u0_opp }
    }

    fn geom(&self) -> &crate::geometry::SurfaceGeometry {
        &self.ops.geom
    }

    /// Combined horizontal velocity of a given order at the layer nodes.
    fn combined_h(&self, interior: &[Profile<T>; 3], s: &ColumnField<f64>, own: [&BLField<T>; 2], opp: [&BLField<T>; 2]) -> [BLField<T>; 2] {
        std::array::from_fn(|i| {
            let mut v = profile_at(&interior[i], s);
            v.add_assign(&own[i].mulf(&self.coupling.own));
            v.add_assign(&opp[i].mulf(&self.coupling.other));
            v
        })
    }

    /// `n_side . U` of a combined field of a given order at the layer nodes.
    fn combined_normal(&self, side: Side, interior: &[Profile<T>; 3], s: &ColumnField<f64>, flux_own: &BLField<T>, flux_opp: &BLField<T>) -> BLField<T> {
        let g = self.geom();
        let nb = interior[2].add(&interior[0].mulf(&g.bx).scale(-1.0)).add(&interior[1].mulf(&g.by).scale(-1.0));
        let mut w = profile_at(&nb, s).scale(side.sign());
        w.add_assign(&flux_own.mulf(&self.coupling.own));
        w.sub_assign(&self.coupling.opposite(flux_opp).mulf(&self.coupling.other));
        w
    }

    fn reduce(&self, side: Side, d: Col3<T>, d0: BLField<T>) -> SourceStack<T> {
        let g = self.geom();
        let dz0 = self.ops.dz(&d0).scale(side.sign());
        let rx = d[0].add(&d[2].mul2f(&g.bx)).add(&dz0.mul2f(&g.bx));
        let ry = d[1].add(&d[2].mul2f(&g.by)).add(&dz0.mul2f(&g.by));
        let h = &self.k.h0inv;
        let gx = rx.mul2f(&h[0]).add(&ry.mul2f(&h[1]));
        let gy = rx.mul2f(&h[2]).add(&ry.mul2f(&h[3]));
        SourceStack { d, d0, g: [gx, gy] }
    }

    /// Solve one order: horizontal part from the Ekman problem, vertical part
    /// from the flux, pressure from the vertical balance.
    fn solve(&self, side: Side, src: &SourceStack<T>, flux: &BLField<T>, wall: &VecField2<T>) -> (Col3<T>, BLField<T>) {
        let g = self.geom();
        let [uh, vh] = self.ops.solve_ekman(&wall.scale(-1.0), &src.g);
        let mut u3 = uh.mul2f(&g.bx).add(&vh.mul2f(&g.by));
        u3.axpy(side.sign(), flux);
        let mut p = self.ops.dz(&u3);
        p.add_assign(&self.ops.tail(&src.d[2]));
        let p = p.mul2f(&self.k.cos).scale(side.sign());
        ([uh, vh, u3], p)
    }

    /// Order-1 sources of `side`.
    fn sources1(&self, side: Side, interior: &Interior<T>, flux1: [&BLField<T>; 2]) -> SourceStack<T> {
        let ops = self.ops;
        let g = self.geom();
        let s = self.coupling.height(side);
        let p1 = self.o0.pressure(ops, side);
        let gp = ops.grad0(&p1);
        let mut d: Col3<T> = [
            gp[0].sub(&p1.mul2f(&g.a.u)).mul2f(&self.k.inv_cos),
            gp[1].sub(&p1.mul2f(&g.a.v)).mul2f(&self.k.inv_cos),
            BLField::zeros(ops.grid(), ops.nz()),
        ];
        let ui0 = interior.u0();
        let u0h = self.combined_h(&ui0, &s, [&self.u0[0], &self.u0[1]], [&self.u0_opp[0], &self.u0_opp[1]]);
        let (own, opp) = (flux1[side.index()], flux1[side.other().index()]);
        let wn = self.combined_normal(side, &interior.u1, &s, own, opp);
        for i in 0..3 {
            d[i].sub_assign(&ops.lapm1(side, &self.u0[i]).mul2f(&self.k.cos2));
            let g0 = ops.grad0(&self.u0[i]);
            let mut a = self.u0[i].dt();
            a.add_assign(&dot_h(&u0h[0], &u0h[1], &g0[0], &g0[1]));
            let gi = interior_grad_at(&ui0[i], &s);
            a.add_assign(&dot_h(&self.u0[0], &self.u0[1], &gi[0], &gi[1]));
            a.add_assign(&wn.mul(&self.u0z[i]));
            d[i].add_assign(&a.mul2f(&self.k.adv));
        }
        let d0 = ops.div0(&[self.u0[0].clone(), self.u0[1].clone()]);
        self.reduce(side, d, d0)
    }

    /// `delta^-1 lapm1(delta f)`, or `lapm1 f` when following the printed display.
    fn lapm1_scaled(&self, side: Side, f: &BLField<T>) -> BLField<T> {
        match self.tr {
            Transcription::Consistent => {
                let inv = self.delta1.map(|d| 1.0 / d);
                self.ops.lapm1(side, &f.mul2f(&self.delta1)).mul2f(&inv)
            }
            Transcription::Verbatim => self.ops.lapm1(side, f),
        }
    }

    /// Divergence source of order 2, `delta^-1 div0(delta u^1_h)`.
    fn div_source2(&self, u1: &Col3<T>) -> BLField<T> {
        let g = self.geom();
        let mut d0 = self.ops.div0(&[u1[0].clone(), u1[1].clone()]);
        d0.sub_assign(&u1[0].mul2f(&g.a.u));
        d0.sub_assign(&u1[1].mul2f(&g.a.v));
        d0
    }

    #[allow(clippy::too_many_arguments)]
    fn sources2(
        &self,
        side: Side,
        interior: &Interior<T>,
        layer1: [&Layer<T>; 2],
        flux1: [&BLField<T>; 2],
        flux2: [&BLField<T>; 2],
        d0: BLField<T>,
    ) -> SourceStack<T> {
        let ops = self.ops;
        let g = self.geom();
        let a = &g.a;
        let s = self.coupling.height(side);
        let me = layer1[side.index()];
        let opp = layer1[side.other().index()];
        let u1 = &me.u[1];
        let p2 = &me.p[1];
        let gp = ops.grad0(p2);
        let mut d: Col3<T> = [
            gp[0].sub(&p2.mul2f(&a.u).scale(2.0)).mul2f(&self.k.inv_cos),
            gp[1].sub(&p2.mul2f(&a.v).scale(2.0)).mul2f(&self.k.inv_cos),
            BLField::zeros(ops.grid(), ops.nz()),
        ];
        let ui0 = interior.u0();
        let u0h = self.combined_h(&ui0, &s, [&self.u0[0], &self.u0[1]], [&self.u0_opp[0], &self.u0_opp[1]]);
        let opp1 = [self.coupling.opposite(&opp.u[1][0]), self.coupling.opposite(&opp.u[1][1])];
        let u1h = self.combined_h(&interior.u1, &s, [&u1[0], &u1[1]], [&opp1[0], &opp1[1]]);
        drop(opp1);
        let (own1, opp1f) = (flux1[side.index()], flux1[side.other().index()]);
        let wn1 = self.combined_normal(side, &interior.u1, &s, own1, opp1f);
        let (own2, opp2f) = (flux2[side.index()], flux2[side.other().index()]);
        let wn2 = self.combined_normal(side, &interior.u2, &s, own2, opp2f);
        let u0a = self.u0[0].mul2f(&a.u).add(&self.u0[1].mul2f(&a.v));
        let u0ha = u0h[0].mul2f(&a.u).add(&u0h[1].mul2f(&a.v));
        for i in 0..3 {
            let mut lap = self.lapm1_scaled(side, &u1[i]);
            lap.add_assign(&ops.lap0(&self.u0[i]));
            d[i].sub_assign(&lap.mul2f(&self.k.cos2));
            drop(lap);
            let mut t = u1[i].dt();
            let g1 = ops.grad0(&u1[i]);
            t.add_assign(&dot_h(&u0h[0], &u0h[1], &g1[0], &g1[1]));
            t.sub_assign(&u0ha.mul(&u1[i]));
            drop(g1);
            let g0 = ops.grad0(&self.u0[i]);
            t.add_assign(&dot_h(&u1h[0], &u1h[1], &g0[0], &g0[1]));
            drop(g0);
            t.add_assign(&wn1.mul(&ops.dz(&u1[i])));
            t.add_assign(&wn2.mul(&self.u0z[i]));
            let gi1 = interior_grad_at(&interior.u1[i], &s);
            t.add_assign(&dot_h(&self.u0[0], &self.u0[1], &gi1[0], &gi1[1]));
            t.sub_assign(&u0a.mul(&profile_at(&interior.u1[i], &s)));
            let gi0 = interior_grad_at(&ui0[i], &s);
            t.add_assign(&dot_h(&u1[0], &u1[1], &gi0[0], &gi0[1]));
            d[i].add_assign(&t.mul2f(&self.k.adv));
        }
        self.reduce(side, d, d0)
    }
}

/// Order-1 interior velocity given the wall fluxes of both layers.
fn interior_order1<T: Elem>(ops: &LayerOps, ubar: &VecField2<T>, wb0: &Field2<T>, wt0: &Field2<T>) -> [Profile<T>; 3] {
    let g = &ops.geom;
    let [a, b, c, d] = g.h0();
    let e1h0u = ubar.apply_matrix(&a, &b, &c, &d).e1();
    let coef = g.cos_g.map(|c| c.powf(1.5) / std::f64::consts::SQRT_2);
    let u1h = (&e1h0u + ubar).mulf(&coef);
    let u3 = &u1h.dotf(&g.grad_b()) - wb0;
    [
        Profile::flat(&u1h.u),
        Profile::flat(&u1h.v),
        Profile::flat(&u3).with(CHI, wb0 + wt0),
    ]
}

/// `delta^-1 (d_t + u_bar . grad)(delta f)` for an `s`-independent coefficient `f`.
fn transport<T: Elem>(ubar: &VecField2<T>, a: &VecField2<f64>, f: &Field2<T>) -> Field2<T> {
    let mut out = f.dt();
    out.add_assign(&(&ubar.u.mul(&ddx(f)) + &ubar.v.mul(&ddy(f))));
    out.sub_assign(&f.mul(&ubar.dotf(a)));
    out
}

/// Order-2 interior pressure and horizontal velocity.
fn interior_order2<T: Elem>(ops: &LayerOps, nu: f64, int: &Interior<T>) -> (Profile<T>, [Profile<T>; 2]) {
    let g = &ops.geom;
    let ubar = &int.ubar;
    let kv = g.cos_g.map(|c| nu.sqrt() * c.powf(1.5));
    let kvi = kv.map(|v| 1.0 / v);
    let u1h = VecField2 { u: int.u1[0].coef[ONE].clone(), v: int.u1[1].coef[ONE].clone() };
    let grad_u3 = grad(&int.u3bar);
    // vertical balance: d_s (cos^-3 p2) = f0 + chi f1
    let mut f0 = laplacian(&int.u3bar);
    let mut tmp = u1h.dot(&grad_u3);
    tmp.add_assign(&transport(ubar, &g.a, &int.u1[2].coef[ONE]));
    f0.sub_assign(&tmp.mulf(&kvi));
    let f1 = transport(ubar, &g.a, &int.u1[2].coef[CHI]).mulf(&kvi).scale(-1.0);
    let c3 = g.cos_g.map(|c| c.powi(3));
    let p2 = Profile::zeros(g.grid()).with(S, f0.mulf(&c3)).with(X, f1.mulf(&c3));
    // horizontal balance, rotated
    let ua = ubar.dotf(&g.a);
    let comp = |i: usize| -> Profile<T> {
        let (ub, u1) = if i == 0 { (&ubar.u, &u1h.u) } else { (&ubar.v, &u1h.v) };
        let db = if i == 0 { &g.bx } else { &g.by };
        let mut y0 = u1.dt();
        y0.sub_assign(&laplacian(ub).mulf(&kv));
        y0.add_assign(&(&u1h.u.mul(&ddx(ub)) + &u1h.v.mul(&ddy(ub))));
        y0.add_assign(&(&ubar.u.mul(&ddx(u1)) + &ubar.v.mul(&ddy(u1))));
        y0.sub_assign(&u1.mul(&ua));
        y0.sub_assign(&f0.mulf(&kv).mulf(db));
        let d = |f: &Field2<T>| if i == 0 { ddx(f) } else { ddy(f) };
        Profile::zeros(g.grid())
            .with(ONE, y0)
            .with(S, d(&f0).mulf(&kv))
            .with(X, d(&f1).mulf(&kv))
            .with(CHI, f1.mulf(&kv).mulf(db).scale(-1.0))
    };
    let (yx, yy) = (comp(0), comp(1));
    // u2 = -(cos^{3/2}/sqrt nu) E1 Y, E1 (a, b) = (b, -a)
    let m = kvi.mul(&g.cos_g.map(|c| c.powi(3)));
    (p2, [yy.mulf(&m).scale(-1.0), yx.mulf(&m)])
}

impl<T: Elem> Expansion<T> {
    /// Build orders 0, 1, 2 for a limiting trajectory given as a jet.
    pub fn build(sys: &LimitingSystem, ops: Arc<LayerOps>, ubar: &VecField2<T>, eps: f64, tr: Transcription) -> Result<Self> {
        Self::build_with_sources(sys, ops, ubar, eps, tr).map(|(e, _)| e)
    }

    /// As [`Expansion::build`], also returning the order-1 and order-2 sources
    /// per side.
    pub fn build_with_sources(
        sys: &LimitingSystem,
        ops: Arc<LayerOps>,
        ubar: &VecField2<T>,
        eps: f64,
        tr: Transcription,
    ) -> Result<(Self, [[SourceStack<T>; 2]; 2])> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
        }
        if !ubar.is_finite() {
            return Err(Error::NonFinite("limiting velocity".into()));
        }
        let nu = sys.nu;
        let geom = ops.geom.clone();
        let g = geom.grid();
        let delta1 = geom.cos_g.map(|c| nu.sqrt() * c.powf(-1.5));
        let delta = delta1.scale(eps);
        let coupling = Arc::new(Coupling::new(&ops, &delta));
        let b = Builder::new(&ops, nu, &coupling, delta1.clone(), ubar, tr);

        // interior order 0
        let pbar = sys.recover_pressure(ubar);
        let u3bar = ubar.dotf(&geom.grad_b());
        let p0 = inv_laplacian(&curl(ubar));
        let p1 = pbar.mulf(&geom.cos_g.map(|c| c.powf(1.5) / nu.sqrt()));

        // order-1 fluxes
        let w1b = ops.tail(&ops.div0(&[b.u0[0].clone(), b.u0[1].clone()]));
        let w1t = match tr {
            Transcription::Consistent => w1b.clone(),
            Transcription::Verbatim => order1_flux_closed(&ops, &b.o0, true),
        };
        let u1 = interior_order1(&ops, ubar, &w1b.slice(0), &w1t.slice(0));
        let zero_p = Profile::zeros(g);
        let mut interior = Interior {
            ubar: ubar.clone(),
            u3bar,
            p0,
            p1,
            u1,
            p2: zero_p.clone(),
            u2: [zero_p.clone(), zero_p.clone(), zero_p],
        };

        // layers order 1
        let flux1 = [&w1b, &w1t];
        let wall1 = VecField2 { u: interior.u1[0].coef[ONE].clone(), v: interior.u1[1].coef[ONE].clone() };
        let mut src1 = Vec::new();
        let mut lay1 = Vec::new();
        for side in Side::BOTH {
            let src = b.sources1(side, &interior, flux1);
            let (u, p) = b.solve(side, &src, flux1[side.index()], &wall1);
            lay1.push((u, p));
            src1.push(src);
        }
        let zero = || BLField::zeros(g, ops.nz());
        let zero3 = || [zero(), zero(), zero()];
        let mut layers: Vec<Layer<T>> = Side::BOTH
            .iter()
            .zip(lay1)
            .map(|(&side, (u, p))| Layer {
                side,
                u: [b.u0.clone(), u, zero3()],
                p: [b.o0.pressure(&ops, side), p, zero()],
                flux: [zero(), flux1[side.index()].clone(), zero()],
            })
            .collect();

        // order-2 fluxes and interior
        let d02: Vec<BLField<T>> = layers.iter().map(|l| b.div_source2(&l.u[1])).collect();
        for (l, d0) in layers.iter_mut().zip(&d02) {
            l.flux[2] = ops.tail(d0);
        }
        let (wb2, wt2) = (layers[0].flux[2].slice(0), layers[1].flux[2].slice(0));
        let (p2, [u2x, u2y]) = interior_order2(&ops, nu, &interior);
        let bdot = |s: f64| &u2x.at_height(s).mulf(&geom.bx) + &u2y.at_height(s).mulf(&geom.by);
        let lo = &bdot(0.0) - &wb2;
        let hi = &bdot(2.0) + &wt2;
        let u2z = Profile::flat(&lo).with(CHI, &hi - &lo);
        interior.p2 = p2;
        interior.u2 = [u2x, u2y, u2z];

        // layers order 2
        let f1 = [layers[0].flux[1].clone(), layers[1].flux[1].clone()];
        let f2 = [layers[0].flux[2].clone(), layers[1].flux[2].clone()];
        let mut src2 = Vec::new();
        let mut sol2 = Vec::new();
        for (side, d0) in Side::BOTH.into_iter().zip(d02) {
            let src = b.sources2(side, &interior, [&layers[0], &layers[1]], [&f1[0], &f1[1]], [&f2[0], &f2[1]], d0);
            let s_wall = match side {
                Side::Bottom => 0.0,
                Side::Top => 2.0,
            };
            let wall = VecField2 { u: interior.u2[0].at_height(s_wall), v: interior.u2[1].at_height(s_wall) };
            sol2.push(b.solve(side, &src, &f2[side.index()], &wall));
            src2.push(src);
        }
        for (l, (u, p)) in layers.iter_mut().zip(sol2) {
            l.u[2] = u;
            l.p[2] = p;
        }
        drop(b);
        let [lb, lt]: [Layer<T>; 2] = layers.try_into().ok().expect("two layers");
        let [s1b, s1t]: [SourceStack<T>; 2] = src1.try_into().ok().expect("two sides");
        let [s2b, s2t]: [SourceStack<T>; 2] = src2.try_into().ok().expect("two sides");
        let exp = Expansion { eps, nu, transcription: tr, ops, delta1, delta, coupling, interior, layers: [lb, lt] };
        for l in &exp.layers {
            for (i, u) in l.u.iter().enumerate() {
                if !u.iter().all(|f| f.is_finite()) {
                    return Err(Error::NonFinite(format!("layer velocity of order {i}")));
                }
            }
        }
        Ok((exp, [[s1b, s1t], [s2b, s2t]]))
    }

    /// Largest value on the last layer node relative to the field maximum,
    /// over all layer fields.
    pub fn decay_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for l in &self.layers {
            let fields = l.u.iter().flatten().chain(l.p.iter());
            for f in fields {
                let m = f.max_abs();
                if m > 0.0 {
                    let last = (0..f.n2()).fold(0.0f64, |a, c| a.max(f.at(f.n - 1, c).max_abs()));
                    worst = worst.max(last / m);
                }
            }
        }
        worst
    }
}

/// Lagrange weights interpolating node values to the point `z`, exposed for
/// the channel remap.
pub fn lagrange_weights(x: &[f64], z: f64) -> Vec<f64> {
    fornberg(z, x, 0).swap_remove(0)
}
