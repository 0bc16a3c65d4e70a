//! Assembly of the approximate solution on the channel grid, its residual
//! groups, and the direct application of the momentum equation.
//!
//! Writing the velocity as `U = sum_j W_j` with
//! `W_j = I_j + (1 - chi) V^B_j + chi V^T_j + C_j` (all with their powers of
//! `delta`), each product and derivative in the momentum equation splits
//! into pieces that either cancel against the layer and interior equations,
//! are absorbed by the pressure correctors `Pc_k`, or are left over in one of
//! the three residual groups. The formula route evaluates the leftovers
//! directly; the direct route differentiates the assembled fields on the
//! grid. Their difference measures discretization and bookkeeping error.

use crate::channel::{
    delta_powers, grad3, laplacian3, normal_part, sample_layer, sample_order0, ChannelField, LayerSample, Remap, SGrid,
};
use crate::column::{l2_3, zeros3, Col3};
use crate::corrector::{solve_corrector_balanced, wall_trace};
use crate::error::{Error, Result};
use crate::expansion::{Expansion, Transcription};
use crate::geometry::SurfaceGeometry;
use crate::interior::Profile;
use crate::jet::{Elem, Jet};
use crate::layer::{LayerOps, Order0, Side};
use crate::limiting::LimitingSystem;
use crate::spectral::{ddx, ddy, Field2, VecField2};
use std::sync::Arc;

/// Assembled velocity and pressure gradient, `grad_p` including the
/// corrector fields scaled by `eps`.
#[derive(Clone, Debug)]
pub struct ApproxSolution3D<T> {
    pub velocity: Col3<T>,
    pub grad_p: Col3<T>,
    pub eps: f64,
    pub nu: f64,
    pub t: f64,
    pub provenance: String,
}

impl<T: Elem> ApproxSolution3D<T> {
    /// Largest wall value relative to the largest value.
    pub fn trace_ratio(&self) -> f64 {
        let m = self.velocity.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        if m > 0.0 {
            wall_trace(&self.velocity) / m
        } else {
            0.0
        }
    }

    /// `||div u|| / ||grad u||` on the value lane.
    pub fn divergence_ratio(&self, geom: &SurfaceGeometry, sg: &SGrid) -> f64 {
        let u: Col3<f64> = std::array::from_fn(|m| self.velocity[m].value());
        divergence_ratio(&u, geom, sg)
    }

    /// Reject the solution if a wall trace or the divergence exceeds its tolerance.
    pub fn validate(&self, geom: &SurfaceGeometry, sg: &SGrid, trace_tol: f64, div_tol: f64) -> Result<()> {
        let tr = self.trace_ratio();
        if tr > trace_tol {
            return Err(Error::Invariant(format!("wall trace {tr:e} exceeds {trace_tol:e}")));
        }
        let dv = self.divergence_ratio(geom, sg);
        if dv > div_tol {
            return Err(Error::Invariant(format!("divergence {dv:e} exceeds {div_tol:e}")));
        }
        Ok(())
    }
}

fn divergence_ratio(u: &Col3<f64>, geom: &SurfaceGeometry, sg: &SGrid) -> f64 {
    let mut div = ChannelField::zeros(u[0].grid, u[0].n);
    let mut g2 = 0.0;
    for m in 0..3 {
        let g = grad3(&u[m], geom, sg);
        div.add_assign(&g[m]);
        g2 += g.iter().map(|f| f.l2_sq(&sg.nodes)).sum::<f64>();
    }
    let d = div.l2_sq(&sg.nodes).sqrt();
    if g2 > 0.0 {
        d / g2.sqrt()
    } else {
        d
    }
}

#[derive(Clone, Debug)]
pub struct ResidualBreakdown {
    /// Value lanes of the three groups.
    pub rho: [Col3<f64>; 3],
    pub l2: [f64; 3],
    pub l2_total: f64,
    pub l2_dt: [f64; 3],
    pub l2_dt_total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CorrectorReport {
    /// `||delta^j u^{c,j}||`.
    pub l2: f64,
    /// Integral of the source removed before lifting.
    pub removed: f64,
    /// The removed integral relative to the source norm.
    pub relative: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub solution: ApproxSolution3D<T>,
    pub breakdown: ResidualBreakdown,
    pub direct_l2: f64,
    /// `||direct - (rho1 + rho2 + rho3)||`.
    pub mismatch_l2: f64,
    pub mismatch_dt_l2: f64,
    pub correctors: [CorrectorReport; 3],
    pub pressure_correctors_l2: [f64; 3],
    pub divergence: f64,
    pub trace: f64,
    /// Weighted layer norms for `k = 0, 1`.
    pub bl_norms: [f64; 2],
}

impl<T> Evaluation<T> {
    pub fn relative_mismatch(&self) -> f64 {
        self.mismatch_l2 / self.breakdown.l2_total
    }
}

fn add_scaled<T: Elem>(acc: &mut ChannelField<T>, s: f64, f: &ChannelField<T>) {
    acc.axpy(s, f);
}

/// `f * w(s)` with a node weight.
fn nodes_mul<T: Elem>(f: &ChannelField<T>, w: &[f64]) -> ChannelField<T> {
    f.mul_nodes(w)
}

/// `a(k, c) * b(k, c)` for a real channel weight.
fn real_field(g: crate::spectral::Grid2D, ns: usize, f: impl Fn(usize, usize) -> f64) -> ChannelField<f64> {
    ChannelField::from_fn(g, ns, f)
}

/// Profile divergence in physical coordinates.
fn profile_div<T: Elem>(p: &[Profile<T>; 3], geom: &SurfaceGeometry) -> Profile<T> {
    let gx = p[0].grad_z(geom)[0].clone();
    let gy = p[1].grad_z(geom)[1].clone();
    gx.add(&gy).add(&p[2].ds())
}

struct Context<'a, T: Elem> {
    exp: &'a Expansion<T>,
    ops: &'a LayerOps,
    geom: &'a SurfaceGeometry,
    sg: &'a SGrid,
    remap: [Remap; 2],
    o0: Order0<T>,
    dp: [Field2<f64>; 5],
    verbatim: bool,
}

impl<'a, T: Elem> Context<'a, T> {
    fn new(exp: &'a Expansion<T>, sg: &'a SGrid) -> Self {
        let ops = exp.ops.as_ref();
        let remap = [
            Remap::new(Side::Bottom, &ops.bl, sg, &exp.delta),
            Remap::new(Side::Top, &ops.bl, sg, &exp.delta),
        ];
        Context {
            exp,
            ops,
            geom: &ops.geom,
            sg,
            remap,
            o0: Order0::new(ops, &exp.interior.ubar),
            dp: delta_powers(&exp.delta),
            verbatim: exp.transcription == Transcription::Verbatim,
        }
    }

    fn ns(&self) -> usize {
        self.sg.len()
    }

    fn zeros(&self) -> ChannelField<T> {
        ChannelField::zeros(self.geom.grid(), self.ns())
    }

    fn zeros3(&self) -> Col3<T> {
        zeros3(self.geom.grid(), self.ns())
    }

    /// `delta^j u^{I,j}`.
    fn interior(&self, j: usize) -> [Profile<T>; 3] {
        let p = self.exp.interior.velocity(j);
        std::array::from_fn(|m| p[m].mulf(&self.dp[j + 1]))
    }

    fn sample_profile(&self, p: &Profile<T>) -> ChannelField<T> {
        p.sample(self.sg.s())
    }

    /// `delta^j u^{side,j}` on the channel.
    fn layer_velocity(&self, j: usize, side: Side) -> Col3<T> {
        if j == 0 {
            sample_order0(&self.o0, self.geom, self.sg, &self.exp.delta, side).v
        } else {
            let u = &self.exp.layer(side).u[j];
            std::array::from_fn(|m| self.remap[side.index()].apply(&u[m]).mul2f(&self.dp[j + 1]))
        }
    }

    fn layer_sample(&self, j: usize, side: Side) -> LayerSample<T> {
        if j == 0 {
            sample_order0(&self.o0, self.geom, self.sg, &self.exp.delta, side)
        } else {
            let l = self.exp.layer(side);
            sample_layer(&l.u[j], &l.p[j], j, self.ops, &self.remap[side.index()], &self.exp.delta)
        }
    }

    /// Left-over divergence of the order-2 layer, `delta^2 (div0 u_h - 2 a . u_h)`.
    fn layer_divergence2(&self, side: Side) -> ChannelField<T> {
        let u = &self.exp.layer(side).u[2];
        let a = &self.geom.a;
        let mut d = self.ops.div0(&[u[0].clone(), u[1].clone()]);
        d.axpy(-2.0, &u[0].mul2f(&a.u));
        d.axpy(-2.0, &u[1].mul2f(&a.v));
        self.remap[side.index()].apply(&d).mul2f(&self.dp[3])
    }

    /// Δχ on the channel.
    fn lap_chi(&self) -> ChannelField<f64> {
        let c = &self.sg.cutoff;
        let geom = self.geom;
        let ci2 = geom.cos_g.map(|v| 1.0 / (v * v));
        let n2 = geom.grid().len();
        let vb = self.verbatim;
        real_field(geom.grid(), self.ns(), |k, i| {
            let ic = i % n2;
            if vb {
                c.d2[k]
            } else {
                c.d2[k] * ci2.data[ic] - c.d1[k] * geom.lap_b.data[ic]
            }
        })
    }
}

/// Sign of a wall in the jump `T - B`.
fn jump_sign(side: Side) -> f64 {
    -side.sign()
}

/// Evaluate the residual of the assembled approximation for one `eps`.
pub fn evaluate<T: Elem>(exp: &Expansion<T>, sg: &SGrid, t: f64, provenance: &str) -> Result<Evaluation<T>> {
    let cx = Context::new(exp, sg);
    let geom = cx.geom;
    let nodes = &sg.nodes;
    let eps = exp.eps;
    let ie = 1.0 / eps;
    let ve = exp.nu * eps;
    let chi1 = &sg.cutoff.d1;
    let vb = cx.verbatim;

    // velocities, corrector sources and correctors
    let mut w: Vec<Col3<T>> = Vec::with_capacity(3);
    let mut cvec: Vec<Col3<T>> = Vec::with_capacity(3);
    let mut dv: Vec<Col3<T>> = Vec::with_capacity(3);
    let mut bl = cx.zeros3();
    let mut reports = [CorrectorReport::default(); 3];
    for j in 0..3 {
        let iw = cx.interior(j);
        let mut wj: Col3<T> = std::array::from_fn(|m| cx.sample_profile(&iw[m]));
        let mut dvj = cx.zeros3();
        for side in Side::BOTH {
            let v = cx.layer_velocity(j, side);
            let wt = sg.cutoff.weight(side);
            for m in 0..3 {
                let vw = nodes_mul(&v[m], &wt);
                wj[m].add_assign(&vw);
                bl[m].add_assign(&vw);
                add_scaled(&mut dvj[m], jump_sign(side), &v[m]);
            }
        }
        let mut rhs = cx.sample_profile(&profile_div(&iw, geom)).scale(-1.0);
        if vb {
            rhs.sub_assign(&nodes_mul(&dvj[2], chi1));
        } else {
            rhs.sub_assign(&nodes_mul(&normal_part(&dvj, geom), chi1));
        }
        if j == 2 {
            for side in Side::BOTH {
                rhs.sub_assign(&nodes_mul(&cx.layer_divergence2(side), &sg.cutoff.weight(side)));
            }
        }
        let lifted = solve_corrector_balanced(&rhs, geom, sg);
        drop(rhs);
        let cv: Col3<f64> = std::array::from_fn(|m| lifted.u[m].value());
        reports[j] = CorrectorReport {
            l2: l2_3(&cv, nodes),
            removed: lifted.integral[0],
            relative: lifted.relative,
        };
        for m in 0..3 {
            wj[m].add_assign(&lifted.u[m]);
        }
        w.push(wj);
        cvec.push(lifted.u);
        dv.push(dvj);
    }

    let lap_chi = cx.lap_chi();
    let ci2 = geom.cos_g.map(|v| 1.0 / (v * v));
    let nb = |m: usize| -> Option<&Field2<f64>> {
        match m {
            0 => Some(&geom.bx),
            1 => Some(&geom.by),
            _ => None,
        }
    };
    // n_B component m as a channel multiplier: (-Bx, -By, 1)
    let with_nb = |f: &ChannelField<T>, m: usize| -> ChannelField<T> {
        match nb(m) {
            Some(b) => f.mul2f(b).scale(-1.0),
            None => f.clone(),
        }
    };

    let mut rho1 = cx.zeros3();
    let mut rho2 = cx.zeros3();
    let mut rho3 = cx.zeros3();
    let mut pc: [Col3<T>; 3] = [cx.zeros3(), cx.zeros3(), cx.zeros3()];

    // On the torus a mean of u_bar is not geostrophically balanced: R<u_bar>
    // is constant and no pressure gradient absorbs it.
    let mean_of = |f: &Field2<T>| {
        let mut v = T::zero();
        for k in 0..T::LANES {
            v.set_lane(k, f.lane(k).mean());
        }
        v
    };
    let ub = &exp.interior.ubar;
    for (m, c) in [(0, -mean_of(&ub.v)), (1, mean_of(&ub.u))] {
        let c = c * ie;
        rho1[m].data.iter_mut().for_each(|v| *v += c);
    }

    // interior pressure
    let int = &exp.interior;
    let ns = cx.ns();
    let mut p_nc = ChannelField::broadcast(&(&int.p0 + &int.p1.mulf(&exp.delta)), ns);
    p_nc.add_assign(&cx.sample_profile(&int.p2.mulf(&cx.dp[3])));

    for j in 0..3 {
        let mut abar: [[ChannelField<T>; 2]; 3] = std::array::from_fn(|_| [cx.zeros(), cx.zeros()]);
        let mut ntil = cx.zeros3();
        let mut nsum = cx.zeros3();
        let mut ndif = cx.zeros3();
        let mut ga = cx.zeros3();
        let mut dpj = cx.zeros();
        for side in Side::BOTH {
            let smp = cx.layer_sample(j, side);
            let wt = sg.cutoff.weight(side);
            let js = jump_sign(side);
            for m in 0..3 {
                for d in 0..2 {
                    abar[m][d].add_assign(&nodes_mul(&smp.a[m][d], &wt));
                }
                let gb = smp.a[m][0].mul2f(&geom.bx).add(&smp.a[m][1].mul2f(&geom.by));
                add_scaled(&mut ga[m], js, &gb);
                ntil[m].axpy(side.sign(), &nodes_mul(&smp.n[m], &wt));
                nsum[m].add_assign(&smp.n[m]);
                add_scaled(&mut ndif[m], js, &smp.n[m]);
            }
            add_scaled(&mut dpj, js, &smp.p);
            p_nc.add_assign(&nodes_mul(&smp.p, &wt));
            drop(smp);
            if j >= 1 {
                let l = exp.layer(side);
                let rm = &cx.remap[side.index()];
                for m in 0..3 {
                    let lap = cx.ops.lap0(&l.u[j][m].mul2f(&cx.dp[j + 1]));
                    rho1[m].axpy(-ve, &nodes_mul(&rm.apply(&lap), &wt));
                }
                if j == 2 {
                    for m in 0..3 {
                        let f = if vb {
                            cx.ops.lapm1(side, &l.u[2][m]).mul2f(&exp.delta)
                        } else {
                            let di = &cx.dp[0];
                            cx.ops.lapm1(side, &l.u[2][m].mul2f(&cx.dp[3])).mul2f(di)
                        };
                        rho1[m].axpy(-ve, &nodes_mul(&rm.apply(&f), &wt));
                    }
                    let p3 = &l.p[2];
                    let gp = cx.ops.grad0(p3);
                    let av = [&geom.a.u, &geom.a.v];
                    for d in 0..2 {
                        let mut f = gp[d].clone();
                        f.axpy(-3.0, &p3.mul2f(av[d]));
                        let f = rm.apply(&f).mul2f(&cx.dp[4]);
                        rho1[d].axpy(ie, &nodes_mul(&f, &wt));
                    }
                }
            }
        }

        for i in 0..3 {
            let wi = &w[i];
            let ci = &cvec[i];
            let nwi = normal_part(wi, geom);
            let nci = normal_part(ci, geom);
            let q4 = if vb { wi[2].clone() } else { nwi.clone() };
            let q4 = nodes_mul(&q4, chi1);
            for m in 0..3 {
                // horizontal advection of the layer parts
                let t1 = wi[0].mul(&abar[m][0]).add(&wi[1].mul(&abar[m][1]));
                if i + j >= 2 {
                    rho3[m].add_assign(&t1);
                } else {
                    let c1 = ci[0].mul(&abar[m][0]).add(&ci[1].mul(&abar[m][1]));
                    pc[i + j + 1][m].sub_assign(&c1);
                }
                // normal advection of the layer parts
                if i + j >= 3 {
                    rho3[m].add_assign(&nwi.mul(&ntil[m]));
                } else {
                    let sgn = if vb && i + j == 2 { 1.0 } else { -1.0 };
                    pc[i + j][m].axpy(sgn, &nci.mul(&ntil[m]));
                }
                // advection across the cutoff
                let t4 = q4.mul(&dv[j][m]);
                if i + j >= 2 {
                    rho3[m].add_assign(&t4);
                } else {
                    pc[i + j + 1][m].sub_assign(&t4);
                }
            }
        }
        for m in 0..3 {
            let t5 = dv[j][m].mulf(&lap_chi).scale(-ve);
            if j == 0 {
                pc[2][m].sub_assign(&t5);
            } else {
                rho1[m].add_assign(&t5);
            }
            if !vb {
                let t6 = nodes_mul(&ga[m], chi1).scale(2.0 * ve);
                if j == 0 {
                    pc[2][m].sub_assign(&t6);
                } else {
                    rho1[m].add_assign(&t6);
                }
            }
            let t7 = if vb {
                nodes_mul(&ndif[m], chi1).scale(-ve)
            } else {
                nodes_mul(&nsum[m], chi1).mul2f(&ci2).scale(2.0 * ve)
            };
            let t8 = if vb {
                if m == 2 {
                    nodes_mul(&dpj, chi1).scale(ie)
                } else {
                    cx.zeros()
                }
            } else {
                with_nb(&nodes_mul(&dpj, chi1), m).scale(ie)
            };
            match j {
                0 => {
                    pc[1][m].sub_assign(&t7);
                    pc[1][m].sub_assign(&t8);
                }
                1 => {
                    pc[2][m].sub_assign(&t7);
                    pc[2][m].sub_assign(&t8);
                }
                _ => {
                    rho1[m].add_assign(&t7);
                    rho1[m].add_assign(&t8);
                }
            }
        }
    }

    // advection of the interior and corrector parts
    for j in 0..3 {
        let iw = cx.interior(j);
        for m in 0..3 {
            let gz = iw[m].grad_z(geom);
            let gi: Col3<T> = [cx.sample_profile(&gz[0]), cx.sample_profile(&gz[1]), cx.sample_profile(&iw[m].ds())];
            let gc = grad3(&cvec[j][m], geom, sg);
            for i in 0..3 {
                let wi = &w[i];
                if i + j >= 2 {
                    for d in 0..3 {
                        rho3[m].add_assign(&wi[d].mul(&gi[d]));
                        rho3[m].add_assign(&wi[d].mul(&gc[d]));
                    }
                } else {
                    let ci = &cvec[i];
                    for d in 0..3 {
                        pc[i + j + 1][m].sub_assign(&wi[d].mul(&gc[d]));
                        pc[i + j + 1][m].sub_assign(&ci[d].mul(&gi[d]));
                    }
                }
            }
        }
    }

    // corrector linear terms
    for j in 0..3 {
        let c = &cvec[j];
        pc[j][0].axpy(ie, &c[1]);
        pc[j][1].axpy(-ie, &c[0]);
        for m in 0..3 {
            pc[j][m].axpy(ve, &laplacian3(&c[m], geom, sg));
            if j < 2 {
                pc[j + 1][m].sub_assign(&c[m].dt());
            }
        }
    }

    // interior leftovers
    {
        let u3 = &int.u3bar;
        let ub = &int.ubar;
        let mut f = u3.dt();
        f.add_assign(&(&ub.u.mul(&ddx(u3)) + &ub.v.mul(&ddy(u3))));
        rho2[2].add_assign(&ChannelField::broadcast(&f, ns));
        for m in 0..3 {
            rho2[m].add_assign(&w[2][m].dt());
        }
        for i in 1..3 {
            let iw = cx.interior(i);
            for m in 0..3 {
                rho2[m].axpy(-ve, &cx.sample_profile(&iw[m].laplacian3(geom)));
            }
        }
    }
    drop(dv);

    // assembled fields and the direct route
    let mut u = cx.zeros3();
    for wj in &w {
        for m in 0..3 {
            u[m].add_assign(&wj[m]);
        }
    }
    drop(w);
    let mut pc_sum = cx.zeros3();
    let mut pc_l2 = [0.0; 3];
    for k in 0..3 {
        let v: Col3<f64> = std::array::from_fn(|m| pc[k][m].value());
        pc_l2[k] = l2_3(&v, nodes);
        for m in 0..3 {
            pc_sum[m].add_assign(&pc[k][m]);
        }
    }
    drop(pc);
    let gp = grad3(&p_nc, geom, sg);
    drop(p_nc);
    let mut mismatch = cx.zeros3();
    let mut direct_sq = 0.0;
    for m in 0..3 {
        let f = &u[m];
        let gr = grad3(f, geom, sg);
        let mut d = f.dt();
        d.axpy(-ve, &laplacian3(f, geom, sg));
        for k in 0..3 {
            d.add_assign(&u[k].mul(&gr[k]));
        }
        match m {
            0 => d.axpy(-ie, &u[1]),
            1 => d.axpy(ie, &u[0]),
            _ => {}
        }
        d.axpy(ie, &gp[m]);
        d.add_assign(&pc_sum[m]);
        direct_sq += d.value().l2_sq(nodes);
        d.sub_assign(&rho1[m]);
        d.sub_assign(&rho2[m]);
        d.sub_assign(&rho3[m]);
        mismatch[m] = d;
    }
    let mis_v: Col3<f64> = std::array::from_fn(|m| mismatch[m].value());
    let mis_d: Col3<f64> = std::array::from_fn(|m| mismatch[m].lane(1));
    drop(mismatch);

    let lane_norm = |f: &Col3<T>, k: usize| -> f64 {
        let v: Col3<f64> = std::array::from_fn(|m| f[m].lane(k));
        l2_3(&v, nodes)
    };
    let groups = [&rho1, &rho2, &rho3];
    let l2 = std::array::from_fn(|g| lane_norm(groups[g], 0));
    let l2_dt = std::array::from_fn(|g| if T::LANES > 1 { lane_norm(groups[g], 1) } else { 0.0 });
    let total: Col3<T> = std::array::from_fn(|m| rho1[m].add(&rho2[m]).add(&rho3[m]));
    let l2_total = lane_norm(&total, 0);
    let l2_dt_total = if T::LANES > 1 { lane_norm(&total, 1) } else { 0.0 };
    drop(total);
    let rho = [
        std::array::from_fn(|m| rho1[m].value()),
        std::array::from_fn(|m| rho2[m].value()),
        std::array::from_fn(|m| rho3[m].value()),
    ];
    drop((rho1, rho2, rho3));

    let grad_p: Col3<T> = std::array::from_fn(|m| {
        let mut g = gp[m].clone();
        g.axpy(eps, &pc_sum[m]);
        g
    });
    let solution = ApproxSolution3D { velocity: u, grad_p, eps, nu: exp.nu, t, provenance: provenance.to_string() };
    let divergence = solution.divergence_ratio(geom, sg);
    let trace = solution.trace_ratio();
    let blv: Col3<f64> = std::array::from_fn(|m| bl[m].value());
    let bl_norms = [weighted_bl_norm(&blv, 0, geom, sg), weighted_bl_norm(&blv, 1, geom, sg)];
    Ok(Evaluation {
        solution,
        breakdown: ResidualBreakdown { rho, l2, l2_total, l2_dt, l2_dt_total },
        direct_l2: direct_sq.sqrt(),
        mismatch_l2: l2_3(&mis_v, nodes),
        mismatch_dt_l2: if T::LANES > 1 { l2_3(&mis_d, nodes) } else { 0.0 },
        correctors: reports,
        pressure_correctors_l2: pc_l2,
        divergence,
        trace,
        bl_norms,
    })
}

/// Leading-order velocity `u_bar + (1 - chi) M(s/delta) u_bar + chi M((2-s)/delta) u_bar`
/// with its vertical part, without correctors.
pub fn assemble_order0(ops: &LayerOps, ubar: &VecField2<f64>, delta: &Field2<f64>, sg: &SGrid) -> Col3<f64> {
    let geom = &ops.geom;
    let o0 = Order0::new(ops, ubar);
    let ns = sg.len();
    let u3 = ubar.dotf(&geom.grad_b());
    let mut u = [
        ChannelField::broadcast(&ubar.u, ns),
        ChannelField::broadcast(&ubar.v, ns),
        ChannelField::broadcast(&u3, ns),
    ];
    for side in Side::BOTH {
        let v = sample_order0(&o0, geom, sg, delta, side).v;
        let wt = sg.cutoff.weight(side);
        for m in 0..3 {
            u[m].add_assign(&v[m].mul_nodes(&wt));
        }
    }
    u
}

/// `sup_{x,y}` then `L^2` in `s` of `d^{1/2} |grad^k u|`, `d` the distance to
/// the nearer wall.
pub fn weighted_bl_norm(u: &Col3<f64>, k: usize, geom: &SurfaceGeometry, sg: &SGrid) -> f64 {
    let s = sg.s();
    let n2 = u[0].n2();
    let mut mag = ChannelField::<f64>::zeros(u[0].grid, u[0].n);
    match k {
        0 => {
            for f in u {
                for (a, b) in mag.data.iter_mut().zip(&f.data) {
                    *a += b * b;
                }
            }
        }
        1 => {
            for f in u {
                for g in grad3(f, geom, sg) {
                    for (a, b) in mag.data.iter_mut().zip(&g.data) {
                        *a += b * b;
                    }
                }
            }
        }
        _ => panic!("weighted layer norm defined for k = 0, 1"),
    }
    let prof: Vec<f64> = (0..s.len())
        .map(|i| {
            let sup = mag.data[i * n2..(i + 1) * n2].iter().cloned().fold(0.0, f64::max);
            s[i].min(2.0 - s[i]) * sup
        })
        .collect();
    sg.nodes.integral(&prof).max(0.0).sqrt()
}

/// Least-squares slope of `log y` against `log x`; `None` when any value is
/// zero or not finite.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().chain(x).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// One row of the `eps` sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub l2_rho: [f64; 3],
    pub l2_total: f64,
    pub l2_dt_total: f64,
    pub direct_l2: f64,
    pub mismatch_l2: f64,
    pub correctors: [CorrectorReport; 3],
    pub pressure_correctors_l2: [f64; 3],
    pub divergence: f64,
    pub trace: f64,
    pub bl_norms: [f64; 2],
}

impl SweepRow {
    pub fn from_evaluation<T>(e: &Evaluation<T>) -> Self {
        SweepRow {
            eps: e.solution.eps,
            l2_rho: e.breakdown.l2,
            l2_total: e.breakdown.l2_total,
            l2_dt_total: e.breakdown.l2_dt_total,
            direct_l2: e.direct_l2,
            mismatch_l2: e.mismatch_l2,
            correctors: e.correctors,
            pressure_correctors_l2: e.pressure_correctors_l2,
            divergence: e.divergence,
            trace: e.trace,
            bl_norms: e.bl_norms,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    fn column(&self, f: impl Fn(&SweepRow) -> f64) -> (Vec<f64>, Vec<f64>) {
        (self.rows.iter().map(|r| r.eps).collect(), self.rows.iter().map(f).collect())
    }

    pub fn slope(&self, f: impl Fn(&SweepRow) -> f64) -> Option<f64> {
        let (x, y) = self.column(f);
        fit_slope(&x, &y)
    }

    pub fn residual_slope(&self) -> Option<f64> {
        self.slope(|r| r.l2_total)
    }

    pub fn residual_dt_slope(&self) -> Option<f64> {
        self.slope(|r| r.l2_dt_total)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,l2_rho1,l2_rho2,l2_rho3,l2_total,l2_dt_total\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
                r.eps, r.l2_rho[0], r.l2_rho[1], r.l2_rho[2], r.l2_total, r.l2_dt_total
            ));
        }
        s
    }

    /// Log-log plot of the residual norms with the fitted slopes.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (480.0, 360.0, 50.0);
        let pts: Vec<(f64, f64, f64)> = self.rows.iter().map(|r| (r.eps, r.l2_total, r.l2_dt_total)).collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().flat_map(|p| [p.1, p.2]).filter(|v| *v > 0.0).map(f64::ln).collect();
        let (x0, x1) = bounds(&xs);
        let (y0, y1) = bounds(&ys);
        let px = |x: f64| m + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * m);
        let py = |y: f64| h - m - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * m);
        let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n");
        s.push_str(&format!(
            "<rect x=\"{m}\" y=\"{m}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            w - 2.0 * m,
            h - 2.0 * m
        ));
        for (series, color, pick) in [("rho", "steelblue", 1usize), ("d_t rho", "darkorange", 2)] {
            let line: Vec<String> = pts
                .iter()
                .filter(|p| if pick == 1 { p.1 > 0.0 } else { p.2 > 0.0 })
                .map(|p| {
                    let y = if pick == 1 { p.1 } else { p.2 };
                    format!("{:.1},{:.1}", px(p.0.ln()), py(y.ln()))
                })
                .collect();
            s.push_str(&format!("<polyline fill=\"none\" stroke=\"{color}\" points=\"{}\"/>\n", line.join(" ")));
            let slope = if pick == 1 { self.residual_slope() } else { self.residual_dt_slope() };
            let label = match slope {
                Some(v) => format!("{series}: slope {v:.2}"),
                None => format!("{series}: degenerate"),
            };
            let ty = if pick == 1 { 20.0 } else { 38.0 };
            s.push_str(&format!("<text x=\"{m}\" y=\"{ty}\" fill=\"{color}\" font-size=\"13\">{label}</text>\n"));
        }
        s.push_str(&format!("<text x=\"{}\" y=\"{}\" font-size=\"12\">log eps</text>\n", w / 2.0 - 20.0, h - 15.0));
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Build and evaluate the approximation for every `eps` of a decreasing list.
pub fn sweep(
    sys: &LimitingSystem,
    ops: Arc<LayerOps>,
    ubar: &VecField2<f64>,
    eps: &[f64],
    tr: Transcription,
    sg: &SGrid,
    t: f64,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Sweep> {
    if eps.len() < 3 {
        return Err(Error::InvalidParameter(format!("sweep needs at least 3 values of eps, got {}", eps.len())));
    }
    if !eps.windows(2).all(|p| p[1] < p[0]) {
        return Err(Error::InvalidParameter("eps values must decrease".into()));
    }
    let jet: VecField2<Jet<5>> = sys.taylor_jet(ubar);
    let mut out = Sweep::default();
    for &e in eps {
        let full = Expansion::build(sys, ops.clone(), &jet, e, tr)?;
        let exp = full.truncate::<3>();
        drop(full);
        let ev = evaluate(&exp, sg, t, &format!("eps={e}"))?;
        let row = SweepRow::from_evaluation(&ev);
        on_row(&row);
        out.rows.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Surface};
    use crate::initial::InitialData;
    use crate::layer::BLGrid;
    use crate::spectral::Grid2D;

    fn setup(n: usize, surface: Surface, nu: f64) -> (LimitingSystem, Arc<LayerOps>) {
        let g = Grid2D::periodic(n, n).unwrap();
        let geom = Arc::new(build_geometry(&surface.sample(g)).unwrap());
        let sys = LimitingSystem::new(geom.clone(), nu).unwrap();
        let ops = Arc::new(LayerOps::new(geom, Arc::new(BLGrid::default())));
        (sys, ops)
    }

    #[test]
    fn slope_fit() {
        let x = [0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((fit_slope(&x, &y).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_slope(&x, &[0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn zero_data_has_zero_residual() {
        let (sys, ops) = setup(16, Surface::EggCarton(0.2), 1.0);
        let j: VecField2<Jet<3>> = VecField2::zeros(ops.grid());
        let e = Expansion::build(&sys, ops, &j, 0.05, Transcription::Consistent).unwrap();
        let sg = SGrid::new(129, 2.0, 7).unwrap();
        let ev = evaluate(&e, &sg, 0.0, "zero").unwrap();
        assert_eq!(ev.breakdown.l2_total, 0.0);
        assert_eq!(ev.direct_l2, 0.0);
        assert!(ev.solution.velocity.iter().all(|f| f.max_abs() == 0.0));
        assert!(ev.solution.grad_p.iter().all(|f| f.max_abs() == 0.0));
    }

    #[test]
    fn formulas_match_direct_application() {
        let (sys, ops) = setup(16, Surface::EggCarton(0.2), 1.0);
        let u = InitialData::Cellular(0.3).sample(ops.grid());
        let j: VecField2<Jet<5>> = sys.taylor_jet(&u);
        let e = Expansion::build(&sys, ops, &j, 0.1, Transcription::Consistent).unwrap().truncate::<3>();
        let sg = SGrid::default();
        let ev = evaluate(&e, &sg, 0.0, "test").unwrap();
        let b = &ev.breakdown;
        eprintln!(
            "rho {:?} total {:e} dt {:e} direct {:e} mismatch {:e} dt-mismatch {:e} div {:e} trace {:e} corr {:?}",
            b.l2, b.l2_total, b.l2_dt_total, ev.direct_l2, ev.mismatch_l2, ev.mismatch_dt_l2, ev.divergence, ev.trace, ev.correctors
        );
        assert!(ev.relative_mismatch() < 1e-2, "mismatch {}", ev.relative_mismatch());
        assert!(b.l2_total <= b.l2[0] + b.l2[1] + b.l2[2] + 1e-12);
    }

    #[test]
    fn mean_flow_defect_is_carried_by_the_formulas() {
        // the damping of this surface has a nonzero mean, so u_bar acquires one
        let (sys, ops) = setup(16, Surface::parse_modes("1:0:0.1:0,0:1:0:0.08").unwrap(), 1.0);
        let u0 = InitialData::Cellular(0.2).sample(ops.grid());
        let (st, _) = sys.integrate(&u0, 0.5, 1e-3, usize::MAX).unwrap();
        assert!(st.u.u.mean().abs() > 1e-6 && st.u.v.mean().abs() > 1e-6);
        let j: VecField2<Jet<5>> = sys.taylor_jet(&st.u);
        let e = Expansion::build(&sys, ops, &j, 0.1, Transcription::Consistent).unwrap().truncate::<3>();
        let ev = evaluate(&e, &SGrid::new(129, 2.0, 7).unwrap(), 0.5, "test").unwrap();
        assert!(ev.relative_mismatch() < 1e-2, "mismatch {}", ev.relative_mismatch());
    }
}
