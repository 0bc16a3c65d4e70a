//! Finite-difference, interpolation and quadrature weights on a strictly
//! increasing set of 1D nodes.

use num_complex::Complex64;

/// Fornberg's algorithm: weights `c[d][j]` of the `d`-th derivative at `z`
/// from samples at `x[j]`, for `d <= m`.
pub fn fornberg(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, eight points.
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

#[derive(Clone, Debug)]
pub struct Stencil {
    pub start: usize,
    pub w: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CStencil {
    pub start: usize,
    pub w: Vec<Complex64>,
}

/// Weights attached to a node set.
#[derive(Clone, Debug)]
pub struct Nodes {
    pub x: Vec<f64>,
    pub width: usize,
    pub d1: Vec<Stencil>,
    pub d2: Vec<Stencil>,
    /// Integral over interval `[x_i, x_{i+1}]` of the local interpolant.
    pub interval: Vec<Stencil>,
    /// Node index ranges `[lo, hi]` that stencils never straddle.
    pub segments: Vec<(usize, usize)>,
}

fn clamp_window(start: isize, lo: usize, hi: usize, width: usize) -> usize {
    start.max(lo as isize).min((hi + 1 - width) as isize) as usize
}

impl Nodes {
    /// `width` points per derivative stencil (order `width - 1` for the first
    /// derivative on smooth grids); `width` is also the interpolation window.
    pub fn new(x: Vec<f64>, width: usize) -> Self {
        Self::with_breaks(x, width, &[])
    }

    /// Like [`Nodes::new`], but no stencil reaches across the listed node
    /// indices, so data that is only piecewise smooth keeps full order.
    pub fn with_breaks(x: Vec<f64>, width: usize, breaks: &[usize]) -> Self {
        let n = x.len();
        assert!(n >= width && width >= 3, "need at least {width} nodes");
        assert!(x.windows(2).all(|p| p[1] > p[0]), "nodes must increase strictly");
        let mut segments = Vec::new();
        let mut lo = 0;
        for &b in breaks {
            assert!(b > lo && b < n - 1, "break index {b} out of order");
            segments.push((lo, b));
            lo = b;
        }
        segments.push((lo, n - 1));
        assert!(segments.iter().all(|&(a, b)| b + 1 - a >= width), "segment shorter than the stencil width");
        let mut me = Nodes { x, width, d1: Vec::new(), d2: Vec::new(), interval: Vec::new(), segments };
        let x = &me.x;
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        for i in 0..n {
            let s = me.node_window(i);
            let c = fornberg(x[i], &x[s..s + width], 2);
            d1.push(Stencil { start: s, w: c[1].clone() });
            d2.push(Stencil { start: s, w: c[2].clone() });
        }
        let mut interval = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let s = me.interval_window(i);
            let (a, b) = (x[i], x[i + 1]);
            let mut w = vec![0.0; width];
            for &(t, gw) in &GL8 {
                let z = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let l = fornberg(z, &x[s..s + width], 0);
                for m in 0..width {
                    w[m] += 0.5 * (b - a) * gw * l[0][m];
                }
            }
            interval.push(Stencil { start: s, w });
        }
        me.d1 = d1;
        me.d2 = d2;
        me.interval = interval;
        me
    }

    fn node_window(&self, i: usize) -> usize {
        let &(lo, hi) = self.segments.iter().find(|&&(a, b)| a <= i && i <= b).unwrap();
        clamp_window(i as isize - (self.width / 2) as isize, lo, hi, self.width)
    }

    fn interval_window(&self, i: usize) -> usize {
        let &(lo, hi) = self.segments.iter().find(|&&(a, b)| a <= i && i < b).unwrap();
        clamp_window(i as isize + 1 - (self.width / 2) as isize, lo, hi, self.width)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Interpolation weights at an arbitrary point inside the node range.
    pub fn interp(&self, z: f64) -> Stencil {
        let n = self.len();
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&z).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let s = self.interval_window(i);
        let c = fornberg(z, &self.x[s..s + self.width], 0);
        Stencil { start: s, w: c[0].clone() }
    }

    /// Per-interval weights of `int e^{-k (x_{i+1} - t)} f(t) dt` (forward)
    /// and `int e^{-k (t - x_i)} f(t) dt` (backward) over `[x_i, x_{i+1}]`.
    pub fn exp_kernels(&self, k: Complex64) -> (Vec<CStencil>, Vec<CStencil>, Vec<Complex64>) {
        let n = self.len();
        let mut fw = Vec::with_capacity(n - 1);
        let mut bw = Vec::with_capacity(n - 1);
        let mut decay = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let s = self.interval_window(i);
            let (a, b) = (self.x[i], self.x[i + 1]);
            let mut wf = vec![Complex64::new(0.0, 0.0); self.width];
            let mut wb = wf.clone();
            for &(t, gw) in &GL8 {
                let z = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let l = fornberg(z, &self.x[s..s + self.width], 0);
                let ef = (-k * (b - z)).exp();
                let eb = (-k * (z - a)).exp();
                for m in 0..self.width {
                    let q = 0.5 * (b - a) * gw * l[0][m];
                    wf[m] += ef * q;
                    wb[m] += eb * q;
                }
            }
            fw.push(CStencil { start: s, w: wf });
            bw.push(CStencil { start: s, w: wb });
            decay.push((-k * (b - a)).exp());
        }
        (fw, bw, decay)
    }

    // Scalar helpers, mostly for tests and 1D diagnostics.

    pub fn diff(&self, f: &[f64]) -> Vec<f64> {
        self.d1.iter().map(|s| s.w.iter().enumerate().map(|(m, w)| w * f[s.start + m]).sum()).collect()
    }

    pub fn diff2(&self, f: &[f64]) -> Vec<f64> {
        self.d2.iter().map(|s| s.w.iter().enumerate().map(|(m, w)| w * f[s.start + m]).sum()).collect()
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        self.interval
            .iter()
            .map(|s| s.w.iter().enumerate().map(|(m, w)| w * f[s.start + m]).sum::<f64>())
            .sum()
    }

    /// `int_{x_0}^{x_i} f` at every node.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (i, s) in self.interval.iter().enumerate() {
            let v: f64 = s.w.iter().enumerate().map(|(m, w)| w * f[s.start + m]).sum();
            out[i + 1] = out[i] + v;
        }
        out
    }

    /// Quadrature weights of the full-range integral.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        for s in &self.interval {
            for (m, w) in s.w.iter().enumerate() {
                q[s.start + m] += w;
            }
        }
        q
    }
}

/// Geometrically graded nodes on `[0, zmax]` with ratio `r` between
/// consecutive spacings.
pub fn graded_nodes(zmax: f64, n: usize, r: f64) -> Vec<f64> {
    let m = n - 1;
    let h0 = if (r - 1.0).abs() < 1e-14 { zmax / m as f64 } else { zmax * (r - 1.0) / (r.powi(m as i32) - 1.0) };
    let mut z = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut h = h0;
    z.push(0.0);
    for _ in 0..m {
        acc += h;
        z.push(acc);
        h *= r;
    }
    z[m] = zmax;
    z
}

/// Nodes on `[0, 2]` clustered at both ends by a tanh map of strength `beta`.
pub fn tanh_nodes(n: usize, beta: f64) -> Vec<f64> {
    let t = beta.tanh();
    (0..n)
        .map(|j| {
            let xi = 2.0 * j as f64 / (n - 1) as f64 - 1.0;
            1.0 + (beta * xi).tanh() / t
        })
        .collect()
}
