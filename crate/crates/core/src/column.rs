//! Stacks of periodic 2D slices along a 1D node set.
//!
//! The same container holds layer profiles (nodes in the stretched layer
//! coordinate) and channel fields (nodes in the terrain coordinate). Data is
//! slice-major: entry `(k, c)` lives at `k * nx * ny + c`.

use crate::jet::Elem;
use crate::nodes::Nodes;
use crate::spectral::{ddx, ddy, Field2, Grid2D};

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnField<T> {
    pub grid: Grid2D,
    pub n: usize,
    pub data: Vec<T>,
}

pub type Col3<T> = [ColumnField<T>; 3];

impl<T: Elem> ColumnField<T> {
    pub fn zeros(grid: Grid2D, n: usize) -> Self {
        ColumnField { grid, n, data: vec![T::zero(); grid.len() * n] }
    }

    /// Field constant along the columns.
    pub fn broadcast(f: &Field2<T>, n: usize) -> Self {
        let mut data = Vec::with_capacity(f.data.len() * n);
        for _ in 0..n {
            data.extend_from_slice(&f.data);
        }
        ColumnField { grid: f.grid, n, data }
    }

    /// `f(k, c)` at every entry.
    pub fn from_fn(grid: Grid2D, n: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let n2 = grid.len();
        let mut data = Vec::with_capacity(n2 * n);
        for k in 0..n {
            for c in 0..n2 {
                data.push(f(k, c));
            }
        }
        ColumnField { grid, n, data }
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn at(&self, k: usize, c: usize) -> T {
        self.data[k * self.grid.len() + c]
    }

    #[inline]
    pub fn set(&mut self, k: usize, c: usize, v: T) {
        let n2 = self.grid.len();
        self.data[k * n2 + c] = v;
    }

    pub fn slice(&self, k: usize) -> Field2<T> {
        let n2 = self.n2();
        Field2 { grid: self.grid, data: self.data[k * n2..(k + 1) * n2].to_vec() }
    }

    pub fn set_slice(&mut self, k: usize, f: &Field2<T>) {
        let n2 = self.n2();
        self.data[k * n2..(k + 1) * n2].copy_from_slice(&f.data);
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        let n2 = self.n2();
        (0..self.n).map(|k| self.data[k * n2 + c]).collect()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ColumnField { grid: self.grid, n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn convert<U: Elem>(&self, f: impl Fn(T) -> U) -> ColumnField<U> {
        ColumnField { grid: self.grid, n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, o: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.data.len(), o.data.len(), "column field shapes differ");
        ColumnField {
            grid: self.grid,
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a * b)
    }

    /// Multiply by a real stack of the same shape.
    pub fn mulf(&self, o: &ColumnField<f64>) -> Self {
        assert_eq!(self.data.len(), o.data.len(), "column field shapes differ");
        ColumnField {
            grid: self.grid,
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a * b).collect(),
        }
    }

    /// Multiply every slice by the same 2D field.
    pub fn mul2(&self, f: &Field2<T>) -> Self {
        let n2 = self.n2();
        let mut out = self.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = *v * f.data[i % n2];
        }
        out
    }

    pub fn mul2f(&self, f: &Field2<f64>) -> Self {
        let n2 = self.n2();
        let mut out = self.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v *= f.data[i % n2];
        }
        out
    }

    /// Multiply slice `k` by `w[k]`.
    pub fn mul_nodes(&self, w: &[f64]) -> Self {
        let n2 = self.n2();
        let mut out = self.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v *= w[i / n2];
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn axpy(&mut self, s: f64, o: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b * s;
        }
    }

    pub fn add_assign(&mut self, o: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, o: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a -= b;
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }

    /// Apply a 2D operator slice by slice.
    pub fn hmap(&self, f: impl Fn(&Field2<T>) -> Field2<T>) -> Self {
        let mut out = ColumnField::zeros(self.grid, self.n);
        for k in 0..self.n {
            out.set_slice(k, &f(&self.slice(k)));
        }
        out
    }

    pub fn ddx(&self) -> Self {
        self.hmap(ddx)
    }

    pub fn ddy(&self) -> Self {
        self.hmap(ddy)
    }

    fn apply_stencils(&self, st: &[crate::nodes::Stencil]) -> Self {
        let n2 = self.n2();
        let mut out = ColumnField::zeros(self.grid, self.n);
        for (k, s) in st.iter().enumerate() {
            let dst = &mut out.data[k * n2..(k + 1) * n2];
            for (m, &w) in s.w.iter().enumerate() {
                let src = &self.data[(s.start + m) * n2..(s.start + m + 1) * n2];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += v * w;
                }
            }
        }
        out
    }

    /// Derivative along the columns.
    pub fn d1(&self, nodes: &Nodes) -> Self {
        debug_assert_eq!(nodes.len(), self.n);
        self.apply_stencils(&nodes.d1)
    }

    pub fn d2(&self, nodes: &Nodes) -> Self {
        debug_assert_eq!(nodes.len(), self.n);
        self.apply_stencils(&nodes.d2)
    }

    fn interval_integrals(&self, nodes: &Nodes) -> Vec<Vec<T>> {
        let n2 = self.n2();
        nodes
            .interval
            .iter()
            .map(|s| {
                let mut acc = vec![T::zero(); n2];
                for (m, &w) in s.w.iter().enumerate() {
                    let src = &self.data[(s.start + m) * n2..(s.start + m + 1) * n2];
                    for (d, &v) in acc.iter_mut().zip(src) {
                        *d += v * w;
                    }
                }
                acc
            })
            .collect()
    }

    /// `int_{x_0}^{x_k}` along every column.
    pub fn cumulative(&self, nodes: &Nodes) -> Self {
        let n2 = self.n2();
        let iv = self.interval_integrals(nodes);
        let mut out = ColumnField::zeros(self.grid, self.n);
        for k in 0..self.n - 1 {
            for c in 0..n2 {
                out.data[(k + 1) * n2 + c] = out.data[k * n2 + c] + iv[k][c];
            }
        }
        out
    }

    /// `int_{x_k}^{x_end}` along every column, the layer tail integral.
    pub fn tail(&self, nodes: &Nodes) -> Self {
        let n2 = self.n2();
        let iv = self.interval_integrals(nodes);
        let mut out = ColumnField::zeros(self.grid, self.n);
        for k in (0..self.n - 1).rev() {
            for c in 0..n2 {
                out.data[k * n2 + c] = out.data[(k + 1) * n2 + c] + iv[k][c];
            }
        }
        out
    }

    /// Full-range integral along the columns.
    pub fn integrate(&self, nodes: &Nodes) -> Field2<T> {
        let q = nodes.quadrature_weights();
        let n2 = self.n2();
        let mut out = Field2::zeros(self.grid);
        for (k, &w) in q.iter().enumerate() {
            for c in 0..n2 {
                out.data[c] += self.data[k * n2 + c] * w;
            }
        }
        out
    }

    pub fn dt(&self) -> Self {
        self.map(|v| v.dt())
    }

    pub fn value(&self) -> ColumnField<f64> {
        ColumnField { grid: self.grid, n: self.n, data: self.data.iter().map(|v| v.value()).collect() }
    }

    pub fn lane(&self, k: usize) -> ColumnField<f64> {
        ColumnField { grid: self.grid, n: self.n, data: self.data.iter().map(|v| v.lane(k)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| (0..T::LANES).all(|k| v.lane(k).is_finite()))
    }
}

impl ColumnField<f64> {
    /// Largest magnitude on slice `k`.
    pub fn slice_max(&self, k: usize) -> f64 {
        let n2 = self.n2();
        self.data[k * n2..(k + 1) * n2].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `int |f|^2` with the 2D cell area and the column quadrature.
    pub fn l2_sq(&self, nodes: &Nodes) -> f64 {
        let q = nodes.quadrature_weights();
        let n2 = self.n2();
        let da = self.grid.cell_area();
        let mut s = 0.0;
        for (k, &w) in q.iter().enumerate() {
            let row: f64 = self.data[k * n2..(k + 1) * n2].iter().map(|v| v * v).sum();
            s += w * row;
        }
        s * da
    }
}

pub fn zeros3<T: Elem>(grid: Grid2D, n: usize) -> Col3<T> {
    [ColumnField::zeros(grid, n), ColumnField::zeros(grid, n), ColumnField::zeros(grid, n)]
}

pub fn add3<T: Elem>(a: &Col3<T>, b: &Col3<T>) -> Col3<T> {
    [a[0].add(&b[0]), a[1].add(&b[1]), a[2].add(&b[2])]
}

pub fn axpy3<T: Elem>(a: &mut Col3<T>, s: f64, b: &Col3<T>) {
    for i in 0..3 {
        a[i].axpy(s, &b[i]);
    }
}

pub fn scale3<T: Elem>(a: &Col3<T>, s: f64) -> Col3<T> {
    [a[0].scale(s), a[1].scale(s), a[2].scale(s)]
}

pub fn map3<T: Elem>(a: &Col3<T>, f: impl Fn(&ColumnField<T>) -> ColumnField<T>) -> Col3<T> {
    [f(&a[0]), f(&a[1]), f(&a[2])]
}

/// Combined `L^2` norm of a three-component stack.
pub fn l2_3(a: &Col3<f64>, nodes: &Nodes) -> f64 {
    (a[0].l2_sq(nodes) + a[1].l2_sq(nodes) + a[2].l2_sq(nodes)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nodes::graded_nodes;

    #[test]
    fn column_calculus() {
        let g = Grid2D::periodic(16, 16).unwrap();
        let nodes = Nodes::new(graded_nodes(24.0, 96, 1.02), 7);
        let f = ColumnField::from_fn(g, nodes.len(), |k, c| (1.0 + c as f64 * 0.01) * (-nodes.x[k]).exp());
        let d = f.d1(&nodes);
        let t = f.tail(&nodes);
        let c = f.cumulative(&nodes);
        for k in [0, 10, 50] {
            let z = nodes.x[k];
            let a = 1.0 + 0.05;
            assert!((d.at(k, 5) + a * (-z).exp()).abs() < 1e-6);
            assert!((t.at(k, 5) - a * ((-z).exp() - (-24f64).exp())).abs() < 1e-9);
            assert!((c.at(k, 5) - a * (1.0 - (-z).exp())).abs() < 1e-9);
        }
        let s = f.slice(3);
        let mut h = ColumnField::zeros(g, nodes.len());
        h.set_slice(3, &s);
        assert_eq!(h.slice(3), s);
    }
}
