//! Scalar element types used by every field container.
//!
//! A field is either plain `f64` or a truncated Taylor jet in time,
//! `Jet<N>`, holding the coefficients `f^(k)(t0) / k!` for `k < N`.
//! Arithmetic on jets is the truncated Cauchy product, so any polynomial
//! expression of time-dependent fields carries its time derivatives along
//! with it and `d/dt` reduces to a coefficient shift.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Ring element over `f64` with a fixed number of real lanes.
pub trait Elem:
    Copy
    + Clone
    + Debug
    + Send
    + Sync
    + PartialEq
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign<f64>
{
    const LANES: usize;
    fn zero() -> Self;
    fn constant(v: f64) -> Self;
    fn lane(&self, k: usize) -> f64;
    fn set_lane(&mut self, k: usize, v: f64);
    /// Time derivative; lanes beyond the valid range become zero.
    fn dt(&self) -> Self;
    fn value(&self) -> f64 {
        self.lane(0)
    }
    /// Largest absolute lane value.
    fn max_abs(&self) -> f64 {
        (0..Self::LANES).fold(0.0, |m, k| m.max(self.lane(k).abs()))
    }
}

impl Elem for f64 {
    const LANES: usize = 1;
    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn lane(&self, _k: usize) -> f64 {
        *self
    }
    #[inline]
    fn set_lane(&mut self, _k: usize, v: f64) {
        *self = v;
    }
    #[inline]
    fn dt(&self) -> Self {
        0.0
    }
}

/// Truncated Taylor series in time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize>(pub [f64; N]);

impl<const N: usize> Jet<N> {
    pub fn new(c: [f64; N]) -> Self {
        Jet(c)
    }

    /// Jet of `t -> v0 + v1 (t - t0)`.
    pub fn linear(v0: f64, v1: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v0;
        if N > 1 {
            c[1] = v1;
        }
        Jet(c)
    }

    /// Value of the k-th time derivative.
    pub fn derivative(&self, k: usize) -> f64 {
        let f: f64 = (1..=k).map(|j| j as f64).product();
        self.0[k] * f
    }

    /// Evaluate the Taylor polynomial at offset `tau`.
    pub fn eval(&self, tau: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * tau + c)
    }

    /// Copy into a jet of a different length, truncating or zero padding.
    pub fn resize<const M: usize>(&self) -> Jet<M> {
        let mut c = [0.0; M];
        for k in 0..M.min(N) {
            c[k] = self.0[k];
        }
        Jet(c)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        for k in 0..N {
            self.0[k] += o.0[k];
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        for k in 0..N {
            self.0[k] -= o.0[k];
        }
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for k in 0..N {
            self.0[k] = -self.0[k];
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            let a = self.0[i];
            if a == 0.0 {
                continue;
            }
            for j in 0..N - i {
                c[i + j] += a * o.0[j];
            }
        }
        Jet(c)
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, s: f64) -> Self {
        for k in 0..N {
            self.0[k] *= s;
        }
        self
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        for k in 0..N {
            self.0[k] += o.0[k];
        }
    }
}

impl<const N: usize> SubAssign for Jet<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        for k in 0..N {
            self.0[k] -= o.0[k];
        }
    }
}

impl<const N: usize> MulAssign<f64> for Jet<N> {
    #[inline]
    fn mul_assign(&mut self, s: f64) {
        for k in 0..N {
            self.0[k] *= s;
        }
    }
}

impl<const N: usize> Elem for Jet<N> {
    const LANES: usize = N;
    #[inline]
    fn zero() -> Self {
        Jet([0.0; N])
    }
    #[inline]
    fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Jet(c)
    }
    #[inline]
    fn lane(&self, k: usize) -> f64 {
        self.0[k]
    }
    #[inline]
    fn set_lane(&mut self, k: usize, v: f64) {
        self.0[k] = v;
    }
    #[inline]
    fn dt(&self) -> Self {
        let mut c = [0.0; N];
        for k in 1..N {
            c[k - 1] = self.0[k] * k as f64;
        }
        Jet(c)
    }
}

/// Jet inverse of a jet with nonzero value, by the usual recursion.
pub fn recip<const N: usize>(a: Jet<N>) -> Jet<N> {
    let mut r = [0.0; N];
    r[0] = 1.0 / a.0[0];
    for k in 1..N {
        let s: f64 = (1..=k).map(|j| a.0[j] * r[k - j]).sum();
        r[k] = -s * r[0];
    }
    Jet(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_series_of_exp() {
        // e^t * e^t = e^{2t}
        let e = Jet::<5>([1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0]);
        let p = e * e;
        let want = [1.0, 2.0, 2.0, 4.0 / 3.0, 2.0 / 3.0];
        for k in 0..5 {
            assert!((p.0[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn dt_shifts_coefficients() {
        let j = Jet::<4>([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(j.dt().0, [2.0, 6.0, 12.0, 0.0]);
        assert!((j.derivative(3) - 24.0).abs() < 1e-15);
    }

    #[test]
    fn recip_inverts() {
        let a = Jet::<5>([2.0, -1.0, 0.3, 0.7, -0.2]);
        let one = a * recip(a);
        assert!((one.0[0] - 1.0).abs() < 1e-15);
        for k in 1..5 {
            assert!(one.0[k].abs() < 1e-14);
        }
    }
}
