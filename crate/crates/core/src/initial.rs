//! Catalog of initial horizontal velocities.

use crate::error::{Error, Result};
use crate::geometry::w1inf_norm;
use crate::spectral::{grad_perp, leray_project, Field2, Grid2D, VecField2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    /// `a (sin y, 0)`.
    Shear(f64),
    /// `a (0, cos x)`, orthogonal to the ridge slope.
    RidgeWave(f64),
    /// `a grad_perp(sin x sin y)`, a steady cellular Euler flow.
    Cellular(f64),
    /// Seeded random solenoidal field with modes `1 <= |k| <= kmax`, scaled
    /// to the given W^{1,inf} norm.
    Random { w1inf: f64, kmax: u32, seed: u64 },
}

impl InitialData {
    pub fn from_name(name: &str, amp: f64, seed: u64) -> Result<Self> {
        Ok(match name {
            "shear" => InitialData::Shear(amp),
            "ridge-wave" => InitialData::RidgeWave(amp),
            "cellular" => InitialData::Cellular(amp),
            "random" => InitialData::Random { w1inf: amp, kmax: 4, seed },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown initial data '{name}' (expected shear, ridge-wave, cellular, random or a dump path)"
                )))
            }
        })
    }

    pub fn sample(&self, g: Grid2D) -> VecField2<f64> {
        match *self {
            InitialData::Shear(a) => VecField2::from_fn(g, |_, y| (a * y.sin(), 0.0)),
            InitialData::RidgeWave(a) => VecField2::from_fn(g, |x, _| (0.0, a * x.cos())),
            InitialData::Cellular(a) => {
                VecField2::from_fn(g, |x, y| (-a * x.sin() * y.cos(), a * x.cos() * y.sin()))
            }
            InitialData::Random { w1inf, kmax, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let k = kmax as i32;
                let mut modes = Vec::new();
                for my in -k..=k {
                    for mx in -k..=k {
                        let k2 = (mx * mx + my * my) as f64;
                        if k2 == 0.0 || k2 > (k * k) as f64 || (mx, my) < (0, 0) {
                            continue;
                        }
                        let amp = k2.powf(-1.5);
                        modes.push((mx as f64, my as f64, amp * rng.gen_range(-1.0..1.0), amp * rng.gen_range(-1.0..1.0)));
                    }
                }
                let psi = Field2::from_fn(g, |x, y| {
                    modes.iter().map(|&(a, b, c, s)| {
                        let th = a * x + b * y;
                        c * th.cos() + s * th.sin()
                    }).sum()
                });
                let u = leray_project(&grad_perp(&psi));
                let n = w1inf_norm(&u);
                u.scale(w1inf / n)
            }
        }
    }
}
