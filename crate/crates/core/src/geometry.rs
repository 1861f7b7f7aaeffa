//! The σ-parabolic quasimetric on space-time and its measure laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::special::gamma;

/// Space dimension and fractional order. `nu = min(1, sigma)` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaParams {
    dim: usize,
    sigma: f64,
}

impl SigmaParams {
    pub fn new(dim: usize, sigma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma must lie in (0, 2), got {sigma}"
            )));
        }
        Ok(Self { dim, sigma })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.sigma.min(1.0)
    }

    /// Volume of the Euclidean unit ball in R^N.
    pub fn unit_ball_volume(&self) -> f64 {
        let n = self.dim as f64;
        PI.powf(0.5 * n) / gamma(0.5 * n + 1.0)
    }

    /// Surface measure of the unit sphere, `N * omega_N`.
    pub fn sphere_area(&self) -> f64 {
        self.dim as f64 * self.unit_ball_volume()
    }
}

/// A point `Y = (x, t)` of R^{N+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self { x, t }
    }

    pub fn space_norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            t: self.t - other.t,
        }
    }

    fn check(&self, p: &SigmaParams) {
        debug_assert_eq!(self.x.len(), p.dim(), "point dimension mismatch");
    }
}

/// `|Y|_σ = (|x|² + |t|^{2/σ})^{1/2}`.
pub fn sigma_norm(y: &SpaceTimePoint, p: &SigmaParams) -> f64 {
    y.check(p);
    let x2: f64 = y.x.iter().map(|v| v * v).sum();
    (x2 + y.t.abs().powf(2.0 / p.sigma())).sqrt()
}

/// Constant of the relaxed triangle inequality, `2^{(1-σ)_+/σ}`.
pub fn quasi_triangle_constant(p: &SigmaParams) -> f64 {
    let s = p.sigma();
    2f64.powf((1.0 - s).max(0.0) / s)
}

/// `int_0^inf s^{N-1} (1+s²)^{-(N+σ)/2} ds`, by adaptive quadrature.
pub(crate) fn self_similar_s_integral(p: &SigmaParams) -> f64 {
    let n = p.dim() as f64;
    let s = p.sigma();
    let e = 0.5 * (n + s);
    let near = |v: f64| v.powf(n - 1.0) * (1.0 + v * v).powf(-e);
    // s > 1 mapped through s = w^{-1/σ}, which removes the algebraic tail
    let far = |w: f64| (1.0 + w.powf(2.0 / s)).powf(-e) / s;
    let (a, _) = integrate(near, 0.0, 1.0, 1e-14, 1e-12).expect("smooth integrand");
    let (b, _) = integrate(far, 0.0, 1.0, 1e-14, 1e-12).expect("smooth integrand");
    a + b
}

/// Lebesgue measure of the σ-ball `{|Y|_σ < R}` in R^{N+1}.
pub fn ball_measure(radius: f64, p: &SigmaParams) -> f64 {
    assert!(radius > 0.0, "ball radius must be positive");
    let n = p.dim() as f64;
    let s = p.sigma();
    2.0 * s * p.sphere_area() * radius.powf(n + s) / (n + s) * self_similar_s_integral(p)
}

/// Reproducible Monte-Carlo settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0x5eed_0001 }
    }
}

/// Empirical constant `c` of `|Y| <= c |Y|_σ^ν` over random `|Y| <= 1`.
pub fn fit_metric_comparison_constant(p: &SigmaParams, mc: MonteCarlo) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    let nu = p.nu();
    let mut c: f64 = 0.0;
    let mut drawn = 0;
    while drawn < mc.samples {
        let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t: f64 = rng.gen_range(-1.0..1.0);
        let y = SpaceTimePoint::new(x, t);
        let e = (y.space_norm().powi(2) + t * t).sqrt();
        if e > 1.0 || e == 0.0 {
            continue;
        }
        drawn += 1;
        c = c.max(e / sigma_norm(&y, p).powf(nu));
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(n: usize, s: f64) -> SigmaParams {
        SigmaParams::new(n, s).unwrap()
    }

    #[test]
    fn rejects_out_of_range_sigma() {
        assert!(SigmaParams::new(1, 0.0).is_err());
        assert!(SigmaParams::new(1, 2.0).is_err());
        assert!(SigmaParams::new(0, 1.0).is_err());
        assert_eq!(params(1, 1.7).nu(), 1.0);
        assert_eq!(params(1, 0.3).nu(), 0.3);
    }

    #[test]
    fn norm_examples() {
        let p = params(1, 1.0);
        assert!((sigma_norm(&SpaceTimePoint::new(vec![3.0], 4.0), &p) - 5.0).abs() < 1e-15);
        let p = params(1, 0.5);
        assert!((sigma_norm(&SpaceTimePoint::new(vec![0.0], 2.0), &p) - 4.0).abs() < 1e-15);
        let p = params(2, 1.3);
        let y = SpaceTimePoint::new(vec![0.6, 0.8], 0.0);
        assert!((sigma_norm(&y, &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quasi_constants() {
        assert_eq!(quasi_triangle_constant(&params(1, 1.0)), 1.0);
        assert_eq!(quasi_triangle_constant(&params(1, 1.7)), 1.0);
        assert!((quasi_triangle_constant(&params(1, 0.5)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quasi_triangle_inequality_holds_on_random_triples() {
        for &(n, s) in &[(1, 0.3), (1, 0.5), (2, 0.8), (1, 1.5)] {
            let p = params(n, s);
            let k = quasi_triangle_constant(&p);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let draw = |rng: &mut ChaCha8Rng| {
                SpaceTimePoint::new(
                    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                    rng.gen_range(-2.0..2.0),
                )
            };
            for _ in 0..100_000 {
                let (a, b, c) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
                let lhs = sigma_norm(&a.sub(&c), &p);
                let rhs = k * (sigma_norm(&a.sub(&b), &p) + sigma_norm(&b.sub(&c), &p));
                assert!(lhs <= rhs * (1.0 + 1e-12), "violated for sigma={s}");
            }
        }
    }

    #[test]
    fn ball_measure_euclidean_case() {
        let p = params(1, 1.0);
        for r in [0.5, 1.0, 3.0] {
            assert!((ball_measure(r, &p) - PI * r * r).abs() < 1e-10 * r * r);
        }
    }

    #[test]
    fn s_integral_matches_beta_function() {
        // substitution s = tan θ turns the integral into B(N/2, σ/2)/2
        for &(n, s) in &[(1, 0.5), (2, 1.0), (1, 1.5), (3, 0.7)] {
            let p = params(n, s);
            let a = 0.5 * n as f64;
            let b = 0.5 * s;
            let beta = gamma(a) * gamma(b) / gamma(a + b);
            assert!((self_similar_s_integral(&p) - 0.5 * beta).abs() < 1e-10 * beta);
        }
    }

    #[test]
    fn ball_measure_matches_rejection_sampling() {
        let p = params(1, 0.5);
        // bounding box of B_1: |x| < 1, |t| < 1
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = 400_000;
        let hits = (0..samples)
            .filter(|_| {
                let y = SpaceTimePoint::new(vec![rng.gen_range(-1.0..1.0)], rng.gen_range(-1.0..1.0));
                sigma_norm(&y, &p) < 1.0
            })
            .count();
        let frac = hits as f64 / samples as f64;
        let estimate = 4.0 * frac;
        let stderr = 4.0 * (frac * (1.0 - frac) / samples as f64).sqrt();
        assert!((estimate - ball_measure(1.0, &p)).abs() < 4.0 * stderr);
    }

    #[test]
    fn metric_comparison_constant_is_finite() {
        for &(n, s) in &[(1, 0.5), (1, 1.0), (2, 1.5)] {
            let p = params(n, s);
            let c = fit_metric_comparison_constant(&p, MonteCarlo::default());
            assert!(c.is_finite() && c > 0.9 && c < 2.0, "c = {c}");
        }
    }

    proptest! {
        #[test]
        fn parabolic_scaling(x in -5.0..5.0f64, y in -5.0..5.0f64, t in -5.0..5.0f64,
                             lambda in 0.01..50.0f64, s in 0.05..1.95f64) {
            let p = params(2, s);
            let base = sigma_norm(&SpaceTimePoint::new(vec![x, y], t), &p);
            let scaled = sigma_norm(
                &SpaceTimePoint::new(vec![lambda * x, lambda * y], lambda.powf(s) * t), &p);
            prop_assert!((scaled - lambda * base).abs() <= 1e-12 * (1.0 + lambda * base));
            let flipped = sigma_norm(&SpaceTimePoint::new(vec![x, y], -t), &p);
            prop_assert_eq!(flipped, base);
        }

        #[test]
        fn ball_measure_scales_homogeneously(r in 0.1..10.0f64, s in 0.1..1.9f64, n in 1usize..4) {
            let p = params(n, s);
            let ratio = ball_measure(2.0 * r, &p) / ball_measure(r, &p);
            prop_assert!((ratio / 2f64.powf(n as f64 + s) - 1.0).abs() < 1e-12);
        }
    }
}
