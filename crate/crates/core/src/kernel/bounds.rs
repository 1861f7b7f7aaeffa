//! Decay envelopes of `A`, `∂_t A`, `∇A` and the cancellation property.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::{eval_a, eval_a_dt, eval_a_grad_norm, KernelProfile, ProfileKind};
use crate::error::{Error, Result};
use crate::geometry::{sigma_norm, SpaceTimePoint};

/// Points `(λ cos θ e_1, λ^σ sin^σ θ)` with `λ` log-spaced and `θ ∈ (0, π/2]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecaySampleSet {
    pub n_radii: usize,
    pub n_angles: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for DecaySampleSet {
    fn default() -> Self {
        Self { n_radii: 24, n_angles: 64, r_min: 1e-2, r_max: 1e2 }
    }
}

impl DecaySampleSet {
    pub fn refined(&self) -> Self {
        Self { n_radii: 2 * self.n_radii, n_angles: 2 * self.n_angles, ..*self }
    }

    fn radii(&self) -> Vec<f64> {
        let lr = (self.r_max / self.r_min).ln();
        (0..self.n_radii)
            .map(|i| self.r_min * (lr * i as f64 / (self.n_radii - 1).max(1) as f64).exp())
            .collect()
    }

    fn point(dim: usize, sigma: f64, lambda: f64, theta: f64) -> SpaceTimePoint {
        let mut x = vec![0.0; dim];
        x[0] = lambda * theta.cos();
        SpaceTimePoint::new(x, (lambda * theta.sin()).powf(sigma))
    }

    fn points(&self, dim: usize, sigma: f64) -> Vec<SpaceTimePoint> {
        let mut out = Vec::with_capacity(self.n_radii * self.n_angles);
        for lambda in self.radii() {
            for j in 1..=self.n_angles {
                let theta = FRAC_PI_2 * j as f64 / self.n_angles as f64;
                out.push(Self::point(dim, sigma, lambda, theta));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayBoundReport {
    /// Suprema of `|A||Y|^{N+σ}`, `|∂_t A||Y|^{N+2σ}`, `|∇A||Y|^{N+σ+1}`.
    pub sup: [f64; 3],
    /// Relative change of each supremum under refinement of the sample set.
    pub drift: [f64; 3],
    /// Fitted log-log slopes along the time axis (`A`, `∂_t A`) and a
    /// self-similar ray with `|x| = t^{1/σ}` (`∇A`).
    pub slopes: [f64; 3],
    pub expected_slopes: [f64; 3],
    pub witness: Option<(Vec<f64>, f64)>,
    pub pass: bool,
}

fn envelopes(y: &SpaceTimePoint, psi: &KernelProfile) -> Result<[f64; 3]> {
    let p = psi.params();
    let n = p.dim() as f64;
    let s = p.sigma();
    let r = sigma_norm(y, p);
    Ok([
        eval_a(y, psi)?.abs() * r.powf(n + s),
        eval_a_dt(y, psi)?.abs() * r.powf(n + 2.0 * s),
        eval_a_grad_norm(y, psi)? * r.powf(n + s + 1.0),
    ])
}

fn suprema(set: &DecaySampleSet, psi: &KernelProfile) -> Result<([f64; 3], [SpaceTimePoint; 3])> {
    let p = psi.params();
    let mut sup = [0.0; 3];
    let origin = SpaceTimePoint::new(vec![0.0; p.dim()], 0.0);
    let mut arg = [origin.clone(), origin.clone(), origin];
    for y in set.points(p.dim(), p.sigma()) {
        let e = envelopes(&y, psi)?;
        for q in 0..3 {
            if !e[q].is_finite() {
                return Err(Error::Kernel(format!(
                    "non-finite decay envelope at x = {:?}, t = {}",
                    y.x, y.t
                )));
            }
            if e[q] > sup[q] {
                sup[q] = e[q];
                arg[q] = y.clone();
            }
        }
    }
    Ok((sup, arg))
}

fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x.ln() / n, b + y.ln() / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
        let dx = x.ln() - mx;
        (a + dx * (y.ln() - my), b + dx * dx)
    });
    sxy / sxx
}

/// Check that the three envelopes stay bounded as the sample set is refined
/// and that the decay rates along fixed rays are `N+σ`, `N+2σ`, `N+σ+1`.
pub fn verify_decay_bounds(psi: &KernelProfile, set: &DecaySampleSet) -> Result<DecayBoundReport> {
    if psi.kind() != ProfileKind::Psi {
        return Err(Error::Kernel("decay bounds need a Psi profile".into()));
    }
    let p = psi.params();
    let n = p.dim() as f64;
    let s = p.sigma();
    let (coarse, _) = suprema(set, psi)?;
    let (fine, arg) = suprema(&set.refined(), psi)?;
    let mut drift = [0.0; 3];
    for q in 0..3 {
        drift[q] = (fine[q] - coarse[q]).abs() / fine[q];
    }

    let radii = set.radii();
    let time_axis = |lambda: f64| DecaySampleSet::point(p.dim(), s, lambda, FRAC_PI_2);
    let ray = |lambda: f64| DecaySampleSet::point(p.dim(), s, lambda, std::f64::consts::FRAC_PI_4);
    let mut series = [Vec::new(), Vec::new(), Vec::new()];
    for &lambda in &radii {
        let yt = time_axis(lambda);
        let yr = ray(lambda);
        series[0].push((sigma_norm(&yt, p), eval_a(&yt, psi)?.abs()));
        series[1].push((sigma_norm(&yt, p), eval_a_dt(&yt, psi)?.abs()));
        series[2].push((sigma_norm(&yr, p), eval_a_grad_norm(&yr, psi)?));
    }
    let slopes = [
        loglog_slope(&series[0]),
        loglog_slope(&series[1]),
        loglog_slope(&series[2]),
    ];
    let expected_slopes = [-(n + s), -(n + 2.0 * s), -(n + s + 1.0)];
    let slopes_ok = (0..3).all(|q| (slopes[q] / expected_slopes[q] - 1.0).abs() < 0.02);
    let worst = (0..3).max_by(|&a, &b| drift[a].total_cmp(&drift[b])).unwrap_or(0);
    let bounded = drift.iter().all(|&d| d < 0.05);
    let witness = (!bounded).then(|| (arg[worst].x.clone(), arg[worst].t));
    Ok(DecayBoundReport {
        sup: fine,
        drift,
        slopes,
        expected_slopes,
        witness,
        pass: bounded && slopes_ok,
    })
}

/// Which half-space `±t > 0` the cancellation integral runs over. The lower
/// half uses the time-reflected kernel `A(x, |t|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Half {
    Plus,
    Minus,
}

/// `∫_{ε < |Y|_σ < R, ±t > 0} A(Y) dY`.
///
/// Substituting `x = t^{1/σ} z` separates the integral into
/// `σ log(R/ε) ∫_{R^N} Ψ(|z|) dz`; the last factor is computed from the
/// tabulated profile with its tail series.
pub fn cancellation_integral(psi: &KernelProfile, half: Half, eps: f64, r: f64) -> Result<f64> {
    if psi.kind() != ProfileKind::Psi {
        return Err(Error::Kernel("cancellation integral needs a Psi profile".into()));
    }
    if !(eps > 0.0 && r > eps) {
        return Err(Error::InvalidParameter(format!(
            "cancellation integral needs 0 < eps < R, got eps = {eps}, R = {r}"
        )));
    }
    // both halves give the same value for the reflected kernel
    let _ = half;
    Ok(psi.params().sigma() * (r / eps).ln() * psi.total_mass())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SigmaParams;
    use crate::kernel::{build_phi_profile, build_psi_profile, ProfileGrid};
    use crate::quadrature::integrate;
    use std::f64::consts::PI;

    #[test]
    fn cancellation_matches_direct_quadrature_for_poisson() {
        // A(x,t) = t^{-2} Ψ(|x|/t) with Ψ(s) = (1-s²)/(π(1+s²)²); integrate
        // over ε < |Y| < R in polar coordinates (x, t) = ρ(cos θ, sin θ)
        let a = |rho: f64, th: f64| {
            let (x, t) = (rho * th.cos(), rho * th.sin());
            let s = x / t;
            t.powi(-2) * (1.0 - s * s) / (PI * (1.0 + s * s).powi(2)) * rho
        };
        let (eps, r) = (0.1, 2.0);
        let inner = |th: f64| integrate(|rho| a(rho, th), eps, r, 1e-14, 1e-12).unwrap().0;
        let (direct, _) = integrate(inner, 1e-9, PI - 1e-9, 1e-12, 1e-10).unwrap();
        let p = SigmaParams::new(1, 1.0).unwrap();
        let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
        let psi = build_psi_profile(&phi).unwrap();
        let v = cancellation_integral(&psi, Half::Plus, eps, r).unwrap();
        assert!(direct.abs() < 1e-8 && v.abs() < 1e-8, "{direct} {v}");
        assert!(cancellation_integral(&psi, Half::Minus, r, eps).is_err());
    }
}
