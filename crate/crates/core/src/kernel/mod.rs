//! The fractional heat kernel `P(x,t) = t^{-N/σ} Φ(|x| t^{-1/σ})` and the
//! singular kernel `A = (-Δ)^{σ/2} P = t^{-1-N/σ} Ψ(|x| t^{-1/σ})`.
//!
//! Profiles are tabulated on `s = 0` plus a log-spaced grid. Near the origin
//! the samples come from the radial inverse Fourier transform of
//! `e^{-r^σ}`; once the large-`s` power series of the profile is accurate
//! the samples switch to it. Past `s_max` the series is evaluated directly.
//!
//! Fourier convention: `f̂(ξ) = ∫ f(x) e^{-iξ·x} dx`, inverse with
//! `(2π)^{-N}`, so the symbol of `(-Δ)^{σ/2}` is `|ξ|^σ` and `∫Φ = 1`.

mod bounds;
pub mod io;
mod series;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{SigmaParams, SpaceTimePoint};
use crate::quadrature::radial_transform;

pub use bounds::{cancellation_integral, verify_decay_bounds, DecayBoundReport, DecaySampleSet, Half};
pub use series::ProfileSeries;

/// Bumped whenever the transform convention or sampling changes.
pub const CONVENTION_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileKind {
    Phi,
    Psi,
}

/// A tabulated radial profile with cubic Hermite interpolation.
#[derive(Debug, Clone)]
pub struct KernelProfile {
    params: SigmaParams,
    kind: ProfileKind,
    s: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    series: ProfileSeries,
    switch_s: f64,
    switch_mismatch: f64,
}

/// Sampling options for profile construction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProfileGrid {
    pub s_max: f64,
    pub n_samples: usize,
    pub s_min: f64,
}

impl ProfileGrid {
    /// Default grid: `s_max` large enough that the leading tail term
    /// dominates the second one by 200x at `s_max/2`.
    pub fn for_params(p: &SigmaParams) -> Self {
        let series = ProfileSeries::phi(p);
        let ratio = (series.coeff(2) / series.coeff(1)).abs();
        let s_max = (2.0 * (200.0 * ratio).powf(1.0 / p.sigma())).clamp(60.0, 2e5);
        Self { s_max, n_samples: 1024, s_min: 1e-3 }
    }

    pub(crate) fn nodes(&self) -> Vec<f64> {
        let m = self.n_samples - 1;
        let ratio = (self.s_max / self.s_min).ln();
        std::iter::once(0.0)
            .chain((0..m).map(|i| self.s_min * (ratio * i as f64 / (m - 1) as f64).exp()))
            .collect()
    }
}

/// Cut-off radius beyond which `r^a e^{-r^σ}` is below 1e-24 of its scale.
fn radial_cutoff(power: f64, sigma: f64) -> f64 {
    let mut r = 40f64.powf(1.0 / sigma);
    while power * r.ln() - r.powf(sigma) > -55.0 {
        r *= 1.1;
    }
    r
}

/// `d`-dimensional inverse transform of `(r^σ)^j e^{-r^σ}` at radius `s`.
pub fn invert_radial_symbol(d: usize, sigma: f64, j: i32, s: f64) -> Result<f64> {
    let f = |r: f64| {
        let rs = r.powf(sigma);
        rs.powi(j) * (-rs).exp()
    };
    let power = j as f64 * sigma + d as f64 - 1.0;
    let r_cut = radial_cutoff(power, sigma);
    let norm = (2.0 * PI).powf(-0.5 * d as f64);
    // scale of the integrand's L1 norm sets the absolute tolerance
    let scale = crate::special::gamma((power + 1.0) / sigma) / sigma;
    radial_transform(d, f, s, r_cut, 1e-15 * scale).map(|v| norm * v)
}

impl KernelProfile {
    pub fn params(&self) -> &SigmaParams {
        &self.params
    }
    pub fn kind(&self) -> ProfileKind {
        self.kind
    }
    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().copied().zip(self.values.iter().copied())
    }
    pub fn nodes(&self) -> &[f64] {
        &self.s
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
    pub fn s_max(&self) -> f64 {
        *self.s.last().expect("non-empty profile")
    }
    /// Coefficient of the leading `s^{-N-σ}` tail term.
    pub fn tail_amplitude(&self) -> f64 {
        self.series.coeff(1)
    }
    pub fn series(&self) -> &ProfileSeries {
        &self.series
    }
    /// Radius where samples switch from quadrature to the power series.
    pub fn switch_radius(&self) -> f64 {
        self.switch_s
    }
    /// Relative disagreement of quadrature and series at the switch radius.
    pub fn switch_mismatch(&self) -> f64 {
        self.switch_mismatch
    }

    pub(crate) fn from_parts(
        params: SigmaParams,
        kind: ProfileKind,
        s: Vec<f64>,
        values: Vec<f64>,
        slopes: Vec<f64>,
        switch_s: f64,
        switch_mismatch: f64,
    ) -> Self {
        let series = match kind {
            ProfileKind::Phi => ProfileSeries::phi(&params),
            ProfileKind::Psi => ProfileSeries::psi(&params),
        };
        Self { params, kind, s, values, slopes, series, switch_s, switch_mismatch }
    }

    fn locate(&self, s: f64) -> usize {
        match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.s.len() - 2),
        }
    }

    /// Profile value at radius `s >= 0`.
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.abs();
        if s > self.s_max() {
            return self.series.value(s);
        }
        let i = self.locate(s);
        let (a, b) = (self.s[i], self.s[i + 1]);
        let h = b - a;
        let t = (s - a) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.values[i]
            + h10 * h * self.slopes[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.slopes[i + 1]
    }

    /// Derivative of the interpolant (series beyond `s_max`).
    pub fn derivative(&self, s: f64) -> f64 {
        let s = s.abs();
        if s > self.s_max() {
            return self.series.derivative(s);
        }
        let i = self.locate(s);
        let (a, b) = (self.s[i], self.s[i + 1]);
        let h = b - a;
        let t = (s - a) / h;
        let d00 = 6.0 * t * t - 6.0 * t;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t * t - 2.0 * t;
        (d00 * self.values[i] + d01 * self.values[i + 1]) / h
            + d10 * self.slopes[i]
            + d11 * self.slopes[i + 1]
    }

    /// `int_0^inf s^{N-1} f(s) ds` using endpoint-corrected trapezoid
    /// panels on the samples and the series past `s_max`.
    pub fn radial_moment(&self) -> f64 {
        let n = self.params.dim() as i32;
        let g = |i: usize| self.s[i].powi(n - 1) * self.values[i];
        let dg = |i: usize| {
            let s = self.s[i];
            let lead = if n == 1 { 0.0 } else { (n - 1) as f64 * s.powi(n - 2) * self.values[i] };
            lead + s.powi(n - 1) * self.slopes[i]
        };
        let mut head = 0.0;
        for i in 0..self.s.len() - 1 {
            let h = self.s[i + 1] - self.s[i];
            head += 0.5 * h * (g(i) + g(i + 1)) + h * h / 12.0 * (dg(i) - dg(i + 1));
        }
        head + self.series.tail_moment(self.s_max())
    }

    /// `∫_{R^N} f(|x|) dx`.
    pub fn total_mass(&self) -> f64 {
        self.params.sphere_area() * self.radial_moment()
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2)
}

/// Fritsch–Carlson limiter: only touches intervals where exact slopes would
/// break monotonicity of monotone data.
fn limit_monotone(values: &[f64], s: &[f64], slopes: &mut [f64]) {
    for i in 0..values.len() - 1 {
        let h = s[i + 1] - s[i];
        let delta = (values[i + 1] - values[i]) / h;
        if delta == 0.0 {
            slopes[i] = 0.0;
            slopes[i + 1] = 0.0;
            continue;
        }
        let a = slopes[i] / delta;
        let b = slopes[i + 1] / delta;
        if a < 0.0 || b < 0.0 {
            continue; // data not locally monotone in the slope direction
        }
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            slopes[i] = tau * a * delta;
            slopes[i + 1] = tau * b * delta;
        }
    }
}

/// Tabulate `Φ`, the profile of the fractional heat kernel.
pub fn build_phi_profile(p: &SigmaParams, grid: ProfileGrid) -> Result<KernelProfile> {
    if p.dim() > 2 {
        return Err(Error::Kernel(format!(
            "profiles are implemented for N <= 2, got N = {}",
            p.dim()
        )));
    }
    if !(grid.s_max > 0.0) || grid.n_samples < 64 || grid.s_min >= grid.s_max {
        return Err(Error::InvalidParameter(format!(
            "profile grid needs s_max > s_min > 0 and n_samples >= 64, got {grid:?}"
        )));
    }
    let n = p.dim();
    let sigma = p.sigma();
    let series = ProfileSeries::phi(p);
    let nodes = grid.nodes();
    let switch_s = series.reliable_from().max(6.0);

    let quad = |s: f64| -> Result<(f64, f64)> {
        let v = invert_radial_symbol(n, sigma, 0, s)?;
        let shifted = invert_radial_symbol(n + 2, sigma, 0, s)?;
        Ok((v, -2.0 * PI * s * shifted))
    };
    let mut values = Vec::with_capacity(nodes.len());
    let mut slopes = Vec::with_capacity(nodes.len());
    for &s in &nodes {
        let (v, d) = if s < switch_s {
            quad(s)?
        } else {
            (series.value(s), series.derivative(s))
        };
        values.push(v);
        slopes.push(d);
    }
    let (vq, _) = quad(switch_s)?;
    let vs = series.value(switch_s);
    let switch_mismatch = ((vq - vs) / vs).abs();
    if switch_mismatch > 1e-6 {
        return Err(Error::Quadrature {
            s: switch_s,
            detail: format!("quadrature and tail series disagree by {switch_mismatch:e}"),
        });
    }
    limit_monotone(&values, &nodes, &mut slopes);
    if let Some(i) = values.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Kernel(format!("profile not positive at s = {}", nodes[i])));
    }
    let profile =
        KernelProfile::from_parts(*p, ProfileKind::Phi, nodes, values, slopes, switch_s, switch_mismatch);
    Ok(profile)
}

/// `Ψ(s) = (N Φ(s) + s Φ'(s)) / σ`, with `Φ'` from the interpolant.
pub fn build_psi_profile(phi: &KernelProfile) -> Result<KernelProfile> {
    if phi.kind != ProfileKind::Phi {
        return Err(Error::Kernel("build_psi_profile expects a Phi profile".into()));
    }
    let p = phi.params;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    let nodes = phi.s.clone();
    let values: Vec<f64> = nodes
        .iter()
        .map(|&s| (n * phi.eval(s) + s * phi.derivative(s)) / sigma)
        .collect();
    let series = ProfileSeries::psi(&p);
    // slopes: five-point differences in u = ln s on the log grid, series past the switch
    let mut slopes = vec![0.0; nodes.len()];
    let m = nodes.len();
    let du = (nodes[2] / nodes[1]).ln();
    for i in 1..m {
        let s = nodes[i];
        if s >= phi.switch_s {
            slopes[i] = series.derivative(s);
            continue;
        }
        let d_du = if i >= 3 && i + 2 < m {
            (values[i - 2] - 8.0 * values[i - 1] + 8.0 * values[i + 1] - values[i + 2]) / (12.0 * du)
        } else if i < 3 {
            (-25.0 * values[i] + 48.0 * values[i + 1] - 36.0 * values[i + 2] + 16.0 * values[i + 3]
                - 3.0 * values[i + 4])
                / (12.0 * du)
        } else {
            (25.0 * values[i] - 48.0 * values[i - 1] + 36.0 * values[i - 2] - 16.0 * values[i - 3]
                + 3.0 * values[i - 4])
                / (12.0 * du)
        };
        slopes[i] = d_du / s;
    }
    slopes[0] = 0.0;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Kernel(format!("non-finite Psi sample at s = {}", nodes[i])));
    }
    Ok(KernelProfile::from_parts(
        p,
        ProfileKind::Psi,
        nodes,
        values,
        slopes,
        phi.switch_s,
        phi.switch_mismatch,
    ))
}

fn require_positive_time(y: &SpaceTimePoint) -> Result<()> {
    if !(y.t > 0.0) {
        return Err(Error::Kernel(format!("kernel evaluated at t = {} <= 0", y.t)));
    }
    Ok(())
}

/// `P(x,t) = t^{-N/σ} Φ(|x| t^{-1/σ})`.
pub fn eval_p(y: &SpaceTimePoint, phi: &KernelProfile) -> Result<f64> {
    require_positive_time(y)?;
    let p = phi.params;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    Ok(y.t.powf(-n / sigma) * phi.eval(y.space_norm() * y.t.powf(-1.0 / sigma)))
}

/// `A(x,t) = t^{-1-N/σ} Ψ(|x| t^{-1/σ})`.
pub fn eval_a(y: &SpaceTimePoint, psi: &KernelProfile) -> Result<f64> {
    require_positive_time(y)?;
    let p = psi.params;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    Ok(y.t.powf(-1.0 - n / sigma) * psi.eval(y.space_norm() * y.t.powf(-1.0 / sigma)))
}

/// `∂_t A`, differentiating the self-similar form in `t`.
pub fn eval_a_dt(y: &SpaceTimePoint, psi: &KernelProfile) -> Result<f64> {
    require_positive_time(y)?;
    let p = psi.params;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    let s = y.space_norm() * y.t.powf(-1.0 / sigma);
    Ok(y.t.powf(-2.0 - n / sigma)
        * (-(1.0 + n / sigma) * psi.eval(s) - s / sigma * psi.derivative(s)))
}

/// `|∇_x A|`.
pub fn eval_a_grad_norm(y: &SpaceTimePoint, psi: &KernelProfile) -> Result<f64> {
    require_positive_time(y)?;
    let p = psi.params;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    let s = y.space_norm() * y.t.powf(-1.0 / sigma);
    Ok((y.t.powf(-1.0 - (n + 1.0) / sigma) * psi.derivative(s)).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, s: f64) -> SigmaParams {
        SigmaParams::new(n, s).unwrap()
    }

    fn poisson(n: usize, s: f64) -> f64 {
        match n {
            1 => 1.0 / (PI * (1.0 + s * s)),
            2 => (1.0 + s * s).powf(-1.5) / (2.0 * PI),
            _ => unreachable!(),
        }
    }

    #[test]
    fn poisson_profile_values() {
        for n in [1, 2] {
            let p = params(n, 1.0);
            let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
            for s in [0.0, 0.01, 0.5, 1.0, 3.7, 10.0, 49.0, 200.0] {
                let rel = (phi.eval(s) / poisson(n, s) - 1.0).abs();
                assert!(rel < 1e-7, "N={n} s={s} rel={rel:e}");
            }
        }
    }

    #[test]
    fn inversion_matches_closed_form_derivative() {
        // Φ'(s) = -2π s Φ_{N+2}(s) checked against d/ds of the Poisson kernel
        let s: f64 = 1.3;
        let d = -2.0 * PI * s * invert_radial_symbol(3, 1.0, 0, s).unwrap();
        let exact = -2.0 * s / (PI * (1.0 + s * s).powi(2));
        assert!((d - exact).abs() < 1e-12);
    }

    #[test]
    fn psi_poisson_closed_form() {
        let p = params(1, 1.0);
        let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
        let psi = build_psi_profile(&phi).unwrap();
        assert!((psi.eval(0.0) - 1.0 / PI).abs() < 1e-9);
        assert!(psi.eval(1.0).abs() < 1e-9);
        for s in [0.2f64, 0.9, 1.1, 4.0, 30.0] {
            let exact = (1.0 - s * s) / (PI * (1.0 + s * s).powi(2));
            assert!((psi.eval(s) - exact).abs() < 1e-8, "s={s}");
        }
        assert!(psi.eval(0.5) > 0.0 && psi.eval(2.0) < 0.0);
    }

    #[test]
    fn profile_rejects_bad_grid_and_kind() {
        let p = params(1, 1.0);
        let bad = ProfileGrid { s_max: 10.0, n_samples: 10, s_min: 1e-3 };
        assert!(build_phi_profile(&p, bad).is_err());
        let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
        let psi = build_psi_profile(&phi).unwrap();
        assert!(build_psi_profile(&psi).is_err());
    }

    #[test]
    fn kernel_rejects_nonpositive_time() {
        let p = params(1, 1.0);
        let phi = build_phi_profile(&p, ProfileGrid::for_params(&p)).unwrap();
        assert!(eval_p(&SpaceTimePoint::new(vec![0.0], 0.0), &phi).is_err());
        assert!(eval_p(&SpaceTimePoint::new(vec![0.0], -1.0), &phi).is_err());
        let v = eval_p(&SpaceTimePoint::new(vec![0.0], 2.0), &phi).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-10);
    }
}
