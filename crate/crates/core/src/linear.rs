//! The linear problem `∂_t u + (-Δ)^{σ/2} u = (-Δ)^{σ/2} f` solved exactly per
//! Fourier mode and, independently, through the Duhamel representation
//! `u(T) = P(T) * u₀ + ∫₀^T A(T-s) * f(s) ds`.

use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{signed_frequency, GridField, Spectral};
use crate::kernel::{KernelProfile, ProfileKind};
use crate::quadrature::{gauss_legendre, gauss_legendre_on};
use crate::special::phi_functions;

type Evaluator = dyn Fn(f64) -> Result<GridField> + Send + Sync;

/// Time-dependent source `f(·, t)` with a declared Hölder exponent.
#[derive(Clone)]
pub struct SourceTerm {
    alpha: f64,
    eval: Arc<Evaluator>,
}

impl std::fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceTerm").field("alpha", &self.alpha).finish()
    }
}

impl SourceTerm {
    pub fn new(
        alpha: f64,
        eval: impl Fn(f64) -> Result<GridField> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hölder exponent must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self { alpha, eval: Arc::new(eval) })
    }

    /// `f ≡ 0` on the grid of `proto`.
    pub fn zero(proto: &GridField) -> Self {
        let z = proto.zeros_like();
        let alpha = proto.params().sigma().min(1.0);
        Self { alpha, eval: Arc::new(move |_| Ok(z.clone())) }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eval(&self, t: f64) -> Result<GridField> {
        (self.eval)(t)
    }

    fn check_admissible(&self, sigma: f64) -> Result<()> {
        if self.alpha > sigma.min(1.0) {
            return Err(Error::InvalidParameter(format!(
                "Hölder exponent {} exceeds min(1, σ) = {}",
                self.alpha,
                sigma.min(1.0)
            )));
        }
        Ok(())
    }
}

/// `ρ(x) = (1+|x|)^{-(N+σ)}` sampled on a grid.
#[derive(Debug, Clone)]
pub struct WeightedNorm {
    weight: Vec<f64>,
}

impl WeightedNorm {
    pub fn for_grid(proto: &GridField) -> Self {
        let e = proto.dim() as f64 + proto.params().sigma();
        let weight = (0..proto.len())
            .map(|i| {
                let r = proto.coords(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                (1.0 + r).powf(-e)
            })
            .collect();
        Self { weight }
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }
}

/// Grid quadrature of `|f| ρ`.
pub fn weighted_l1_norm(f: &GridField, w: &WeightedNorm) -> Result<f64> {
    if w.weight.len() != f.len() {
        return Err(Error::GridMismatch("weight and field sizes differ".into()));
    }
    Ok(f.values().iter().zip(&w.weight).map(|(v, r)| v.abs() * r).sum::<f64>() * f.cell_volume())
}

// Inverse of the Vandermonde matrix on v = 0, 1/3, 2/3, 1: monomial
// coefficients of the cubic through four equispaced samples.
const CUBIC_FROM_SAMPLES: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [-5.5, 9.0, -4.5, 1.0],
    [9.0, -22.5, 18.0, -4.5],
    [-4.5, 13.5, -13.5, 4.5],
];

/// Exact per-mode integrating factor with `f̂` cubic in time on each step.
/// Returns snapshots at `t_k = k T / n_steps`, `k = 0..=n_steps`.
pub fn solve_spectral(
    u0: &GridField,
    src: &SourceTerm,
    t_final: f64,
    n_steps: usize,
) -> Result<Vec<GridField>> {
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "need T > 0 and n_steps >= 1, got T = {t_final}, n_steps = {n_steps}"
        )));
    }
    let sigma = u0.params().sigma();
    let sp = Spectral::for_field(u0);
    let lambda: Vec<f64> = sp.wavenumbers(u0.length()).iter().map(|x| x.powf(sigma)).collect();
    let tau = t_final / n_steps as f64;
    let weights: Vec<[f64; 4]> = lambda
        .iter()
        .map(|&l| {
            let z = l * tau;
            let phi = phi_functions(z, 4);
            // I_j = z j! φ_{j+1}(-z) = ∫₀¹ z e^{-z(1-v)} v^j dv
            [z * phi[1], z * phi[2], 2.0 * z * phi[3], 6.0 * z * phi[4]]
        })
        .collect();
    let decay: Vec<f64> = lambda.iter().map(|l| (-l * tau).exp()).collect();

    let mut u_hat = sp.forward(u0.values());
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut snap = u0.clone();
    snap.time_tag = Some(0.0);
    out.push(snap);
    let mut f_prev = sp.forward(src.eval(0.0)?.values());
    for step in 0..n_steps {
        let t0 = step as f64 * tau;
        let mut samples = vec![f_prev];
        for v in [1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let f = src.eval(t0 + v * tau)?;
            u0.check_same_grid(&f)?;
            samples.push(sp.forward(f.values()));
        }
        for (k, uk) in u_hat.iter_mut().enumerate() {
            let mut forced = Complex64::new(0.0, 0.0);
            for (j, row) in CUBIC_FROM_SAMPLES.iter().enumerate() {
                let a: Complex64 = row.iter().zip(&samples).map(|(c, s)| s[k] * *c).sum();
                forced += a * weights[k][j];
            }
            *uk = *uk * decay[k] + forced;
        }
        f_prev = samples.pop().expect("four samples");
        let mut snap = u0.with_values(sp.inverse(u_hat.clone()))?;
        snap.time_tag = Some(t0 + tau);
        out.push(snap);
    }
    Ok(out)
}

/// Options for the Duhamel evaluation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DuhamelOptions {
    /// Thickness of the singular time slab next to `s = T`, as a fraction of `T`.
    pub slab_fraction: f64,
    /// Gauss–Legendre points per time panel.
    pub points_per_panel: usize,
    /// Explicit periodic images when sampling kernels on the grid.
    pub images: usize,
}

impl Default for DuhamelOptions {
    fn default() -> Self {
        Self { slab_fraction: 0.125, points_per_panel: 16, images: 512 }
    }
}

/// Which representation a kernel transform came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelPath {
    Sampled,
    Symbol,
}

/// Discrete transform of `P(·,t)` or `A(·,t)` on the grid of `proto`.
///
/// The kernel is sampled from its profile at lattice offsets, periodized,
/// and transformed. When the kernel is narrower than the grid can resolve
/// (aliasing at the Nyquist mode above 1e-12) the exact symbol is used.
pub fn kernel_transform(
    profile: &KernelProfile,
    t: f64,
    proto: &GridField,
    images: usize,
) -> Result<(Vec<Complex64>, KernelPath)> {
    let p = profile.params();
    let sigma = p.sigma();
    let dim = p.dim();
    if dim != proto.dim() || sigma != proto.params().sigma() {
        return Err(Error::GridMismatch("kernel profile and grid parameters differ".into()));
    }
    let sp = Spectral::for_field(proto);
    let h = proto.h();
    let nyquist = std::f64::consts::PI / h;
    let kind = profile.kind();
    if (-nyquist.powf(sigma) * t).exp() > 1e-12 {
        let lambda = sp.wavenumbers(proto.length()).into_iter().map(|x| x.powf(sigma));
        let symbol = lambda
            .map(|l| {
                let v = match kind {
                    ProfileKind::Phi => (-l * t).exp(),
                    ProfileKind::Psi => l * (-l * t).exp(),
                };
                Complex64::new(v, 0.0)
            })
            .collect();
        return Ok((symbol, KernelPath::Symbol));
    }
    let samples = sample_periodized_kernel(profile, t, proto, images);
    let vol = proto.cell_volume();
    let hat: Vec<Complex64> = sp.forward(&samples).into_iter().map(|c| c * vol).collect();
    Ok((hat, KernelPath::Sampled))
}

/// Kernel samples at lattice offsets (FFT ordering), summed over periodic
/// images. The far images beyond the explicit ones are nearly constant over
/// a period; that constant is restored from the exact mass (1 for `P`, 0 for `A`).
pub fn sample_periodized_kernel(
    profile: &KernelProfile,
    t: f64,
    proto: &GridField,
    images: usize,
) -> Vec<f64> {
    let p = profile.params();
    let sigma = p.sigma();
    let dim = p.dim();
    let n = proto.n();
    let h = proto.h();
    let l = proto.length();
    let kind = profile.kind();
    let scale = match kind {
        ProfileKind::Phi => t.powf(-(dim as f64) / sigma),
        ProfileKind::Psi => t.powf(-1.0 - dim as f64 / sigma),
    };
    let stretch = t.powf(-1.0 / sigma);
    let q = if dim == 1 { images as i64 } else { (images as i64).min(8) };
    let mut samples: Vec<f64> = (0..proto.len())
        .map(|mut idx| {
            let mut off = [0.0; 2];
            for a in (0..dim).rev() {
                off[a] = signed_frequency(idx % n, n) as f64 * h;
                idx /= n;
            }
            let mut sum = 0.0;
            let count = (2 * q + 1).pow(dim as u32);
            for mut c in 0..count {
                let mut r2 = 0.0;
                for o in off.iter().take(dim) {
                    let shift = (c % (2 * q + 1) - q) as f64 * l;
                    c /= 2 * q + 1;
                    r2 += (o + shift) * (o + shift);
                }
                sum += profile.eval(r2.sqrt() * stretch);
            }
            scale * sum
        })
        .collect();
    let mass = if kind == ProfileKind::Phi { 1.0 } else { 0.0 };
    let deficit = (mass - samples.iter().sum::<f64>() * proto.cell_volume()) / l.powi(dim as i32);
    for s in samples.iter_mut() {
        *s += deficit;
    }
    samples
}

/// `(K(·,t) * f)(x_i) = h^N Σ_j K(x_i - x_j) f_j` by direct summation;
/// the slow cross-check of the transformed path, one-dimensional grids.
pub fn kernel_convolve_direct(
    profile: &KernelProfile,
    t: f64,
    f: &GridField,
    images: usize,
) -> Result<GridField> {
    if f.dim() != 1 || f.n() > 1024 {
        return Err(Error::Linear("direct convolution is for N = 1, n <= 1024".into()));
    }
    let k = sample_periodized_kernel(profile, t, f, images);
    let n = f.n();
    let h = f.h();
    let v = f.values();
    let out = (0..n)
        .map(|i| (0..n).map(|j| k[(i + n - j) % n] * v[j]).sum::<f64>() * h)
        .collect();
    f.with_values(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelReport {
    pub slab_thickness: f64,
    pub time_nodes: usize,
    pub sampled_kernels: usize,
    pub symbol_kernels: usize,
}

/// `u(T)` from the Duhamel representation with the singular slab
/// `T - r₀ < s < T` regularized by subtracting `f(·, T)`.
pub fn solve_duhamel(
    u0: &GridField,
    src: &SourceTerm,
    t_final: f64,
    phi: &KernelProfile,
    psi: &KernelProfile,
    opts: DuhamelOptions,
) -> Result<(GridField, DuhamelReport)> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("need T > 0, got {t_final}")));
    }
    if phi.kind() != ProfileKind::Phi || psi.kind() != ProfileKind::Psi {
        return Err(Error::Kernel("solve_duhamel needs a Phi and a Psi profile".into()));
    }
    src.check_admissible(u0.params().sigma())?;
    let sp = Spectral::for_field(u0);
    let mut report = DuhamelReport {
        slab_thickness: opts.slab_fraction * t_final,
        time_nodes: 0,
        sampled_kernels: 0,
        symbol_kernels: 0,
    };
    let count = |path: KernelPath, r: &mut DuhamelReport| match path {
        KernelPath::Sampled => r.sampled_kernels += 1,
        KernelPath::Symbol => r.symbol_kernels += 1,
    };

    let (p_t, path) = kernel_transform(phi, t_final, u0, opts.images)?;
    count(path, &mut report);
    let mut acc: Vec<Complex64> =
        sp.forward(u0.values()).iter().zip(&p_t).map(|(a, b)| a * b).collect();

    let f_hat = |s: f64| -> Result<Vec<Complex64>> {
        let f = src.eval(s)?;
        u0.check_same_grid(&f)?;
        Ok(sp.forward(f.values()))
    };
    let f_end = f_hat(t_final)?;
    let r0 = report.slab_thickness;
    let rule = gauss_legendre(opts.points_per_panel);

    // τ = T - s ∈ [r0, T]: panels doubling away from the slab
    let mut outer = Vec::new();
    let mut a = r0;
    while a < t_final {
        let b = (2.0 * a).min(t_final);
        outer.push((a, b));
        a = b;
    }
    for &(a, b) in &outer {
        for (tau, w) in gauss_legendre_on(&rule, a, b) {
            let (a_hat, path) = kernel_transform(psi, tau, u0, opts.images)?;
            count(path, &mut report);
            let f = f_hat(t_final - tau)?;
            for ((acc, ah), fk) in acc.iter_mut().zip(&a_hat).zip(&f) {
                *acc += ah * fk * w;
            }
            report.time_nodes += 1;
        }
    }

    // τ ∈ [0, r0]: ∫ Â(τ)(f̂(T-τ) - f̂(T)) dτ on geometrically graded panels,
    // plus f̂(T) ∫₀^{r0} Â = f̂(T)(1 - P̂(r0))
    let slab = |levels: usize, report: &mut DuhamelReport| -> Result<Vec<Complex64>> {
        let mut part = vec![Complex64::new(0.0, 0.0); acc.len()];
        let mut hi = r0;
        for level in 0..=levels {
            let lo = if level == levels { 0.0 } else { 0.5 * hi };
            for (tau, w) in gauss_legendre_on(&rule, lo, hi) {
                let (a_hat, path) = kernel_transform(psi, tau, u0, opts.images)?;
                match path {
                    KernelPath::Sampled => report.sampled_kernels += 1,
                    KernelPath::Symbol => report.symbol_kernels += 1,
                }
                let f = f_hat(t_final - tau)?;
                for k in 0..part.len() {
                    part[k] += a_hat[k] * (f[k] - f_end[k]) * w;
                }
                report.time_nodes += 1;
            }
            hi = lo;
        }
        Ok(part)
    };
    let coarse = slab(40, &mut report)?;
    let fine = slab(48, &mut report)?;
    let scale = f_end.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
    let drift = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if drift > 1e-9 * scale {
        return Err(Error::Linear(format!(
            "singular slab of thickness {r0:e} did not converge (panel refinement changed it by {drift:e})"
        )));
    }
    let (p_r0, _) = kernel_transform(phi, r0, u0, opts.images)?;
    for k in 0..acc.len() {
        acc[k] += fine[k] + f_end[k] * (Complex64::new(1.0, 0.0) - p_r0[k]);
    }
    let mut out = u0.with_values(sp.inverse(acc))?;
    out.time_tag = Some(t_final);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SigmaParams;
    use std::f64::consts::PI;

    #[test]
    fn cubic_interpolation_matrix_reproduces_monomials() {
        let v = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        for deg in 0..4 {
            let samples: Vec<f64> = v.iter().map(|x: &f64| x.powi(deg)).collect();
            for (j, row) in CUBIC_FROM_SAMPLES.iter().enumerate() {
                let c: f64 = row.iter().zip(&samples).map(|(a, b)| a * b).sum();
                let expect = if j == deg as usize { 1.0 } else { 0.0 };
                assert!((c - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weighted_norm_of_one_approaches_two() {
        let p = SigmaParams::new(1, 1.0).unwrap();
        let mut prev = 0.0;
        for l in [100.0, 1000.0, 10000.0] {
            let n = ((50.0 * l) as usize).next_power_of_two();
            let f = GridField::from_fn(p, l, n, |_| 1.0).unwrap();
            let v = weighted_l1_norm(&f, &WeightedNorm::for_grid(&f)).unwrap();
            // exact: 2 (1 - 1/(1 + L/2))
            assert!((v - 2.0 * (1.0 - 1.0 / (1.0 + 0.5 * l))).abs() < 1e-3);
            assert!(v > prev);
            prev = v;
        }
        let z = GridField::from_fn(p, 10.0, 64, |_| 0.0).unwrap();
        assert_eq!(weighted_l1_norm(&z, &WeightedNorm::for_grid(&z)).unwrap(), 0.0);
    }

    #[test]
    fn source_requires_positive_holder_exponent() {
        let p = SigmaParams::new(1, 0.5).unwrap();
        let g = GridField::from_fn(p, 1.0, 16, |_| 0.0).unwrap();
        assert!(SourceTerm::new(0.0, move |_| Ok(g.clone())).is_err());
        let g = GridField::from_fn(p, 1.0, 16, |_| 0.0).unwrap();
        let s = SourceTerm::new(0.9, move |_| Ok(g.clone())).unwrap();
        assert!(s.check_admissible(0.5).is_err());
        assert!(s.check_admissible(1.5).is_ok());
        let _ = PI;
    }
}
