//! Extension to the weighted upper half-space: per-mode profiles, the
//! Dirichlet-to-Neumann check, and the variational elliptic problem.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::SigmaParams;
use crate::grid::{write_snapshots, GridField, SnapshotManifest, Spectral};
use crate::nonlinearity::Nonlinearity;
use crate::special::gamma;

/// `μ_σ = 2^{σ−1} Γ(σ/2) / Γ(1−σ/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuSigma {
    pub sigma: f64,
    pub value: f64,
}

impl MuSigma {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::InvalidParameter(format!("sigma must lie in (0, 2), got {sigma}")));
        }
        let value = 2f64.powf(sigma - 1.0) * gamma(sigma / 2.0) / gamma(1.0 - sigma / 2.0);
        Ok(Self { sigma, value })
    }
}

/// Graded nodes `y_j = Y (j/M)^q`, `q = max(2, 2/σ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YGrid {
    pub nodes: Vec<f64>,
}

impl YGrid {
    pub fn graded(y_max: f64, m: usize, sigma: f64) -> Result<Self> {
        if !(y_max > 0.0) || m < 4 || !(sigma > 0.0 && sigma < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "graded y-grid needs Y > 0, M >= 4, σ in (0,2); got Y = {y_max}, M = {m}, σ = {sigma}"
            )));
        }
        let q = (2.0f64).max(2.0 / sigma);
        Ok(Self { nodes: (0..=m).map(|j| y_max * (j as f64 / m as f64).powf(q)).collect() })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("y-nodes must start at 0 and increase".into()));
        }
        Ok(Self { nodes })
    }

    pub fn y_max(&self) -> f64 {
        *self.nodes.last().expect("nonempty")
    }

    /// Nodes up to and including the last one `<= y`.
    pub fn truncated(&self, y: f64) -> Result<Self> {
        Self::from_nodes(self.nodes.iter().copied().take_while(|&v| v <= y * (1.0 + 1e-12)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSolution {
    pub xi: f64,
    pub theta: Vec<f64>,
    /// `lim_{y→0} y^{1−σ} θ'(y)`.
    pub flux0: f64,
}

impl ModeSolution {
    /// `−μ_σ lim y^{1−σ} θ'`, which should equal `|ξ|^σ`.
    pub fn multiplier(&self, mu: &MuSigma) -> f64 {
        -mu.value * self.flux0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ModeOptions {
    pub rtol: f64,
    /// Reject `ξ > 0` profiles with `θ(Y_max)` above this.
    pub far_field_tol: Option<f64>,
}

impl Default for ModeOptions {
    fn default() -> Self {
        Self { rtol: 1e-12, far_field_tol: None }
    }
}

/// `ξ y` where the backward integration starts; the spurious growing branch
/// picked up there is damped by `e^{-2(START - ξy)}` at smaller `y`.
const START: f64 = 90.0;

/// Decaying solution of `θ'' + ((1−σ)/y) θ' = ξ² θ`, `θ(0) = 1`.
///
/// Written for `(θ, F = y^{1−σ} θ')` in `s = y^p` (`p = σ` for `σ ≤ 1`,
/// `p = 2−σ` otherwise) the system has no singular coefficient at `s = 0`.
/// It is integrated from the far field towards `y = 0`, the direction in which
/// the decaying branch dominates.
pub fn extend_mode(xi: f64, sigma: f64, y: &YGrid, opts: ModeOptions) -> Result<ModeSolution> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::Extension(format!("|ξ| must be finite and nonnegative, got {xi}")));
    }
    if !(sigma > 0.0 && sigma < 2.0) {
        return Err(Error::InvalidParameter(format!("sigma must lie in (0, 2), got {sigma}")));
    }
    let nodes = &y.nodes;
    if xi == 0.0 {
        return Ok(ModeSolution { xi, theta: vec![1.0; nodes.len()], flux0: 0.0 });
    }
    let p = if sigma <= 1.0 { sigma } else { 2.0 - sigma };
    let rhs = |s: f64, st: [f64; 2]| -> [f64; 2] {
        let yy = if s > 0.0 { s.powf(1.0 / p) } else { 0.0 };
        [yy.powf(sigma - p) * st[1] / p, xi * xi * yy.powf(2.0 - sigma - p) * st[0] / p]
    };
    let y_start = START / xi;
    let nu = sigma / 2.0;
    // d/dy ln(z^ν K_ν(z)) from the large-z expansion
    let z = START;
    let dlog = xi * (-1.0 + (nu - 0.5) / z - (4.0 * nu * nu - 1.0) / (8.0 * z * z));
    let mut state = [1.0, y_start.powf(1.0 - sigma) * dlog];
    let mut log_theta = vec![f64::NEG_INFINITY; nodes.len()];
    let mut log_acc = 0.0;
    let mut s_cur = y_start.powf(p);
    for j in (0..nodes.len()).rev() {
        if nodes[j] >= y_start {
            continue;
        }
        let s_next = nodes[j].powf(p);
        state = dopri(&rhs, s_cur, s_next, state, opts.rtol)?;
        s_cur = s_next;
        let t = state[0];
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Extension(format!("mode ξ = {xi}: profile lost positivity")));
        }
        log_acc += t.ln();
        log_theta[j] = log_acc;
        state = [1.0, state[1] / t];
    }
    let l0 = log_theta[0];
    let theta: Vec<f64> = log_theta.iter().map(|l| (l - l0).exp()).collect();
    let flux0 = state[1];
    if let Some(tol) = opts.far_field_tol {
        let last = *theta.last().expect("nonempty");
        if last > tol {
            return Err(Error::Extension(format!(
                "far-field truncation insufficient: θ(Y_max) = {last:e} > {tol:e} for ξ = {xi}"
            )));
        }
    }
    Ok(ModeSolution { xi, theta, flux0 })
}

/// Adaptive Dormand–Prince 5(4) for a 2-vector from `a` to `b`.
fn dopri(f: &impl Fn(f64, [f64; 2]) -> [f64; 2], a: f64, b: f64, y0: [f64; 2], rtol: f64) -> Result<[f64; 2]> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let span = b - a;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = a;
    let mut y = y0;
    let mut h = span;
    for _ in 0..200_000 {
        if (b - t) * dir <= 0.0 {
            return Ok(y);
        }
        if (t + h - b) * dir > 0.0 {
            h = b - t;
        }
        let mut k = [[0.0; 2]; 7];
        for i in 0..7 {
            let mut yi = y;
            for (j, kj) in k.iter().enumerate().take(i) {
                yi[0] += h * A[i][j] * kj[0];
                yi[1] += h * A[i][j] * kj[1];
            }
            let ti = if i >= 5 { t + h } else { t + C[i] * h };
            k[i] = f(ti, yi);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for c in 0..2 {
            y5[c] += h * (0..6).map(|i| A[6][i] * k[i][c]).sum::<f64>();
            let e: f64 = (0..7).map(|i| h * E[i] * k[i][c]).sum();
            let scale = 1e-300 + rtol * y[c].abs().max(y5[c].abs()).max(1e-3 * (y[0].abs() + y[1].abs()));
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            t = if (t + h - b) * dir >= 0.0 { b } else { t + h };
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Err(Error::Extension("mode integration exceeded its step budget".into()))
}

/// Least-squares fit of `v − v(0)` by `a y^σ + b y² + c y^{2+σ} + d y⁴`
/// (the leading terms of the profile expansion) on nodes `1..=k`; returns `a`.
pub fn fit_sigma_coefficient(y: &[f64], v: &[f64], sigma: f64, k: usize) -> f64 {
    let k = k.min(y.len() - 1);
    let powers = [sigma, 2.0, 2.0 + sigma, 4.0];
    let nb = powers.len().min(k);
    // column scaling by the outermost fitted node keeps the system O(1)
    let ys = y[k];
    let mut ata = vec![vec![0.0; nb]; nb];
    let mut atb = vec![0.0; nb];
    for j in 1..=k {
        let row: Vec<f64> = powers[..nb].iter().map(|&p| (y[j] / ys).powf(p)).collect();
        for r in 0..nb {
            atb[r] += row[r] * (v[j] - v[0]);
            for c in 0..nb {
                ata[r][c] += row[r] * row[c];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..nb {
        let piv = (col..nb).max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs())).expect("rows");
        ata.swap(col, piv);
        atb.swap(col, piv);
        for r in col + 1..nb {
            let f = ata[r][col] / ata[col][col];
            for c in col..nb {
                ata[r][c] -= f * ata[col][c];
            }
            atb[r] -= f * atb[col];
        }
    }
    let mut coef = vec![0.0; nb];
    for r in (0..nb).rev() {
        let tail: f64 = (r + 1..nb).map(|c| ata[r][c] * coef[c]).sum();
        coef[r] = (atb[r] - tail) / ata[r][r];
    }
    coef[0] / ys.powf(sigma)
}

/// Nodes used by the weighted normal-derivative fit.
pub const NEUMANN_FIT_NODES: usize = 5;

/// Values on the product of a base grid and graded y-nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionField {
    pub y: Vec<f64>,
    pub levels: Vec<GridField>,
    /// Lateral Dirichlet boundary at index 0 instead of periodicity.
    pub dirichlet: bool,
}

impl ExtensionField {
    pub fn trace(&self) -> &GridField {
        &self.levels[0]
    }

    pub fn sigma(&self) -> f64 {
        self.levels[0].params().sigma()
    }

    /// `−μ_σ lim y^{1−σ} ∂_y v` from the fit `v ≈ v₀ + a y^σ (+ b y²)`.
    pub fn neumann_trace(&self) -> Result<GridField> {
        let sigma = self.sigma();
        let mu = MuSigma::new(sigma)?;
        let base = self.trace();
        let k = NEUMANN_FIT_NODES.min(self.y.len() - 1);
        let vals = (0..base.len())
            .map(|i| {
                let col: Vec<f64> = self.levels[..=k].iter().map(|l| l.values()[i]).collect();
                -mu.value * sigma * fit_sigma_coefficient(&self.y[..=k], &col, sigma, k)
            })
            .collect();
        base.with_values(vals)
    }

    /// y-slices as grid files plus a manifest of y-nodes.
    pub fn write_slices(&self, dir: &Path, prefix: &str) -> Result<SnapshotManifest> {
        write_snapshots(
            dir,
            prefix,
            &self.levels,
            serde_json::json!({ "y_nodes": self.y, "dirichlet": self.dirichlet }),
        )
    }
}

/// Per-mode extension of `g`; modes sharing `|ξ|` share one profile.
pub fn extend_field(g: &GridField, y: &YGrid) -> Result<ExtensionField> {
    if g.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Extension("boundary data must be finite".into()));
    }
    let sigma = g.params().sigma();
    let sp = Spectral::for_field(g);
    let xis = sp.wavenumbers(g.length());
    let key = |x: f64| (x * 1e9).round() as i64;
    let mut distinct: Vec<f64> = Vec::new();
    let mut seen = HashMap::new();
    for &x in &xis {
        seen.entry(key(x)).or_insert_with(|| {
            distinct.push(x);
            distinct.len() - 1
        });
    }
    let profiles: Vec<ModeSolution> = distinct
        .par_iter()
        .map(|&x| extend_mode(x, sigma, y, ModeOptions::default()))
        .collect::<Result<_>>()?;
    let slot: Vec<usize> = xis.iter().map(|&x| seen[&key(x)]).collect();
    let g_hat = sp.forward(g.values());
    let mut levels = Vec::with_capacity(y.nodes.len());
    for j in 0..y.nodes.len() {
        if j == 0 {
            levels.push(g.clone());
            continue;
        }
        let c: Vec<Complex64> = g_hat.iter().zip(&slot).map(|(c, &s)| c * profiles[s].theta[j]).collect();
        levels.push(g.with_values(sp.inverse(c))?);
    }
    Ok(ExtensionField { y: y.nodes.clone(), levels, dirichlet: false })
}

/// Exact weight integral `∫_a^b y^{1−σ} dy`.
fn weight_integral(a: f64, b: f64, sigma: f64) -> f64 {
    (b.powf(2.0 - sigma) - a.powf(2.0 - sigma)) / (2.0 - sigma)
}

/// Dual-cell weights `V_j = ∫ y^{1−σ}` over `[y_{j−½}, y_{j+½}]` and edge
/// weights `W_j = ∫_{y_j}^{y_{j+1}} y^{1−σ} / Δy_j²`.
fn fv_weights(y: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let m = y.len() - 1;
    let mid = |j: usize| 0.5 * (y[j] + y[j + 1]);
    let cell: Vec<f64> = (0..=m)
        .map(|j| {
            let a = if j == 0 { 0.0 } else { mid(j - 1) };
            let b = if j == m { y[m] } else { mid(j) };
            weight_integral(a, b, sigma)
        })
        .collect();
    let edge: Vec<f64> =
        (0..m).map(|j| weight_integral(y[j], y[j + 1], sigma) / (y[j + 1] - y[j]).powi(2)).collect();
    (cell, edge)
}

/// Discrete `μ_σ ∫ y^{1−σ} |∇v|²` on the periodic product grid, with
/// spectral x-derivatives and finite-volume y-differences.
pub fn weighted_energy(field: &ExtensionField) -> Result<f64> {
    if field.dirichlet {
        return Err(Error::Extension("weighted energy is defined for periodic extensions".into()));
    }
    let sigma = field.sigma();
    let mu = MuSigma::new(sigma)?;
    let base = field.trace();
    let sp = Spectral::for_field(base);
    let (cell, edge) = fv_weights(&field.y, sigma);
    let vol = base.cell_volume();
    let mut total = 0.0;
    for (j, level) in field.levels.iter().enumerate() {
        // ∫|∇_x v|² = L^N Σ |ξ|² |c_k|², c_k = v̂_k / n^N
        let c = sp.forward(level.values());
        let nn = level.len() as f64;
        let grad2: f64 = c
            .iter()
            .zip(sp.wavenumbers(level.length()))
            .map(|(ck, x)| x * x * ck.norm_sqr())
            .sum::<f64>()
            * vol
            / nn;
        total += cell[j] * grad2;
        if j + 1 < field.levels.len() {
            let d = field.levels[j + 1].lin_comb(1.0, level, -1.0);
            total += edge[j] * d.dot(&d);
        }
    }
    Ok(mu.value * total)
}

/// `Σ |ξ|^σ |ĝ|²` in the same normalization as [`weighted_energy`].
pub fn spectral_energy(g: &GridField) -> f64 {
    let sigma = g.params().sigma();
    let sp = Spectral::for_field(g);
    let c = sp.forward(g.values());
    c.iter()
        .zip(sp.wavenumbers(g.length()))
        .map(|(ck, x)| x.powf(sigma) * ck.norm_sqr())
        .sum::<f64>()
        * g.cell_volume()
        / g.len() as f64
}

#[derive(Debug, Clone, Copy)]
pub struct VariationalOptions {
    /// Bound on the projected gradient, per unit trace length.
    pub tol: f64,
    pub max_iter: usize,
    pub max_krylov: usize,
}

impl Default for VariationalOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, max_krylov: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct VariationalSolution {
    pub field: ExtensionField,
    /// `β(w(·, 0))`.
    pub trace_u: GridField,
    pub energies: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Finite-volume problem on `[−R, R] × [0, Y]` with zero data at `x = ±R`
/// and `y = Y`; unknowns are `x`-interior and `y < Y` nodes, stored `j`-major.
struct Problem<'a> {
    nx: usize,
    h: f64,
    m: usize,
    mu: f64,
    cell: Vec<f64>,
    edge: Vec<f64>,
    g: Vec<f64>,
    nl: &'a Nonlinearity,
    lo: f64,
    hi: f64,
    dst: Dst,
    max_krylov: usize,
}

impl Problem<'_> {
    fn ni(&self) -> usize {
        self.nx - 1
    }

    fn apply_a(&self, w: &[f64]) -> Vec<f64> {
        let ni = self.ni();
        let mut out = vec![0.0; w.len()];
        out.par_chunks_mut(ni).enumerate().for_each(|(j, row)| {
            let cur = &w[j * ni..(j + 1) * ni];
            for i in 0..ni {
                let c = cur[i];
                let left = if i > 0 { cur[i - 1] } else { 0.0 };
                let right = if i + 1 < ni { cur[i + 1] } else { 0.0 };
                let mut acc = self.cell[j] / self.h * (2.0 * c - left - right);
                let up = if j + 1 < self.m { w[(j + 1) * ni + i] } else { 0.0 };
                acc += self.h * self.edge[j] * (c - up);
                if j > 0 {
                    acc += self.h * self.edge[j - 1] * (c - w[(j - 1) * ni + i]);
                }
                row[i] = acc;
            }
        });
        out
    }

    fn energy(&self, w: &[f64]) -> f64 {
        let aw = self.apply_a(w);
        let quad: f64 = w.iter().zip(&aw).map(|(a, b)| a * b).sum::<f64>() * 0.5 * self.mu;
        let trace: f64 = w[..self.ni()]
            .par_iter()
            .zip(&self.g)
            .map(|(&wi, gi)| self.nl.big_b(wi) - wi * gi)
            .sum();
        quad + self.h * trace
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut grad = self.apply_a(w);
        for v in grad.iter_mut() {
            *v *= self.mu;
        }
        for i in 0..self.ni() {
            grad[i] += self.h * (self.nl.beta(w[i]) - self.g[i]);
        }
        grad
    }

    /// Trace nodes held at a bound because the gradient pushes outward.
    fn active(&self, w: &[f64], grad: &[f64]) -> Vec<bool> {
        let mut act = vec![false; w.len()];
        for i in 0..self.ni() {
            act[i] = (w[i] <= self.lo && grad[i] > 0.0) || (w[i] >= self.hi && grad[i] < 0.0);
        }
        act
    }

    fn project(&self, w: &mut [f64]) {
        for v in w[..self.ni()].iter_mut() {
            *v = v.clamp(self.lo, self.hi);
        }
    }

    /// Separable approximation `μA + h c̄ e₀e₀ᵀ` solved exactly by a sine
    /// transform in `x` and a tridiagonal solve per mode.
    fn precondition(&self, r: &[f64], cbar: f64) -> Vec<f64> {
        let ni = self.ni();
        let m = self.m;
        let mut hat: Vec<Vec<f64>> = (0..m).map(|j| self.dst.forward(&r[j * ni..(j + 1) * ni])).collect();
        let mut diag = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for k in 0..ni {
            let d = 4.0 * ((k + 1) as f64 * std::f64::consts::PI / (2.0 * self.nx as f64)).sin().powi(2);
            for j in 0..m {
                let mut dj = self.mu * (self.h * self.edge[j] + d * self.cell[j] / self.h);
                if j > 0 {
                    dj += self.mu * self.h * self.edge[j - 1];
                }
                if j == 0 {
                    dj += self.h * cbar;
                }
                diag[j] = dj;
                rhs[j] = hat[j][k];
            }
            let off: Vec<f64> = (0..m.saturating_sub(1)).map(|j| -self.mu * self.h * self.edge[j]).collect();
            let sol = thomas(&off, &diag, &rhs);
            for j in 0..m {
                hat[j][k] = sol[j];
            }
        }
        let mut out = Vec::with_capacity(r.len());
        for row in hat {
            out.extend(self.dst.inverse(&row));
        }
        out
    }

    fn krylov(&self, w: &[f64], grad: &[f64], active: &[bool]) -> Vec<f64> {
        let ni = self.ni();
        let bp: Vec<f64> = w[..ni].iter().map(|&v| self.nl.beta_prime(v).min(1e12)).collect();
        let cbar = bp.iter().sum::<f64>() / ni as f64;
        let matvec = |x: &[f64]| -> Vec<f64> {
            let mut y = self.apply_a(x);
            for v in y.iter_mut() {
                *v *= self.mu;
            }
            for i in 0..ni {
                y[i] += self.h * bp[i] * x[i];
            }
            for (v, &a) in y.iter_mut().zip(active) {
                if a {
                    *v = 0.0;
                }
            }
            y
        };
        let mask = |v: &mut Vec<f64>| {
            for (x, &a) in v.iter_mut().zip(active) {
                if a {
                    *x = 0.0;
                }
            }
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut r: Vec<f64> = grad.iter().map(|v| -v).collect();
        mask(&mut r);
        let r0 = dot(&r, &r).sqrt();
        let mut x = vec![0.0; r.len()];
        let mut z = self.precondition(&r, cbar);
        mask(&mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..self.max_krylov {
            if dot(&r, &r).sqrt() <= 1e-12 * r0 {
                break;
            }
            let ap = matvec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for ((xi, pi), (ri, ai)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
                *xi += alpha * pi;
                *ri -= alpha * ai;
            }
            z = self.precondition(&r, cbar);
            mask(&mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        x
    }

    fn residual(&self, w: &[f64], grad: &[f64]) -> f64 {
        let act = self.active(w, grad);
        grad.iter().zip(&act).filter(|(_, a)| !**a).fold(0.0f64, |m, (g, _)| m.max(g.abs())) / self.h
    }
}

fn thomas(off: &[f64], diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        c[i] = if i + 1 < n { off[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// DST-I on `n − 1` interior values through a `2n` complex FFT.
struct Dst {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst {
    fn new(n: usize) -> Self {
        Self { n, fft: FftPlanner::new().plan_fft_forward(2 * n) }
    }

    /// `S_k = Σ_i v_i sin(π i k / n)`, `i, k = 1..n−1`.
    fn forward(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![Complex64::new(0.0, 0.0); 2 * n];
        for (i, &x) in v.iter().enumerate() {
            a[i + 1] = Complex64::new(x, 0.0);
            a[2 * n - i - 1] = Complex64::new(-x, 0.0);
        }
        self.fft.process(&mut a);
        (1..n).map(|k| -a[k].im / 2.0).collect()
    }

    fn inverse(&self, s: &[f64]) -> Vec<f64> {
        let scale = 2.0 / self.n as f64;
        self.forward(s).into_iter().map(|v| v * scale).collect()
    }
}

/// Minimizes `J(w) = (μ_σ/2)∫ y^{1−σ}|∇w|² + ∫B(w) − ∫wg` over the
/// finite-volume space on `[−L/2, L/2] × [0, Y]`, with zero Dirichlet data at
/// `x = ±L/2` (grid index 0) and `y = Y`, subject to `0 ≤ β(w) ≤ ‖g‖_∞` on
/// the trace.
///
/// Iterates are projected Newton steps (conjugate gradients on the free
/// variables) with Armijo backtracking on `J`, so `J` never increases.
pub fn solve_elliptic_variational(
    g: &GridField,
    nl: &Nonlinearity,
    y: &YGrid,
    opts: VariationalOptions,
) -> Result<VariationalSolution> {
    if g.dim() != 1 {
        return Err(Error::Extension("the variational problem is implemented for N = 1".into()));
    }
    if g.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Extension("boundary data must be bounded".into()));
    }
    nl.require_nondegenerate()?;
    let sigma = g.params().sigma();
    let mu = MuSigma::new(sigma)?.value;
    let nx = g.n();
    let m = y.nodes.len() - 1;
    if nx < 4 || m < 2 {
        return Err(Error::Extension(format!("grid too small: n = {nx}, M = {m}")));
    }
    let gmax = g.sup_norm();
    let (lo, hi) = (nl.phi(0.0), nl.phi(gmax));
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Extension(format!("'{}' is not convex-admissible on [0, {gmax}]", nl.name())));
    }
    let (cell, edge) = fv_weights(&y.nodes, sigma);
    let prob = Problem {
        nx,
        h: g.h(),
        m,
        mu,
        cell,
        edge,
        g: g.values()[1..].to_vec(),
        nl,
        lo,
        hi,
        dst: Dst::new(nx),
        max_krylov: opts.max_krylov,
    };
    let ni = nx - 1;
    let mut w = vec![0.0; ni * m];
    prob.project(&mut w);
    let mut e = prob.energy(&w);
    let mut energies = vec![e];
    let mut grad = prob.gradient(&w);
    let mut res = prob.residual(&w, &grad);
    let mut iterations = 0;
    while res >= opts.tol {
        if iterations == opts.max_iter {
            return Err(Error::Extension(format!(
                "minimization stopped after {iterations} iterations with residual {res:e}"
            )));
        }
        iterations += 1;
        let act = prob.active(&w, &grad);
        let d = prob.krylov(&w, &grad, &act);
        let mut t = 1.0;
        loop {
            let mut trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            prob.project(&mut trial);
            let et = prob.energy(&trial);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&w)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let noise = 1e-14 * e.abs().max(1e-300);
            if et <= e + 1e-4 * decrease || (et <= e + noise && t == 1.0) {
                let gt = prob.gradient(&trial);
                let rt = prob.residual(&trial, &gt);
                if et <= e + 1e-4 * decrease || rt < res {
                    w = trial;
                    e = et.min(e);
                    grad = gt;
                    res = rt;
                    energies.push(e);
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::Extension(format!(
                    "line search failed at iteration {iterations} (residual {res:e})"
                )));
            }
        }
    }
    // rebuild as grid levels with the Dirichlet column and top level
    let mut levels = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let mut vals = vec![0.0; nx];
        if j < m {
            vals[1..].copy_from_slice(&w[j * ni..(j + 1) * ni]);
        }
        levels.push(g.with_values(vals)?);
    }
    let mut trace_u = levels[0].map(|v| nl.beta(v));
    trace_u.values_mut()[0] = 0.0;
    Ok(VariationalSolution {
        field: ExtensionField { y: y.nodes.clone(), levels, dirichlet: true },
        trace_u,
        energies,
        residual: res,
        iterations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    /// Largest decrease between successive traces on common nodes (≤ 0 is monotone).
    pub worst_decrease: Vec<f64>,
    /// `L∞` difference between successive traces on common nodes.
    pub cauchy: Vec<f64>,
    pub monotone: bool,
    #[serde(skip)]
    pub traces: Vec<GridField>,
}

/// Solves on `[−R, R] × [0, R]` for each radius with a shared spacing `h`
/// and one graded y-grid truncated at each `R`, so grids are nested.
pub fn domain_growth_study(
    g: impl Fn(f64) -> f64,
    sigma: f64,
    nl: &Nonlinearity,
    radii: &[f64],
    h: f64,
    m_max: usize,
    opts: VariationalOptions,
) -> Result<GrowthReport> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("radii must be increasing".into()));
    }
    let params = SigmaParams::new(1, sigma)?;
    let r_max = *radii.last().expect("nonempty");
    let master = YGrid::graded(r_max, m_max, sigma)?;
    let mut traces = Vec::new();
    for &r in radii {
        let n = (2.0 * r / h).round() as usize;
        if ((n as f64) * h - 2.0 * r).abs() > 1e-9 * r {
            return Err(Error::InvalidParameter(format!("radius {r} is not a multiple of h/2 = {}", h / 2.0)));
        }
        let gf = GridField::from_fn(params, 2.0 * r, n, |x| g(x[0]))?;
        let yg = master.truncated(r)?;
        let sol = solve_elliptic_variational(&gf, nl, &yg, opts)?;
        traces.push(sol.field.levels[0].clone());
    }
    let mut worst_decrease = Vec::new();
    let mut cauchy = Vec::new();
    for pair in traces.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let offset = ((b.length() - a.length()) / (2.0 * h)).round() as usize;
        let mut dec = f64::NEG_INFINITY;
        let mut diff = 0.0f64;
        for i in 0..a.n() {
            let d = b.values()[i + offset] - a.values()[i];
            dec = dec.max(-d);
            diff = diff.max(d.abs());
        }
        worst_decrease.push(dec);
        cauchy.push(diff);
    }
    let monotone = worst_decrease.iter().all(|&d| d <= 1e-10);
    Ok(GrowthReport { radii: radii.to_vec(), worst_decrease, cauchy, monotone, traces })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_constant() {
        assert!((MuSigma::new(1.0).unwrap().value - 1.0).abs() < 1e-15);
        let m = MuSigma::new(0.5).unwrap().value;
        let expect = 2f64.powf(-0.5) * gamma(0.25) / gamma(0.75);
        assert!((m - expect).abs() < 1e-12 * expect);
        assert!(MuSigma::new(2.0).is_err());
    }

    #[test]
    fn dst_round_trip_and_thomas() {
        let d = Dst::new(8);
        let v: Vec<f64> = (1..8).map(|i| (i as f64).sin() + 0.1 * i as f64).collect();
        let back = d.inverse(&d.forward(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
        let s = d.forward(&v);
        let direct: f64 = (1..8).map(|i| v[i - 1] * (std::f64::consts::PI * i as f64 * 3.0 / 8.0).sin()).sum();
        assert!((s[2] - direct).abs() < 1e-13);
        let x = thomas(&[-1.0, -1.0], &[2.0, 2.0, 2.0], &[1.0, 0.0, 1.0]);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_mode_is_constant() {
        let y = YGrid::graded(5.0, 16, 0.7).unwrap();
        let s = extend_mode(0.0, 0.7, &y, ModeOptions::default()).unwrap();
        assert!(s.theta.iter().all(|&v| v == 1.0));
        assert_eq!(s.flux0, 0.0);
    }
}
