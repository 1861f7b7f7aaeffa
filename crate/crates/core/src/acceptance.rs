//! The acceptance matrix: oracle and property checks across all modules.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extension::{
    domain_growth_study, extend_mode, solve_elliptic_variational, ModeOptions, MuSigma, VariationalOptions, YGrid,
};
use crate::geometry::SigmaParams;
use crate::grid::{GridField, Spectral};
use crate::kernel::io::ProfileCache;
use crate::kernel::{
    build_phi_profile, build_psi_profile, cancellation_integral, verify_decay_bounds, DecaySampleSet, Half,
    KernelProfile, ProfileGrid,
};
use crate::laplacian::{apply_quadrature, apply_spectral, calibrate, FractionalOperator, GridMeta, QuadratureScheme};
use crate::linear::{solve_duhamel, solve_spectral, DuhamelOptions, SourceTerm};
use crate::nonlinear::{evolve_semigroup, implicit_euler_step, StepOptions, Trajectory};
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::regularity::{
    amplitude_ratio, decay_exponent_fit, holder_estimate, l1_contraction_check, positivity_interior,
    second_difference_profile, spectral_smoothness, SamplingSpec,
};

pub const MATRIX: [(usize, f64); 6] = [(1, 0.5), (1, 1.0), (1, 1.5), (2, 0.5), (2, 1.0), (2, 1.5)];
pub const CRITERIA: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Threshold missed on a check that calls for refinement, not a defect.
    SoftFail,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: Option<f64>,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::SoftFail => "SOFT-FAIL",
        };
        format!("criterion {:>2} {:<9} {:<38} {:>7.2}s  {}", self.id, tag, self.title, self.seconds, self.detail)
    }
}

/// Shared state: where `Φ` profiles come from.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub cache: Option<ProfileCache>,
}

impl Context {
    fn phi(&self, p: &SigmaParams) -> Result<KernelProfile> {
        let grid = ProfileGrid::for_params(p);
        match &self.cache {
            Some(c) => c.phi(p, grid),
            None => build_phi_profile(p, grid),
        }
    }

    fn profiles(&self, dim: usize, sigma: f64) -> Result<(KernelProfile, KernelProfile)> {
        let phi = self.phi(&SigmaParams::new(dim, sigma)?)?;
        let psi = build_psi_profile(&phi)?;
        Ok((phi, psi))
    }
}

struct Check {
    metrics: BTreeMap<String, f64>,
    failures: Vec<String>,
    soft: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { metrics: BTreeMap::new(), failures: Vec::new(), soft: Vec::new() }
    }

    /// Record `value` and require `ok`.
    fn require(&mut self, name: &str, value: f64, ok: bool) {
        self.metrics.insert(name.to_string(), value);
        if !ok {
            self.failures.push(format!("{name}={value:.3e}"));
        }
    }

    fn soft(&mut self, name: &str, value: f64, ok: bool) {
        self.metrics.insert(name.to_string(), value);
        if !ok {
            self.soft.push(format!("{name}={value:.3e}"));
        }
    }

    fn note(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

fn title(id: u8) -> &'static str {
    match id {
        1 => "kernel closed-form oracle",
        2 => "mass normalization",
        3 => "cancellation integral",
        4 => "decay envelopes",
        5 => "operator cross-validation",
        6 => "Duhamel vs spectral oracle",
        7 => "extension identity",
        8 => "elliptic variational problem",
        9 => "semigroup solver",
        10 => "smoothing exponent reproduction",
        11 => "regularity properties",
        _ => "unknown",
    }
}

fn budget(id: u8) -> Option<f64> {
    match id {
        1 => Some(10.0),
        3 => Some(30.0),
        6 => Some(60.0),
        10 => Some(600.0),
        _ => None,
    }
}

/// Run one criterion; numerical errors count as failures.
pub fn run_criterion(id: u8, ctx: &Context) -> CriterionOutcome {
    let start = Instant::now();
    let mut check = Check::new();
    let result = match id {
        1 => kernel_oracle(ctx, &mut check),
        2 => mass(ctx, &mut check),
        3 => cancellation(ctx, &mut check),
        4 => decay_envelopes(ctx, &mut check),
        5 => operators(&mut check),
        6 => duhamel(ctx, &mut check),
        7 => extension_identity(&mut check),
        8 => variational(&mut check),
        9 => semigroup(&mut check),
        10 => smoothing_exponents(&mut check),
        11 => regularity_properties(&mut check),
        _ => Err(Error::Config(format!("no acceptance criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let budget_seconds = budget(id);
    if let Some(b) = budget_seconds {
        check.require("runtime_seconds", seconds, seconds < b);
    }
    let (status, detail) = match result {
        Err(e) => (Status::Fail, format!("error: {e}")),
        Ok(()) if !check.failures.is_empty() => (Status::Fail, check.failures.join(", ")),
        Ok(()) if !check.soft.is_empty() => (Status::SoftFail, check.soft.join(", ")),
        Ok(()) => (Status::Pass, summary(&check.metrics)),
    };
    CriterionOutcome {
        id,
        title: title(id).to_string(),
        status,
        metrics: check.metrics,
        detail,
        seconds,
        budget_seconds,
    }
}

fn summary(metrics: &BTreeMap<String, f64>) -> String {
    metrics
        .iter()
        .filter(|(k, _)| k.starts_with("worst") || k.starts_with("min") || k.starts_with("max"))
        .map(|(k, v)| format!("{k}={v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn run_all(ids: &[u8], ctx: &Context) -> Vec<CriterionOutcome> {
    ids.iter().map(|&id| run_criterion(id, ctx)).collect()
}

fn kernel_oracle(ctx: &Context, c: &mut Check) -> Result<()> {
    for dim in [1usize, 2] {
        let p = SigmaParams::new(dim, 1.0)?;
        let phi = ctx.phi(&p)?;
        let exact = |s: f64| {
            if dim == 1 {
                1.0 / (PI * (1.0 + s * s))
            } else {
                (1.0 + s * s).powf(-1.5) / (2.0 * PI)
            }
        };
        let worst = (0..=5000)
            .map(|i| 50.0 * i as f64 / 5000.0)
            .map(|s| (phi.eval(s) - exact(s)).abs() / exact(s))
            .fold(0.0, f64::max);
        c.require(&format!("worst_rel_err_N{dim}"), worst, worst < 1e-6);
    }
    Ok(())
}

fn mass(ctx: &Context, c: &mut Check) -> Result<()> {
    let mut worst = 0.0f64;
    for (dim, sigma) in MATRIX {
        let phi = ctx.phi(&SigmaParams::new(dim, sigma)?)?;
        let err = (phi.total_mass() - 1.0).abs();
        c.note(&format!("mass_err_N{dim}_s{sigma}"), err);
        worst = worst.max(err);
    }
    c.require("worst_mass_err", worst, worst < 1e-8);
    Ok(())
}

fn cancellation(ctx: &Context, c: &mut Check) -> Result<()> {
    let mut worst = 0.0f64;
    for (dim, sigma) in MATRIX {
        let (_, psi) = ctx.profiles(dim, sigma)?;
        for (r, eps) in [(1.0, 0.1), (10.0, 0.01)] {
            for half in [Half::Plus, Half::Minus] {
                worst = worst.max(cancellation_integral(&psi, half, eps, r)?.abs());
            }
        }
    }
    c.require("worst_abs_integral", worst, worst < 1e-6);
    Ok(())
}

fn decay_envelopes(ctx: &Context, c: &mut Check) -> Result<()> {
    let mut worst_drift = 0.0f64;
    let mut worst_slope = 0.0f64;
    for (dim, sigma) in MATRIX {
        let (_, psi) = ctx.profiles(dim, sigma)?;
        let r = verify_decay_bounds(&psi, &DecaySampleSet::default())?;
        if r.sup.iter().any(|s| !s.is_finite()) {
            c.require(&format!("sup_N{dim}_s{sigma}"), f64::INFINITY, false);
        }
        worst_drift = r.drift.iter().copied().fold(worst_drift, f64::max);
        for q in 0..3 {
            worst_slope = worst_slope.max((r.slopes[q] / r.expected_slopes[q] - 1.0).abs());
        }
    }
    c.require("worst_refinement_drift", worst_drift, worst_drift < 0.05);
    c.require("worst_slope_rel_err", worst_slope, worst_slope < 0.02);
    Ok(())
}

fn dense_columns(apply: &dyn Fn(&GridField) -> Result<GridField>, proto: &GridField) -> Result<DMatrix<f64>> {
    let n = proto.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = proto.zeros_like();
        e.values_mut()[j] = 1.0;
        let col = apply(&e)?;
        for i in 0..n {
            m[(i, j)] = col.values()[i];
        }
    }
    Ok(m)
}

fn operators(c: &mut Check) -> Result<()> {
    let mut worst = 0.0f64;
    let mut worst_sym = 0.0f64;
    for sigma in [0.5, 1.0, 1.5] {
        let p = SigmaParams::new(1, sigma)?;
        let smooth = |n: usize| {
            GridField::from_fn(p, 2.0 * PI, n, |x| (x[0].sin() + 0.5).exp() + (2.0 * x[0]).cos())
        };
        let f = smooth(512)?;
        let s = calibrate(&QuadratureScheme::new(sigma)?, GridMeta::of(&f))?;
        let q = apply_quadrature(&f, &s)?;
        let sp = apply_spectral(&f, sigma)?;
        worst = worst.max(q.lin_comb(1.0, &sp, -1.0).l2_norm() / sp.l2_norm());

        let g = smooth(64)?;
        // the calibration gate is a resolution check; symmetry does not need it
        let ungated = QuadratureScheme { calibration_gate: f64::INFINITY, ..QuadratureScheme::new(sigma)? };
        let s64 = calibrate(&ungated, GridMeta::of(&g))?;
        for m in [
            dense_columns(&|v| apply_quadrature(v, &s64), &g)?,
            dense_columns(&|v| apply_spectral(v, sigma), &g)?,
        ] {
            worst_sym = worst_sym.max((&m - m.transpose()).abs().max());
        }
    }
    c.require("worst_rel_l2_n512", worst, worst < 1e-3);
    c.require("max_asymmetry_n64", worst_sym, worst_sym < 1e-10);
    Ok(())
}

fn duhamel(ctx: &Context, c: &mut Check) -> Result<()> {
    let l = 10.0;
    let mut worst = 0.0f64;
    let mut worst_slab = 0.0f64;
    for sigma in [0.5, 1.0, 1.5] {
        let (phi, psi) = ctx.profiles(1, sigma)?;
        let p = SigmaParams::new(1, sigma)?;
        let u0 = GridField::from_fn(p, l, 256, |x| (-(x[0] * x[0])).exp() + 0.3 * (2.0 * PI * x[0] / l).sin())?;
        let n = u0.n();
        let src = SourceTerm::new(sigma.min(1.0), move |t| {
            let g = 1.0 + t - 0.5 * t * t + 0.1 * t * t * t;
            GridField::from_fn(p, l, n, |x| {
                g * (2.0 * PI * x[0] / l).cos().exp() + (1.0 - t) * (6.0 * PI * x[0] / l).sin()
            })
        })?;
        let t = 0.6;
        let (d, _) = solve_duhamel(&u0, &src, t, &phi, &psi, DuhamelOptions::default())?;
        let s = solve_spectral(&u0, &src, t, 64)?.pop().expect("final snapshot");
        worst = worst.max(d.lin_comb(1.0, &s, -1.0).sup_norm());
        let half = DuhamelOptions { slab_fraction: DuhamelOptions::default().slab_fraction / 2.0, ..DuhamelOptions::default() };
        let (dh, _) = solve_duhamel(&u0, &src, t, &phi, &psi, half)?;
        worst_slab = worst_slab.max(d.lin_comb(1.0, &dh, -1.0).sup_norm());
    }
    c.require("worst_linf", worst, worst < 1e-4);
    c.require("worst_slab_halving", worst_slab, worst_slab < 1e-5);
    Ok(())
}

fn extension_identity(c: &mut Check) -> Result<()> {
    let mut worst = 0.0f64;
    for sigma in [0.5, 1.0, 1.5] {
        let mu = MuSigma::new(sigma)?;
        let y = YGrid::graded(20.0, 64, sigma)?;
        for xi in [0.5, 1.0, 2.0, 4.0] {
            let s = extend_mode(xi, sigma, &y, ModeOptions::default())?;
            worst = worst.max((s.multiplier(&mu) / xi.powf(sigma) - 1.0).abs());
        }
    }
    c.require("worst_multiplier_rel_err", worst, worst < 1e-3);
    let mu1 = (MuSigma::new(1.0)?.value - 1.0).abs();
    c.require("mu1_err", mu1, mu1 <= f64::EPSILON);
    let y = YGrid::graded(30.0, 96, 1.0)?;
    let mut worst_exp = 0.0f64;
    for xi in [0.3, 1.0, 4.0, 20.0] {
        let s = extend_mode(xi, 1.0, &y, ModeOptions::default())?;
        for (t, yy) in s.theta.iter().zip(&y.nodes) {
            worst_exp = worst_exp.max((t - (-xi * yy).exp()).abs());
        }
    }
    c.require("max_exponential_err", worst_exp, worst_exp < 1e-8);
    Ok(())
}

/// Finite-volume extension problem solved mode by mode with sine sums and a
/// tridiagonal elimination per mode.
fn per_mode_linear(g: &GridField, y: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let mu = MuSigma::new(sigma)?.value;
    let nx = g.n();
    let h = g.h();
    let m = y.len() - 1;
    let wint = |a: f64, b: f64| (b.powf(2.0 - sigma) - a.powf(2.0 - sigma)) / (2.0 - sigma);
    let cell: Vec<f64> = (0..m)
        .map(|j| {
            let a = if j == 0 { 0.0 } else { 0.5 * (y[j - 1] + y[j]) };
            wint(a, 0.5 * (y[j] + y[j + 1]))
        })
        .collect();
    let edge: Vec<f64> = (0..m).map(|j| wint(y[j], y[j + 1]) / (y[j + 1] - y[j]).powi(2)).collect();
    let s = |i: usize, k: usize| (PI * (i * k) as f64 / nx as f64).sin();
    let mut trace = vec![0.0; nx];
    for k in 1..nx {
        let gk: f64 = (1..nx).map(|i| g.values()[i] * s(i, k)).sum::<f64>() * 2.0 / nx as f64;
        let d = 4.0 * (PI * k as f64 / (2.0 * nx as f64)).sin().powi(2);
        let mut diag: Vec<f64> = (0..m)
            .map(|j| {
                mu * (h * edge[j] + if j > 0 { h * edge[j - 1] } else { 0.0 } + d * cell[j] / h)
                    + if j == 0 { h } else { 0.0 }
            })
            .collect();
        let off: Vec<f64> = (0..m - 1).map(|j| -mu * h * edge[j]).collect();
        let mut rhs = vec![0.0; m];
        rhs[0] = h * gk;
        for j in (1..m).rev() {
            let f = off[j - 1] / diag[j];
            diag[j - 1] -= f * off[j - 1];
            rhs[j - 1] -= f * rhs[j];
        }
        let theta0 = rhs[0] / diag[0];
        for (i, t) in trace.iter_mut().enumerate().skip(1) {
            *t += theta0 * s(i, k);
        }
    }
    Ok(trace)
}

fn variational(c: &mut Check) -> Result<()> {
    let sigma = 0.8;
    let p = SigmaParams::new(1, sigma)?;
    let g = GridField::from_fn(p, 16.0, 64, |x| 1.0 + (PI * x[0] / 4.0).cos())?;
    let y = YGrid::graded(8.0, 24, sigma)?;
    let lin = Nonlinearity::new(NonlinearityKind::Linear);
    let sol = solve_elliptic_variational(&g, &lin, &y, VariationalOptions::default())?;
    let oracle = per_mode_linear(&g, &y.nodes, sigma)?;
    let err = sol.field.trace().values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.require("max_linear_trace_err", err, err < 1e-6);

    let p1 = SigmaParams::new(1, 1.0)?;
    let g1 = GridField::from_fn(p1, 16.0, 128, |x| 2.0 * (-(x[0] * x[0])).exp() + 0.5 * (-(x[0] - 2.0).powi(2)).exp())?;
    let g2 = GridField::from_fn(p1, 16.0, 128, |x| 1.5 * (-(x[0] * x[0])).exp())?;
    let y1 = YGrid::graded(8.0, 32, 1.0)?;
    let mut worst_excess = f64::NEG_INFINITY;
    for nl in [
        Nonlinearity::new(NonlinearityKind::Log1p),
        Nonlinearity::new(NonlinearityKind::Power { m: 2.0 }).regularize(1e-6)?,
    ] {
        let s1 = solve_elliptic_variational(&g1, &nl, &y1, VariationalOptions::default())?;
        let s2 = solve_elliptic_variational(&g2, &nl, &y1, VariationalOptions::default())?;
        let pos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).max(0.0)).sum::<f64>() * g1.h();
        let excess = pos(s1.trace_u.values(), s2.trace_u.values()) - pos(g1.values(), g2.values());
        worst_excess = worst_excess.max(excess);
    }
    c.require("max_contraction_excess", worst_excess, worst_excess <= 1e-8);

    let growth = domain_growth_study(
        |x| (-(x * x)).exp(),
        1.0,
        &lin,
        &[8.0, 16.0, 32.0, 64.0],
        0.125,
        100,
        VariationalOptions::default(),
    )?;
    let worst_dec = growth.worst_decrease.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.require("max_growth_decrease", worst_dec, growth.monotone);
    Ok(())
}

/// Damped Newton for `u + τ L φ(u) = g` in the original variables with LU.
fn dense_newton(l: &DMatrix<f64>, g: &[f64], tau: f64, nl: &Nonlinearity) -> Vec<f64> {
    let n = g.len();
    let gv = DVector::from_column_slice(g);
    let resid = |u: &DVector<f64>| u + l * u.map(|s| nl.phi(s)) * tau - &gv;
    let mut u = gv.clone();
    let mut r = resid(&u);
    for _ in 0..60 {
        if r.norm() < 1e-14 {
            break;
        }
        let d = DMatrix::from_diagonal(&u.map(|s| nl.phi_prime(s)));
        let jac = DMatrix::identity(n, n) + l * d * tau;
        let Some(step) = jac.lu().solve(&r) else { break };
        let mut t = 1.0;
        loop {
            let trial = &u - &step * t;
            let rt = resid(&trial);
            if rt.norm() < r.norm() || t < 1e-8 {
                u = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    u.iter().copied().collect()
}

fn box_data(sigma: f64, n: usize, centre: f64, half: f64, height: f64) -> Result<GridField> {
    GridField::from_fn(SigmaParams::new(1, sigma)?, 20.0, n, |x| {
        if (x[0] - centre).abs() < half {
            height
        } else {
            0.0
        }
    })
}

fn semigroup(c: &mut Check) -> Result<()> {
    let sigma = 0.8;
    let p = SigmaParams::new(1, sigma)?;
    let u0 = GridField::from_fn(p, 10.0, 128, |x| (-(x[0] * x[0])).exp())?;
    let lin = Nonlinearity::new(NonlinearityKind::Linear);
    let exact = Spectral::for_field(&u0).multiply(&u0, |xi| (-xi.powf(sigma)).exp());
    let errs: Vec<f64> = [10usize, 20, 40, 80]
        .iter()
        .map(|&k| {
            let tr = evolve_semigroup(&u0, 1.0, k, &lin, &StepOptions::default(), &[])?;
            Ok(tr.last().lin_comb(1.0, &exact, -1.0).l1_norm())
        })
        .collect::<Result<_>>()?;
    let worst_slope = errs.windows(2).map(|w| ((w[0] / w[1]).log2() - 1.0).abs()).fold(0.0, f64::max);
    c.require("worst_order_deviation", worst_slope, worst_slope <= 0.15);

    let kinds = [
        NonlinearityKind::Linear,
        NonlinearityKind::Power { m: 2.0 },
        NonlinearityKind::Power { m: 0.5 },
        NonlinearityKind::ShiftedPower { m: 2.0 },
        NonlinearityKind::Log1p,
        NonlinearityKind::Stefan,
    ];
    let mut worst_mass = 0.0f64;
    let mut worst_increase = f64::NEG_INFINITY;
    for kind in kinds {
        let nl = Nonlinearity::new(kind).regularize(2e-6)?;
        let (hu, hv) = if kind == NonlinearityKind::Stefan { (2.0, 2.5) } else { (1.0, 1.5) };
        let u0 = box_data(0.7, 128, 0.0, 3.0, hu)?;
        let v0 = box_data(0.7, 128, 1.0, 2.0, hv)?;
        let opts = StepOptions { tol: 1e-11, ..StepOptions::default() };
        let times = [0.1, 0.2, 0.4, 0.8, 1.0];
        let a = evolve_semigroup(&u0, 1.0, 40, &nl, &opts, &times)?;
        let b = evolve_semigroup(&v0, 1.0, 40, &nl, &opts, &times)?;
        for (tr, init) in [(&a, &u0), (&b, &v0)] {
            for s in &tr.snapshots {
                worst_mass = worst_mass.max((s.mean() - init.mean()).abs());
            }
        }
        let r = l1_contraction_check(&a.snapshots, &b.snapshots, 1e-8)?;
        worst_increase = worst_increase.max(r.worst_increase);
    }
    c.require("max_mass_drift", worst_mass, worst_mass < 1e-13);
    c.require("max_l1_increase", worst_increase, worst_increase <= 1e-8);

    let g = GridField::from_fn(SigmaParams::new(1, 1.0)?, 10.0, 32, |x| {
        0.2 + (-(x[0] * x[0])).exp() + 0.3 * (-(x[0] - 2.0).powi(2) * 4.0).exp()
    })?;
    let nl = Nonlinearity::new(NonlinearityKind::Power { m: 2.0 }).regularize(1e-8)?;
    let op = FractionalOperator::Spectral { order: 1.0 };
    let opts = StepOptions { operator: Some(op.clone()), ..StepOptions::default() };
    let (u, _) = implicit_euler_step(&g, 0.3, &nl, &opts)?;
    let dense = dense_columns(&|v| op.apply(v), &g)?;
    let oracle = dense_newton(&dense, g.values(), 0.3, &nl);
    let err = u.values().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    c.require("max_dense_newton_err", err, err < 1e-8);
    Ok(())
}

/// Decay runs from a narrow bump and its double on a wide periodic box.
fn decay_runs(m: f64, sigma: f64, amplitudes: &[f64]) -> Result<Vec<Trajectory>> {
    let p = SigmaParams::new(1, sigma)?;
    let nl = Nonlinearity::new(NonlinearityKind::Power { m }).regularize(1e-6)?;
    let times: Vec<f64> = (0..=40).map(|k| 0.5 * 100f64.powf(k as f64 / 40.0)).collect();
    amplitudes
        .par_iter()
        .map(|&a| {
            let w = 0.25;
            let u0 = GridField::from_fn(p, 100.0, 2048, |x| a * (-(x[0] / w).powi(2)).exp() / w)?;
            evolve_semigroup(&u0, 50.0, 5000, &nl, &StepOptions::default(), &times).map_err(|e| e.error)
        })
        .collect()
}

fn smoothing_exponents(c: &mut Check) -> Result<()> {
    let window = Some((0.5, 50.0));
    for (m, sigma, with_amplitude) in [(2.0, 1.0, true), (3.0, 1.0, false), (2.0, 0.5, false)] {
        let nl = Nonlinearity::new(NonlinearityKind::Power { m });
        let amps: &[f64] = if with_amplitude { &[1.0, 2.0] } else { &[1.0] };
        let runs = decay_runs(m, sigma, amps)?;
        let fit = decay_exponent_fit(&runs[0].snapshots, &nl, 1, window)?;
        let tag = format!("m{m}_s{sigma}");
        c.note(&format!("slope_{tag}"), fit.slope);
        c.require(&format!("worst_slope_rel_err_{tag}"), fit.relative_slope_error(), fit.relative_slope_error() < 0.1);
        if with_amplitude {
            let doubled = decay_exponent_fit(&runs[1].snapshots, &nl, 1, window)?;
            let amp = amplitude_ratio(&fit, &doubled)?;
            c.note("amplitude_ratio", amp.ratio);
            c.require("worst_amplitude_rel_err", amp.relative_error, amp.relative_error < 0.05);
            let r = l1_contraction_check(&runs[0].snapshots, &runs[1].snapshots, 1e-8)?;
            c.require("max_l1_increase", r.worst_increase, r.pass);
        }
    }
    Ok(())
}

fn regularity_properties(c: &mut Check) -> Result<()> {
    let p = SigmaParams::new(1, 1.0)?;
    let u0 = GridField::from_fn(p, 40.0, 2048, |x| if x[0].abs() < 5.0 { 1.0 } else { 0.0 })?;
    let log = Nonlinearity::new(NonlinearityKind::Log1p);
    let tr = evolve_semigroup(&u0, 0.5, 500, &log, &StepOptions::default(), &[]).map_err(|e| e.error)?;
    let rep = spectral_smoothness(tr.last(), 8.0);
    c.note("envelope_slope", rep.algebraic_slope);
    c.require("envelope_beats_q8", if rep.beats_q { 1.0 } else { 0.0 }, rep.beats_q);

    let nl = Nonlinearity::new(NonlinearityKind::Power { m: 2.0 }).regularize(1e-6)?;
    let grid: Vec<f64> = (0..20).map(|k| 0.1 * k as f64).collect();
    let times: Vec<f64> = (0..=16).map(|k| 0.5 + k as f64 / 32.0).collect();
    let runs: Vec<(f64, f64)> = [512usize, 1024]
        .par_iter()
        .map(|&n| {
            let u0 = GridField::from_fn(p, 32.0, n, |x| {
                if x[0].abs() < 4.0 {
                    (PI * x[0] / 8.0).cos().powi(2)
                } else {
                    0.0
                }
            })?;
            let tr = evolve_semigroup(&u0, 1.0, 200, &nl, &StepOptions::default(), &times).map_err(|e| e.error)?;
            let u = tr.last();
            let mask = positivity_interior(u, 0.1 * u.max_value(), 16);
            let d2 = second_difference_profile(u, &[0], &[2, 4, 8], Some(&mask))?;
            let spec = SamplingSpec { pairs_per_shell: 2000, ..SamplingSpec::for_grid(u) };
            let est = holder_estimate(&tr.snapshots[1..], &grid, &spec, 0.2)?;
            Ok((d2.slopes[0], est.alpha_star))
        })
        .collect::<Result<_>>()?;
    for (i, (slope, alpha)) in runs.iter().enumerate() {
        c.soft(&format!("min_second_difference_slope_{i}"), *slope, *slope > 1.0);
        c.soft(&format!("min_alpha_star_{i}"), *alpha, *alpha > 0.0);
    }
    let drift = (runs[0].1 - runs[1].1).abs();
    c.soft("alpha_star_refinement_drift", drift, drift <= 0.1 + 1e-12);
    Ok(())
}
