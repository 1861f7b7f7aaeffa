//! Implicit Euler (resolvent) and frozen-slope IMEX stepping for
//! `∂_t u + (−Δ)^{σ/2} φ(u) = 0` on the periodic grid.

use std::fmt;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridField, Spectral};
use crate::laplacian::FractionalOperator;
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepReport {
    pub newton_iterations: usize,
    pub residual: f64,
    pub mass_drift: f64,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone)]
pub struct StepOptions {
    /// L² tolerance on the resolvent residual.
    pub tol: f64,
    pub max_newton: usize,
    pub max_krylov: usize,
    pub operator: Option<FractionalOperator>,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_newton: 50, max_krylov: 400, operator: None }
    }
}

/// `L = (−Δ)^{σ/2}` with cached transforms.
struct Operator {
    sp: Spectral,
    symbol: Vec<f64>,
    quadrature: Option<FractionalOperator>,
}

impl Operator {
    fn new(proto: &GridField, op: Option<&FractionalOperator>) -> Result<Self> {
        let sigma = proto.params().sigma();
        let order = op.map(|o| o.order()).unwrap_or(sigma);
        let sp = Spectral::for_field(proto);
        let symbol = sp.wavenumbers(proto.length()).iter().map(|x| x.powf(order)).collect();
        let quadrature = match op {
            Some(o @ FractionalOperator::Quadrature(_)) => Some(o.clone()),
            _ => None,
        };
        Ok(Self { sp, symbol, quadrature })
    }

    fn apply(&self, f: &GridField) -> Result<GridField> {
        if let Some(q) = &self.quadrature {
            return q.apply(f);
        }
        let mut c = self.sp.forward(f.values());
        for (ci, l) in c.iter_mut().zip(&self.symbol) {
            *ci *= l;
        }
        f.with_values(self.sp.inverse(c))
    }

    /// `(c + τ a λ)^{-1}` per mode.
    fn resolve(&self, f: &[f64], c: f64, ta: f64) -> Vec<f64> {
        let mut hat: Vec<Complex64> = self.sp.forward(f);
        for (h, l) in hat.iter_mut().zip(&self.symbol) {
            *h /= c + ta * l;
        }
        self.sp.inverse(hat)
    }
}

/// Solve `u + τ L φ(u) = g`.
///
/// Newton runs on `w = φ(u)`, where the system `β(w) + τ L w = g` has the
/// symmetric positive definite Jacobian `diag(β'(w)) + τ L`. The returned
/// field is `g − τ L w`, so its mean equals that of `g`.
pub fn implicit_euler_step(
    g: &GridField,
    tau: f64,
    nl: &Nonlinearity,
    opts: &StepOptions,
) -> Result<(GridField, StepReport)> {
    let op = Operator::new(g, opts.operator.as_ref())?;
    resolvent(g, tau, nl, opts, &op)
}

fn resolvent(
    g: &GridField,
    tau: f64,
    nl: &Nonlinearity,
    opts: &StepOptions,
    op: &Operator,
) -> Result<(GridField, StepReport)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
    }
    nl.require_nondegenerate()?;
    let mut w = g.map(|s| nl.phi(s));
    if w.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Nonlinearity(format!(
            "data leave the domain of '{}' (range [{}, {}])",
            nl.name(),
            g.min_value(),
            g.max_value()
        )));
    }
    let residual_of = |w: &GridField| -> Result<(GridField, f64)> {
        let lw = op.apply(w)?;
        let mut r = w.map(|v| nl.beta(v));
        for ((ri, li), gi) in r.values_mut().iter_mut().zip(lw.values()).zip(g.values()) {
            *ri += tau * li - gi;
        }
        let norm = r.l2_norm();
        Ok((r, if norm.is_finite() { norm } else { f64::INFINITY }))
    };
    let (mut r, mut res) = residual_of(&w)?;
    let mut iterations = 0;
    while res >= opts.tol {
        if iterations == opts.max_newton {
            return Err(Error::NewtonStagnation { iterations, residual: res });
        }
        iterations += 1;
        let bp: Vec<f64> = w.values().iter().map(|&v| nl.beta_prime(v)).collect();
        let delta = krylov(op, &bp, tau, &r, opts.max_krylov, 1e-3 * opts.tol.min(res))?;
        let mut step = 1.0;
        loop {
            let trial = w.lin_comb(1.0, &delta, -step);
            let (rt, rest) = residual_of(&trial)?;
            if rest < res || step < 1e-6 {
                if rest >= res {
                    return Err(Error::NewtonStagnation { iterations, residual: res });
                }
                w = trial;
                r = rt;
                res = rest;
                break;
            }
            step *= 0.5;
        }
    }
    let lw = op.apply(&w)?;
    let u = g.lin_comb(1.0, &lw, -tau);
    let report = StepReport {
        newton_iterations: iterations,
        residual: res,
        mass_drift: (u.mean() - g.mean()).abs(),
        min_value: u.min_value(),
        max_value: u.max_value(),
    };
    Ok((u, report))
}

/// Preconditioned CG for `(diag(b) + τ L) x = r`, with the preconditioner
/// `D^{1/2} (1 + τ d̄ L)^{-1} D^{1/2}`, `D = diag(1/b)`, `d̄ = 1/mean(b)`.
fn krylov(op: &Operator, b: &[f64], tau: f64, r: &GridField, max_it: usize, atol: f64) -> Result<GridField> {
    let dbar = b.len() as f64 / b.iter().sum::<f64>();
    let sq: Vec<f64> = b.iter().map(|v| 1.0 / v.max(1e-12).sqrt()).collect();
    let precond = |v: &[f64]| -> Vec<f64> {
        let scaled: Vec<f64> = v.iter().zip(&sq).map(|(a, s)| a * s).collect();
        let z = op.resolve(&scaled, 1.0, tau * dbar);
        z.iter().zip(&sq).map(|(a, s)| a * s).collect()
    };
    let matvec = |x: &GridField| -> Result<GridField> {
        let lx = op.apply(x)?;
        let vals = x
            .values()
            .iter()
            .zip(lx.values())
            .zip(b)
            .map(|((xi, li), bi)| xi * bi + tau * li)
            .collect();
        x.with_values(vals)
    };
    let vol = r.cell_volume();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * vol;
    let mut x = r.zeros_like();
    let mut res = r.values().to_vec();
    let mut z = precond(&res);
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    for _ in 0..max_it {
        if dot(&res, &res).sqrt() < atol {
            break;
        }
        let pf = r.with_values(p.clone())?;
        let ap = matvec(&pf)?;
        let pap = dot(&p, ap.values());
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for (xi, pi) in x.values_mut().iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, ai) in res.iter_mut().zip(ap.values()) {
            *ri -= alpha * ai;
        }
        z = precond(&res);
        let rz_new = dot(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub scheme: String,
    pub tau: f64,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<GridField>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    fn new(scheme: &str, tau: f64, u0: &GridField) -> Self {
        let mut first = u0.clone();
        first.time_tag = Some(0.0);
        Self { scheme: scheme.into(), tau, times: vec![0.0], snapshots: vec![first], reports: Vec::new() }
    }

    fn record(&mut self, t: f64, u: &GridField) {
        let mut snap = u.clone();
        snap.time_tag = Some(t);
        self.times.push(t);
        self.snapshots.push(snap);
    }

    pub fn last(&self) -> &GridField {
        self.snapshots.last().expect("trajectory holds the initial state")
    }
}

/// Failed evolution with everything computed before the failure.
#[derive(Debug)]
pub struct TrajectoryError {
    pub error: Error,
    pub partial: Trajectory,
}

impl fmt::Display for TrajectoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.partial.reports.len())
    }
}

impl std::error::Error for TrajectoryError {}

impl From<TrajectoryError> for Error {
    fn from(e: TrajectoryError) -> Self {
        e.error
    }
}

/// Steps whose end times are closest to the requested times; every step when
/// none are requested. The final step is always recorded.
fn snapshot_steps(times: &[f64], tau: f64, n_steps: usize) -> Vec<bool> {
    let mut keep = vec![times.is_empty(); n_steps + 1];
    for &t in times {
        let k = (t / tau).round().clamp(0.0, n_steps as f64) as usize;
        keep[k] = true;
    }
    keep[n_steps] = true;
    keep
}

fn check_steps(t_final: f64, n_steps: usize) -> Result<f64> {
    if !(t_final > 0.0 && t_final.is_finite()) || n_steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "need T > 0 and n_steps >= 1, got T = {t_final}, n_steps = {n_steps}"
        )));
    }
    Ok(t_final / n_steps as f64)
}

/// Crandall–Liggett stepping with uniform `τ = T / n_steps`.
pub fn evolve_semigroup(
    u0: &GridField,
    t_final: f64,
    n_steps: usize,
    nl: &Nonlinearity,
    opts: &StepOptions,
    snapshot_times: &[f64],
) -> std::result::Result<Trajectory, TrajectoryError> {
    let tau = check_steps(t_final, n_steps).map_err(|error| TrajectoryError {
        error,
        partial: Trajectory::new("semigroup", 0.0, u0),
    })?;
    let mut traj = Trajectory::new("semigroup", tau, u0);
    let op = match Operator::new(u0, opts.operator.as_ref()) {
        Ok(op) => op,
        Err(error) => return Err(TrajectoryError { error, partial: traj }),
    };
    let keep = snapshot_steps(snapshot_times, tau, n_steps);
    let mut u = u0.clone();
    for step in 1..=n_steps {
        match resolvent(&u, tau, nl, opts, &op) {
            Ok((next, report)) => {
                u = next;
                traj.reports.push(report);
            }
            Err(error) => return Err(TrajectoryError { error, partial: traj }),
        }
        if keep[step] {
            traj.record(step as f64 * tau, &u);
        }
    }
    Ok(traj)
}

/// Exponential Euler on the frozen-slope linear equation
/// `∂_t u + a L u = a L f`, `f = u − φ(u)/a`, with `a = φ'(u(x₀))` at the
/// argmax `x₀` of `|u|`, refrozen every `refreeze_every` steps.
pub fn evolve_imex_frozen(
    u0: &GridField,
    t_final: f64,
    n_steps: usize,
    nl: &Nonlinearity,
    refreeze_every: usize,
    snapshot_times: &[f64],
) -> std::result::Result<Trajectory, TrajectoryError> {
    let fail = |error| TrajectoryError { error, partial: Trajectory::new("imex", 0.0, u0) };
    let tau = check_steps(t_final, n_steps).map_err(fail)?;
    if refreeze_every == 0 {
        return Err(fail(Error::InvalidParameter("refreeze_every must be >= 1".into())));
    }
    if nl.uniform_bounds(u0.min_value(), u0.max_value()).is_none() {
        return Err(fail(Error::Nonlinearity(format!(
            "'{}' has no uniform slope bounds on [{}, {}]",
            nl.name(),
            u0.min_value(),
            u0.max_value()
        ))));
    }
    let mut traj = Trajectory::new("imex", tau, u0);
    let sp = Spectral::for_field(u0);
    let sigma = u0.params().sigma();
    let lambda: Vec<f64> = sp.wavenumbers(u0.length()).iter().map(|x| x.powf(sigma)).collect();
    let keep = snapshot_steps(snapshot_times, tau, n_steps);
    let mut u = u0.clone();
    let mut decay = Vec::new();
    let mut a = 1.0;
    for step in 1..=n_steps {
        if (step - 1) % refreeze_every == 0 {
            let (imax, _) = u
                .values()
                .iter()
                .enumerate()
                .fold((0, -1.0), |m, (i, v)| if v.abs() > m.1 { (i, v.abs()) } else { m });
            a = nl.phi_prime(u.values()[imax]);
            decay = lambda.iter().map(|l| (-a * l * tau).exp()).collect();
        }
        let f: Vec<f64> = u.values().iter().map(|&s| s - nl.phi(s) / a).collect();
        let u_hat = sp.forward(u.values());
        let f_hat = sp.forward(&f);
        let next: Vec<Complex64> = u_hat
            .iter()
            .zip(&f_hat)
            .zip(&decay)
            .map(|((uh, fh), e)| uh * e + fh * (1.0 - e))
            .collect();
        let mass = u.mean();
        u = match u.with_values(sp.inverse(next)) {
            Ok(v) => v,
            Err(error) => return Err(TrajectoryError { error, partial: traj }),
        };
        traj.reports.push(StepReport {
            newton_iterations: 0,
            residual: 0.0,
            mass_drift: (u.mean() - mass).abs(),
            min_value: u.min_value(),
            max_value: u.max_value(),
        });
        if keep[step] {
            traj.record(step as f64 * tau, &u);
        }
    }
    Ok(traj)
}
