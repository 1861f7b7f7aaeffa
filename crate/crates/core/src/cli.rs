//! Experiment driver behind the `fracdiff` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::acceptance::{self, Context, Status};
use crate::config::{to_ini_string, ExperimentConfig, RawConfig, Scheme, Subcommand};
use crate::error::{Error, Result};
use crate::extension::{
    extend_field, solve_elliptic_variational, spectral_energy, weighted_energy, VariationalOptions, YGrid,
};
use crate::grid::{read_snapshots, write_snapshots, GridField};
use crate::kernel::io::{write_atomic, write_profile, ProfileCache};
use crate::kernel::{
    build_psi_profile, cancellation_integral, verify_decay_bounds, DecaySampleSet, Half, ProfileGrid,
};
use crate::laplacian::{apply_quadrature, apply_spectral, calibrate, GridMeta, QuadratureScheme};
use crate::linear::{solve_duhamel, solve_spectral, DuhamelOptions, SourceTerm};
use crate::nonlinear::{evolve_imex_frozen, evolve_semigroup, StepOptions, Trajectory, TrajectoryError};
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};
use crate::plots::{line_plot, Axes, Series};
use crate::regularity::{
    decay_exponent_fit, holder_estimate, positivity_interior, second_difference_profile, spectral_smoothness,
    write_csv_table, write_json, SamplingSpec,
};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Soft checks report without failing the run.
    pub hard: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    pub config: RawConfig,
    pub artifacts: Vec<Artifact>,
    pub timings: BTreeMap<String, f64>,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
    /// Numerical failure that stopped the pipeline.
    pub error: Option<String>,
    pub pass: bool,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<PathBuf>,
    timings: BTreeMap<String, f64>,
    checks: Vec<CheckResult>,
    notes: Vec<String>,
}

impl<'a> Run<'a> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.cfg.output.join(name);
        self.files.push(p.clone());
        p
    }

    /// `value <= threshold` passes.
    fn check(&mut self, name: &str, value: f64, threshold: f64) {
        self.checks.push(CheckResult { name: name.into(), value, threshold, pass: value <= threshold, hard: true });
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.insert(stage.into(), start.elapsed().as_secs_f64());
        out
    }

    fn field(&mut self, stem: &str, f: &GridField) -> Result<()> {
        let bin = self.path(&format!("{stem}.grid"));
        f.write_binary(&bin)?;
        if f.dim() == 1 {
            let csv = self.path(&format!("{stem}.csv"));
            f.write_csv(&csv)?;
        }
        Ok(())
    }

    fn snapshots(&mut self, prefix: &str, snaps: &[GridField], parameters: serde_json::Value) -> Result<()> {
        let m = write_snapshots(&self.cfg.output, prefix, snaps, parameters)?;
        for e in &m.snapshots {
            self.files.push(self.cfg.output.join(&e.file));
        }
        self.files.push(self.cfg.output.join(format!("{prefix}.json")));
        Ok(())
    }

    fn plot(&mut self, name: &str, title: &str, xl: &str, yl: &str, axes: Axes, series: &[Series]) {
        if !self.cfg.plots {
            return;
        }
        let p = self.path(name);
        if let Err(e) = line_plot(&p, title, xl, yl, axes, series) {
            self.files.pop();
            self.notes.push(format!("plot {name} skipped: {e}"));
        }
    }
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Execute the configured pipeline and write `manifest.json` last.
/// Configuration errors are returned; numerical failures are recorded in
/// the manifest.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    fs::create_dir_all(&cfg.output)?;
    let mut run = Run { cfg, files: Vec::new(), timings: BTreeMap::new(), checks: Vec::new(), notes: Vec::new() };
    let resolved = run.path("config.ini");
    write_atomic(&resolved, to_ini_string(&cfg.raw).as_bytes())?;
    let start = Instant::now();
    let outcome = match cfg.subcommand {
        Subcommand::Kernel => kernel(&mut run),
        Subcommand::Laplacian => laplacian(&mut run),
        Subcommand::Linear => linear(&mut run),
        Subcommand::Solve => solve(&mut run),
        Subcommand::Extension => extension(&mut run),
        Subcommand::Analyze => analyze(&mut run),
        Subcommand::Acceptance => acceptance_matrix(&mut run),
    };
    let error = match outcome {
        Ok(()) => None,
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => Some(e.to_string()),
    };
    run.timings.insert("total".into(), start.elapsed().as_secs_f64());
    let mut artifacts = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for f in &run.files {
        if seen.insert(f.clone()) && f.exists() {
            let rel = f.strip_prefix(&cfg.output).unwrap_or(f);
            artifacts.push(Artifact { path: rel.display().to_string(), sha256: sha256_hex(f)? });
        }
    }
    let pass = error.is_none() && run.checks.iter().all(|c| c.pass || !c.hard);
    let manifest = RunManifest {
        subcommand: cfg.subcommand,
        config: cfg.raw.clone(),
        artifacts,
        timings: run.timings,
        checks: run.checks,
        notes: run.notes,
        error,
        pass,
    };
    write_atomic(&cfg.output.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn kernel(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let p = cfg.params()?;
    let cache = ProfileCache::new(&cfg.cache)?;
    let phi = run.timed("phi_profile", |_| cache.phi(&p, ProfileGrid::for_params(&p)))?;
    let psi = build_psi_profile(&phi)?;
    write_profile(&phi, &run.path("phi.csv"))?;
    run.files.push(cfg.output.join("phi.json"));
    write_profile(&psi, &run.path("psi.csv"))?;
    run.files.push(cfg.output.join("psi.json"));

    run.check("mass_error", (phi.total_mass() - 1.0).abs(), 1e-8);
    if cfg.sigma == 1.0 && cfg.dim <= 2 {
        let exact = |s: f64| {
            if cfg.dim == 1 {
                1.0 / (std::f64::consts::PI * (1.0 + s * s))
            } else {
                (1.0 + s * s).powf(-1.5) / (2.0 * std::f64::consts::PI)
            }
        };
        let worst = (0..=5000)
            .map(|i| 0.01 * i as f64)
            .map(|s| (phi.eval(s) - exact(s)).abs() / exact(s))
            .fold(0.0, f64::max);
        run.check("poisson_max_rel_error", worst, 1e-6);
    }
    let worst = run.timed("cancellation", |_| {
        let mut worst = 0.0f64;
        for (r, eps) in [(1.0, 0.1), (10.0, 0.01)] {
            for half in [Half::Plus, Half::Minus] {
                worst = worst.max(cancellation_integral(&psi, half, eps, r)?.abs());
            }
        }
        Ok(worst)
    })?;
    run.check("cancellation_max_abs", worst, 1e-6);
    let bounds = run.timed("decay_bounds", |_| verify_decay_bounds(&psi, &DecaySampleSet::default()))?;
    run.check("decay_bounds_max_drift", bounds.drift.iter().copied().fold(0.0, f64::max), 0.05);
    let worst_slope = (0..3).map(|q| (bounds.slopes[q] / bounds.expected_slopes[q] - 1.0).abs()).fold(0.0, f64::max);
    run.check("decay_slope_max_rel_error", worst_slope, 0.02);
    write_json(&run.path("decay_bounds.json"), &bounds)?;
    let pts = |k: &crate::kernel::KernelProfile| k.samples().filter(|(s, _)| *s > 0.0).map(|(s, v)| (s, v.abs())).collect();
    let series = [Series { label: "Phi", points: pts(&phi) }, Series { label: "|Psi|", points: pts(&psi) }];
    run.plot("profiles.svg", "self-similar profiles", "s", "value", Axes { log_x: true, log_y: true }, &series);
    Ok(())
}

fn laplacian(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let u0 = cfg.initial()?;
    run.field("input", &u0)?;
    let spectral = run.timed("spectral", |_| apply_spectral(&u0, cfg.sigma))?;
    run.field("spectral", &spectral)?;
    let scheme = calibrate(&QuadratureScheme::new(cfg.sigma)?, GridMeta::of(&u0))?;
    let quad = run.timed("quadrature", |_| apply_quadrature(&u0, &scheme))?;
    run.field("quadrature", &quad)?;
    let rel = quad.lin_comb(1.0, &spectral, -1.0).l2_norm() / spectral.l2_norm().max(f64::MIN_POSITIVE);
    run.check("quadrature_vs_spectral_rel_l2", rel, cfg.check_tol);
    write_json(&run.path("calibration.json"), &scheme.calibration)?;
    Ok(())
}

fn snapshot_times(cfg: &ExperimentConfig) -> Vec<f64> {
    if cfg.snapshots.is_empty() {
        (1..=10).map(|k| cfg.t_final * k as f64 / 10.0).collect()
    } else {
        cfg.snapshots.clone()
    }
}

fn linear(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let u0 = cfg.initial()?;
    let zero = SourceTerm::zero(&u0);
    let snaps = run.timed("spectral", |_| solve_spectral(&u0, &zero, cfg.t_final, cfg.steps))?;
    let times = snapshot_times(cfg);
    let keep: Vec<GridField> = snaps
        .iter()
        .filter(|s| {
            let t = s.time_tag.unwrap_or(0.0);
            t == 0.0 || times.iter().any(|x| (x - t).abs() <= 0.5 * cfg.t_final / cfg.steps as f64)
        })
        .cloned()
        .collect();
    run.snapshots("u", &keep, serde_json::json!({ "solver": "spectral" }))?;
    let last = snaps.last().expect("spectral solve returns the final state");
    let cache = ProfileCache::new(&cfg.cache)?;
    let p = cfg.params()?;
    let phi = cache.phi(&p, ProfileGrid::for_params(&p))?;
    let psi = build_psi_profile(&phi)?;
    let (d, report) =
        run.timed("duhamel", |_| solve_duhamel(&u0, &zero, cfg.t_final, &phi, &psi, DuhamelOptions::default()))?;
    run.field("duhamel_final", &d)?;
    run.check("duhamel_vs_spectral_linf", d.lin_comb(1.0, last, -1.0).sup_norm(), cfg.check_tol);
    write_json(&run.path("duhamel.json"), &report)?;
    Ok(())
}

fn evolve(
    cfg: &ExperimentConfig,
    u0: &GridField,
    nl: &Nonlinearity,
    times: &[f64],
) -> std::result::Result<Trajectory, TrajectoryError> {
    match cfg.scheme {
        Scheme::Semigroup => {
            let opts = StepOptions { tol: cfg.newton_tol, max_newton: cfg.max_newton, ..StepOptions::default() };
            evolve_semigroup(u0, cfg.t_final, cfg.steps, nl, &opts, times)
        }
        Scheme::Imex => evolve_imex_frozen(u0, cfg.t_final, cfg.steps, nl, cfg.refreeze, times),
    }
}

fn solve(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let u0 = cfg.initial()?;
    let nl = cfg.nonlinearity_for(&u0)?;
    let times = snapshot_times(cfg);
    let params = serde_json::json!({
        "nonlinearity": nl.name(),
        "epsilon": nl.epsilon_reg(),
        "scheme": cfg.scheme,
        "steps": cfg.steps,
    });
    let start = Instant::now();
    let result = evolve(cfg, &u0, &nl, &times);
    run.timings.insert("evolve".into(), start.elapsed().as_secs_f64());
    match result {
        Ok(traj) => finish_trajectory(run, &u0, &traj, params),
        Err(failure) => {
            run.snapshots("partial", &failure.partial.snapshots, params)?;
            Err(failure.error)
        }
    }
}

fn finish_trajectory(run: &mut Run, u0: &GridField, traj: &Trajectory, params: serde_json::Value) -> Result<()> {
    run.snapshots("u", &traj.snapshots, params)?;
    write_json(&run.path("trajectory.json"), traj)?;
    let rows: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|s| vec![s.time_tag.unwrap_or(0.0), s.mean(), s.l1_norm(), s.sup_norm(), s.min_value()])
        .collect();
    write_csv_table(&run.path("norms.csv"), &["t", "mean", "l1", "sup", "min"], &rows)?;
    let drift = traj.snapshots.iter().map(|s| (s.mean() - u0.mean()).abs()).fold(0.0, f64::max);
    run.check("mass_drift", drift, 1e-12 * (1.0 + u0.mean().abs()));
    let pts = rows.iter().filter(|r| r[0] > 0.0).map(|r| (r[0], r[3])).collect();
    run.plot("sup_norm.svg", "sup-norm decay", "t", "sup |u|", Axes { log_x: true, log_y: true }, &[Series { label: "sup", points: pts }]);
    Ok(())
}

fn extension(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let g = cfg.initial()?;
    let y = YGrid::graded(cfg.y_max, cfg.y_nodes, cfg.sigma)?;
    if cfg.nonlinearity == NonlinearityKind::Linear {
        let ext = run.timed("extend", |_| extend_field(&g, &y))?;
        let m = ext.write_slices(&cfg.output, "w")?;
        for e in &m.snapshots {
            run.files.push(cfg.output.join(&e.file));
        }
        run.files.push(cfg.output.join("w.json"));
        let neumann = ext.neumann_trace()?;
        run.field("neumann_trace", &neumann)?;
        let spectral = apply_spectral(&g, cfg.sigma)?;
        let rel = neumann.lin_comb(1.0, &spectral, -1.0).l2_norm() / spectral.l2_norm().max(f64::MIN_POSITIVE);
        run.check("neumann_vs_spectral_rel_l2", rel, cfg.check_tol);
        let energy = weighted_energy(&ext)?;
        let target = spectral_energy(&g);
        write_json(&run.path("energy.json"), &serde_json::json!({ "weighted": energy, "spectral": target }))?;
    } else {
        let nl = cfg.nonlinearity_for(&g)?;
        let sol = run.timed("variational", |_| solve_elliptic_variational(&g, &nl, &y, VariationalOptions::default()))?;
        run.field("trace_u", &sol.trace_u)?;
        let m = sol.field.write_slices(&cfg.output, "w")?;
        for e in &m.snapshots {
            run.files.push(cfg.output.join(&e.file));
        }
        run.files.push(cfg.output.join("w.json"));
        run.check("variational_residual", sol.residual, 1e-8);
        let rises = sol.energies.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        run.check("energy_increase", rises, 0.0);
        write_json(&run.path("energies.json"), &sol.energies)?;
    }
    Ok(())
}

fn analyze(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let input = cfg.input.clone().ok_or_else(|| Error::Config("analyze needs [analyze] input".into()))?;
    let (manifest, snaps) = read_snapshots(&input, &cfg.prefix)?;
    let last = snaps.last().ok_or_else(|| Error::Analysis("no snapshots".into()))?;
    let mut report = serde_json::Map::new();
    report.insert("source".into(), serde_json::to_value(&manifest.parameters)?);

    let nl = Nonlinearity::new(cfg.nonlinearity);
    match decay_exponent_fit(&snaps, &nl, cfg.p, None) {
        Ok(fit) => {
            let rows: Vec<Vec<f64>> = fit.times.iter().zip(&fit.sups).map(|(t, s)| vec![*t, *s]).collect();
            write_csv_table(&run.path("decay.csv"), &["t", "sup"], &rows)?;
            let fitted: Vec<(f64, f64)> =
                fit.times.iter().map(|t| (*t, (fit.intercept + fit.slope * t.ln()).exp())).collect();
            let series = [
                Series { label: "sup |u|", points: fit.times.iter().copied().zip(fit.sups.iter().copied()).collect() },
                Series { label: "fit", points: fitted },
            ];
            run.plot("decay.svg", "sup-norm decay", "t", "sup |u|", Axes { log_x: true, log_y: true }, &series);
            report.insert("decay".into(), serde_json::to_value(&fit)?);
        }
        Err(e) => run.notes.push(format!("decay fit not performed: {e}")),
    }

    let spec = spectral_smoothness(last, cfg.q);
    let rows: Vec<Vec<f64>> = spec.xi.iter().zip(&spec.envelope).map(|(a, b)| vec![*a, *b]).collect();
    write_csv_table(&run.path("envelope.csv"), &["xi", "envelope"], &rows)?;
    let pts = spec.xi.iter().copied().zip(spec.envelope.iter().copied()).collect();
    run.plot("envelope.svg", "spectral envelope", "|xi|", "|u_hat|", Axes { log_x: true, log_y: true }, &[Series { label: "envelope", points: pts }]);
    report.insert("spectral".into(), serde_json::to_value(&spec)?);

    let positive: Vec<GridField> = snaps.iter().filter(|s| s.time_tag.is_some_and(|t| t > 0.0)).cloned().collect();
    if positive.len() >= 2 {
        let grid: Vec<f64> = (0..).map(|k| k as f64 * cfg.alpha_step).take_while(|a| *a < 2.0).collect();
        let sampling = SamplingSpec { seed: cfg.seed, pairs_per_shell: cfg.pairs, ..SamplingSpec::for_grid(last) };
        match holder_estimate(&positive, &grid, &sampling, 0.2) {
            Ok(h) => {
                let rows: Vec<Vec<f64>> = h.alpha_grid.iter().zip(&h.seminorm).map(|(a, s)| vec![*a, *s]).collect();
                write_csv_table(&run.path("holder.csv"), &["alpha", "seminorm"], &rows)?;
                let pts = rows.iter().map(|r| (r[0], r[1])).collect();
                run.plot("holder.svg", "seminorm vs alpha", "alpha", "seminorm", Axes { log_x: false, log_y: true }, &[Series { label: "seminorm", points: pts }]);
                report.insert("holder".into(), serde_json::to_value(&h)?);
            }
            Err(e) => run.notes.push(format!("Hölder estimate not performed: {e}")),
        }
    } else {
        run.notes.push("Hölder estimate needs two snapshots with t > 0".into());
    }

    let steps: Vec<usize> = [2usize, 4, 8].into_iter().filter(|s| *s < last.n() / 2).collect();
    if steps.len() >= 2 {
        let mask = (last.min_value() >= 0.0).then(|| positivity_interior(last, 0.1 * last.max_value(), 16));
        if mask.as_ref().map_or(true, |m| m.iter().any(|b| *b)) {
            let axes: Vec<usize> = (0..last.dim()).collect();
            let table = second_difference_profile(last, &axes, &steps, mask.as_deref())?;
            report.insert("second_differences".into(), serde_json::to_value(&table)?);
        }
    }
    write_json(&run.path("analysis.json"), &serde_json::Value::Object(report))?;
    Ok(())
}

fn acceptance_matrix(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let ctx = Context { cache: Some(ProfileCache::new(&cfg.cache)?) };
    let mut outcomes = Vec::new();
    for &id in &cfg.criteria {
        let o = acceptance::run_criterion(id, &ctx);
        println!("{}", o.line());
        run.checks.push(CheckResult {
            name: format!("criterion_{id}"),
            value: if o.passed() { 0.0 } else { 1.0 },
            threshold: 0.0,
            pass: o.passed(),
            hard: o.status != Status::SoftFail,
        });
        run.timings.insert(format!("criterion_{id}"), o.seconds);
        outcomes.push(o);
    }
    write_json(&run.path("acceptance.json"), &outcomes)?;
    Ok(())
}

/// Exit status for a finished or failed run: 0 pass, 1 numerical failure,
/// 2 configuration error.
pub fn exit_code(result: &Result<RunManifest>) -> i32 {
    match result {
        Ok(m) if m.pass => 0,
        Ok(_) => 1,
        Err(Error::Config(_)) => 2,
        Err(_) => 1,
    }
}
