//! Empirical regularity and decay diagnostics on computed snapshots.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{sigma_norm, SpaceTimePoint};
use crate::grid::{GridField, Spectral};
use crate::kernel::io::write_atomic;
use crate::nonlinearity::{Nonlinearity, NonlinearityKind};

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SamplingSpec {
    pub seed: u64,
    pub pairs_per_shell: usize,
    /// Smallest σ-separation, at least four cells.
    pub min_sep: f64,
    /// Largest σ-separation, at most `L/8`.
    pub max_sep: f64,
    /// Pair points at different snapshot times.
    pub include_time: bool,
}

impl SamplingSpec {
    pub fn for_grid(f: &GridField) -> Self {
        Self { seed: 0, pairs_per_shell: 4000, min_sep: 4.0 * f.h(), max_sep: f.length() / 8.0, include_time: true }
    }
}

/// One sampled quotient ingredient.
#[derive(Debug, Clone, Copy)]
struct Pair {
    diff: f64,
    /// σ-distance divided by `max_sep`.
    r: f64,
    shell: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub alpha_grid: Vec<f64>,
    /// Lower σ-radius of each dyadic shell.
    pub shells: Vec<f64>,
    /// Sup of the quotient over all pairs, per α.
    pub seminorm: Vec<f64>,
    /// `[α][shell]` sup of the quotient.
    pub shell_seminorm: Vec<Vec<f64>>,
    pub alpha_star: f64,
    pub growth_threshold: f64,
    /// Distances in quotients are divided by this.
    pub reference_distance: f64,
    pub pairs: usize,
    pub seed: u64,
}

fn sample_pairs(traj: &[GridField], spec: &SamplingSpec) -> Result<(Vec<Pair>, Vec<f64>)> {
    let first = traj
        .first()
        .ok_or_else(|| Error::Analysis("Hölder estimation needs snapshots".into()))?;
    if traj.len() < 2 {
        return Err(Error::Analysis("Hölder estimation needs at least two snapshots".into()));
    }
    for s in traj {
        first.check_same_grid(s)?;
    }
    let h = first.h();
    let l = first.length();
    if spec.min_sep < 4.0 * h * (1.0 - 1e-12) || spec.max_sep > l / 8.0 * (1.0 + 1e-12) || spec.min_sep >= spec.max_sep {
        return Err(Error::Analysis(format!(
            "separations [{}, {}] outside the resolved range [{}, {}]",
            spec.min_sep,
            spec.max_sep,
            4.0 * h,
            l / 8.0
        )));
    }
    let p = *first.params();
    let dim = first.dim();
    let n = first.n();
    let times: Vec<f64> = traj.iter().map(|s| s.time_tag.unwrap_or(0.0)).collect();
    let mut shells = Vec::new();
    let mut r = spec.min_sep;
    while r < spec.max_sep {
        shells.push(r);
        r *= 2.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pairs = Vec::new();
    for &lo in &shells {
        let hi = (2.0 * lo).min(spec.max_sep);
        for _ in 0..spec.pairs_per_shell {
            let i = rng.gen_range(0..traj.len());
            let mut j = i;
            if spec.include_time && rng.gen_bool(0.5) {
                let cands: Vec<usize> = (0..traj.len())
                    .filter(|&c| (times[c] - times[i]).abs().powf(1.0 / p.sigma()) < hi)
                    .collect();
                j = cands[rng.gen_range(0..cands.len())];
            }
            let dt = times[j] - times[i];
            let ts = dt.abs().powf(1.0 / p.sigma());
            let dmin = (lo * lo - ts * ts).max(0.0).sqrt();
            let dmax = (hi * hi - ts * ts).max(0.0).sqrt();
            let d = if dmax > dmin { rng.gen_range(dmin..dmax) } else { 0.0 };
            let cells = (d / h).round() as usize;
            if cells == 0 && j == i {
                continue;
            }
            let axis = rng.gen_range(0..dim);
            let sign = if rng.gen_bool(0.5) { 1 } else { n - 1 };
            let idx = rng.gen_range(0..first.len());
            let mut mi = first.multi_index(idx);
            mi[axis] = (mi[axis] + cells * if sign == 1 { 1 } else { n - 1 }) % n;
            let other = mi.iter().fold(0, |acc, &v| acc * n + v);
            let mut dx = vec![0.0; dim];
            dx[axis] = cells as f64 * h;
            let dist = sigma_norm(&SpaceTimePoint::new(dx, dt), &p);
            if dist < spec.min_sep || dist >= spec.max_sep {
                continue;
            }
            let shell = ((dist / spec.min_sep).log2().floor() as usize).min(shells.len() - 1);
            let diff = (traj[i].values()[idx] - traj[j].values()[other]).abs();
            pairs.push(Pair { diff, r: dist / spec.max_sep, shell });
        }
    }
    Ok((pairs, shells))
}

/// Sup of `|u(Y₁) − u(Y₂)| / (|Y₁ − Y₂|_σ / max_sep)^α` over the sampled pairs.
pub fn holder_seminorm(traj: &[GridField], alpha: f64, spec: &SamplingSpec) -> Result<f64> {
    let (pairs, _) = sample_pairs(traj, spec)?;
    Ok(pairs.iter().map(|q| q.diff / q.r.powf(alpha)).fold(0.0, f64::max))
}

/// Seminorms on dyadic σ-shells for each α; `alpha_star` is the largest α
/// whose seminorm on the finest shell exceeds that on the third finest by
/// less than `growth_threshold` (relative), for it and every smaller α.
pub fn holder_estimate(
    traj: &[GridField],
    alpha_grid: &[f64],
    spec: &SamplingSpec,
    growth_threshold: f64,
) -> Result<HolderEstimate> {
    if alpha_grid.iter().any(|a| !(0.0..2.0).contains(a)) {
        return Err(Error::Analysis("candidate exponents must lie in [0, 2)".into()));
    }
    let (pairs, shells) = sample_pairs(traj, spec)?;
    let mut seminorm = Vec::new();
    let mut shell_seminorm = Vec::new();
    let mut alpha_star = 0.0f64;
    let mut still_ok = true;
    for &a in alpha_grid {
        let mut per = vec![0.0f64; shells.len()];
        for q in &pairs {
            per[q.shell] = per[q.shell].max(q.diff / q.r.powf(a));
        }
        seminorm.push(per.iter().copied().fold(0.0, f64::max));
        let filled: Vec<f64> = per.iter().copied().filter(|v| *v > 0.0).collect();
        if filled.len() >= 3 {
            let growth = filled[0] / filled[2] - 1.0;
            if still_ok && growth < growth_threshold {
                alpha_star = alpha_star.max(a);
            } else {
                still_ok = false;
            }
        }
        shell_seminorm.push(per);
    }
    Ok(HolderEstimate {
        alpha_grid: alpha_grid.to_vec(),
        shells,
        seminorm,
        shell_seminorm,
        alpha_star,
        growth_threshold,
        reference_distance: spec.max_sep,
        pairs: pairs.len(),
        seed: spec.seed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sups: Vec<f64>,
    /// Start of the asymptotic branch.
    pub t0: f64,
    pub window: (f64, f64),
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub gamma_p: f64,
    pub delta_p: f64,
    /// `|slope + γ_p|`.
    pub slope_error: f64,
}

impl DecayFit {
    pub fn relative_slope_error(&self) -> f64 {
        self.slope_error / self.gamma_p
    }
}

/// `γ_p = N/(N(m−1)+σp)` and `δ_p = σ p γ_p / N` for power-like `φ`.
pub fn decay_exponents(dim: usize, sigma: f64, m: f64, p: u32) -> (f64, f64) {
    let n = dim as f64;
    let gamma = n / (n * (m - 1.0) + sigma * p as f64);
    (gamma, sigma * p as f64 * gamma / n)
}

/// Log-log fit of the sup norm against `t` on the asymptotic branch: times
/// up to the first decrease that begins a run of five are dropped, then the
/// optional window is applied.
pub fn decay_exponent_fit(
    traj: &[GridField],
    nl: &Nonlinearity,
    p: u32,
    window: Option<(f64, f64)>,
) -> Result<DecayFit> {
    let m = match nl.kind() {
        NonlinearityKind::Linear => 1.0,
        NonlinearityKind::Power { m } => m,
        other => {
            return Err(Error::Analysis(format!("decay exponents need a power nonlinearity, got {other:?}")))
        }
    };
    let first = traj.first().ok_or_else(|| Error::Analysis("empty trajectory".into()))?;
    let (gamma_p, delta_p) = decay_exponents(first.dim(), first.params().sigma(), m, p);
    let mut pts: Vec<(f64, f64)> = traj
        .iter()
        .filter_map(|s| s.time_tag.filter(|t| *t > 0.0).map(|t| (t, s.sup_norm())))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = (0..pts.len().saturating_sub(5))
        .find(|&i| (i..i + 5).all(|k| pts[k + 1].1 < pts[k].1))
        .ok_or_else(|| Error::Analysis("sup-norm never decreases for 5 consecutive snapshots".into()))?;
    let start = start + 1;
    let t0 = pts[start].0;
    let (wlo, whi) = window.unwrap_or((0.0, f64::INFINITY));
    let sel: Vec<(f64, f64)> = pts[start..].iter().copied().filter(|(t, _)| *t >= wlo && *t <= whi).collect();
    if sel.len() < 3 {
        return Err(Error::Analysis("fewer than 3 snapshots in the fit window".into()));
    }
    if sel.windows(2).any(|w| w[1].1 > w[0].1) {
        return Err(Error::Analysis("sup-norm not monotone on the fit window (pre-asymptotic)".into()));
    }
    let span = sel.last().expect("nonempty").0 / sel[0].0;
    if span < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Analysis(format!("fit window spans {span:.2}x in time, need one decade")));
    }
    let lx: Vec<f64> = sel.iter().map(|(t, _)| t.ln()).collect();
    let ly: Vec<f64> = sel.iter().map(|(_, s)| s.ln()).collect();
    let (intercept, slope, residual) = fit_line(&lx, &ly);
    Ok(DecayFit {
        times: sel.iter().map(|v| v.0).collect(),
        sups: sel.iter().map(|v| v.1).collect(),
        t0,
        window: (sel[0].0, sel.last().expect("nonempty").0),
        slope,
        intercept,
        residual,
        gamma_p,
        delta_p,
        slope_error: (slope + gamma_p).abs(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AmplitudeReport {
    pub ratio: f64,
    pub expected: f64,
    pub relative_error: f64,
}

/// Sup-norm ratio of the runs from `2u₀` and `u₀`, geometric mean over
/// their common fit times, against `2^{δ_p}`.
pub fn amplitude_ratio(base: &DecayFit, doubled: &DecayFit) -> Result<AmplitudeReport> {
    let mut logs = Vec::new();
    for (t, s) in base.times.iter().zip(&base.sups) {
        if let Some(k) = doubled.times.iter().position(|u| (u - t).abs() <= 1e-9 * t) {
            logs.push((doubled.sups[k] / s).ln());
        }
    }
    if logs.is_empty() {
        return Err(Error::Analysis("the two fits share no snapshot times".into()));
    }
    let ratio = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
    let expected = 2f64.powf(base.delta_p);
    Ok(AmplitudeReport { ratio, expected, relative_error: (ratio - expected).abs() / expected })
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondDifferenceTable {
    pub axes: Vec<usize>,
    pub steps: Vec<usize>,
    pub h: Vec<f64>,
    /// `[axis][step]` sup of `|f(x+he) − 2f(x) + f(x−he)|` over the mask.
    pub sup: Vec<Vec<f64>>,
    /// Log-log slope of `sup` against `h`, per axis.
    pub slopes: Vec<f64>,
}

/// Interior of `{f > threshold}`: points whose `margin`-cell neighbourhood
/// along every axis stays above the threshold.
pub fn positivity_interior(f: &GridField, threshold: f64, margin: usize) -> Vec<bool> {
    let n = f.n();
    let shift = |idx: usize, axis: usize, k: isize| -> usize {
        let mut mi = f.multi_index(idx);
        mi[axis] = ((mi[axis] as isize + k).rem_euclid(n as isize)) as usize;
        mi.iter().fold(0, |acc, &v| acc * n + v)
    };
    (0..f.len())
        .map(|i| {
            (0..f.dim()).all(|a| {
                (-(margin as isize)..=margin as isize).all(|k| f.values()[shift(i, a, k)] > threshold)
            })
        })
        .collect()
}

pub fn second_difference_profile(
    f: &GridField,
    axes: &[usize],
    steps: &[usize],
    mask: Option<&[bool]>,
) -> Result<SecondDifferenceTable> {
    if steps.len() < 2 || steps.iter().any(|&s| s < 2 || s >= f.n() / 2) {
        return Err(Error::Analysis("need at least two steps, each of 2 cells to n/2".into()));
    }
    if axes.iter().any(|&a| a >= f.dim()) {
        return Err(Error::Analysis(format!("axis out of range for N = {}", f.dim())));
    }
    if let Some(m) = mask {
        if m.len() != f.len() {
            return Err(Error::GridMismatch("mask length differs from the grid".into()));
        }
    }
    let n = f.n();
    let v = f.values();
    let mut sup = Vec::new();
    let mut slopes = Vec::new();
    let hs: Vec<f64> = steps.iter().map(|&s| s as f64 * f.h()).collect();
    for &axis in axes {
        let row: Vec<f64> = steps
            .iter()
            .map(|&s| {
                (0..f.len())
                    .filter(|&i| mask.map_or(true, |m| m[i]))
                    .map(|i| {
                        let mut mi = f.multi_index(i);
                        let c = mi[axis];
                        mi[axis] = (c + s) % n;
                        let plus = mi.iter().fold(0, |acc, &x| acc * n + x);
                        mi[axis] = (c + n - s % n) % n;
                        let minus = mi.iter().fold(0, |acc, &x| acc * n + x);
                        (v[plus] - 2.0 * v[i] + v[minus]).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = row.iter().map(|s| s.max(1e-300).ln()).collect();
        slopes.push(fit_line(&lx, &ly).1);
        sup.push(row);
    }
    Ok(SecondDifferenceTable { axes: axes.to_vec(), steps: steps.to_vec(), h: hs, sup, slopes })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub worst_increase: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `‖u − ũ‖₁` at matched snapshots; passes when no step increases it by more
/// than `tol`.
pub fn l1_contraction_check(a: &[GridField], b: &[GridField], tol: f64) -> Result<ContractionReport> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::GridMismatch(format!("snapshot counts differ: {} vs {}", a.len(), b.len())));
    }
    let mut times = Vec::new();
    let mut distances = Vec::new();
    for (x, y) in a.iter().zip(b) {
        x.check_same_grid(y)?;
        if x.time_tag != y.time_tag {
            return Err(Error::GridMismatch(format!("snapshot times differ: {:?} vs {:?}", x.time_tag, y.time_tag)));
        }
        times.push(x.time_tag.unwrap_or(0.0));
        distances.push(x.lin_comb(1.0, y, -1.0).l1_norm());
    }
    let worst_increase = distances.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let worst_increase = if worst_increase.is_finite() { worst_increase } else { 0.0 };
    Ok(ContractionReport { times, distances, worst_increase, tolerance: tol, pass: worst_increase <= tol })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    /// Shell wavenumbers `|ξ|` (integer-radius shells, zero mode excluded).
    pub xi: Vec<f64>,
    /// Nonincreasing envelope of `|û|/n^N` per shell.
    pub envelope: Vec<f64>,
    pub floor: f64,
    pub band: (f64, f64),
    /// Slope of `log envelope` against `log |ξ|` on the band.
    pub algebraic_slope: f64,
    /// Slope of `log envelope` against `|ξ|` on the band.
    pub exponential_slope: f64,
    pub floor_reached: bool,
    pub q: f64,
    /// Band slope steeper than `−q`.
    pub beats_q: bool,
}

/// Envelope of the Fourier coefficients on integer shells. When the envelope
/// drops below the round-off floor the band is the top quarter of the shells
/// above it; otherwise it is the octave `[n/16, n/8]`.
pub fn spectral_smoothness(f: &GridField, q: f64) -> SpectralReport {
    let sp = Spectral::for_field(f);
    let c = sp.forward(f.values());
    let n = f.n();
    let total = f.len() as f64;
    let nshell = n / 2;
    let mut raw = vec![0.0f64; nshell + 1];
    for (idx, ck) in c.iter().enumerate() {
        let mi = f.multi_index(idx);
        let r2: f64 = mi.iter().map(|&k| (crate::grid::signed_frequency(k, n) as f64).powi(2)).sum();
        let shell = r2.sqrt().round() as usize;
        if shell >= 1 && shell <= nshell {
            raw[shell] = raw[shell].max(ck.norm() / total);
        }
    }
    let mut env = raw.clone();
    for k in (1..nshell).rev() {
        env[k] = env[k].max(env[k + 1]);
    }
    let top = env[1].max(1e-300);
    let floor = 1e-13 * top.max(c[0].norm() / total);
    let last = (1..=nshell).rev().find(|&k| env[k] > floor).unwrap_or(1);
    let floor_reached = last < nshell;
    // Unresolved fields alias near Nyquist (a discrete jump has a flat
    // Dirichlet spectrum there), so fit one octave well below it instead.
    let (first, last) = if floor_reached {
        ((last * 3 / 4).max(1).min(last.saturating_sub(3).max(1)), last)
    } else {
        ((nshell / 8).max(1), (nshell / 4).max(2))
    };
    let dk = 2.0 * std::f64::consts::PI / f.length();
    let band: Vec<usize> = (first..=last).collect();
    let (alg, ex) = if band.len() >= 2 {
        let lx: Vec<f64> = band.iter().map(|&k| (k as f64 * dk).ln()).collect();
        let xs: Vec<f64> = band.iter().map(|&k| k as f64 * dk).collect();
        let ly: Vec<f64> = band.iter().map(|&k| env[k].ln()).collect();
        (fit_line(&lx, &ly).1, fit_line(&xs, &ly).1)
    } else {
        (f64::NEG_INFINITY, f64::NEG_INFINITY)
    };
    SpectralReport {
        xi: (1..=nshell).map(|k| k as f64 * dk).collect(),
        envelope: env[1..].to_vec(),
        floor,
        band: (first as f64 * dk, last as f64 * dk),
        algebraic_slope: alg,
        exponential_slope: ex,
        floor_reached,
        q,
        beats_q: alg < -q,
    }
}

pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(report)?)
}

/// Comma-separated table with a header row.
pub fn write_csv_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SigmaParams;

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.25 * v).collect();
        let (a, b, r) = fit_line(&x, &y);
        assert!((a - 1.5).abs() < 1e-14 && (b + 0.25).abs() < 1e-14 && r < 1e-14);
    }

    #[test]
    fn decay_exponents_match_formula() {
        let (g, d) = decay_exponents(1, 1.0, 2.0, 1);
        assert!((g - 0.5).abs() < 1e-15 && (d - 0.5).abs() < 1e-15);
        let (g, _) = decay_exponents(1, 0.5, 2.0, 1);
        assert!((g - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn positivity_mask_shrinks_by_margin() {
        let p = SigmaParams::new(1, 1.0).unwrap();
        let f = GridField::from_fn(p, 16.0, 16, |x| if x[0].abs() < 3.5 { 1.0 } else { 0.0 }).unwrap();
        let m0 = positivity_interior(&f, 0.5, 0).iter().filter(|b| **b).count();
        let m2 = positivity_interior(&f, 0.5, 2).iter().filter(|b| **b).count();
        assert_eq!(m0, 7);
        assert_eq!(m2, 3);
    }
}
