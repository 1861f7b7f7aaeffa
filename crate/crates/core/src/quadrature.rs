//! Numerical integration: adaptive Gauss–Kronrod, Gauss–Legendre panels and
//! the oscillatory radial (Hankel-type) transform used for kernel profiles.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{alternating_sum, radial_kernel, radial_kernel_zero_offset};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_2,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_73,
    0.054_755_896_574_351_996,
    0.075_039_674_810_919_95,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_85,
    0.134_709_217_311_473_33,
    0.142_775_938_577_060_08,
    0.147_739_104_901_338_5,
    0.149_445_554_002_916_9,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

/// One 21-point Kronrod panel: (integral, error estimate).
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[10];
    let mut rg = 0.0;
    for i in 0..10 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[i] * s;
        if i % 2 == 1 {
            rg += WG[i / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol*|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (v, e) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, err: e });
    let mut total = v;
    let mut total_err = e;
    let max_panels = 4000;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= max_panels {
            return Err(Error::Quadrature {
                s: a,
                detail: format!(
                    "adaptive quadrature on [{a}, {b}] exhausted {max_panels} panels (err {total_err:e})"
                ),
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // interval can no longer be split in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(&f, worst.a, m);
        let (v2, e2) = gk21(&f, m, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel { a: worst.a, b: m, value: v1, err: e1 });
        heap.push(Panel { a: m, b: worst.b, value: v2, err: e2 });
    }
    // re-sum for roundoff
    let (sum, err) = heap
        .iter()
        .fold((0.0, 0.0), |(s, e), p| (s + p.value, e + p.err));
    Ok((sum, err))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Fixed Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(nodes: &(Vec<f64>, Vec<f64>), a: f64, b: f64) -> Vec<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    nodes
        .0
        .iter()
        .zip(&nodes.1)
        .map(|(x, w)| (c + h * x, h * w))
        .collect()
}

/// Integral over `[0, inf)` of `f(r) r^{d-1} K_d(r s)`, where `K_d` is the
/// radial Fourier kernel of dimension `d` and `f` is negligible beyond `r_cut`.
///
/// For large `r_cut * s` the integral is split at the asymptotic zeros of the
/// kernel; after a fixed number of half-oscillations the remaining
/// alternating contributions are summed by series acceleration.
pub fn radial_transform<F: Fn(f64) -> f64>(
    d: usize,
    f: F,
    s: f64,
    r_cut: f64,
    abs_tol: f64,
) -> Result<f64> {
    let g = |r: f64| f(r) * r.powi(d as i32 - 1) * radial_kernel(d, r * s);
    let err = |detail: String| Error::Quadrature { s, detail };
    if s == 0.0 || s * r_cut / PI < 80.0 {
        // few oscillations: split into moderate panels and integrate directly
        let n_panels = ((s * r_cut / PI).ceil() as usize).clamp(1, 80);
        let mut total = 0.0;
        let mut a = 0.0;
        // geometric first panel handles endpoint cusps at r = 0
        let width = r_cut / n_panels as f64;
        for k in 0..n_panels {
            let b = if k + 1 == n_panels { r_cut } else { a + width };
            let (v, _) = integrate(g, a, b, abs_tol / n_panels as f64, 1e-14)
                .map_err(|e| err(e.to_string()))?;
            total += v;
            a = b;
        }
        return Ok(total);
    }
    let off = radial_kernel_zero_offset(d);
    let zero = |k: usize| (k as f64 + off) * PI / s;
    let direct_pieces = 24;
    let accel_terms = 40;
    let piece = |k: usize| -> Result<f64> {
        let (a, b) = if k == 0 { (0.0, zero(0)) } else { (zero(k - 1), zero(k)) };
        let b = b.min(r_cut);
        if a >= r_cut {
            return Ok(0.0);
        }
        integrate(g, a, b, abs_tol * 1e-2, 1e-14)
            .map(|(v, _)| v)
            .map_err(|e| err(e.to_string()))
    };
    let mut head = 0.0;
    for k in 0..direct_pieces {
        head += piece(k)?;
    }
    let mut tail_terms = Vec::with_capacity(accel_terms);
    for j in 0..accel_terms {
        tail_terms.push(piece(direct_pieces + j)?);
    }
    // pieces alternate in sign; pass (-1)^j-normalised magnitudes
    let sign0 = if tail_terms[0] >= 0.0 { 1.0 } else { -1.0 };
    let alt = |n: usize| {
        alternating_sum(
            |j| sign0 * if j % 2 == 0 { tail_terms[j] } else { -tail_terms[j] },
            n,
        )
    };
    let t_full = sign0 * alt(accel_terms);
    let t_half = sign0 * alt(accel_terms * 3 / 4);
    if (t_full - t_half).abs() > 1e3 * abs_tol.max(1e-15) {
        return Err(err(format!(
            "alternating tail acceleration unstable: {t_full:e} vs {t_half:e}"
        )));
    }
    Ok(head + t_full)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = gauss_legendre(12);
        for deg in 0..24 {
            let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((s - exact).abs() < 1e-14, "deg {deg}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let (v, _) = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_transform_of_exponential() {
        // int_0^inf e^{-r} cos(r s) dr = 1/(1+s^2)
        let scale = (std::f64::consts::FRAC_2_PI).sqrt();
        for s in [0.0, 0.3, 5.0, 50.0, 400.0] {
            let v = radial_transform(1, |r: f64| (-r).exp(), s, 60.0, 1e-15).unwrap() / scale;
            let exact = 1.0 / (1.0 + s * s);
            assert!((v - exact).abs() < 1e-7 * exact, "s={s}: {v} vs {exact}");
        }
    }
}
