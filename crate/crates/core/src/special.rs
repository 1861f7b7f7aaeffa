//! Special functions used by the kernel and lattice code.
//!
//! Only the handful needed here: the radial Fourier kernels
//! `x^{1-d/2} J_{d/2-1}(x)` for small `d`, Riemann zeta and Dirichlet beta
//! on the real line, and the exponential-integrator functions `phi_k`.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Bessel functions J0 and J1 at the same argument.
pub fn bessel_j01(x: f64) -> (f64, f64) {
    let ax = x.abs();
    let (j0, j1) = if ax < 25.0 {
        miller_j01(ax)
    } else {
        (hankel_asymptotic(0.0, ax), hankel_asymptotic(1.0, ax))
    };
    if x < 0.0 {
        (j0, -j1)
    } else {
        (j0, j1)
    }
}

// Backward recurrence normalized by 1 = J0 + 2 sum J_2k.
fn miller_j01(x: f64) -> (f64, f64) {
    if x < 1e-8 {
        return (1.0 - 0.25 * x * x, 0.5 * x);
    }
    let mut start = (x + 20.0 + 8.0 * x.sqrt()) as usize;
    start += start % 2;
    let mut jp1 = 0.0_f64;
    let mut j = 1e-300_f64;
    let mut norm = 0.0;
    let mut j0 = 0.0;
    let mut j1 = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            j1 *= 1e-250;
        }
        // j now holds J_{k-1}
        let idx = k - 1;
        if idx == 1 {
            j1 = j;
        }
        if idx == 0 {
            j0 = j;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * j;
        }
    }
    let norm = norm + j0;
    (j0 / norm, j1 / norm)
}

fn hankel_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let chi = x - (0.5 * nu + 0.25) * PI;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        if term.abs() > last {
            break;
        }
        if k % 2 == 0 {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            p += sign * term;
        } else {
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            q += sign * term;
        }
        last = term.abs();
        if last < 1e-18 {
            break;
        }
        let odd = (2 * k + 1) as f64;
        term *= (mu - odd * odd) / ((k + 1) as f64 * 8.0 * x);
    }
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Radial Fourier kernel `x^{1-d/2} J_{d/2-1}(x)` for `d = 1..=6`.
///
/// With this kernel the `d`-dimensional transform of a radial function is
/// `(2 pi)^{d/2} * int_0^inf f(r) r^{d-1} radial_kernel(d, r s) dr`.
pub fn radial_kernel(d: usize, x: f64) -> f64 {
    match d {
        1 => SQRT_2_OVER_PI * x.cos(),
        2 => bessel_j01(x).0,
        3 => SQRT_2_OVER_PI * sinc(x),
        4 => {
            if x.abs() < 1e-4 {
                0.5 - x * x / 16.0
            } else {
                bessel_j01(x).1 / x
            }
        }
        5 => {
            // (sin x - x cos x)/x^3
            if x.abs() < 0.1 {
                let x2 = x * x;
                SQRT_2_OVER_PI
                    * (1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0)
            } else {
                SQRT_2_OVER_PI * (x.sin() - x * x.cos()) / (x * x * x)
            }
        }
        6 => {
            // J2(x)/x^2 = (2 J1/x - J0)/x^2
            if x.abs() < 0.05 {
                let x2 = x * x;
                0.125 - x2 / 96.0 + x2 * x2 / 3072.0
            } else {
                let (j0, j1) = bessel_j01(x);
                (2.0 * j1 / x - j0) / (x * x)
            }
        }
        _ => panic!("radial_kernel: unsupported dimension {d}"),
    }
}

/// Phase offset such that `radial_kernel(d, x)` changes sign near
/// `x = (k + offset) * pi` for large `x`.
pub fn radial_kernel_zero_offset(d: usize) -> f64 {
    let nu = 0.5 * d as f64 - 1.0;
    0.75 + 0.5 * nu
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Sum of the alternating series `sum_k (-1)^k a(k)` by the
/// Cohen–Rodriguez Villegas–Zagier acceleration.
pub fn alternating_sum<F: Fn(usize) -> f64>(a: F, n: usize) -> f64 {
    let mut d = (3.0 + 8.0_f64.sqrt()).powi(n as i32);
    d = 0.5 * (d + 1.0 / d);
    let mut b = -1.0;
    let mut c = -d;
    let mut s = 0.0;
    for k in 0..n {
        c = b - c;
        s += c * a(k);
        let kf = k as f64;
        let nf = n as f64;
        b *= (kf + nf) * (kf - nf) / ((kf + 0.5) * (kf + 1.0));
    }
    s / d
}

/// Riemann zeta on the real line, `s != 1`.
pub fn zeta(s: f64) -> f64 {
    if s == 1.0 {
        return f64::INFINITY;
    }
    if s.abs() < 1e-10 {
        return -0.5 - 0.5 * s * (2.0 * PI).ln();
    }
    if s < 0.0 {
        // functional equation
        let t = 1.0 - s;
        return 2f64.powf(s) * PI.powf(s - 1.0) * (0.5 * PI * s).sin() * gamma(t) * zeta(t);
    }
    let eta = alternating_sum(|k| ((k + 1) as f64).powf(-s), 40);
    eta / (1.0 - 2f64.powf(1.0 - s))
}

/// Dirichlet beta `sum_k (-1)^k (2k+1)^{-s}`, `s > 0`.
pub fn dirichlet_beta(s: f64) -> f64 {
    alternating_sum(|k| ((2 * k + 1) as f64).powf(-s), 40)
}

/// `phi_k(-z) = int_0^1 e^{-z v} (1-v)^{k-1} / (k-1)! dv` for `k = 0..=kmax`, `z >= 0`.
pub fn phi_functions(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z < 4.0 {
        // Taylor: phi_k(x) = sum_m x^m / (m+k)!
        let x = -z;
        for (k, slot) in out.iter_mut().enumerate() {
            let mut fact = 1.0;
            for j in 1..=k {
                fact *= j as f64;
            }
            let mut term = 1.0 / fact;
            let mut sum = term;
            for m in 1..200 {
                term *= x / (m + k) as f64;
                sum += term;
                if term.abs() < 1e-18 * sum.abs() {
                    break;
                }
            }
            *slot = sum;
        }
    } else {
        out[0] = (-z).exp();
        let mut fact = 1.0;
        for k in 0..kmax {
            // phi_{k+1}(x) = (phi_k(x) - 1/k!) / x
            out[k + 1] = (out[k] - 1.0 / fact) / (-z);
            fact *= (k + 1) as f64;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from standard tables (Abramowitz & Stegun 9.1).
    #[test]
    fn bessel_reference_values() {
        let cases = [
            (1.0, 0.765_197_686_557_966_6, 0.440_050_585_744_933_5),
            (5.0, -0.177_596_771_314_338_3, -0.327_579_137_591_465_2),
            (10.0, -0.245_935_764_451_348_3, 0.043_472_746_168_861_44),
            (30.0, -0.086_367_983_581_040_2, -0.118_751_062_616_623_05),
        ];
        for (x, j0, j1) in cases {
            let (a, b) = bessel_j01(x);
            assert!((a - j0).abs() < 1e-14, "J0({x}) = {a}");
            assert!((b - j1).abs() < 1e-14, "J1({x}) = {b}");
        }
    }

    #[test]
    fn bessel_continuous_across_switch() {
        for x in [20.0, 25.0, 30.0] {
            let (a0, a1) = miller_j01(x);
            let (b0, b1) = (hankel_asymptotic(0.0, x), hankel_asymptotic(1.0, x));
            assert!((a0 - b0).abs() < 1e-14, "x = {x}");
            assert!((a1 - b1).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn radial_kernel_small_argument_limits() {
        // x^{1-d/2} J_{d/2-1}(x) -> 2^{1-d/2} / Gamma(d/2) as x -> 0
        for d in 1..=6 {
            let expect = 2f64.powf(1.0 - 0.5 * d as f64) / gamma(0.5 * d as f64);
            assert!((radial_kernel(d, 1e-9) - expect).abs() < 1e-12, "d = {d}");
        }
    }

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-13);
        assert!((zeta(0.0) + 0.5).abs() < 1e-15);
        assert!((zeta(-1.0) + 1.0 / 12.0).abs() < 1e-13);
        assert!((zeta(0.5) + 1.460_354_508_809_586_8).abs() < 1e-12);
        assert!((zeta(-0.5) + 0.207_886_224_977_354_57).abs() < 1e-12);
    }

    #[test]
    fn beta_known_values() {
        assert!((dirichlet_beta(1.0) - PI / 4.0).abs() < 1e-14);
        // Catalan's constant
        assert!((dirichlet_beta(2.0) - 0.915_965_594_177_219).abs() < 1e-14);
    }

    #[test]
    fn phi_functions_agree_across_branches() {
        for z in [3.999, 4.0001] {
            let p = phi_functions(z, 4);
            let direct: Vec<f64> = (0..=4)
                .map(|k| {
                    // midpoint quadrature of the integral definition
                    let m = 20000;
                    let mut s = 0.0;
                    let mut fact = 1.0;
                    for j in 1..k.max(1) {
                        fact *= j as f64;
                    }
                    for i in 0..m {
                        let v = (i as f64 + 0.5) / m as f64;
                        s += (-z * v).exp() * (1.0 - v).powi(k as i32 - 1);
                    }
                    if k == 0 {
                        (-z).exp()
                    } else {
                        s / m as f64 / fact
                    }
                })
                .collect();
            for k in 0..=4 {
                assert!((p[k] - direct[k]).abs() < 1e-8, "k={k} z={z}");
            }
        }
    }
}
