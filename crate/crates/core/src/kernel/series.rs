//! Large-`s` power series of the kernel profiles,
//! `Φ(s) = Σ_k c_k s^{-kσ-N}`, convergent for `σ < 1` and asymptotic
//! otherwise. `Ψ` has coefficients `-k c_k`.

use std::f64::consts::PI;

use crate::geometry::SigmaParams;
use crate::special::ln_gamma;

const MAX_TERMS: usize = 120;

#[derive(Debug, Clone)]
pub struct ProfileSeries {
    dim: f64,
    sigma: f64,
    // (ln|c_k|, sign), k = 1..
    log_coeffs: Vec<(f64, f64)>,
}

impl ProfileSeries {
    pub fn phi(p: &SigmaParams) -> Self {
        Self::build(p, |_| 1.0)
    }

    pub fn psi(p: &SigmaParams) -> Self {
        Self::build(p, |k| -(k as f64))
    }

    fn build(p: &SigmaParams, scale: impl Fn(usize) -> f64) -> Self {
        let n = p.dim() as f64;
        let sigma = p.sigma();
        let log_coeffs = (1..=MAX_TERMS)
            .map(|k| {
                let kf = k as f64;
                let sine = (0.5 * kf * PI * sigma).sin();
                let sc = scale(k);
                // exact zeros of the sine (integer σ multiples) drop out
                if sine.abs() < 1e-14 {
                    return (f64::NEG_INFINITY, 0.0);
                }
                let lg = (-0.5 * n - 1.0) * PI.ln() + kf * sigma * 2f64.ln() - ln_gamma(kf + 1.0)
                    + ln_gamma(0.5 * (kf * sigma + n))
                    + ln_gamma(0.5 * kf * sigma + 1.0)
                    + sine.abs().ln()
                    + sc.abs().ln();
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 } * sine.signum() * sc.signum();
                (lg, sign)
            })
            .collect();
        Self { dim: n, sigma, log_coeffs }
    }

    /// `k`-th coefficient, `k >= 1`.
    pub fn coeff(&self, k: usize) -> f64 {
        let (lg, sign) = self.log_coeffs[k - 1];
        sign * lg.exp()
    }

    /// Terms `c_k s^{-kσ}` kept by the truncation rule, with error estimate.
    fn terms(&self, s: f64) -> (Vec<(usize, f64)>, f64) {
        let ls = s.ln();
        let mut out = Vec::new();
        let mut sum = 0.0_f64;
        let mut last = f64::INFINITY;
        let mut biggest = 0.0_f64;
        let mut err = 0.0;
        for (i, &(lg, sign)) in self.log_coeffs.iter().enumerate() {
            if sign == 0.0 {
                continue;
            }
            let k = i + 1;
            let mag = (lg - k as f64 * self.sigma * ls).exp();
            if self.sigma >= 1.0 && mag > last {
                // asymptotic: stop at the smallest term
                err = last;
                break;
            }
            let t = sign * mag;
            sum += t;
            biggest = biggest.max(mag);
            out.push((k, t));
            last = mag;
            err = mag;
            if mag < 1e-20 * sum.abs() {
                break;
            }
        }
        let err = err.max(1e-16 * biggest);
        (out, err)
    }

    /// Relative error estimate of the truncated sum for `Φ(s)`.
    pub fn relative_error(&self, s: f64) -> f64 {
        let (terms, err) = self.terms(s);
        let sum: f64 = terms.iter().map(|t| t.1).sum();
        err / sum.abs()
    }

    /// Smallest radius on a geometric scan where the series is accurate to 1e-13.
    pub fn reliable_from(&self) -> f64 {
        let mut s = 1.0;
        while s < 1e6 {
            if self.relative_error(s) < 1e-13 {
                return s;
            }
            s *= 1.05;
        }
        s
    }

    pub fn value(&self, s: f64) -> f64 {
        let (terms, _) = self.terms(s);
        s.powf(-self.dim) * terms.iter().map(|t| t.1).sum::<f64>()
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let (terms, _) = self.terms(s);
        let sum: f64 = terms
            .iter()
            .map(|&(k, t)| -(k as f64 * self.sigma + self.dim) * t)
            .sum();
        s.powf(-self.dim - 1.0) * sum
    }

    /// `∫_{s0}^∞ s^{N-1} f(s) ds`.
    pub fn tail_moment(&self, s0: f64) -> f64 {
        let (terms, _) = self.terms(s0);
        terms.iter().map(|&(k, t)| t / (k as f64 * self.sigma)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_series_is_geometric() {
        // 1/(π(1+s²)) = (1/π) Σ (-1)^{j} s^{-2-2j}
        let p = SigmaParams::new(1, 1.0).unwrap();
        let ser = ProfileSeries::phi(&p);
        assert!((ser.coeff(1) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(ser.coeff(2), 0.0);
        assert!((ser.coeff(3) + 1.0 / PI).abs() < 1e-14);
        let s: f64 = 7.0;
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(ser.value(s), 1.0 / (PI * (1.0 + s * s))) < 1e-14);
        let d = -2.0 * s / (PI * (1.0 + s * s).powi(2));
        assert!(rel(ser.derivative(s), d) < 1e-14);
        // ∫_s^∞ 1/(π(1+u²)) du = (π/2 - atan s)/π
        let tail = (0.5 * PI - s.atan()) / PI;
        assert!(rel(ser.tail_moment(s), tail) < 1e-13);
    }

    #[test]
    fn two_dimensional_cauchy_coefficients() {
        let p = SigmaParams::new(2, 1.0).unwrap();
        let ser = ProfileSeries::phi(&p);
        let s: f64 = 9.0;
        let exact = (1.0 + s * s).powf(-1.5) / (2.0 * PI);
        assert!((ser.value(s) / exact - 1.0).abs() < 1e-14);
    }
}
