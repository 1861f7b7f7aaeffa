//! Constitutive nonlinearities `φ` and their floor regularization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum NonlinearityKind {
    /// `φ(u) = u`
    Linear,
    /// `φ(u) = |u|^{m-1} u`
    Power { m: f64 },
    /// `φ(u) = ((1+u)^m - 1)/m`, `u > -1`
    ShiftedPower { m: f64 },
    /// `φ(u) = log(1+u)`, `u > -1`
    Log1p,
    /// `φ(u) = (u-1)_+`
    Stefan,
}

impl NonlinearityKind {
    pub fn from_name(name: &str, m: Option<f64>) -> Result<Self> {
        let need_m = || {
            m.filter(|v| *v > 0.0 && v.is_finite()).ok_or_else(|| {
                Error::Nonlinearity(format!("nonlinearity '{name}' needs an exponent m > 0"))
            })
        };
        Ok(match name {
            "linear" => Self::Linear,
            "power" => Self::Power { m: need_m()? },
            "shifted-power" => Self::ShiftedPower { m: need_m()? },
            "log1p" => Self::Log1p,
            "stefan" => Self::Stefan,
            other => return Err(Error::Nonlinearity(format!("unknown nonlinearity '{other}'"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Power { .. } => "power",
            Self::ShiftedPower { .. } => "shifted-power",
            Self::Log1p => "log1p",
            Self::Stefan => "stefan",
        }
    }

    /// Left end of the natural domain.
    fn domain_lo(&self) -> f64 {
        match self {
            Self::ShiftedPower { .. } | Self::Log1p => -1.0,
            _ => f64::NEG_INFINITY,
        }
    }

    fn raw(&self, s: f64) -> f64 {
        match *self {
            Self::Linear => s,
            Self::Power { m } => s.abs().powf(m).copysign(s),
            Self::ShiftedPower { m } => ((1.0 + s).powf(m) - 1.0) / m,
            Self::Log1p => s.ln_1p(),
            Self::Stefan => (s - 1.0).max(0.0),
        }
    }

    fn raw_prime(&self, s: f64) -> f64 {
        match *self {
            Self::Linear => 1.0,
            Self::Power { m } => m * s.abs().powf(m - 1.0),
            Self::ShiftedPower { m } => (1.0 + s).powf(m - 1.0),
            Self::Log1p => 1.0 / (1.0 + s),
            Self::Stefan => {
                if s > 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Inverse of `raw` on a branch where it is strictly increasing.
    fn raw_inverse(&self, w: f64) -> f64 {
        match *self {
            Self::Linear => w,
            Self::Power { m } => w.abs().powf(1.0 / m).copysign(w),
            Self::ShiftedPower { m } => (1.0 + m * w).powf(1.0 / m) - 1.0,
            Self::Log1p => w.exp_m1(),
            Self::Stefan => w + 1.0,
        }
    }

    /// Intervals where `φ' < eps`, in increasing order.
    fn floor_intervals(&self, eps: f64) -> Vec<(f64, f64)> {
        let inf = f64::INFINITY;
        if eps <= 0.0 {
            return Vec::new();
        }
        match *self {
            Self::Linear => {
                if eps > 1.0 {
                    vec![(-inf, inf)]
                } else {
                    Vec::new()
                }
            }
            Self::Power { m } if m > 1.0 => {
                let u = (eps / m).powf(1.0 / (m - 1.0));
                vec![(-u, u)]
            }
            Self::Power { m } if m < 1.0 => {
                let u = (eps / m).powf(1.0 / (m - 1.0));
                vec![(-inf, -u), (u, inf)]
            }
            Self::Power { .. } => {
                if eps > 1.0 {
                    vec![(-inf, inf)]
                } else {
                    Vec::new()
                }
            }
            Self::ShiftedPower { m } if m > 1.0 => vec![(-inf, -1.0 + eps.powf(1.0 / (m - 1.0)))],
            Self::ShiftedPower { m } if m < 1.0 => vec![(-1.0 + eps.powf(1.0 / (m - 1.0)), inf)],
            Self::ShiftedPower { .. } => {
                if eps > 1.0 {
                    vec![(-inf, inf)]
                } else {
                    Vec::new()
                }
            }
            Self::Log1p => vec![(1.0 / eps - 1.0, inf)],
            Self::Stefan => vec![(-inf, 1.0)],
        }
    }

    /// Slope can vanish somewhere on the domain.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            Self::Power { m } | Self::ShiftedPower { m } => m > 1.0,
            Self::Stefan => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Form {
    Raw { offset: f64 },
    Line { s0: f64, v0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    lo: f64,
    hi: f64,
    form: Form,
}

/// `φ` with optional slope floor `eps`.
///
/// The regularized `φ_ε` has slope `max(φ', ε)`; it equals `φ` exactly on the
/// unfloored branch containing `0` (or the first one to its right) and
/// differs from `φ` by constants on other unfloored branches.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    eps: f64,
    pieces: Vec<Piece>,
}

impl Nonlinearity {
    pub fn new(kind: NonlinearityKind) -> Self {
        Self::build(kind, 0.0)
    }

    fn build(kind: NonlinearityKind, eps: f64) -> Self {
        let lo = if eps > 0.0 { f64::NEG_INFINITY } else { kind.domain_lo() };
        let floors = kind.floor_intervals(eps);
        // alternate raw / floored intervals over (lo, ∞)
        let mut spans: Vec<(f64, f64, bool)> = Vec::new();
        let mut cursor = lo;
        for &(a, b) in &floors {
            let a = a.max(lo);
            if a > cursor {
                spans.push((cursor, a, false));
            }
            spans.push((a, b, true));
            cursor = b;
        }
        if cursor < f64::INFINITY {
            spans.push((cursor, f64::INFINITY, false));
        }
        let anchor = spans
            .iter()
            .position(|&(a, b, fl)| !fl && a <= 0.0 && 0.0 < b)
            .or_else(|| spans.iter().position(|&(a, _, fl)| !fl && a >= 0.0))
            .unwrap_or(0);
        let mut pieces: Vec<Piece> = spans
            .iter()
            .map(|&(a, b, _)| Piece { lo: a, hi: b, form: Form::Raw { offset: 0.0 } })
            .collect();
        let value = |p: &Piece, s: f64| match p.form {
            Form::Raw { offset } => kind.raw(s) + offset,
            Form::Line { s0, v0 } => v0 + eps * (s - s0),
        };
        // the anchor span carries φ itself (a fully floored line passes through 0)
        pieces[anchor].form = if spans[anchor].2 {
            Form::Line { s0: 0.0, v0: 0.0 }
        } else {
            Form::Raw { offset: 0.0 }
        };
        for i in anchor + 1..pieces.len() {
            let s = pieces[i].lo;
            let v = value(&pieces[i - 1], s);
            pieces[i].form = if spans[i].2 {
                Form::Line { s0: s, v0: v }
            } else {
                Form::Raw { offset: v - kind.raw(s) }
            };
        }
        for i in (0..anchor).rev() {
            let s = pieces[i].hi;
            let v = value(&pieces[i + 1], s);
            pieces[i].form = if spans[i].2 {
                Form::Line { s0: s, v0: v }
            } else {
                Form::Raw { offset: v - kind.raw(s) }
            };
        }
        Self { kind, eps, pieces }
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }
    pub fn epsilon_reg(&self) -> f64 {
        self.eps
    }

    /// Strictly increasing surrogate with `φ_ε' = max(φ', eps)`.
    pub fn regularize(&self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Nonlinearity(format!("regularization needs eps > 0, got {eps}")));
        }
        Ok(Self::build(self.kind, eps))
    }

    fn piece(&self, s: f64) -> Option<&Piece> {
        self.pieces.iter().find(|p| p.lo <= s && s <= p.hi)
    }

    fn in_domain(&self, s: f64) -> bool {
        s > self.pieces[0].lo || (self.pieces[0].lo == f64::NEG_INFINITY && s.is_finite())
    }

    pub fn phi(&self, s: f64) -> f64 {
        if !self.in_domain(s) {
            return f64::NAN;
        }
        match self.piece(s).map(|p| p.form) {
            Some(Form::Raw { offset }) => self.kind.raw(s) + offset,
            Some(Form::Line { s0, v0 }) => v0 + self.eps * (s - s0),
            None => f64::NAN,
        }
    }

    pub fn phi_prime(&self, s: f64) -> f64 {
        if !self.in_domain(s) {
            return f64::NAN;
        }
        match self.piece(s).map(|p| p.form) {
            Some(Form::Raw { .. }) => self.kind.raw_prime(s).max(self.eps),
            Some(Form::Line { .. }) => self.eps,
            None => f64::NAN,
        }
    }

    /// `β = φ^{-1}`; NaN outside the range of `φ`.
    pub fn beta(&self, w: f64) -> f64 {
        for p in &self.pieces {
            let a = if p.lo == f64::NEG_INFINITY { f64::NEG_INFINITY } else { self.phi(p.lo) };
            let b = if p.hi == f64::INFINITY { f64::INFINITY } else { self.phi_at_end(p) };
            let a = if p.lo == self.pieces[0].lo && !a.is_finite() {
                self.range_lo()
            } else {
                a
            };
            if a <= w && w <= b {
                return match p.form {
                    Form::Raw { offset } => self.kind.raw_inverse(w - offset),
                    Form::Line { s0, v0 } => s0 + (w - v0) / self.eps,
                };
            }
        }
        f64::NAN
    }

    fn phi_at_end(&self, p: &Piece) -> f64 {
        match p.form {
            Form::Raw { offset } => self.kind.raw(p.hi) + offset,
            Form::Line { s0, v0 } => v0 + self.eps * (p.hi - s0),
        }
    }

    fn range_lo(&self) -> f64 {
        let first = &self.pieces[0];
        if first.lo == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match first.form {
            Form::Raw { offset } => self.kind.raw(first.lo) + offset,
            Form::Line { s0, v0 } => v0 + self.eps * (first.lo - s0),
        }
    }

    pub fn beta_prime(&self, w: f64) -> f64 {
        1.0 / self.phi_prime(self.beta(w))
    }

    /// `B(w) = ∫₀^w β`, so `B' = β`; integrated piecewise between kinks.
    pub fn big_b(&self, w: f64) -> f64 {
        let mut knots: Vec<f64> = self
            .pieces
            .iter()
            .filter(|p| p.hi.is_finite())
            .map(|p| self.phi_at_end(p))
            .filter(|&k| k > w.min(0.0) && k < w.max(0.0))
            .collect();
        knots.push(0.0);
        knots.push(w);
        knots.sort_by(f64::total_cmp);
        let sign = if w >= 0.0 { 1.0 } else { -1.0 };
        let mut total = 0.0;
        for k in knots.windows(2) {
            total += integrate(|v| self.beta(v), k[0], k[1], 1e-15, 1e-13)
                .map(|r| r.0)
                .unwrap_or(f64::NAN);
        }
        sign * total
    }

    /// `(c, C)` with `c <= φ' <= C` on `[lo, hi]`, when `c > 0` and `C < ∞`.
    pub fn uniform_bounds(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let samples = 2001;
        let mut c = f64::INFINITY;
        let mut big = 0.0_f64;
        for i in 0..samples {
            let s = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let d = self.phi_prime(s);
            if !d.is_finite() {
                return None;
            }
            c = c.min(d);
            big = big.max(d);
        }
        (c > 0.0).then_some((c, big))
    }

    /// Strictly increasing with positive slope bounded away from zero where
    /// Newton needs it.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.kind.is_degenerate() && self.eps <= 0.0 {
            return Err(Error::Nonlinearity(format!(
                "'{}' is degenerate; regularize it before time stepping",
                self.name()
            )));
        }
        Ok(())
    }
}
