//! Nonlinearities `g` with analytic derivatives, Hölder data and growth
//! bounds, plus the built-in catalog.
//!
//! A [`Nonlinearity`] carries the exponent `s` and constant `C` of the
//! Hölder condition `|g'(a) - g'(b)| <= C |a - b|^s` and a growth bound
//! `|g'(s)| <= alpha + beta log^2(1 + |s|)`. Every entry can check its own
//! claims on samples ([`Nonlinearity::validate`]).

use crate::field::SpaceTimeField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NonlinearityError {
    #[error("unknown nonlinearity `{0}`")]
    UnknownName(String),
    #[error("`{name}`: {message}")]
    BadParams { name: String, message: String },
    #[error("cannot parse nonlinearity spec `{0}`")]
    Syntax(String),
    #[error("derivative mismatch at s = {at}: finite difference {fd}, supplied {exact}")]
    DerivativeMismatch { at: f64, fd: f64, exact: f64 },
    #[error("Hölder bound violated at ({a}, {b}): {lhs} > {rhs}")]
    HolderViolation { a: f64, b: f64, lhs: f64, rhs: f64 },
    #[error("growth bound violated at s = {at}: |g'| = {value} > {bound}")]
    GrowthViolation { at: f64, value: f64, bound: f64 },
    #[error("remainder bound violated at x = {x}, h = {h}: {lhs} > {rhs}")]
    RemainderViolation { x: f64, h: f64, lhs: f64, rhs: f64 },
}

/// `|g'(s)| <= alpha + beta log^2(1 + |s|)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GrowthBound {
    pub alpha: f64,
    pub beta: f64,
}

impl GrowthBound {
    pub fn new(alpha: f64, beta: f64) -> Self {
        GrowthBound { alpha, beta }
    }

    pub fn at(&self, s: f64) -> f64 {
        self.alpha + self.beta * s.abs().ln_1p().powi(2)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Kind {
    Zero,
    Linear { c: f64 },
    Sine { a: f64, b: f64 },
    LogLimit { alpha: f64, beta: f64 },
    CubicSat,
    SqrtSat { a: f64, b: f64 },
    Custom { g: ScalarFn, gprime: ScalarFn },
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Zero => write!(f, "Zero"),
            Kind::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            Kind::Sine { a, b } => write!(f, "Sine {{ a: {a}, b: {b} }}"),
            Kind::LogLimit { alpha, beta } => write!(f, "LogLimit {{ alpha: {alpha}, beta: {beta} }}"),
            Kind::CubicSat => write!(f, "CubicSat"),
            Kind::SqrtSat { a, b } => write!(f, "SqrtSat {{ a: {a}, b: {b} }}"),
            Kind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

// sup over s of |d^2/ds^2 (s log^2(1+|s|))| is 1.5421...; rounded up
const LOGLIMIT_G2: f64 = 1.55;
// sup |g''| of s^3/(1+s^2) is 1.4571...; rounded up
const CUBIC_SAT_G2: f64 = 1.46;

/// A scalar nonlinearity with its regularity data.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    name: String,
    kind: Kind,
    holder_exponent: f64,
    holder_constant: f64,
    growth: GrowthBound,
}

impl Nonlinearity {
    pub fn zero() -> Self {
        Self::builtin("zero".into(), Kind::Zero, 1.0, 0.0, GrowthBound::new(0.0, 0.0))
    }

    pub fn linear(c: f64) -> Self {
        Self::builtin(
            format!("linear({c})"),
            Kind::Linear { c },
            1.0,
            0.0,
            GrowthBound::new(c.abs(), 0.0),
        )
    }

    /// `a s + b sin s`.
    pub fn sine(a: f64, b: f64) -> Self {
        Self::builtin(
            format!("sine({a},{b})"),
            Kind::Sine { a, b },
            1.0,
            b.abs(),
            GrowthBound::new(a.abs() + b.abs(), 0.0),
        )
    }

    /// `alpha + beta s log^2(1 + |s|)`, the borderline growth case.
    pub fn loglimit(alpha: f64, beta: f64) -> Self {
        // 2 s L/(1+s) <= 2 L <= L^2/2 + 2
        Self::builtin(
            format!("loglimit({alpha},{beta})"),
            Kind::LogLimit { alpha, beta },
            1.0,
            LOGLIMIT_G2 * beta.abs(),
            GrowthBound::new(2.0 * beta.abs(), 1.5 * beta.abs()),
        )
    }

    /// `s^3 / (1 + s^2)`.
    pub fn cubic_sat() -> Self {
        Self::builtin(
            "cubic_sat".into(),
            Kind::CubicSat,
            1.0,
            CUBIC_SAT_G2,
            GrowthBound::new(1.125, 0.0),
        )
    }

    /// `g'(s) = a + b min(|s|, 1)^{1/2}`: a derivative that is only
    /// `1/2`-Hölder at the origin.
    pub fn sqrt_sat(a: f64, b: f64) -> Self {
        Self::builtin(
            format!("sqrt_sat({a},{b})"),
            Kind::SqrtSat { a, b },
            0.5,
            b.abs(),
            GrowthBound::new(a.abs() + b.abs(), 0.0),
        )
    }

    fn builtin(name: String, kind: Kind, s: f64, c: f64, growth: GrowthBound) -> Self {
        Nonlinearity {
            name,
            kind,
            holder_exponent: s,
            holder_constant: c,
            growth,
        }
    }

    /// Registers a user-supplied nonlinearity; fails unless it passes
    /// [`Nonlinearity::validate`].
    pub fn custom(
        name: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gprime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        holder_exponent: f64,
        holder_constant: f64,
        growth: GrowthBound,
    ) -> Result<Self, NonlinearityError> {
        let name = name.into();
        if !(holder_exponent > 0.0 && holder_exponent <= 1.0) {
            return Err(NonlinearityError::BadParams {
                name,
                message: format!("Hölder exponent {holder_exponent} outside (0, 1]"),
            });
        }
        if !(holder_constant >= 0.0) || !(growth.alpha >= 0.0) || !(growth.beta >= 0.0) {
            return Err(NonlinearityError::BadParams {
                name,
                message: "constants must be non-negative".into(),
            });
        }
        let nl = Nonlinearity {
            name,
            kind: Kind::Custom {
                g: Arc::new(g),
                gprime: Arc::new(gprime),
            },
            holder_exponent,
            holder_constant,
            growth,
        };
        nl.validate()?;
        Ok(nl)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn holder_exponent(&self) -> f64 {
        self.holder_exponent
    }

    pub fn holder_constant(&self) -> f64 {
        self.holder_constant
    }

    /// `|g''|_inf` for entries of exponent 1.
    pub fn gsecond_bound(&self) -> Option<f64> {
        (self.holder_exponent == 1.0).then_some(self.holder_constant)
    }

    pub fn growth(&self) -> GrowthBound {
        self.growth
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Zero)
    }

    pub fn g(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Linear { c } => c * s,
            Kind::Sine { a, b } => a * s + b * s.sin(),
            Kind::LogLimit { alpha, beta } => alpha + beta * s * s.abs().ln_1p().powi(2),
            Kind::CubicSat => s * s * s / (1.0 + s * s),
            Kind::SqrtSat { a, b } => {
                let r = s.abs();
                let prim = if r <= 1.0 {
                    2.0 / 3.0 * r * r.sqrt()
                } else {
                    2.0 / 3.0 + (r - 1.0)
                };
                a * s + b * s.signum() * prim
            }
            Kind::Custom { g, .. } => g(s),
        }
    }

    pub fn gprime(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Linear { c } => *c,
            Kind::Sine { a, b } => a + b * s.cos(),
            Kind::LogLimit { beta, .. } => {
                let r = s.abs();
                let l = r.ln_1p();
                beta * (l * l + 2.0 * r * l / (1.0 + r))
            }
            Kind::CubicSat => {
                let s2 = s * s;
                s2 * (s2 + 3.0) / ((1.0 + s2) * (1.0 + s2))
            }
            Kind::SqrtSat { a, b } => a + b * s.abs().min(1.0).sqrt(),
            Kind::Custom { gprime, .. } => gprime(s),
        }
    }

    /// `(g(s) - g(0)) / s`, continued by `g'(0)` near the origin.
    pub fn hat_g(&self, s: f64) -> f64 {
        difference_quotient(|v| self.g(v), self.gprime(0.0), s)
    }

    pub fn apply_g(&self, y: &SpaceTimeField) -> SpaceTimeField {
        y.map(|v| self.g(v))
    }

    pub fn apply_gprime(&self, y: &SpaceTimeField) -> SpaceTimeField {
        y.map(|v| self.gprime(v))
    }

    pub fn apply_hat_g(&self, y: &SpaceTimeField) -> SpaceTimeField {
        y.map(|v| self.hat_g(v))
    }

    /// Runs every sampled check with a fixed seed.
    pub fn validate(&self) -> Result<(), NonlinearityError> {
        self.check_derivative()?;
        self.check_holder(10_000, 0x5eed)?;
        self.check_growth(10_000)?;
        self.check_remainder(10_000, 0x5eed + 1)
    }

    /// Central differences with `h = 1e-5` against `g'` on `[-10, 10]`.
    pub fn check_derivative(&self) -> Result<(), NonlinearityError> {
        let h: f64 = 1e-5;
        let slack = if self.holder_exponent < 1.0 {
            self.holder_constant * h.powf(self.holder_exponent)
        } else {
            0.0
        };
        for k in 0..=4000 {
            let x = -10.0 + 20.0 * k as f64 / 4000.0;
            let fd = (self.g(x + h) - self.g(x - h)) / (2.0 * h);
            let exact = self.gprime(x);
            if !((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()) + slack) {
                return Err(NonlinearityError::DerivativeMismatch { at: x, fd, exact });
            }
        }
        Ok(())
    }

    /// Hölder bound on random pairs in `[-50, 50]`.
    pub fn check_holder(&self, pairs: usize, seed: u64) -> Result<(), NonlinearityError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pairs {
            let a: f64 = rng.random_range(-50.0..50.0);
            // half the pairs are close, where the Hölder quotient is sharpest
            let b: f64 = if rng.random_bool(0.5) {
                rng.random_range(-50.0..50.0)
            } else {
                a + rng.random_range(-1.0..1.0)
            };
            let lhs = (self.gprime(a) - self.gprime(b)).abs();
            let rhs = self.holder_constant * (a - b).abs().powf(self.holder_exponent);
            if !(lhs <= rhs * (1.0 + 1e-9) + 1e-12) {
                return Err(NonlinearityError::HolderViolation { a, b, lhs, rhs });
            }
        }
        Ok(())
    }

    /// Growth bound on log-spaced `|s|` in `[1e-6, 1e6]`, both signs.
    pub fn check_growth(&self, samples: usize) -> Result<(), NonlinearityError> {
        let n = samples.max(2);
        for k in 0..n {
            let r = 10f64.powf(-6.0 + 12.0 * k as f64 / (n - 1) as f64);
            for s in [r, -r] {
                let value = self.gprime(s).abs();
                let bound = self.growth.at(s);
                if !(value <= bound * (1.0 + 1e-12) + 1e-14) {
                    return Err(NonlinearityError::GrowthViolation { at: s, value, bound });
                }
            }
        }
        Ok(())
    }

    /// Taylor remainder `|g(x+h) - g(x) - g'(x) h|` against
    /// `C |h|^{1+s} / (1+s)` on random `x in [-50, 50]`, `h in [-5, 5]`.
    pub fn check_remainder(&self, samples: usize, seed: u64) -> Result<(), NonlinearityError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.holder_exponent;
        for _ in 0..samples {
            let x: f64 = rng.random_range(-50.0..50.0);
            let h: f64 = rng.random_range(-5.0..5.0) * 10f64.powi(-rng.random_range(0..4));
            let lhs = (self.g(x + h) - self.g(x) - self.gprime(x) * h).abs();
            let rhs = self.holder_constant * h.abs().powf(1.0 + s) / (1.0 + s);
            let round = 1e-13 * (1.0 + self.g(x).abs() + self.g(x + h).abs());
            if !(lhs <= rhs * (1.0 + 1e-9) + round) {
                return Err(NonlinearityError::RemainderViolation { x, h, lhs, rhs });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// `(g(s) - g(0)) / s`, or `gprime_at_zero` when `|s| < 1e-8`.
pub fn difference_quotient(g: impl Fn(f64) -> f64, gprime_at_zero: f64, s: f64) -> f64 {
    if s.abs() < 1e-8 {
        gprime_at_zero
    } else {
        (g(s) - g(0.0)) / s
    }
}

/// The built-in entries with representative parameters.
pub fn catalog() -> Vec<Nonlinearity> {
    vec![
        Nonlinearity::zero(),
        Nonlinearity::linear(1.0),
        Nonlinearity::sine(1.0, 0.5),
        Nonlinearity::loglimit(0.0, 0.1),
        Nonlinearity::cubic_sat(),
        Nonlinearity::sqrt_sat(1.0, 0.5),
    ]
}

impl FromStr for Nonlinearity {
    type Err = NonlinearityError;

    /// Parses `name` or `name(p1, p2, ...)`, e.g. `sine(1,0.5)`.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let text = text.trim();
        let (name, params) = match text.find('(') {
            None => (text, Vec::new()),
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| NonlinearityError::Syntax(text.into()))?;
                let params = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| NonlinearityError::Syntax(text.into()))?
                };
                (text[..open].trim(), params)
            }
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(NonlinearityError::BadParams {
                name: name.into(),
                message: "parameters must be finite".into(),
            });
        }
        let arity = |n: usize| -> Result<(), NonlinearityError> {
            if params.len() == n {
                Ok(())
            } else {
                Err(NonlinearityError::BadParams {
                    name: name.into(),
                    message: format!("expected {n} parameters, found {}", params.len()),
                })
            }
        };
        match name {
            "zero" => arity(0).map(|_| Nonlinearity::zero()),
            "linear" => arity(1).map(|_| Nonlinearity::linear(params[0])),
            "sine" => arity(2).map(|_| Nonlinearity::sine(params[0], params[1])),
            "loglimit" => arity(2).map(|_| Nonlinearity::loglimit(params[0], params[1])),
            "cubic_sat" => arity(0).map(|_| Nonlinearity::cubic_sat()),
            "sqrt_sat" => arity(2).map(|_| Nonlinearity::sqrt_sat(params[0], params[1])),
            other => Err(NonlinearityError::UnknownName(other.into())),
        }
    }
}
