//! Admissible nonlinearities `g` of the operator `div(g(|∇u|) ∇u / |∇u|)`.
//!
//! A [`GFunction`] carries its growth exponents `(delta, g0)`, meaning
//! `delta <= t g'(t) / g(t) <= g0` for all `t > 0`. Builtin families know their
//! exponents exactly; combinators derive them from their parts.
//!
//! Derived quantities:
//!
//! * `G(t) = ∫_0^t g` (the Orlicz function),
//! * `F(t) = g(t) / t`, so that the flux is `A(p) = F(|p|) p`,
//! * `Φ(t) = t g(t) - G(t)`, whose inverse at the reaction mass gives the
//!   limiting free-boundary slope.

mod check;
mod parse;

pub use check::{
    check_derivative_condition, check_g1, check_g3, check_lieberman, derivative_condition_margin,
    estimate_growth_bounds, fd_derivative, ConditionItem, ConditionReport,
};
pub use parse::parse_gfunction;

use std::fmt;

use thiserror::Error;

use crate::quad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GFuncError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("root finding did not converge for target {target}: {reason}")]
    NonConvergence { target: f64, reason: String },
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
}

/// Largest admissible upper end of the doubling bracket used by the inverses.
const BRACKET_LIMIT: f64 = 1e12;

/// Structure of a nonlinearity.
#[derive(Debug, Clone, PartialEq)]
pub enum GKind {
    /// `g(t) = t^(p-1)`.
    Power {
        p: f64,
    },
    /// `g(t) = t^a log(b t + c)`.
    PowerLog {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `c1 t^a1` up to the knot, `c2 t^a2 + d` past it, C¹ at the knot.
    PiecewisePower {
        c1: f64,
        a1: f64,
        a2: f64,
        knot: f64,
        c2: f64,
        d: f64,
    },
    Sum(Vec<(f64, GFunction)>),
    Product(Box<GFunction>, Box<GFunction>),
    /// `outer(inner(t))`.
    Compose(Box<GFunction>, Box<GFunction>),
    Scale(f64, Box<GFunction>),
    /// Same function with user-declared growth exponents, which the checkers test.
    Declared(Box<GFunction>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GFunction {
    kind: GKind,
    delta: f64,
    g0: f64,
}

fn positive(name: &str, v: f64) -> Result<(), GFuncError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(GFuncError::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl GFunction {
    pub fn power(p: f64) -> Result<Self, GFuncError> {
        if !(p.is_finite() && p > 1.0) {
            return Err(GFuncError::InvalidParameter(format!(
                "power exponent p must exceed 1, got {p}"
            )));
        }
        Ok(Self {
            kind: GKind::Power { p },
            delta: p - 1.0,
            g0: p - 1.0,
        })
    }

    /// `t^a log(b t + c)`; `c >= 1` keeps `g` positive near the origin.
    pub fn power_log(a: f64, b: f64, c: f64) -> Result<Self, GFuncError> {
        positive("a", a)?;
        positive("b", b)?;
        if !(c.is_finite() && c >= 1.0) {
            return Err(GFuncError::InvalidParameter(format!(
                "powerlog requires c >= 1, got {c}"
            )));
        }
        Ok(Self {
            kind: GKind::PowerLog { a, b, c },
            delta: a,
            g0: a + 1.0,
        })
    }

    pub fn piecewise_power(c1: f64, a1: f64, a2: f64, knot: f64) -> Result<Self, GFuncError> {
        positive("c1", c1)?;
        positive("a1", a1)?;
        positive("a2", a2)?;
        positive("knot", knot)?;
        let c2 = c1 * a1 / a2 * knot.powf(a1 - a2);
        let d = c1 * knot.powf(a1) * (1.0 - a1 / a2);
        Ok(Self {
            kind: GKind::PiecewisePower {
                c1,
                a1,
                a2,
                knot,
                c2,
                d,
            },
            delta: a1.min(a2),
            g0: a1.max(a2),
        })
    }

    pub fn sum(parts: Vec<(f64, GFunction)>) -> Result<Self, GFuncError> {
        if parts.is_empty() {
            return Err(GFuncError::InvalidParameter(
                "sum needs at least one term".into(),
            ));
        }
        for (w, _) in &parts {
            positive("sum weight", *w)?;
        }
        let delta = parts
            .iter()
            .map(|(_, g)| g.delta)
            .fold(f64::INFINITY, f64::min);
        let g0 = parts.iter().map(|(_, g)| g.g0).fold(0.0, f64::max);
        Ok(Self {
            kind: GKind::Sum(parts),
            delta,
            g0,
        })
    }

    pub fn product(a: GFunction, b: GFunction) -> Self {
        let (delta, g0) = (a.delta + b.delta, a.g0 + b.g0);
        Self {
            kind: GKind::Product(Box::new(a), Box::new(b)),
            delta,
            g0,
        }
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: GFunction, inner: GFunction) -> Self {
        let (delta, g0) = (outer.delta * inner.delta, outer.g0 * inner.g0);
        Self {
            kind: GKind::Compose(Box::new(outer), Box::new(inner)),
            delta,
            g0,
        }
    }

    pub fn scale(c: f64, g: GFunction) -> Result<Self, GFuncError> {
        positive("scale factor", c)?;
        let (delta, g0) = (g.delta, g.g0);
        Ok(Self {
            kind: GKind::Scale(c, Box::new(g)),
            delta,
            g0,
        })
    }

    /// Wraps `g` with claimed exponents in place of the derived ones.
    pub fn declared(g: GFunction, delta: f64, g0: f64) -> Result<Self, GFuncError> {
        positive("delta", delta)?;
        if !(g0.is_finite() && g0 >= delta) {
            return Err(GFuncError::InvalidParameter(format!(
                "g0 must satisfy g0 >= delta, got {g0}"
            )));
        }
        Ok(Self {
            kind: GKind::Declared(Box::new(g)),
            delta,
            g0,
        })
    }

    pub fn kind(&self) -> &GKind {
        &self.kind
    }

    /// Lower growth exponent.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Upper growth exponent.
    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// `g(t)` for `t >= 0`, unchecked.
    pub fn g(&self, t: f64) -> f64 {
        match &self.kind {
            GKind::Power { p } => t.powf(p - 1.0),
            GKind::PowerLog { a, b, c } => {
                if t == 0.0 {
                    0.0
                } else {
                    t.powf(*a) * (b * t).ln_1p_shifted(*c)
                }
            }
            GKind::PiecewisePower {
                c1,
                a1,
                a2,
                knot,
                c2,
                d,
            } => {
                if t <= *knot {
                    c1 * t.powf(*a1)
                } else {
                    c2 * t.powf(*a2) + d
                }
            }
            GKind::Sum(parts) => parts.iter().map(|(w, g)| w * g.g(t)).sum(),
            GKind::Product(a, b) => a.g(t) * b.g(t),
            GKind::Compose(outer, inner) => outer.g(inner.g(t)),
            GKind::Scale(c, g) => c * g.g(t),
            GKind::Declared(g) => g.g(t),
        }
    }

    /// `g'(t)` for `t >= 0`, unchecked. May be infinite at `t = 0` for singular families.
    pub fn dg(&self, t: f64) -> f64 {
        match &self.kind {
            GKind::Power { p } => {
                if t == 0.0 {
                    return match (*p - 2.0).partial_cmp(&0.0) {
                        Some(std::cmp::Ordering::Greater) => 0.0,
                        Some(std::cmp::Ordering::Equal) => 1.0,
                        _ => f64::INFINITY,
                    };
                }
                (p - 1.0) * t.powf(p - 2.0)
            }
            GKind::PowerLog { a, b, c } => {
                if t == 0.0 {
                    if *c == 1.0 || *a > 1.0 {
                        // c = 1: g ~ b t^(a+1) near zero.
                        return 0.0;
                    }
                    return if *a == 1.0 { c.ln() } else { f64::INFINITY };
                }
                a * t.powf(a - 1.0) * (b * t).ln_1p_shifted(*c) + t.powf(*a) * b / (b * t + c)
            }
            GKind::PiecewisePower {
                c1,
                a1,
                a2,
                knot,
                c2,
                ..
            } => {
                if t <= *knot {
                    if t == 0.0 {
                        return if *a1 > 1.0 {
                            0.0
                        } else if *a1 == 1.0 {
                            *c1
                        } else {
                            f64::INFINITY
                        };
                    }
                    c1 * a1 * t.powf(a1 - 1.0)
                } else {
                    c2 * a2 * t.powf(a2 - 1.0)
                }
            }
            GKind::Sum(parts) => parts.iter().map(|(w, g)| w * g.dg(t)).sum(),
            GKind::Product(a, b) => {
                if t == 0.0 {
                    // both factors vanish at the origin; (g1 g2)(t) ~ t^(delta1 + delta2)
                    return if self.delta > 1.0 {
                        0.0
                    } else {
                        (a.dg(t) * b.dg(t)).max(0.0)
                    };
                }
                a.dg(t) * b.g(t) + a.g(t) * b.dg(t)
            }
            GKind::Compose(outer, inner) => outer.dg(inner.g(t)) * inner.dg(t),
            GKind::Scale(c, g) => c * g.dg(t),
            GKind::Declared(g) => g.dg(t),
        }
    }

    /// `G(t) = ∫_0^t g`, unchecked. Closed form where one exists, adaptive Simpson otherwise.
    pub fn big_g(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        match &self.kind {
            GKind::Power { p } => t.powf(*p) / p,
            GKind::PiecewisePower {
                c1,
                a1,
                a2,
                knot,
                c2,
                d,
            } => {
                if t <= *knot {
                    c1 * t.powf(a1 + 1.0) / (a1 + 1.0)
                } else {
                    c1 * knot.powf(a1 + 1.0) / (a1 + 1.0)
                        + c2 * (t.powf(a2 + 1.0) - knot.powf(a2 + 1.0)) / (a2 + 1.0)
                        + d * (t - knot)
                }
            }
            GKind::Sum(parts) => parts.iter().map(|(w, g)| w * g.big_g(t)).sum(),
            GKind::Scale(c, g) => c * g.big_g(t),
            GKind::Declared(g) => g.big_g(t),
            GKind::PowerLog { .. } | GKind::Product(..) | GKind::Compose(..) => {
                let scale = (t * self.g(t)).max(f64::MIN_POSITIVE);
                quad::adaptive_simpson(
                    |s| self.g(s),
                    0.0,
                    t,
                    quad::DEFAULT_TOL * scale,
                    quad::MAX_DEPTH,
                )
            }
        }
    }

    /// `F(t) = g(t) / t`, unchecked, for `t > 0`.
    pub fn f_ratio(&self, t: f64) -> f64 {
        self.g(t) / t
    }

    /// `Φ(t) = t g(t) - G(t)`, unchecked.
    pub fn phi(&self, t: f64) -> f64 {
        t * self.g(t) - self.big_g(t)
    }

    /// `Φ'(t) = t g'(t)`.
    pub fn dphi(&self, t: f64) -> f64 {
        t * self.dg(t)
    }

    fn check_arg(t: f64) -> Result<(), GFuncError> {
        if t.is_finite() && t >= 0.0 {
            Ok(())
        } else {
            Err(GFuncError::Domain(format!(
                "argument must be finite and nonnegative, got {t}"
            )))
        }
    }

    pub fn eval_g(&self, t: f64) -> Result<f64, GFuncError> {
        Self::check_arg(t)?;
        Ok(self.g(t))
    }

    pub fn eval_dg(&self, t: f64) -> Result<f64, GFuncError> {
        Self::check_arg(t)?;
        Ok(self.dg(t))
    }

    pub fn eval_big_g(&self, t: f64) -> Result<f64, GFuncError> {
        Self::check_arg(t)?;
        Ok(self.big_g(t))
    }

    pub fn eval_phi(&self, t: f64) -> Result<f64, GFuncError> {
        Self::check_arg(t)?;
        Ok(self.phi(t))
    }

    /// Solves `Φ(t) = y`.
    pub fn invert_phi(&self, y: f64) -> Result<f64, GFuncError> {
        invert_increasing(|t| self.phi(t), |t| self.dphi(t), y)
    }

    /// Solves `g(t) = y`.
    pub fn invert_g(&self, y: f64) -> Result<f64, GFuncError> {
        invert_increasing(|t| self.g(t), |t| self.dg(t), y)
    }
}

trait LnShifted {
    fn ln_1p_shifted(self, c: f64) -> f64;
}

impl LnShifted for f64 {
    /// `ln(self + c)`, accurate when `c = 1` and `self` is small.
    fn ln_1p_shifted(self, c: f64) -> f64 {
        if c == 1.0 {
            self.ln_1p()
        } else {
            (self + c).ln()
        }
    }
}

/// Root of `f(t) = y` for an increasing `f` with `f(0) = 0`: doubling bracket
/// from `[0, 1]`, bisection, then safeguarded Newton.
fn invert_increasing<F, D>(f: F, df: D, y: f64) -> Result<f64, GFuncError>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    if !(y.is_finite() && y >= 0.0) {
        return Err(GFuncError::Domain(format!(
            "target must be finite and nonnegative, got {y}"
        )));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let tol = 1e-12 * y.max(1.0);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while f(hi) < y {
        lo = hi;
        hi *= 2.0;
        if hi > BRACKET_LIMIT {
            return Err(GFuncError::NonConvergence {
                target: y,
                reason: format!("bracket exceeded {BRACKET_LIMIT:e}"),
            });
        }
    }
    // Coarse bisection to a relative bracket of 1e-3.
    while hi - lo > 1e-3 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let r = f(t) - y;
        if r == 0.0 {
            return Ok(t);
        }
        if r < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let mut next = t - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 2.0 * f64::EPSILON * t || hi - lo <= 2.0 * f64::EPSILON * hi {
            t = next;
            break;
        }
        t = next;
    }
    let r = (f(t) - y).abs();
    if r <= tol {
        Ok(t)
    } else {
        Err(GFuncError::NonConvergence {
            target: y,
            reason: format!("residual {r:e} above {tol:e}"),
        })
    }
}

impl fmt::Display for GFunction {
    /// Writes the expression in the grammar accepted by [`parse_gfunction`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            GKind::Power { p } => write!(f, "power({p})"),
            GKind::PowerLog { a, b, c } => write!(f, "powerlog({a},{b},{c})"),
            GKind::PiecewisePower {
                c1, a1, a2, knot, ..
            } => write!(f, "piecewise({c1},{a1},{a2},{knot})"),
            GKind::Sum(parts) => {
                write!(f, "sum(")?;
                for (i, (w, g)) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    if *w == 1.0 {
                        write!(f, "{g}")?;
                    } else {
                        write!(f, "{w}*{g}")?;
                    }
                }
                write!(f, ")")
            }
            GKind::Product(a, b) => write!(f, "product({a},{b})"),
            GKind::Compose(a, b) => write!(f, "compose({a},{b})"),
            GKind::Scale(c, g) => write!(f, "scale({c},{g})"),
            GKind::Declared(g) => write!(f, "bounds({g},{},{})", self.delta, self.g0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    fn powerlog() -> GFunction {
        GFunction::power_log(1.0, 1.0, 3.0).unwrap()
    }

    #[test]
    fn eval_g_examples() {
        assert_eq!(GFunction::power(3.0).unwrap().eval_g(2.0).unwrap(), 4.0);
        assert_eq!(powerlog().eval_g(0.0).unwrap(), 0.0);
        let prod = GFunction::product(
            GFunction::power(2.0).unwrap(),
            GFunction::power(3.0).unwrap(),
        );
        assert_eq!(prod.eval_g(2.0).unwrap(), 2.0 * 4.0);
    }

    #[test]
    fn domain_errors() {
        let g = GFunction::power(2.0).unwrap();
        assert!(matches!(g.eval_g(-1.0), Err(GFuncError::Domain(_))));
        assert!(matches!(g.eval_g(f64::NAN), Err(GFuncError::Domain(_))));
        assert!(matches!(g.eval_big_g(-0.5), Err(GFuncError::Domain(_))));
        assert!(matches!(
            g.eval_phi(f64::INFINITY),
            Err(GFuncError::Domain(_))
        ));
        assert!(matches!(g.invert_phi(-1.0), Err(GFuncError::Domain(_))));
        assert!(matches!(g.invert_g(f64::NAN), Err(GFuncError::Domain(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GFunction::power(1.0).is_err());
        assert!(GFunction::power_log(1.0, 1.0, 0.5).is_err());
        assert!(GFunction::piecewise_power(1.0, 2.0, 1.0, 0.0).is_err());
        assert!(GFunction::sum(vec![]).is_err());
        assert!(GFunction::scale(-1.0, GFunction::power(2.0).unwrap()).is_err());
    }

    #[test]
    fn primitive_examples() {
        assert_eq!(GFunction::power(2.0).unwrap().eval_big_g(3.0).unwrap(), 4.5);
        assert_eq!(powerlog().eval_big_g(0.0).unwrap(), 0.0);
        let oracle = adaptive_simpson(|s| s * (s + 3.0).ln(), 0.0, 1.0, 1e-12, 50);
        assert!((powerlog().eval_big_g(1.0).unwrap() - oracle).abs() < 1e-10);
    }

    #[test]
    fn phi_examples() {
        let g = GFunction::power(2.0).unwrap();
        assert_eq!(g.eval_phi(2.0).unwrap(), 2.0);
        assert_eq!(powerlog().eval_phi(0.0).unwrap(), 0.0);
        let oracle_g1 = adaptive_simpson(|s| s * (s + 3.0).ln(), 0.0, 1.0, 1e-12, 50);
        let expected = 4f64.ln() - oracle_g1;
        assert!((powerlog().eval_phi(1.0).unwrap() - expected).abs() < 1e-10);
        for p in [1.5, 2.0, 3.0, 4.5] {
            let g = GFunction::power(p).unwrap();
            for t in [0.1f64, 1.0, 2.5] {
                let closed = (p - 1.0) / p * t.powf(p);
                assert!((g.phi(t) - closed).abs() <= 1e-13 * closed.max(1.0));
            }
        }
    }

    #[test]
    fn invert_phi_examples() {
        let g = GFunction::power(2.0).unwrap();
        assert_eq!(g.invert_phi(0.0).unwrap(), 0.0);
        assert!((g.invert_phi(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        let g3 = GFunction::power(3.0).unwrap();
        assert!((g3.invert_phi(1.0).unwrap() - 1.5f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn invert_g_examples() {
        let g = GFunction::power(3.0).unwrap();
        assert_eq!(g.invert_g(0.0).unwrap(), 0.0);
        assert!((g.invert_g(4.0).unwrap() - 2.0).abs() < 1e-12);
        let pl = powerlog();
        for t in [1e-3, 0.5, 7.0] {
            assert!((pl.invert_g(pl.g(t)).unwrap() - t).abs() < 1e-10 * t.max(1.0));
        }
    }

    #[test]
    fn bracket_limit_reports_nonconvergence() {
        let g = GFunction::power(1.01).unwrap();
        // Φ(t) = t^1.01 / 101; Φ(1e12) is far below 1e20.
        assert!(matches!(
            g.invert_phi(1e20),
            Err(GFuncError::NonConvergence { .. })
        ));
    }

    #[test]
    fn piecewise_is_c1_at_knot() {
        let g = GFunction::piecewise_power(2.0, 1.5, 0.5, 0.7).unwrap();
        let k = 0.7;
        let h = 1e-9;
        assert!((g.g(k + h) - g.g(k)).abs() < 1e-8);
        assert!((g.dg(k + h) - g.dg(k)).abs() < 1e-7);
        assert_eq!(g.delta(), 0.5);
        assert_eq!(g.g0(), 1.5);
        let oracle = adaptive_simpson(|s| g.g(s), 0.0, 0.7, 1e-13, 50)
            + adaptive_simpson(|s| g.g(s), 0.7, 2.0, 1e-13, 50);
        assert!((g.big_g(2.0) - oracle).abs() < 1e-11);
    }

    #[test]
    fn combinator_exponents() {
        let p2 = GFunction::power(2.0).unwrap();
        let pl = powerlog();
        let prod = GFunction::product(p2.clone(), pl.clone());
        assert_eq!((prod.delta(), prod.g0()), (2.0, 3.0));
        let comp = GFunction::compose(p2.clone(), pl.clone());
        assert_eq!((comp.delta(), comp.g0()), (1.0, 2.0));
        let sum = GFunction::sum(vec![(0.5, p2), (1.0, GFunction::power(4.0).unwrap())]).unwrap();
        assert_eq!((sum.delta(), sum.g0()), (1.0, 3.0));
    }

    #[test]
    fn combinator_derivatives_match_finite_differences() {
        let parts = [
            GFunction::product(GFunction::power(2.0).unwrap(), powerlog()),
            GFunction::compose(GFunction::power(3.0).unwrap(), powerlog()),
            GFunction::scale(2.5, GFunction::piecewise_power(1.0, 2.0, 0.5, 1.3).unwrap()).unwrap(),
        ];
        for g in &parts {
            for t in [0.01, 0.3, 1.0, 4.0, 50.0] {
                let fd = fd_derivative(g, t);
                assert!(
                    (fd - g.dg(t)).abs() <= 1e-5 * g.dg(t).abs(),
                    "{g} at {t}: {fd} vs {}",
                    g.dg(t)
                );
            }
        }
    }

    #[test]
    fn display_matches_grammar() {
        let g = GFunction::sum(vec![
            (0.5, GFunction::power(2.0).unwrap()),
            (1.0, GFunction::power(3.0).unwrap()),
        ])
        .unwrap();
        assert_eq!(g.to_string(), "sum(0.5*power(2),power(3))");
    }
}
