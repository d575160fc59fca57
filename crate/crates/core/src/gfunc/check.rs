//! Sampled verification of the structural conditions on `g`.
//!
//! Every check here differentiates `g` by central finite differences rather
//! than through [`GFunction::dg`], so a wrong analytic derivative cannot hide
//! a violated condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GFuncError, GFunction};

/// Relative step of the central difference used by the checkers.
const FD_REL_STEP: f64 = 1e-6;
/// Slack on the growth-ratio condition.
const RATIO_SLACK: f64 = 1e-6;
/// Relative slack on the scaling and primitive inequalities.
const SPOT_SLACK: f64 = 1e-9;
const SEED: u64 = 0x6f72_6c69_637a;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionItem {
    pub name: &'static str,
    pub passed: bool,
    /// Smallest signed margin found; negative means violated.
    pub worst_margin: f64,
    /// Sample `(s, t)` achieving the worst margin (`s = 1` for one-parameter checks).
    pub worst_at: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub passed: bool,
    pub items: Vec<ConditionItem>,
}

impl ConditionReport {
    fn from_items(items: Vec<ConditionItem>) -> Self {
        Self {
            passed: items.iter().all(|i| i.passed),
            items,
        }
    }

    pub fn item(&self, name: &str) -> Option<&ConditionItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

struct Worst {
    margin: f64,
    at: (f64, f64),
    n: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            at: (f64::NAN, f64::NAN),
            n: 0,
        }
    }

    fn push(&mut self, margin: f64, at: (f64, f64)) {
        self.n += 1;
        // NaN margins count as violations
        if margin.is_nan() || margin < self.margin {
            self.margin = if margin.is_nan() {
                f64::NEG_INFINITY
            } else {
                margin
            };
            self.at = at;
        }
    }

    fn finish(self, name: &'static str, slack: f64) -> ConditionItem {
        ConditionItem {
            name,
            passed: self.margin >= -slack,
            worst_margin: self.margin,
            worst_at: self.at,
            samples: self.n,
        }
    }
}

/// Central finite difference of `g` with relative step `1e-6`.
pub fn fd_derivative(gf: &GFunction, t: f64) -> f64 {
    let h = FD_REL_STEP * t;
    (gf.g(t + h) - gf.g(t - h)) / (2.0 * h)
}

fn geometric_grid(t_min: f64, t_max: f64, samples: usize) -> Vec<f64> {
    let ratio = (t_max / t_min).ln();
    (0..samples)
        .map(|i| t_min * (ratio * i as f64 / (samples - 1) as f64).exp())
        .collect()
}

fn validate_range(t_min: f64, t_max: f64, samples: usize) -> Result<(), GFuncError> {
    if !(t_min.is_finite() && t_max.is_finite() && t_min > 0.0 && t_min < t_max) || samples < 2 {
        return Err(GFuncError::Domain(format!(
            "need 0 < t_min < t_max and samples >= 2, got [{t_min}, {t_max}] with {samples} samples"
        )));
    }
    Ok(())
}

fn growth_ratio(gf: &GFunction, t: f64) -> f64 {
    t * fd_derivative(gf, t) / gf.g(t)
}

/// Infimum and supremum of `t g'(t) / g(t)` over a geometric grid of `[t_min, t_max]`.
pub fn estimate_growth_bounds(
    gf: &GFunction,
    t_min: f64,
    t_max: f64,
    samples: usize,
) -> Result<(f64, f64), GFuncError> {
    validate_range(t_min, t_max, samples)?;
    let (lo, hi) = geometric_grid(t_min, t_max, samples)
        .into_iter()
        .map(|t| growth_ratio(gf, t))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r), hi.max(r))
        });
    Ok((lo, hi))
}

/// Signed margin of `min{s^δ, s^g0} g(t) <= g(st) <= max{s^δ, s^g0} g(t)`, relative to `g(st)`.
fn g1_margin(gf: &GFunction, s: f64, t: f64) -> f64 {
    let (a, b) = (s.powf(gf.delta()), s.powf(gf.g0()));
    let gt = gf.g(t);
    let gst = gf.g(s * t);
    let lower = a.min(b) * gt;
    let upper = a.max(b) * gt;
    (gst - lower).min(upper - gst) / gst
}

/// Signed margin of `t g(t) / (1 + g0) <= G(t) <= t g(t)`, relative to `t g(t)`.
fn g3_margin(gf: &GFunction, t: f64) -> f64 {
    let tg = t * gf.g(t);
    let big = gf.big_g(t);
    (big - tg / (1.0 + gf.g0())).min(tg - big) / tg
}

/// Scaling inequality on explicit `(s, t)` pairs.
pub fn check_g1(gf: &GFunction, pairs: &[(f64, f64)]) -> ConditionItem {
    let mut w = Worst::new();
    for &(s, t) in pairs {
        w.push(g1_margin(gf, s, t), (s, t));
    }
    w.finish("g1_scaling", SPOT_SLACK)
}

/// Primitive bounds on explicit points.
pub fn check_g3(gf: &GFunction, ts: &[f64]) -> ConditionItem {
    let mut w = Worst::new();
    for &t in ts {
        w.push(g3_margin(gf, t), (1.0, t));
    }
    w.finish("g3_primitive", SPOT_SLACK)
}

/// Checks the growth condition against the stored exponents on a geometric
/// grid, plus random spot checks of the scaling and primitive inequalities.
pub fn check_lieberman(
    gf: &GFunction,
    t_min: f64,
    t_max: f64,
    samples: usize,
) -> Result<ConditionReport, GFuncError> {
    validate_range(t_min, t_max, samples)?;
    let mut ratio = Worst::new();
    let mut positive = Worst::new();
    let grid = geometric_grid(t_min, t_max, samples);
    let mut prev = 0.0;
    for &t in &grid {
        let r = growth_ratio(gf, t);
        ratio.push((r - gf.delta()).min(gf.g0() - r), (1.0, t));
        let gt = gf.g(t);
        // strictly positive and increasing along the grid
        positive.push((gt - prev) / gt.abs().max(f64::MIN_POSITIVE), (1.0, t));
        prev = gt;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let log_span = (t_max / t_min).ln();
    let pairs: Vec<(f64, f64)> = (0..samples)
        .map(|_| {
            let s: f64 = rng.gen_range(0.0..10.0);
            let t = t_min * (log_span * rng.gen::<f64>()).exp();
            (10.0 - s, t)
        })
        .collect();
    let ts: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    Ok(ConditionReport::from_items(vec![
        ratio.finish("growth_ratio", RATIO_SLACK),
        positive.finish("positive_increasing", 0.0),
        check_g1(gf, &pairs),
        check_g3(gf, &ts),
    ]))
}

/// Relative margin of `g'(t) <= s² g'(ts)`.
pub fn derivative_condition_margin(gf: &GFunction, s: f64, t: f64) -> f64 {
    let d = fd_derivative(gf, t);
    (s * s * fd_derivative(gf, t * s) - d) / d
}

/// Checks `g'(t) <= s² g'(ts)` for `1 <= s <= 1 + eta0` and
/// `0 < t <= Φ⁻¹((g0/δ) M)`, on a `samples × samples` grid.
pub fn check_derivative_condition(
    gf: &GFunction,
    eta0: f64,
    mass: f64,
    samples: usize,
) -> Result<ConditionReport, GFuncError> {
    if !(eta0 > 0.0 && eta0 <= 1.0) {
        return Err(GFuncError::Domain(format!(
            "eta0 must lie in (0, 1], got {eta0}"
        )));
    }
    if !(mass.is_finite() && mass > 0.0) || samples < 2 {
        return Err(GFuncError::Domain(format!(
            "need M > 0 and samples >= 2, got M = {mass}, samples = {samples}"
        )));
    }
    let t_max = gf.invert_phi(gf.g0() / gf.delta() * mass)?;
    let ts = geometric_grid(t_max * 1e-4, t_max, samples);
    let mut w = Worst::new();
    for i in 0..samples {
        let s = 1.0 + eta0 * i as f64 / (samples - 1) as f64;
        for &t in &ts {
            w.push(derivative_condition_margin(gf, s, t), (s, t));
        }
    }
    Ok(ConditionReport::from_items(vec![
        w.finish("derivative_condition", RATIO_SLACK)
    ]))
}
