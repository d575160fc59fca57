//! One-dimensional traveling profiles of `(F(|w'|) w')' = κ β(w)`.
//!
//! The profile is normalized by `w(0) = 1`, `w'(0) = α`. Above level 1 the
//! reaction vanishes and the profile is the line `1 + α s`. Below, the ODE is
//! integrated backward in the flux variable `q = g(w')`:
//!
//! ```text
//! w' = g⁻¹(q),    q' = κ β(w)
//! ```
//!
//! Multiplying by `w'` gives the conserved quantity
//! `Φ(w') - κ B(w) = Φ(α) - κ M`, so the lower slope `ᾱ` reached once `w`
//! leaves the support of `β` solves `Φ(ᾱ) = max(0, Φ(α) - κ M)`.

use std::io::{self, Write};

use thiserror::Error;

use crate::gfunc::{GFuncError, GFunction};
use crate::reaction::ReactionTerm;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("inverting g failed at s = {s}: {source}")]
    NonConvergence { s: f64, source: GFuncError },
    #[error("lower slope root finding failed: {0}")]
    AlphaBar(GFuncError),
}

/// Level below which a profile counts as having reached zero.
const W_FLOOR: f64 = 1e-12;
/// Distance to the lower slope at which the profile counts as straight.
const SLOPE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSample {
    pub s: f64,
    pub w: f64,
    /// `w'(s)`.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Samples for `s <= 0`, increasing in `s`, ending at `s = 0`.
    pub samples: Vec<ProfileSample>,
    pub alpha: f64,
    pub alpha_bar: f64,
    pub kappa: f64,
    /// Crossing of level zero, if the profile reaches it.
    pub s_bar: Option<f64>,
    pub residual_max: f64,
}

struct Rhs<'a> {
    gf: &'a GFunction,
    rt: &'a ReactionTerm,
    kappa: f64,
}

impl Rhs<'_> {
    fn slope(&self, q: f64, s: f64) -> Result<f64, ProfileError> {
        if q <= 0.0 {
            return Ok(0.0);
        }
        self.gf
            .invert_g(q)
            .map_err(|source| ProfileError::NonConvergence { s, source })
    }

    fn eval(&self, s: f64, (w, q): (f64, f64)) -> Result<(f64, f64), ProfileError> {
        Ok((self.slope(q, s)?, self.kappa * self.rt.beta(w)))
    }

    fn rk4(&self, s: f64, y: (f64, f64), h: f64) -> Result<(f64, f64), ProfileError> {
        let k1 = self.eval(s, y)?;
        let k2 = self.eval(s + 0.5 * h, (y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1))?;
        let k3 = self.eval(s + 0.5 * h, (y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1))?;
        let k4 = self.eval(s + h, (y.0 + h * k3.0, y.1 + h * k3.1))?;
        Ok((
            y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
            y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        ))
    }
}

/// Lower slope `ᾱ` with `Φ(ᾱ) = max(0, Φ(α) - κ M)`.
pub fn lower_slope(
    gf: &GFunction,
    rt: &ReactionTerm,
    alpha: f64,
    kappa: f64,
) -> Result<f64, ProfileError> {
    let phi_alpha = gf.phi(alpha);
    let mut target = phi_alpha - kappa * rt.mass();
    // critical case up to roundoff in Φ(α)
    if target <= 64.0 * f64::EPSILON * phi_alpha {
        target = 0.0;
    }
    gf.invert_phi(target).map_err(ProfileError::AlphaBar)
}

/// Integrates the profile backward from `s = 0` with classical RK4 until
/// `s_min`, or until it has crossed zero and straightened to slope `ᾱ`.
pub fn integrate_profile(
    gf: &GFunction,
    rt: &ReactionTerm,
    alpha: f64,
    kappa: f64,
    s_min: f64,
    step: f64,
) -> Result<Profile, ProfileError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(ProfileError::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if !(kappa.is_finite() && kappa >= 1.0) {
        return Err(ProfileError::Domain(format!(
            "kappa must be at least 1, got {kappa}"
        )));
    }
    if !(s_min.is_finite() && s_min < 0.0) {
        return Err(ProfileError::Domain(format!(
            "s_min must be negative, got {s_min}"
        )));
    }
    if !(step > 0.0 && step <= 1e-2) {
        return Err(ProfileError::Domain(format!(
            "step must lie in (0, 1e-2], got {step}"
        )));
    }
    let alpha_bar = lower_slope(gf, rt, alpha, kappa)?;
    let rhs = Rhs { gf, rt, kappa };

    let mut rev = vec![ProfileSample {
        s: 0.0,
        w: 1.0,
        p: alpha,
    }];
    let mut y = (1.0, gf.g(alpha));
    let mut s = 0.0;
    let mut s_bar = None;
    let n_steps = (-s_min / step).ceil() as usize;
    for k in 1..=n_steps {
        let s_next = (-(k as f64) * step).max(s_min);
        let next = rhs.rk4(s, y, s_next - s)?;
        if alpha_bar == 0.0 && (next.0 <= 0.0 || next.1 <= 0.0) {
            // the exact profile stays positive; the tail is resolved to roundoff
            break;
        }
        if next.0 < 0.0 {
            // locate the zero crossing so no step straddles the kink of β at 0;
            // below it the profile is exactly the line of slope g⁻¹(q)
            let (h, at_zero) = zero_crossing_step(&rhs, s, y, s_next - s)?;
            let p = rhs.slope(at_zero.1, s + h)?;
            s_bar = Some(s + h);
            rev.push(ProfileSample {
                s: s + h,
                w: 0.0,
                p,
            });
            if (p - alpha_bar).abs() > SLOPE_TOL && s + h > s_min {
                rev.push(ProfileSample {
                    s: s_min,
                    w: p * (s_min - s - h),
                    p,
                });
            }
            break;
        }
        let p = rhs.slope(next.1, s_next)?;
        s = s_next;
        y = next;
        rev.push(ProfileSample { s, w: y.0, p });
        if y.0 < W_FLOOR && (p - alpha_bar).abs() <= SLOPE_TOL {
            break;
        }
    }
    rev.reverse();
    let mut profile = Profile {
        samples: rev,
        alpha,
        alpha_bar,
        kappa,
        s_bar,
        residual_max: 0.0,
    };
    profile.residual_max = first_integral_residual(&profile, gf, rt);
    Ok(profile)
}

/// Sub-step `h` (same sign as `full`) whose RK4 update lands on `w = 0`, by
/// safeguarded secant iteration.
fn zero_crossing_step(
    rhs: &Rhs<'_>,
    s: f64,
    y: (f64, f64),
    full: f64,
) -> Result<(f64, (f64, f64)), ProfileError> {
    let (mut lo, mut hi) = (0.0, 1.0);
    let (mut w_lo, mut w_hi) = (y.0, rhs.rk4(s, y, full)?.0);
    let mut theta = w_lo / (w_lo - w_hi);
    let mut end = rhs.rk4(s, y, theta * full)?;
    for _ in 0..60 {
        if end.0.abs() <= 1e-15 || hi - lo <= 1e-15 {
            break;
        }
        if end.0 > 0.0 {
            lo = theta;
            w_lo = end.0;
        } else {
            hi = theta;
            w_hi = end.0;
        }
        theta = lo + (hi - lo) * w_lo / (w_lo - w_hi);
        if !(theta > lo && theta < hi) {
            theta = 0.5 * (lo + hi);
        }
        end = rhs.rk4(s, y, theta * full)?;
    }
    Ok((theta * full, end))
}

/// Maximum over samples with `0 <= w <= 1` of `|Φ(w') - Φ(α) - κ (B(w) - M)|`.
pub fn first_integral_residual(profile: &Profile, gf: &GFunction, rt: &ReactionTerm) -> f64 {
    let phi_alpha = gf.phi(profile.alpha);
    profile
        .samples
        .iter()
        .filter(|x| (0.0..=1.0).contains(&x.w))
        .map(|x| (gf.phi(x.p) - phi_alpha - profile.kappa * (rt.big_b(x.w) - rt.mass())).abs())
        .fold(0.0, f64::max)
}

impl Profile {
    /// `w(s)`: exact line for `s >= 0`, cubic Hermite between samples, linear
    /// continuation with slope `ᾱ` below a zero crossing.
    pub fn w_at(&self, s: f64) -> f64 {
        if s >= 0.0 {
            return 1.0 + self.alpha * s;
        }
        let first = self.samples[0];
        if s <= first.s {
            return if self.s_bar.is_some() {
                first.w + self.alpha_bar * (s - first.s)
            } else {
                first.w
            };
        }
        let i = self.samples.partition_point(|x| x.s <= s) - 1;
        let (a, b) = (self.samples[i], self.samples[i + 1]);
        let h = b.s - a.s;
        let t = (s - a.s) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * a.w
            + (t3 - 2.0 * t2 + t) * h * a.p
            + (-2.0 * t3 + 3.0 * t2) * b.w
            + (t3 - t2) * h * b.p
    }

    /// Writes `s,w,wprime` rows: the integrated part followed by the exact
    /// line on `(0, s_max]` at spacing `step`.
    pub fn write_csv<W: Write>(&self, out: &mut W, s_max: f64, step: f64) -> io::Result<()> {
        writeln!(out, "s,w,wprime")?;
        for x in &self.samples {
            writeln!(out, "{:.12e},{:.12e},{:.12e}", x.s, x.w, x.p)?;
        }
        let n = (s_max / step).floor() as usize;
        for k in 1..=n {
            let s = k as f64 * step;
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e}",
                s,
                1.0 + self.alpha * s,
                self.alpha
            )?;
        }
        Ok(())
    }
}
