//! Reaction terms `β` supported on `[0, 1]`, their primitives and the
//! `ε`-rescaled family `β_ε(s) = β(s/ε)/ε`, `B_ε(s) = B(s/ε)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReactionError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid reaction term: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot read table {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReactionShape {
    /// `c s (1 - s)`.
    PolyBump { c: f64 },
    /// `c sin(π s)`.
    SineBump { c: f64 },
    /// Piecewise-linear interpolation of samples on `[0, 1]`, zero at both ends.
    Table(BumpTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BumpTable {
    s: Vec<f64>,
    beta: Vec<f64>,
    /// `B` at each sample.
    cumulative: Vec<f64>,
    source: Option<String>,
}

impl BumpTable {
    /// Builds a table from samples on `[0, 1]`. The endpoint values are forced
    /// to zero; interior values must be positive.
    pub fn new(samples: &[(f64, f64)], source: Option<String>) -> Result<Self, ReactionError> {
        let mut pts: Vec<(f64, f64)> = samples
            .iter()
            .copied()
            .filter(|(s, _)| *s > 0.0 && *s < 1.0)
            .collect();
        if pts.is_empty() {
            return Err(ReactionError::Invalid(
                "table needs at least one sample inside (0, 1)".into(),
            ));
        }
        for w in pts.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ReactionError::Invalid(
                    "table abscissae must be strictly increasing".into(),
                ));
            }
        }
        if samples
            .iter()
            .any(|(s, b)| !s.is_finite() || !b.is_finite() || *s < 0.0 || *s > 1.0)
        {
            return Err(ReactionError::Invalid(
                "table samples must be finite with s in [0, 1]".into(),
            ));
        }
        if let Some((s, b)) = pts.iter().find(|(_, b)| *b <= 0.0) {
            return Err(ReactionError::Invalid(format!(
                "beta must be positive inside (0, 1), got {b} at s = {s}"
            )));
        }
        pts.insert(0, (0.0, 0.0));
        pts.push((1.0, 0.0));
        let (s, beta): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let mut cumulative = vec![0.0; s.len()];
        for i in 1..s.len() {
            cumulative[i] = cumulative[i - 1] + 0.5 * (beta[i] + beta[i - 1]) * (s[i] - s[i - 1]);
        }
        Ok(Self {
            s,
            beta,
            cumulative,
            source,
        })
    }

    pub fn from_csv(path: &Path) -> Result<Self, ReactionError> {
        let io = |message: String| ReactionError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [a, b] => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some(p) => samples.push(p),
                // a header row is allowed
                None if lineno == 0 => continue,
                None => {
                    return Err(io(format!(
                        "line {}: expected two numeric columns",
                        lineno + 1
                    )))
                }
            }
        }
        Self::new(&samples, Some(path.display().to_string()))
    }

    fn segment(&self, s: f64) -> usize {
        // index i with s[i] <= s < s[i+1]
        match self.s.binary_search_by(|x| x.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.s.len() - 2),
            Err(i) => i - 1,
        }
    }

    fn eval(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let t = (s - self.s[i]) / (self.s[i + 1] - self.s[i]);
        self.beta[i] + t * (self.beta[i + 1] - self.beta[i])
    }

    fn slope(&self, s: f64) -> f64 {
        let i = self.segment(s);
        (self.beta[i + 1] - self.beta[i]) / (self.s[i + 1] - self.s[i])
    }

    fn primitive(&self, w: f64) -> f64 {
        let i = self.segment(w);
        let dx = w - self.s[i];
        self.cumulative[i] + dx * (self.beta[i] + 0.5 * dx * self.slope(w))
    }

    fn scaled(&self, k: f64) -> Self {
        Self {
            s: self.s.clone(),
            beta: self.beta.iter().map(|b| k * b).collect(),
            cumulative: self.cumulative.iter().map(|b| k * b).collect(),
            source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionTerm {
    shape: ReactionShape,
    lipschitz: f64,
    mass: f64,
}

impl ReactionTerm {
    pub fn poly_bump(c: f64) -> Result<Self, ReactionError> {
        check_amplitude(c)?;
        Ok(Self {
            shape: ReactionShape::PolyBump { c },
            lipschitz: c,
            mass: c / 6.0,
        })
    }

    pub fn sine_bump(c: f64) -> Result<Self, ReactionError> {
        check_amplitude(c)?;
        Ok(Self {
            shape: ReactionShape::SineBump { c },
            lipschitz: c * PI,
            mass: 2.0 * c / PI,
        })
    }

    pub fn table(table: BumpTable) -> Self {
        let lipschitz = table
            .s
            .windows(2)
            .zip(table.beta.windows(2))
            .map(|(s, b)| ((b[1] - b[0]) / (s[1] - s[0])).abs())
            .fold(0.0, f64::max);
        let mass = *table.cumulative.last().unwrap();
        Self {
            shape: ReactionShape::Table(table),
            lipschitz,
            mass,
        }
    }

    /// `k β`, with mass `k M`.
    pub fn scaled(&self, k: f64) -> Result<Self, ReactionError> {
        check_amplitude(k)?;
        let shape = match &self.shape {
            ReactionShape::PolyBump { c } => ReactionShape::PolyBump { c: c * k },
            ReactionShape::SineBump { c } => ReactionShape::SineBump { c: c * k },
            ReactionShape::Table(t) => ReactionShape::Table(t.scaled(k)),
        };
        Ok(Self {
            shape,
            lipschitz: self.lipschitz * k,
            mass: self.mass * k,
        })
    }

    pub fn shape(&self) -> &ReactionShape {
        &self.shape
    }

    /// Total mass `M = ∫_0^1 β`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn beta(&self, s: f64) -> f64 {
        if !(s > 0.0 && s < 1.0) {
            return 0.0;
        }
        match &self.shape {
            ReactionShape::PolyBump { c } => c * s * (1.0 - s),
            ReactionShape::SineBump { c } => c * (PI * s).sin(),
            ReactionShape::Table(t) => t.eval(s),
        }
    }

    /// `β'(s)` inside the support, zero outside and at the endpoints.
    pub fn dbeta(&self, s: f64) -> f64 {
        if !(s > 0.0 && s < 1.0) {
            return 0.0;
        }
        match &self.shape {
            ReactionShape::PolyBump { c } => c * (1.0 - 2.0 * s),
            ReactionShape::SineBump { c } => c * PI * (PI * s).cos(),
            ReactionShape::Table(t) => t.slope(s),
        }
    }

    /// `B(w) = ∫_0^w β`.
    pub fn big_b(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        if w >= 1.0 {
            return self.mass;
        }
        match &self.shape {
            ReactionShape::PolyBump { c } => c * w * w * (0.5 - w / 3.0),
            ReactionShape::SineBump { c } => c * (1.0 - (PI * w).cos()) / PI,
            ReactionShape::Table(t) => t.primitive(w),
        }
    }

    pub fn beta_eps(&self, eps: f64, s: f64) -> f64 {
        self.beta(s / eps) / eps
    }

    pub fn dbeta_eps(&self, eps: f64, s: f64) -> f64 {
        self.dbeta(s / eps) / (eps * eps)
    }

    pub fn big_b_eps(&self, eps: f64, s: f64) -> f64 {
        self.big_b(s / eps)
    }

    pub fn eval_beta_eps(&self, eps: f64, s: f64) -> Result<f64, ReactionError> {
        check_eps(eps, s)?;
        Ok(self.beta_eps(eps, s))
    }

    pub fn eval_big_b_eps(&self, eps: f64, s: f64) -> Result<f64, ReactionError> {
        check_eps(eps, s)?;
        Ok(self.big_b_eps(eps, s))
    }
}

fn check_amplitude(c: f64) -> Result<(), ReactionError> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(ReactionError::Invalid(format!(
            "amplitude must be positive and finite, got {c}"
        )))
    }
}

fn check_eps(eps: f64, s: f64) -> Result<(), ReactionError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(ReactionError::Domain(format!(
            "eps must be positive, got {eps}"
        )));
    }
    if s.is_nan() {
        return Err(ReactionError::Domain("argument is NaN".into()));
    }
    Ok(())
}

/// Parses `polybump(c)`, `sinebump(c)` or `table(path.csv)`.
pub fn parse_reaction(text: &str) -> Result<ReactionTerm, ReactionError> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| ReactionError::Parse(format!("expected name(args), got '{text}'")))?;
    if !text.ends_with(')') {
        return Err(ReactionError::Parse(format!("missing ')' in '{text}'")));
    }
    let name = text[..open].trim().to_lowercase();
    let arg = text[open + 1..text.len() - 1].trim();
    let number = || {
        arg.parse::<f64>()
            .map_err(|_| ReactionError::Parse(format!("expected a number, got '{arg}'")))
    };
    match name.as_str() {
        "polybump" => ReactionTerm::poly_bump(number()?),
        "sinebump" => ReactionTerm::sine_bump(number()?),
        "table" => Ok(ReactionTerm::table(BumpTable::from_csv(Path::new(arg))?)),
        other => Err(ReactionError::Parse(format!("unknown reaction '{other}'"))),
    }
}

impl fmt::Display for ReactionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            ReactionShape::PolyBump { c } => write!(f, "polybump({c})"),
            ReactionShape::SineBump { c } => write!(f, "sinebump({c})"),
            ReactionShape::Table(t) => match &t.source {
                Some(p) => write!(f, "table({p})"),
                None => write!(f, "table(<memory>)"),
            },
        }
    }
}
