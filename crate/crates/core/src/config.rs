//! Flat `key = value` experiment configuration.
//!
//! ```text
//! g = power(2)
//! beta = polybump(6)
//! domain.kind = interval
//! domain.x_lo = -1
//! domain.x_hi = 1
//! domain.nodes = 4001
//! bc.lo = dirichlet(0)
//! bc.hi = dirichlet(0.5)
//! eps_schedule = 0.1,0.05,0.025,0.0125,0.00625
//! ```
//!
//! Blank lines and `#` comments are ignored. Everything else has a default;
//! [`ExperimentConfig::emit`] writes every key so emitted files parse back
//! to an identical config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::freeboundary::VerifyOptions;
use crate::gfunc::{parse_gfunction, GFunction};
use crate::reaction::{parse_reaction, ReactionTerm};
use crate::solver::{
    BoundaryCondition, BoundaryData, Domain, DomainKind, RegSchedule, SolverOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<FieldError>),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ConfigError {
    pub fn field_errors(&self) -> &[FieldError] {
        match self {
            ConfigError::Validation(v) => v,
            _ => &[],
        }
    }
}

/// Free-boundary level used by verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauChoice {
    Eps,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub g_spec: String,
    pub beta_spec: String,
    pub domain: Domain,
    pub bc: BoundaryData,
    pub eps_schedule: Vec<f64>,
    pub solver: SolverOptions,
    pub tau: TauChoice,
    pub band: (f64, f64),
    pub radii: Vec<f64>,
    /// Band-measure widths in units of the mesh spacing.
    pub band_deltas_h: Vec<f64>,
    pub band_radius: f64,
    pub t_max: f64,
    pub check_t_min: f64,
    pub check_t_max: f64,
    pub check_samples: usize,
    pub output: PathBuf,
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn gfunction(&self) -> GFunction {
        parse_gfunction(&self.g_spec).expect("validated at parse time")
    }

    /// Reaction term; table files are read again on every call.
    pub fn reaction(&self) -> Result<ReactionTerm, ConfigError> {
        parse_reaction(&self.beta_spec).map_err(|e| invalid("beta", e))
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            tau: match self.tau {
                TauChoice::Eps => None,
                TauChoice::Value(v) => Some(v),
            },
            band: self.band,
            radii: self.radii.clone(),
            band_deltas_h: self.band_deltas_h.clone(),
            band_radius: self.band_radius,
            t_max: self.t_max,
            gamma: 1.0,
        }
    }

    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("g", self.g_spec.clone());
        put("beta", self.beta_spec.clone());
        let (nx, ny) = self.domain.resolution();
        match self.domain.kind() {
            DomainKind::Interval { x_lo, x_hi } => {
                put("domain.kind", "interval".into());
                put("domain.x_lo", x_lo.to_string());
                put("domain.x_hi", x_hi.to_string());
                put("domain.nodes", nx.to_string());
            }
            DomainKind::Radial { r_lo, r_hi, dim } => {
                put("domain.kind", "radial".into());
                put("domain.r_lo", r_lo.to_string());
                put("domain.r_hi", r_hi.to_string());
                put("domain.dim", dim.to_string());
                put("domain.nodes", nx.to_string());
            }
            DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            } => {
                put("domain.kind", "rectangle".into());
                put("domain.x_lo", x_lo.to_string());
                put("domain.x_hi", x_hi.to_string());
                put("domain.y_lo", y_lo.to_string());
                put("domain.y_hi", y_hi.to_string());
                put("domain.nx", nx.to_string());
                put("domain.ny", ny.to_string());
            }
        }
        for (name, piece) in bc_names(&self.domain).iter().zip(self.bc.pieces()) {
            put(&format!("bc.{name}"), bc_text(piece));
        }
        put("eps_schedule", join(&self.eps_schedule));
        put("solver.tol", self.solver.tol.to_string());
        put("solver.max_iters", self.solver.max_iters.to_string());
        put(
            "solver.reg",
            match self.solver.reg {
                RegSchedule::Tied => "tied".into(),
                RegSchedule::Off => "off".into(),
                RegSchedule::Fixed(n) => format!("fixed({n})"),
            },
        );
        put(
            "verify.tau",
            match self.tau {
                TauChoice::Eps => "eps".into(),
                TauChoice::Value(v) => v.to_string(),
            },
        );
        put("verify.band", join(&[self.band.0, self.band.1]));
        put("verify.radii", join(&self.radii));
        put("verify.band_deltas", join(&self.band_deltas_h));
        put("verify.band_radius", self.band_radius.to_string());
        put("verify.t_max", self.t_max.to_string());
        put("check.t_min", self.check_t_min.to_string());
        put("check.t_max", self.check_t_max.to_string());
        put("check.samples", self.check_samples.to_string());
        put("output", self.output.display().to_string());
        put("parallel", self.parallel.to_string());
        out
    }
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn bc_names(domain: &Domain) -> &'static [&'static str] {
    match domain.kind() {
        DomainKind::Interval { .. } => &["lo", "hi"],
        DomainKind::Radial { .. } => &["inner", "outer"],
        DomainKind::Rectangle { .. } => &["left", "right", "bottom", "top"],
    }
}

fn bc_text(piece: &BoundaryCondition) -> String {
    match piece {
        BoundaryCondition::Dirichlet(v) => format!("dirichlet({v})"),
        BoundaryCondition::NaturalZeroFlux => "natural".into(),
    }
}

fn invalid(field: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Validation(vec![FieldError {
        field: field.into(),
        message: message.to_string(),
    }])
}

const KNOWN_KEYS: &[&str] = &[
    "g",
    "beta",
    "domain.kind",
    "domain.x_lo",
    "domain.x_hi",
    "domain.y_lo",
    "domain.y_hi",
    "domain.r_lo",
    "domain.r_hi",
    "domain.dim",
    "domain.nodes",
    "domain.nx",
    "domain.ny",
    "bc.lo",
    "bc.hi",
    "bc.inner",
    "bc.outer",
    "bc.left",
    "bc.right",
    "bc.bottom",
    "bc.top",
    "eps_schedule",
    "solver.tol",
    "solver.max_iters",
    "solver.reg",
    "verify.tau",
    "verify.band",
    "verify.radii",
    "verify.band_deltas",
    "verify.band_radius",
    "verify.t_max",
    "check.t_min",
    "check.t_max",
    "check.samples",
    "output",
    "parallel",
];

/// Collects field errors while reading typed values.
struct Reader {
    map: BTreeMap<String, String>,
    errors: Vec<FieldError>,
}

impl Reader {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_none() {
            self.fail(key, "missing");
        }
        v
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: Option<T>) -> Option<T> {
        match self.map.get(key).cloned() {
            Some(text) => match text.parse::<T>() {
                Ok(v) => Some(v),
                Err(_) => {
                    self.fail(key, format!("cannot parse '{text}'"));
                    None
                }
            },
            None if default.is_some() => default,
            None => {
                self.fail(key, "missing");
                None
            }
        }
    }

    fn list(&mut self, key: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        match self.map.get(key).cloned() {
            Some(text) => {
                let parsed: Result<Vec<f64>, _> =
                    text.split(',').map(|s| s.trim().parse::<f64>()).collect();
                match parsed {
                    Ok(v) if !v.is_empty() => Some(v),
                    _ => {
                        self.fail(
                            key,
                            format!("expected a comma-separated list of numbers, got '{text}'"),
                        );
                        None
                    }
                }
            }
            None if default.is_some() => default,
            None => {
                self.fail(key, "missing");
                None
            }
        }
    }

    fn positive(&mut self, key: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.fail(key, format!("must be positive and finite, got {x}"));
                None
            }
            None => None,
        }
    }
}

fn parse_bc(text: &str) -> Result<BoundaryCondition, String> {
    let t = text.trim();
    if t == "natural" {
        return Ok(BoundaryCondition::NaturalZeroFlux);
    }
    let inner = t
        .strip_prefix("dirichlet(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| format!("expected 'dirichlet(<value>)' or 'natural', got '{t}'"))?;
    let v: f64 = inner
        .trim()
        .parse()
        .map_err(|_| format!("bad Dirichlet value '{inner}'"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("Dirichlet value must be finite and >= 0, got {v}"));
    }
    Ok(BoundaryCondition::Dirichlet(v))
}

fn parse_reg(text: &str) -> Option<RegSchedule> {
    match text.trim() {
        "tied" => Some(RegSchedule::Tied),
        "off" => Some(RegSchedule::Off),
        t => t
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|n| n.trim().parse::<f64>().ok())
            .filter(|n| *n > 0.0)
            .map(RegSchedule::Fixed),
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            message: format!("expected 'key = value', got '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("unknown key '{key}'"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("empty value for '{key}'"),
            });
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(ConfigError::Parse {
                line: line_no,
                message: format!("duplicate key '{key}'"),
            });
        }
    }
    validate(Reader {
        map,
        errors: Vec::new(),
    })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_str(&text)
}

fn validate(mut r: Reader) -> Result<ExperimentConfig, ConfigError> {
    let g_spec = r.raw("g");
    if let Some(g) = &g_spec {
        if let Err(e) = parse_gfunction(g) {
            r.fail("g", e.to_string());
        }
    }
    let beta_spec = r.raw("beta");
    if let Some(b) = &beta_spec {
        if let Err(e) = parse_reaction(b) {
            r.fail("beta", e.to_string());
        }
    }

    let kind = r.raw("domain.kind");
    let domain = match kind.as_deref() {
        Some("interval") => {
            let (lo, hi, n) = (
                r.parsed("domain.x_lo", None),
                r.parsed("domain.x_hi", None),
                r.parsed::<usize>("domain.nodes", None),
            );
            domain_or_error(&mut r, "domain.nodes", n.map(|n| (n, 3)), || {
                Domain::interval(lo?, hi?, n?).ok()
            })
        }
        Some("radial") => {
            let (lo, hi) = (r.parsed("domain.r_lo", None), r.parsed("domain.r_hi", None));
            let (dim, n) = (
                r.parsed::<u32>("domain.dim", None),
                r.parsed::<usize>("domain.nodes", None),
            );
            domain_or_error(&mut r, "domain.nodes", n.map(|n| (n, 3)), || {
                Domain::radial(lo?, hi?, dim?, n?).ok()
            })
        }
        Some("rectangle") => {
            let (xl, xh) = (r.parsed("domain.x_lo", None), r.parsed("domain.x_hi", None));
            let (yl, yh) = (r.parsed("domain.y_lo", None), r.parsed("domain.y_hi", None));
            let (nx, ny) = (
                r.parsed::<usize>("domain.nx", None),
                r.parsed::<usize>("domain.ny", None),
            );
            let smallest = nx.zip(ny).map(|(a, b)| (a.min(b), 3));
            domain_or_error(&mut r, "domain.nx", smallest, || {
                Domain::rectangle(xl?, xh?, yl?, yh?, nx?, ny?).ok()
            })
        }
        Some(other) => {
            let msg = format!("expected interval, radial or rectangle, got '{other}'");
            r.fail("domain.kind", msg);
            None
        }
        None => None,
    };

    let bc = domain.as_ref().and_then(|d| {
        let mut pieces = Vec::new();
        for name in bc_names(d) {
            let key = format!("bc.{name}");
            let text = r.raw(&key)?;
            match parse_bc(&text) {
                Ok(p) => pieces.push(p),
                Err(m) => {
                    r.fail(&key, m);
                    return None;
                }
            }
        }
        match BoundaryData::new(pieces) {
            Ok(bc) => Some(bc),
            Err(e) => {
                r.fail("bc", e.to_string());
                None
            }
        }
    });

    let eps_schedule = r.list("eps_schedule", None).and_then(|s| {
        if s.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            r.fail("eps_schedule", "entries must be positive");
            None
        } else if s.windows(2).any(|w| w[1] >= w[0]) {
            r.fail("eps_schedule", "not strictly decreasing");
            None
        } else {
            Some(s)
        }
    });

    let defaults = SolverOptions::default();
    let tol = r.parsed("solver.tol", Some(defaults.tol));
    let tol = r.positive("solver.tol", tol);
    let max_iters = r.parsed::<usize>("solver.max_iters", Some(defaults.max_iters));
    if max_iters == Some(0) {
        r.fail("solver.max_iters", "must be at least 1");
    }
    let reg = match r.map.get("solver.reg").cloned() {
        Some(t) => parse_reg(&t).or_else(|| {
            r.fail(
                "solver.reg",
                format!("expected tied, off or fixed(<n>), got '{t}'"),
            );
            None
        }),
        None => Some(RegSchedule::Tied),
    };

    let vd = VerifyOptions::default();
    let tau = match r.map.get("verify.tau").cloned() {
        None => Some(TauChoice::Eps),
        Some(t) if t == "eps" => Some(TauChoice::Eps),
        Some(t) => match t.parse::<f64>() {
            Ok(v) if v > 0.0 => Some(TauChoice::Value(v)),
            _ => {
                r.fail(
                    "verify.tau",
                    format!("expected 'eps' or a positive number, got '{t}'"),
                );
                None
            }
        },
    };
    let band = r
        .list("verify.band", Some(vec![vd.band.0, vd.band.1]))
        .and_then(|b| match b[..] {
            [lo, hi] if 0.0 < lo && lo < hi && hi < 1.0 => Some((lo, hi)),
            _ => {
                r.fail("verify.band", "expected lo,hi with 0 < lo < hi < 1");
                None
            }
        });
    let radii = r
        .list("verify.radii", Some(vd.radii.clone()))
        .and_then(|v| {
            if v.iter().all(|x| *x > 0.0) {
                Some(v)
            } else {
                r.fail("verify.radii", "radii must be positive");
                None
            }
        });
    let band_deltas_h = r
        .list("verify.band_deltas", Some(vd.band_deltas_h.clone()))
        .and_then(|v| {
            if v.iter().all(|x| *x > 0.0) {
                Some(v)
            } else {
                r.fail("verify.band_deltas", "band widths must be positive");
                None
            }
        });
    let band_radius = r.parsed("verify.band_radius", Some(vd.band_radius));
    let band_radius = r.positive("verify.band_radius", band_radius);
    let t_max = r.parsed("verify.t_max", Some(vd.t_max));
    let t_max = r.positive("verify.t_max", t_max);

    let check_t_min = r.parsed("check.t_min", Some(1e-3));
    let check_t_min = r.positive("check.t_min", check_t_min);
    let check_t_max = r.parsed("check.t_max", Some(1e3));
    let check_t_max = r.positive("check.t_max", check_t_max);
    if let (Some(a), Some(b)) = (check_t_min, check_t_max) {
        if a >= b {
            r.fail("check.t_max", "must exceed check.t_min");
        }
    }
    let check_samples = r.parsed::<usize>("check.samples", Some(10_000));
    if matches!(check_samples, Some(n) if n < 2) {
        r.fail("check.samples", "need at least 2 samples");
    }
    let output = r.map.get("output").cloned().unwrap_or_else(|| "out".into());
    let parallel = r.parsed::<bool>("parallel", Some(false));

    if !r.errors.is_empty() {
        return Err(ConfigError::Validation(r.errors));
    }
    // every Option is Some once no error was recorded
    Ok(ExperimentConfig {
        g_spec: g_spec.unwrap(),
        beta_spec: beta_spec.unwrap(),
        domain: domain.unwrap(),
        bc: bc.unwrap(),
        eps_schedule: eps_schedule.unwrap(),
        solver: SolverOptions {
            tol: tol.unwrap(),
            max_iters: max_iters.unwrap(),
            reg: reg.unwrap(),
            ..defaults
        },
        tau: tau.unwrap(),
        band: band.unwrap(),
        radii: radii.unwrap(),
        band_deltas_h: band_deltas_h.unwrap(),
        band_radius: band_radius.unwrap(),
        t_max: t_max.unwrap(),
        check_t_min: check_t_min.unwrap(),
        check_t_max: check_t_max.unwrap(),
        check_samples: check_samples.unwrap(),
        output: PathBuf::from(output),
        parallel: parallel.unwrap(),
    })
}

/// Builds the domain, recording a field error when the node count is too
/// small or the constructor rejects the bounds.
fn domain_or_error(
    r: &mut Reader,
    count_field: &str,
    count: Option<(usize, usize)>,
    build: impl FnOnce() -> Option<Domain>,
) -> Option<Domain> {
    if let Some((n, min)) = count {
        if n < min {
            r.fail(
                count_field,
                format!("need at least {min} nodes per axis, got {n}"),
            );
            return None;
        }
    }
    let before = r.errors.len();
    match build() {
        Some(d) => Some(d),
        None => {
            if r.errors.len() == before {
                r.fail(
                    "domain",
                    "bounds must be finite and ordered (radial: r_lo > 0, dim >= 2)",
                );
            }
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "g = power(2)\nbeta = polybump(6)\ndomain.kind = interval\ndomain.x_lo = -1\ndomain.x_hi = 1\ndomain.nodes = 101\nbc.lo = dirichlet(0)\nbc.hi = dirichlet(0.5)\neps_schedule = 0.1\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.tau, TauChoice::Eps);
        assert_eq!(c.band, (0.3, 0.7));
        assert_eq!(c.check_samples, 10_000);
        assert!(!c.parallel);
        assert_eq!(c.output, PathBuf::from("out"));
        assert_eq!(c.bc, BoundaryData::dirichlet_ends(0.0, 0.5).unwrap());
    }

    #[test]
    fn emit_parse_round_trip() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(parse_config_str(&c.emit()).unwrap(), c);
        let rect = "g = sum(0.5*power(2),power(3))\nbeta = sinebump(1.5)\ndomain.kind = rectangle\ndomain.x_lo = 0\ndomain.x_hi = 2\ndomain.y_lo = -0.5\ndomain.y_hi = 0.5\ndomain.nx = 21\ndomain.ny = 11\nbc.left = dirichlet(0)\nbc.right = dirichlet(0.25)\nbc.bottom = natural\nbc.top = natural\neps_schedule = 0.1,0.05\nsolver.reg = fixed(50)\nverify.tau = 0.02\nparallel = true\n";
        let c = parse_config_str(rect).unwrap();
        let text = c.emit();
        assert_eq!(parse_config_str(&text).unwrap(), c);
        assert_eq!(parse_config_str(&text).unwrap().emit(), text);
    }

    #[test]
    fn decreasing_schedule_required() {
        let text = MINIMAL.replace("eps_schedule = 0.1", "eps_schedule = 0.1,0.05,0.2");
        let err = parse_config_str(&text).unwrap_err();
        let fe = err.field_errors();
        assert_eq!(fe.len(), 1);
        assert_eq!(fe[0].field, "eps_schedule");
        assert_eq!(fe[0].message, "not strictly decreasing");
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = format!("{MINIMAL}\n# comment\nbogus line\n");
        assert!(matches!(
            parse_config_str(&text),
            Err(ConfigError::Parse { line: 12, .. })
        ));
        let text = format!("{MINIMAL}colour = blue\n");
        assert!(matches!(
            parse_config_str(&text),
            Err(ConfigError::Parse { line: 10, .. })
        ));
        let text = format!("{MINIMAL}g = power(3)\n");
        assert!(matches!(
            parse_config_str(&text),
            Err(ConfigError::Parse { line: 10, .. })
        ));
    }

    #[test]
    fn validation_names_every_bad_field() {
        let text = MINIMAL
            .replace("power(2)", "power(0.5)")
            .replace("domain.nodes = 101", "domain.nodes = 2")
            .replace("dirichlet(0.5)", "dirichlet(-1)");
        let err = parse_config_str(&format!("{text}verify.band = 0.7,0.3\n")).unwrap_err();
        let fields: Vec<&str> = err
            .field_errors()
            .iter()
            .map(|e| e.field.as_str())
            .collect();
        assert_eq!(fields, ["g", "domain.nodes", "verify.band"]);
        let err = parse_config_str(
            &MINIMAL
                .replace("domain.nodes = 101", "domain.nodes = 11")
                .replace("dirichlet(0.5)", "dirichlet(-1)"),
        )
        .unwrap_err();
        assert_eq!(err.field_errors()[0].field, "bc.hi");
        let err = parse_config_str("g = power(2)\n").unwrap_err();
        assert!(err
            .field_errors()
            .iter()
            .any(|e| e.field == "beta" && e.message == "missing"));
    }
}
