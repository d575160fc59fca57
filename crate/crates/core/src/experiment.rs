//! The full pipeline: condition gate, eps sweep, verification, artifacts.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::freeboundary::{
    estimate_slope, extract_free_boundary, sup_gradient, verify, FreeBoundaryError,
    FreeBoundaryReport, VerifyOptions,
};
use crate::gfunc::{check_lieberman, ConditionReport, GFuncError};
use crate::solver::{
    sweep, sweep_independent, write_snapshot, DiscreteField, SolverError, SweepEntry,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("output directory {0} exists (use --force to overwrite)")]
    OutputExists(PathBuf),
    #[error("g fails the growth conditions: {0}")]
    Gate(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    GFunc(#[from] GFuncError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("verification: {0}")]
    Verify(#[from] FreeBoundaryError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl ExperimentError {
    /// Pipeline stage named in the failure record.
    pub fn stage(&self) -> &'static str {
        match self {
            ExperimentError::OutputExists(_) | ExperimentError::Io { .. } => "output",
            ExperimentError::Gate(_) | ExperimentError::GFunc(_) => "check-g",
            ExperimentError::Config(_) => "config",
            ExperimentError::Solver(_) => "solve",
            ExperimentError::Verify(_) => "verify",
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One line per condition item, `name passed=<b> worst_margin=<v> worst_at=<t>,<s> samples=<n>`.
pub fn format_condition_report(report: &ConditionReport) -> String {
    let mut out = format!("passed={}\n", report.passed);
    for item in &report.items {
        let _ = writeln!(
            out,
            "{} passed={} worst_margin={:e} worst_at={:e},{:e} samples={}",
            item.name,
            item.passed,
            item.worst_margin,
            item.worst_at.0,
            item.worst_at.1,
            item.samples
        );
    }
    out
}

/// Solves in config order: warm-started, or independent solves when `parallel` is set.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepEntry>, ExperimentError> {
    let gf = cfg.gfunction();
    let rt = cfg.reaction()?;
    let f = if cfg.parallel {
        sweep_independent
    } else {
        sweep
    };
    Ok(f(
        &gf,
        &rt,
        &cfg.domain,
        &cfg.bc,
        &cfg.eps_schedule,
        &cfg.solver,
    )?)
}

pub const SWEEP_HEADER: &str = "eps,h,energy,iters,sup_grad,lambda_hat,fb_location";

/// Sweep table; quantities that cannot be measured on an entry are written as `nan`.
pub fn sweep_csv(cfg: &ExperimentConfig, entries: &[SweepEntry]) -> String {
    let h = cfg.domain.h();
    let vopts = cfg.verify_options();
    let mut out = format!("{SWEEP_HEADER}\n");
    for e in entries {
        let (lam, fb) = slope_and_location(&e.field, &vopts).unwrap_or((f64::NAN, f64::NAN));
        let sup = sup_gradient(&e.field);
        let _ = writeln!(
            out,
            "{},{},{:.16e},{},{:.16e},{:.16e},{:.16e}",
            e.eps, h, e.diagnostics.energy, e.diagnostics.iterations, sup, lam, fb
        );
    }
    out
}

/// Slope estimate and first coordinate of the reference free-boundary point.
fn slope_and_location(field: &DiscreteField, opts: &VerifyOptions) -> Option<(f64, f64)> {
    let pts = extract_free_boundary(field, opts.tau.unwrap_or(field.eps));
    let x0 = *pts.get(pts.len() / 2)?;
    Some((estimate_slope(field, &pts, opts.band).ok()?, x0[0]))
}

pub fn format_report(
    cfg: &ExperimentConfig,
    entries: &[SweepEntry],
    lambda_star: f64,
    r: &FreeBoundaryReport,
) -> String {
    let last = entries.last().expect("nonempty sweep");
    let mass = cfg.reaction().map(|rt| rt.mass()).unwrap_or(f64::NAN);
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("g", cfg.g_spec.clone());
    kv("beta", cfg.beta_spec.clone());
    kv("domain", cfg.domain.to_string());
    kv("mass", format!("{mass:.16e}"));
    kv("lambda_star", format!("{lambda_star:.16e}"));
    kv("eps", last.eps.to_string());
    kv("reg_n", last.field.reg_n.to_string());
    kv("h", cfg.domain.h().to_string());
    kv("tau", r.tau.to_string());
    kv("fb_points", r.fb_points.len().to_string());
    kv("x0", format!("{:.16e},{:.16e}", r.x0[0], r.x0[1]));
    kv("nu", format!("{:.16e},{:.16e}", r.nu[0], r.nu[1]));
    kv("lambda_hat", format!("{:.16e}", r.lambda_hat));
    kv(
        "lambda_hat_rel_err",
        format!("{:.16e}", (r.lambda_hat - lambda_star).abs() / lambda_star),
    );
    kv("sup_grad", format!("{:.16e}", r.sup_grad));
    kv("asym_residual", format!("{:.16e}", r.asym_residual));
    kv("gamma", r.gamma.to_string());
    for (i, (radius, v)) in r.nondeg_ratios.iter().enumerate() {
        kv(&format!("nondeg_{i}"), format!("{radius},{v:.16e}"));
    }
    for (i, (delta, m)) in r.band_measures.iter().enumerate() {
        kv(&format!("band_{i}"), format!("{delta:.16e},{m:.16e}"));
    }
    kv(
        "iterations_total",
        entries
            .iter()
            .map(|e| e.diagnostics.iterations)
            .sum::<usize>()
            .to_string(),
    );
    kv("converged", "true".into());
    out
}

pub fn snapshot_name(index: usize) -> String {
    format!("snapshot_{index:03}.txt")
}

/// Creates `dir`, refusing an existing one unless `force`.
pub fn prepare_output(dir: &Path, force: bool) -> Result<(), ExperimentError> {
    if dir.exists() && !force {
        return Err(ExperimentError::OutputExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn write_snapshots(dir: &Path, entries: &[SweepEntry]) -> Result<(), ExperimentError> {
    for (i, e) in entries.iter().enumerate() {
        let path = dir.join(snapshot_name(i));
        let mut buf = Vec::new();
        write_snapshot(&e.field, &mut buf).map_err(|err| io_err(&path, err))?;
        write_file(&path, &buf)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub lambda_star: f64,
    pub entries: Vec<SweepEntry>,
    pub report: FreeBoundaryReport,
}

/// Gate, sweep and verify, then write `lambda_star.txt`, `sweep.csv`,
/// `report.txt` and one snapshot per schedule entry into `out`. All files
/// are written after every result is in.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    force: bool,
) -> Result<ExperimentSummary, ExperimentError> {
    prepare_output(out, force)?;
    let result = pipeline(cfg, out);
    if let Err(e) = &result {
        let record = format!(
            "status=failed\nstage={}\nmessage={}\n",
            e.stage(),
            e.to_string().replace('\n', " ")
        );
        let _ = write_file(&out.join("failure.txt"), record.as_bytes());
    } else {
        let _ = fs::remove_file(out.join("failure.txt"));
    }
    result
}

fn pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentSummary, ExperimentError> {
    let gf = cfg.gfunction();
    let rt = cfg.reaction()?;
    let gate = check_lieberman(&gf, cfg.check_t_min, cfg.check_t_max, cfg.check_samples)?;
    write_file(
        &out.join("check_g.txt"),
        format_condition_report(&gate).as_bytes(),
    )?;
    if !gate.passed {
        let failed: Vec<&str> = gate
            .items
            .iter()
            .filter(|i| !i.passed)
            .map(|i| i.name)
            .collect();
        return Err(ExperimentError::Gate(failed.join(",")));
    }
    let lambda_star = gf.invert_phi(rt.mass())?;
    let entries = run_sweep(cfg)?;
    let last = entries.last().expect("schedule is nonempty");
    let report = verify(&last.field, lambda_star, &cfg.verify_options())?;

    write_file(
        &out.join("lambda_star.txt"),
        format!("{lambda_star:.16e}\n").as_bytes(),
    )?;
    write_file(&out.join("sweep.csv"), sweep_csv(cfg, &entries).as_bytes())?;
    write_file(
        &out.join("report.txt"),
        format_report(cfg, &entries, lambda_star, &report).as_bytes(),
    )?;
    write_snapshots(out, &entries)?;
    write_file(&out.join("config.txt"), cfg.emit().as_bytes())?;
    Ok(ExperimentSummary {
        lambda_star,
        entries,
        report,
    })
}

/// Writes `text` to stdout, ignoring a closed pipe.
pub fn print_stdout(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config_str;

    fn small(extra: &str) -> ExperimentConfig {
        let text = format!(
            "g = power(2)\nbeta = polybump(6)\ndomain.kind = interval\ndomain.x_lo = -1\ndomain.x_hi = 1\ndomain.nodes = 401\nbc.lo = dirichlet(0)\nbc.hi = dirichlet(0.5)\neps_schedule = 0.1,0.05\ncheck.samples = 500\nverify.radii = 0.02,0.1\n{extra}"
        );
        parse_config_str(&text).unwrap()
    }

    #[test]
    fn writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let s = run_experiment(&small(""), &out, false).unwrap();
        for f in [
            "sweep.csv",
            "report.txt",
            "lambda_star.txt",
            "snapshot_000.txt",
            "snapshot_001.txt",
            "check_g.txt",
            "config.txt",
        ] {
            assert!(out.join(f).exists(), "{f}");
        }
        assert!(!out.join("failure.txt").exists());
        let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 3);
        assert!((s.lambda_star - 2f64.sqrt()).abs() < 1e-12);
        let report = fs::read_to_string(out.join("report.txt")).unwrap();
        assert!(report.contains(&format!("lambda_hat={:.16e}", s.report.lambda_hat)));
    }

    #[test]
    fn refuses_existing_output_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        fs::create_dir(&out).unwrap();
        assert!(matches!(
            run_experiment(&small(""), &out, false),
            Err(ExperimentError::OutputExists(_))
        ));
        assert!(run_experiment(&small(""), &out, true).is_ok());
    }

    #[test]
    fn gate_stops_before_solving() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let mut cfg = small("");
        cfg.g_spec = "bounds(power(3), 1.5, 1.8)".into();
        let err = run_experiment(&cfg, &out, false).unwrap_err();
        assert!(matches!(err, ExperimentError::Gate(_)), "{err}");
        let record = fs::read_to_string(out.join("failure.txt")).unwrap();
        assert!(record.starts_with("status=failed\nstage=check-g\n"));
        assert!(!out.join("sweep.csv").exists());
        assert!(!out.join("snapshot_000.txt").exists());
    }
}
