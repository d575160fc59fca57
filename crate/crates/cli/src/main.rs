use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orliczfb::config::{parse_config, ExperimentConfig};
use orliczfb::experiment::{
    format_condition_report, format_report, prepare_output, print_stdout, run_experiment,
    run_sweep, sweep_csv, write_snapshots, ExperimentError,
};
use orliczfb::freeboundary::verify;
use orliczfb::gfunc::{check_derivative_condition, check_lieberman, parse_gfunction};
use orliczfb::profile::integrate_profile;
use orliczfb::reaction::parse_reaction;
use orliczfb::solver::{minimize, read_snapshot, write_snapshot, SweepEntry};

#[derive(Parser)]
#[command(
    name = "orliczfb",
    version,
    about = "Singular perturbation free boundaries for Orlicz-type operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the growth conditions of a nonlinearity.
    CheckG(CheckG),
    /// Integrate the one-dimensional traveling profile and print it as CSV.
    Profile(ProfileArgs),
    /// Solve a single eps of a config.
    Solve(SolveArgs),
    /// Solve the whole eps schedule of a config.
    Sweep(RunArgs),
    /// Measure free-boundary quantities on a snapshot.
    Verify(VerifyArgs),
    /// Check, sweep and verify, writing every artifact.
    Run(RunArgs),
}

#[derive(Args)]
struct CheckG {
    /// Nonlinearity expression, e.g. `powerlog(1,1,3)`.
    #[arg(long, conflicts_with = "config")]
    g: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    t_min: f64,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Also check the derivative condition with this eta0, using the mass of `--beta`.
    #[arg(long)]
    eta0: Option<f64>,
    #[arg(long, default_value = "polybump(6)")]
    beta: String,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    g: String,
    #[arg(long, default_value = "polybump(6)")]
    beta: String,
    /// Slope at s = 0; the critical slope for kappa = 1 when omitted.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    s_min: f64,
    #[arg(long, default_value_t = 1.0)]
    s_max: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the first schedule entry.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; the config's `output` when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    force: bool,
    /// Solve schedule entries independently and concurrently.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Also write nondegeneracy ratios and band measures as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    /// Bad input; nothing was attempted.
    Usage(String),
    /// A check or solve ran and failed.
    Failed(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::OutputExists(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Failed(format!(
                "status=failed stage={} message={}",
                other.stage(),
                other
            )),
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> Failure {
    Failure::Failed(e.to_string())
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    parse_config(path).map_err(usage)
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.clone())
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| failed(format!("{}: {e}", path.display())))
}

fn check_g(args: CheckG) -> Result<(), Failure> {
    let (spec, t_min, t_max, samples) = match &args.config {
        Some(p) => {
            let cfg = load(p)?;
            (
                cfg.g_spec.clone(),
                cfg.check_t_min,
                cfg.check_t_max,
                cfg.check_samples,
            )
        }
        None => (
            args.g
                .clone()
                .ok_or_else(|| usage("pass --g or --config"))?,
            args.t_min,
            args.t_max,
            args.samples,
        ),
    };
    let gf = parse_gfunction(&spec).map_err(usage)?;
    let report = check_lieberman(&gf, t_min, t_max, samples).map_err(failed)?;
    print_stdout(&format!("g={gf}\ndelta={}\ng0={}\n", gf.delta(), gf.g0()));
    print_stdout(&format_condition_report(&report));
    let mut passed = report.passed;
    if let Some(eta0) = args.eta0 {
        let rt = parse_reaction(&args.beta).map_err(usage)?;
        let dc =
            check_derivative_condition(&gf, eta0, rt.mass(), samples.min(200)).map_err(failed)?;
        print_stdout(&format_condition_report(&dc).replacen(
            "passed=",
            "derivative_condition_passed=",
            1,
        ));
        passed &= dc.passed;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Failed("status=failed stage=check-g".into()))
    }
}

fn profile(args: ProfileArgs) -> Result<(), Failure> {
    let gf = parse_gfunction(&args.g).map_err(usage)?;
    let rt = parse_reaction(&args.beta).map_err(usage)?;
    let alpha = match args.alpha {
        Some(a) => a,
        None => gf.invert_phi(args.kappa * rt.mass()).map_err(failed)?,
    };
    let prof =
        integrate_profile(&gf, &rt, alpha, args.kappa, args.s_min, args.step).map_err(failed)?;
    let mut csv = Vec::new();
    prof.write_csv(&mut csv, args.s_max, args.step)
        .map_err(failed)?;
    let summary = format!(
        "alpha={} alpha_bar={:.16e} kappa={} s_bar={} residual_max={:.6e}\n",
        prof.alpha,
        prof.alpha_bar,
        prof.kappa,
        prof.s_bar
            .map_or("none".to_string(), |s| format!("{s:.16e}")),
        prof.residual_max
    );
    match args.out {
        Some(path) => {
            fs::write(&path, &csv).map_err(|e| failed(format!("{}: {e}", path.display())))?;
            print_stdout(&summary);
        }
        None => {
            let _ = io::stdout().lock().write_all(&csv);
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let cfg = load(&args.config)?;
    let eps = args.eps.unwrap_or(cfg.eps_schedule[0]);
    let out = out_dir(&cfg, args.out);
    prepare_output(&out, args.force)?;
    let rt = cfg.reaction().map_err(usage)?;
    let (field, diag) = minimize(
        &cfg.gfunction(),
        &rt,
        &cfg.domain,
        &cfg.bc,
        eps,
        &cfg.solver,
    )
    .map_err(|e| failed(format!("status=failed stage=solve message={e}")))?;
    let mut buf = Vec::new();
    write_snapshot(&field, &mut buf).map_err(failed)?;
    fs::write(out.join("snapshot.txt"), buf).map_err(failed)?;
    print_stdout(&format!(
        "eps={eps}\nreg_n={}\niterations={}\nfinal_grad_norm={:e}\nenergy={:.16e}\nline_search_failures={}\ncg_iterations_total={}\n",
        field.reg_n, diag.iterations, diag.final_grad_norm, diag.energy, diag.line_search_failures, diag.cg_iterations_total
    ));
    Ok(())
}

fn sweep_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config)?;
    cfg.parallel |= args.parallel;
    let out = out_dir(&cfg, args.out);
    prepare_output(&out, args.force)?;
    let entries: Vec<SweepEntry> = run_sweep(&cfg)?;
    let csv = sweep_csv(&cfg, &entries);
    write(&out.join("sweep.csv"), &csv)?;
    write_snapshots(&out, &entries)?;
    print_stdout(&csv);
    Ok(())
}

fn verify_cmd(args: VerifyArgs) -> Result<(), Failure> {
    let cfg = load(&args.config)?;
    let text = fs::File::open(&args.snapshot)
        .map_err(|e| usage(format!("{}: {e}", args.snapshot.display())))?;
    let field = read_snapshot(io::BufReader::new(text)).map_err(usage)?;
    let gf = cfg.gfunction();
    let rt = cfg.reaction().map_err(usage)?;
    let lambda_star = gf.invert_phi(rt.mass()).map_err(failed)?;
    let report = verify(&field, lambda_star, &cfg.verify_options()).map_err(failed)?;
    let entry = SweepEntry {
        eps: field.eps,
        field,
        diagnostics: Default::default(),
    };
    let mut cfg = cfg;
    cfg.domain = entry.field.domain;
    let block = format_report(&cfg, std::slice::from_ref(&entry), lambda_star, &report);
    // diagnostics are not stored in snapshots
    let block: String = block
        .lines()
        .filter(|l| !l.starts_with("iterations_total=") && !l.starts_with("converged="))
        .map(|l| format!("{l}\n"))
        .collect();
    print_stdout(&block);
    if let Some(path) = args.csv {
        let mut csv = String::from("quantity,param,value\n");
        for (r, v) in &report.nondeg_ratios {
            csv.push_str(&format!("nondeg,{r},{v:.16e}\n"));
        }
        for (d, m) in &report.band_measures {
            csv.push_str(&format!("band,{d:.16e},{m:.16e}\n"));
        }
        write(&path, &csv)?;
    }
    Ok(())
}

fn run_cmd(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.config)?;
    cfg.parallel |= args.parallel;
    let out = out_dir(&cfg, args.out);
    let summary = run_experiment(&cfg, &out, args.force)?;
    print_stdout(&format!(
        "lambda_star={:.16e}\nlambda_hat={:.16e}\nfb_location={:.16e}\noutput={}\n",
        summary.lambda_star,
        summary.report.lambda_hat,
        summary.report.x0[0],
        out.display()
    ));
    Ok(())
}

/// Caps rayon's global pool from `ORLICZFB_THREADS`.
fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ORLICZFB_THREADS") {
        let n: usize = v.parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
            usage(format!(
                "ORLICZFB_THREADS must be a positive integer, got '{v}'"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(failed)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::CheckG(a) => check_g(a),
        Command::Profile(a) => profile(a),
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Run(a) => run_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(m)) => {
            eprintln!("{m}");
            ExitCode::from(1)
        }
    }
}
