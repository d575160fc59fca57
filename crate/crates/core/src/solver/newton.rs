//! Damped Newton minimization and eps-continuation.

use rayon::prelude::*;

use super::energy::EnergyModel;
use super::mesh::{BoundaryCondition, BoundaryData, Domain, DomainKind, Mesh};
use super::sparse::pcg;
use super::{DiscreteField, SolveDiagnostics, SolverError, SolverOptions};
use crate::gfunc::GFunction;
use crate::reaction::ReactionTerm;

/// Relative size of roundoff in an energy sum, per unit of absolute contributions.
const ENERGY_NOISE: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Starting field interpolating the Dirichlet data: linear between the two
/// ends in 1D, an average of the axis-wise linear blends on rectangles.
pub fn initial_guess(domain: &Domain, bc: &BoundaryData) -> Result<Vec<f64>, SolverError> {
    bc.check(domain)?;
    let mesh = Mesh::new(domain);
    let dir = |k: usize| match bc.pieces()[k] {
        BoundaryCondition::Dirichlet(v) => Some(v),
        BoundaryCondition::NaturalZeroFlux => None,
    };
    let (lo, hi) = domain.bounds();
    let blend = |a: Option<f64>, b: Option<f64>, t: f64| match (a, b) {
        (Some(a), Some(b)) => Some(a + (b - a) * t),
        (Some(a), None) => Some(a),
        (None, Some(b)) => Some(b),
        (None, None) => None,
    };
    let mut v: Vec<f64> = mesh
        .coords
        .iter()
        .map(|c| {
            let tx = (c[0] - lo[0]) / (hi[0] - lo[0]);
            match domain.kind() {
                DomainKind::Interval { .. } | DomainKind::Radial { .. } => {
                    blend(dir(0), dir(1), tx).unwrap_or(0.0)
                }
                DomainKind::Rectangle { .. } => {
                    let ty = (c[1] - lo[1]) / (hi[1] - lo[1]);
                    let x_pair = dir(0).is_some() && dir(1).is_some();
                    let y_pair = dir(2).is_some() && dir(3).is_some();
                    match (x_pair, y_pair) {
                        (true, true) => {
                            0.5 * (blend(dir(0), dir(1), tx).unwrap()
                                + blend(dir(2), dir(3), ty).unwrap())
                        }
                        (true, false) => blend(dir(0), dir(1), tx).unwrap(),
                        (false, true) => blend(dir(2), dir(3), ty).unwrap(),
                        (false, false) => {
                            let vals: Vec<f64> = (0..4).filter_map(dir).collect();
                            vals.iter().sum::<f64>() / vals.len() as f64
                        }
                    }
                }
            }
        })
        .collect();
    for (vi, f) in v.iter_mut().zip(mesh.dirichlet_values(bc)) {
        if let Some(f) = f {
            *vi = f;
        }
    }
    Ok(v)
}

/// Minimize from [`initial_guess`].
pub fn minimize(
    gf: &GFunction,
    rt: &ReactionTerm,
    domain: &Domain,
    bc: &BoundaryData,
    eps: f64,
    opts: &SolverOptions,
) -> Result<(DiscreteField, SolveDiagnostics), SolverError> {
    let init = initial_guess(domain, bc)?;
    minimize_from(gf, rt, domain, bc, eps, opts, &init)
}

struct Accepted {
    v: Vec<f64>,
    energy: f64,
    scale: f64,
    grad: Option<Vec<f64>>,
    noise: bool,
}

fn line_search(
    model: &EnergyModel,
    v: &[f64],
    energy: f64,
    scale: f64,
    gnorm: f64,
    d: &[f64],
    slope: f64,
    opts: &SolverOptions,
) -> Result<Option<Accepted>, SolverError> {
    let mut alpha = 1.0;
    let mut trial = vec![0.0; v.len()];
    for k in 0..=opts.max_backtracks {
        for i in 0..v.len() {
            trial[i] = v[i] + alpha * d[i];
        }
        let (e, s) = model.energy_with_scale(&trial);
        if e <= energy + opts.armijo_c * alpha * slope {
            return Ok(Some(Accepted {
                v: trial,
                energy: e,
                scale: s,
                grad: None,
                noise: false,
            }));
        }
        if k == 0 && e <= energy + ENERGY_NOISE * scale.max(s) {
            // Armijo cannot resolve the decrease; take the step if it improves stationarity.
            let g = model.gradient(&trial)?;
            if inf_norm(&g) < gnorm {
                return Ok(Some(Accepted {
                    v: trial,
                    energy: e,
                    scale: s,
                    grad: Some(g),
                    noise: true,
                }));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Damped Newton with Armijo backtracking from `initial` (Dirichlet entries are overwritten).
pub fn minimize_from(
    gf: &GFunction,
    rt: &ReactionTerm,
    domain: &Domain,
    bc: &BoundaryData,
    eps: f64,
    opts: &SolverOptions,
    initial: &[f64],
) -> Result<(DiscreteField, SolveDiagnostics), SolverError> {
    let reg_n = opts.reg.n_for(eps);
    let model = EnergyModel::new(gf, rt, Mesh::new(domain), Some(bc), eps, reg_n)?;
    if initial.len() != model.node_count() {
        return Err(SolverError::DimensionMismatch(format!(
            "initial guess has {} values, mesh has {} nodes",
            initial.len(),
            model.node_count()
        )));
    }
    let mut v = initial.to_vec();
    for (vi, f) in v.iter_mut().zip(&model.fixed) {
        if let Some(f) = f {
            *vi = *f;
        }
    }
    let free = model.fixed.iter().filter(|f| f.is_none()).count();
    let cg_max = opts.cg_max_factor * free.max(1);
    let mut diag = SolveDiagnostics::default();
    let (mut energy, mut scale) = model.energy_with_scale(&v);
    let mut grad = model.gradient(&v)?;
    loop {
        let gnorm = inf_norm(&grad);
        diag.final_grad_norm = gnorm;
        diag.energy = energy;
        if gnorm <= opts.tol * (1.0 + energy.abs()) {
            break;
        }
        if diag.iterations >= opts.max_iters {
            return Err(SolverError::NonConvergence {
                reason: "iteration limit reached".into(),
                diagnostics: diag,
            });
        }
        diag.iterations += 1;
        let hess = model.hessian(&v)?;
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let (newton_dir, cg) = pcg(&hess, &rhs, opts.cg_rel_tol, cg_max)?;
        diag.cg_iterations_total += cg.iterations;
        let hdiag = hess.diagonal();
        let gradient_dir: Vec<f64> = grad
            .iter()
            .zip(&hdiag)
            .map(|(g, h)| if *h > 0.0 { -g / h } else { -g })
            .collect();

        let newton_slope = dot(&grad, &newton_dir);
        let mut candidates = Vec::with_capacity(2);
        if newton_slope < 0.0 && newton_slope.is_finite() {
            candidates.push((newton_dir, false));
        }
        candidates.push((gradient_dir, true));
        let mut accepted = None;
        for (d, is_gradient) in candidates {
            let slope = dot(&grad, &d);
            if let Some(step) = line_search(&model, &v, energy, scale, gnorm, &d, slope, opts)? {
                if is_gradient {
                    diag.gradient_steps += 1;
                }
                accepted = Some(step);
                break;
            }
            diag.line_search_failures += 1;
        }
        let Some(step) = accepted else {
            return Err(SolverError::NonConvergence {
                reason: "line search failed".into(),
                diagnostics: diag,
            });
        };
        if step.noise {
            diag.noise_steps += 1;
        }
        v = step.v;
        energy = step.energy;
        scale = step.scale;
        grad = match step.grad {
            Some(g) => g,
            None => model.gradient(&v)?,
        };
    }

    // projection onto v >= 0, kept only if it costs nothing
    if v.iter().any(|x| *x < 0.0) {
        let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
        let (e, _) = model.energy_with_scale(&clamped);
        let g = model.gradient(&clamped)?;
        let gn = inf_norm(&g);
        if e <= energy && gn <= opts.tol * (1.0 + e.abs()) {
            v = clamped;
            diag.energy = e;
            diag.final_grad_norm = gn;
            diag.clamped = true;
        }
    }
    let field = DiscreteField::new(*domain, v, eps, reg_n)?;
    Ok((field, diag))
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub eps: f64,
    pub field: DiscreteField,
    pub diagnostics: SolveDiagnostics,
}

fn check_schedule(schedule: &[f64]) -> Result<(), SolverError> {
    if schedule.is_empty() {
        return Err(SolverError::InvalidInput("empty eps schedule".into()));
    }
    if schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(SolverError::InvalidInput(
            "eps schedule entries must be positive".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SolverError::InvalidInput(
            "eps schedule not strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Solve along a decreasing eps schedule, warm-starting each solve from the previous one.
pub fn sweep(
    gf: &GFunction,
    rt: &ReactionTerm,
    domain: &Domain,
    bc: &BoundaryData,
    schedule: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<SweepEntry>, SolverError> {
    check_schedule(schedule)?;
    let mut out: Vec<SweepEntry> = Vec::with_capacity(schedule.len());
    for (index, &eps) in schedule.iter().enumerate() {
        let res = match out.last() {
            Some(prev) => minimize_from(gf, rt, domain, bc, eps, opts, &prev.field.values),
            None => minimize(gf, rt, domain, bc, eps, opts),
        };
        let (field, diagnostics) = res.map_err(|e| SolverError::Sweep {
            index,
            eps,
            source: Box::new(e),
        })?;
        out.push(SweepEntry {
            eps,
            field,
            diagnostics,
        });
    }
    Ok(out)
}

/// Every schedule entry solved from the initial guess, concurrently. The
/// result does not depend on the thread count.
pub fn sweep_independent(
    gf: &GFunction,
    rt: &ReactionTerm,
    domain: &Domain,
    bc: &BoundaryData,
    schedule: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<SweepEntry>, SolverError> {
    check_schedule(schedule)?;
    let results: Vec<_> = schedule
        .par_iter()
        .map(|&eps| minimize(gf, rt, domain, bc, eps, opts))
        .collect();
    results
        .into_iter()
        .zip(schedule)
        .enumerate()
        .map(|(index, (res, &eps))| {
            res.map(|(field, diagnostics)| SweepEntry {
                eps,
                field,
                diagnostics,
            })
            .map_err(|e| SolverError::Sweep {
                index,
                eps,
                source: Box::new(e),
            })
        })
        .collect()
}
