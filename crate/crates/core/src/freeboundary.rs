//! Free-boundary extraction and the quantities measured on solved fields.

use thiserror::Error;

use crate::gfunc::GFunction;
use crate::reaction::ReactionTerm;
use crate::solver::{norm, DiscreteField, Mesh, Position};

#[derive(Debug, Error, PartialEq)]
pub enum FreeBoundaryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no free boundary at level {tau}")]
    NoFreeBoundary { tau: f64 },
    #[error("no elements in the slope band ({lo}, {hi})")]
    EmptyBand { lo: f64, hi: f64 },
    #[error("ball of radius {r} leaves the domain")]
    BallOutsideDomain { r: f64 },
    #[error("ray leaves the domain at t={t}")]
    RayExitsDomain { t: f64 },
}

type Result<T> = std::result::Result<T, FreeBoundaryError>;

/// `(u - tau)^+`, the shifted field whose zero set is the `tau`-level set.
pub fn limit_proxy(field: &DiscreteField, tau: f64) -> DiscreteField {
    DiscreteField {
        values: field.values.iter().map(|u| (u - tau).max(0.0)).collect(),
        ..field.clone()
    }
}

fn edge_crossing(mesh: &Mesh, v: &[f64], a: usize, b: usize, tau: f64) -> Option<Position> {
    let (ua, ub) = (v[a], v[b]);
    if (ua < tau) == (ub < tau) {
        return None;
    }
    let t = (tau - ua) / (ub - ua);
    let (pa, pb) = (mesh.coords[a], mesh.coords[b]);
    Some([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
}

/// Crossings of `u = tau` along mesh edges, sorted lexicographically.
pub fn extract_free_boundary(field: &DiscreteField, tau: f64) -> Vec<Position> {
    let mesh = Mesh::new(&field.domain);
    let mut edges: Vec<(usize, usize)> = mesh
        .elements
        .iter()
        .flat_map(|e| {
            let n = e.n_local;
            (0..n).filter(move |&a| n == 3 || a == 0).map(move |a| {
                let (i, j) = (e.nodes[a], e.nodes[(a + 1) % n]);
                (i.min(j), i.max(j))
            })
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    let mut pts: Vec<Position> = edges
        .into_iter()
        .filter_map(|(a, b)| edge_crossing(&mesh, &field.values, a, b, tau))
        .collect();
    pts.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    pts
}

/// Piecewise-linear pieces of the `tau`-level set: points in 1D, segments per triangle in 2D.
pub fn level_set_segments(field: &DiscreteField, tau: f64) -> Vec<(Position, Position)> {
    let mesh = Mesh::new(&field.domain);
    let v = &field.values;
    let mut out = Vec::new();
    for e in &mesh.elements {
        let n = e.n_local;
        let pts: Vec<Position> = (0..n)
            .filter(|&a| n == 3 || a == 0)
            .filter_map(|a| edge_crossing(&mesh, v, e.nodes[a], e.nodes[(a + 1) % n], tau))
            .collect();
        match pts.len() {
            1 => out.push((pts[0], pts[0])),
            2 => out.push((pts[0], pts[1])),
            _ => {}
        }
    }
    out
}

/// Median of `|grad u|` over elements whose mean value lies in `band * max u`.
pub fn estimate_slope(
    field: &DiscreteField,
    fb_points: &[Position],
    band: (f64, f64),
) -> Result<f64> {
    let (lo, hi) = band;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(FreeBoundaryError::InvalidInput(format!(
            "slope band must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
        )));
    }
    if fb_points.is_empty() {
        return Err(FreeBoundaryError::NoFreeBoundary { tau: f64::NAN });
    }
    let mesh = Mesh::new(&field.domain);
    let top = field.max_value();
    let mut slopes: Vec<f64> = mesh
        .elements
        .iter()
        .filter(|e| {
            let m = e.mean(&field.values);
            m >= lo * top && m <= hi * top
        })
        .map(|e| norm(e.gradient(&field.values)))
        .collect();
    if slopes.is_empty() {
        return Err(FreeBoundaryError::EmptyBand { lo, hi });
    }
    slopes.sort_by(f64::total_cmp);
    let k = slopes.len();
    Ok(if k % 2 == 1 {
        slopes[k / 2]
    } else {
        0.5 * (slopes[k / 2 - 1] + slopes[k / 2])
    })
}

/// Largest element gradient away from the boundary (elements touching a
/// boundary node are skipped).
pub fn sup_gradient(field: &DiscreteField) -> f64 {
    let mesh = Mesh::new(&field.domain);
    let mut on_boundary = vec![false; mesh.node_count()];
    for piece in &mesh.boundary {
        for &i in piece {
            on_boundary[i] = true;
        }
    }
    mesh.elements
        .iter()
        .filter(|e| e.nodes[..e.n_local].iter().all(|&i| !on_boundary[i]))
        .map(|e| norm(e.gradient(&field.values)))
        .fold(0.0, f64::max)
}

/// Exact integral of the piecewise-linear field over `[a, b]` in 1D.
fn integrate_1d(mesh: &Mesh, v: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for e in &mesh.elements {
        let (i, j) = (e.nodes[0], e.nodes[1]);
        let (xi, xj) = (mesh.coords[i][0], mesh.coords[j][0]);
        let (lo, hi) = (xi.max(a), xj.min(b));
        if hi <= lo {
            continue;
        }
        let at = |x: f64| v[i] + (v[j] - v[i]) * (x - xi) / (xj - xi);
        total += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    total
}

/// Polar midpoint rule over a disc, resolving the mesh spacing several times over.
fn integrate_disc(mesh: &Mesh, v: &[f64], x0: Position, r: f64) -> Option<f64> {
    let h = mesh.domain.h();
    let nr = ((4.0 * r / h).ceil() as usize).max(16);
    let nt = (8 * nr).max(64);
    let (dr, dt) = (r / nr as f64, std::f64::consts::TAU / nt as f64);
    let mut total = 0.0;
    for k in 0..nr {
        let rho = (k as f64 + 0.5) * dr;
        let mut ring = 0.0;
        for m in 0..nt {
            let th = (m as f64 + 0.5) * dt;
            ring += mesh.interpolate(v, [x0[0] + rho * th.cos(), x0[1] + rho * th.sin()])?;
        }
        total += ring * rho * dr * dt;
    }
    Some(total)
}

/// `(r, r^-N * integral of u over B_r(x0))` for each radius.
pub fn nondegeneracy_ratios(
    field: &DiscreteField,
    x0: Position,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mesh = Mesh::new(&field.domain);
    if !field.domain.contains(x0) {
        return Err(FreeBoundaryError::InvalidInput(format!(
            "center {x0:?} outside the domain"
        )));
    }
    let (lo, hi) = field.domain.bounds();
    let dim = field.domain.mesh_dim();
    let tol = 1e-12 * field.domain.h();
    radii
        .iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(FreeBoundaryError::InvalidInput(format!(
                    "radius must be positive, got {r}"
                )));
            }
            let inside = (0..dim).all(|k| x0[k] - r >= lo[k] - tol && x0[k] + r <= hi[k] + tol);
            if !inside {
                return Err(FreeBoundaryError::BallOutsideDomain { r });
            }
            let integral = if dim == 1 {
                integrate_1d(&mesh, &field.values, x0[0] - r, x0[0] + r)
            } else {
                integrate_disc(&mesh, &field.values, x0, r)
                    .ok_or(FreeBoundaryError::BallOutsideDomain { r })?
            };
            Ok((r, integral / r.powi(dim as i32)))
        })
        .collect()
}

fn segment_distance(p: Position, s: &(Position, Position)) -> f64 {
    let (a, b) = s;
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    norm([p[0] - a[0] - t * d[0], p[1] - a[1] - t * d[1]])
}

/// Unweighted dual-cell measure of every node.
fn dual_cells(mesh: &Mesh) -> Vec<f64> {
    let mut cells = vec![0.0; mesh.node_count()];
    for e in &mesh.elements {
        let measure = if e.n_local == 2 {
            (mesh.coords[e.nodes[1]][0] - mesh.coords[e.nodes[0]][0]).abs()
        } else {
            let [a, b, c] = e.nodes.map(|i| mesh.coords[i]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
        };
        for k in 0..e.n_local {
            cells[e.nodes[k]] += measure / e.n_local as f64;
        }
    }
    cells
}

/// Measure of the dual cells of nodes within `delta` of the `level` set and within `big_r` of `center`.
pub fn band_measure(
    field: &DiscreteField,
    level: f64,
    delta: f64,
    big_r: f64,
    center: Position,
) -> Result<f64> {
    if !(delta > 0.0 && big_r > 0.0) {
        return Err(FreeBoundaryError::InvalidInput(format!(
            "delta and R must be positive, got {delta}, {big_r}"
        )));
    }
    let segments = level_set_segments(field, level);
    if segments.is_empty() {
        return Ok(0.0);
    }
    let mesh = Mesh::new(&field.domain);
    let cells = dual_cells(&mesh);
    Ok(mesh
        .coords
        .iter()
        .zip(&cells)
        .filter(|(c, _)| norm([c[0] - center[0], c[1] - center[1]]) <= big_r)
        .filter(|(c, _)| segments.iter().any(|s| segment_distance(**c, s) <= delta))
        .map(|(_, m)| m)
        .sum())
}

/// Largest `|u(x0 + t nu) - lambda t| / t` over mesh-spaced `t` in `(5h, t_max]`.
pub fn asymptotic_residual(
    field: &DiscreteField,
    x0: Position,
    nu: Position,
    lambda_star: f64,
    t_max: f64,
) -> Result<f64> {
    let h = field.domain.h();
    if !(t_max > 5.0 * h) {
        return Err(FreeBoundaryError::InvalidInput(format!(
            "t_max {t_max} must exceed 5h = {}",
            5.0 * h
        )));
    }
    let len = norm(nu);
    if !(len > 0.0) {
        return Err(FreeBoundaryError::InvalidInput(
            "direction must be nonzero".into(),
        ));
    }
    let nu = [nu[0] / len, nu[1] / len];
    let mesh = Mesh::new(&field.domain);
    let steps = ((t_max - 5.0 * h) / h).ceil() as usize;
    let mut worst: f64 = 0.0;
    for k in 1..=steps {
        let t = (5.0 * h + k as f64 * h).min(t_max);
        let p = [x0[0] + t * nu[0], x0[1] + t * nu[1]];
        let u = mesh
            .interpolate(&field.values, p)
            .ok_or(FreeBoundaryError::RayExitsDomain { t })?;
        worst = worst.max((u - lambda_star * t).abs() / t);
    }
    Ok(worst)
}

/// Direction of the element gradient at `x0`, i.e. the normal pointing into `{u > tau}`.
pub fn inward_normal(field: &DiscreteField, x0: Position) -> Option<Position> {
    let mesh = Mesh::new(&field.domain);
    let (e, _) = mesh.locate(x0)?;
    let p = mesh.elements[e].gradient(&field.values);
    let n = norm(p);
    (n > 0.0).then(|| [p[0] / n, p[1] / n])
}

/// Discrete limit energy `J_0`: the gradient term with the unregularized `G`
/// plus `M` times the lumped measure of the nodes where `v > 0`.
pub fn limit_energy(gf: &GFunction, rt: &ReactionTerm, field: &DiscreteField) -> f64 {
    let mesh = Mesh::new(&field.domain);
    let grad: f64 = mesh
        .elements
        .iter()
        .map(|e| e.weight * gf.big_g(norm(e.gradient(&field.values))))
        .sum();
    let positive: f64 = field
        .values
        .iter()
        .zip(&mesh.lumped)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, m)| m)
        .sum();
    grad + rt.mass() * positive
}

/// Relative gap below which two candidates count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// Index of the candidate with the lowest [`limit_energy`], and whether the
/// runner-up is tied with it.
pub fn select_by_limit_energy(
    gf: &GFunction,
    rt: &ReactionTerm,
    candidates: &[DiscreteField],
) -> Option<(usize, bool)> {
    let energies: Vec<f64> = candidates.iter().map(|c| limit_energy(gf, rt, c)).collect();
    let best = (0..energies.len()).min_by(|&a, &b| energies[a].total_cmp(&energies[b]))?;
    let tie = energies.iter().enumerate().any(|(i, e)| {
        i != best && (e - energies[best]).abs() <= TIE_TOL * (1.0 + energies[best].abs())
    });
    Some((best, tie))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Free-boundary level; the field's `eps` when `None`.
    pub tau: Option<f64>,
    pub band: (f64, f64),
    /// Nondegeneracy radii (absolute lengths).
    pub radii: Vec<f64>,
    /// Band widths in units of the mesh spacing.
    pub band_deltas_h: Vec<f64>,
    pub band_radius: f64,
    pub t_max: f64,
    pub gamma: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            tau: None,
            band: (0.3, 0.7),
            radii: vec![0.01, 0.02, 0.05, 0.1, 0.2],
            band_deltas_h: vec![2.0, 4.0, 8.0],
            band_radius: 0.25,
            t_max: 0.25,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundaryReport {
    pub tau: f64,
    pub fb_points: Vec<Position>,
    /// The free-boundary point the local quantities are measured at.
    pub x0: Position,
    pub nu: Position,
    pub lambda_hat: f64,
    pub sup_grad: f64,
    pub nondeg_ratios: Vec<(f64, f64)>,
    pub band_measures: Vec<(f64, f64)>,
    pub asym_residual: f64,
    pub gamma: f64,
}

/// Run every measurement on one field. Nondegeneracy and the asymptotic
/// residual use [`limit_proxy`] so the `eps` offset of the layer does not
/// enter the comparison with the limit profile.
pub fn verify(
    field: &DiscreteField,
    lambda_star: f64,
    opts: &VerifyOptions,
) -> Result<FreeBoundaryReport> {
    let tau = opts.tau.unwrap_or(field.eps);
    if !(tau > 0.0 && tau < field.max_value()) {
        return Err(FreeBoundaryError::InvalidInput(format!(
            "tau {tau} must lie in (0, max u)"
        )));
    }
    let fb_points = extract_free_boundary(field, tau);
    if fb_points.is_empty() {
        return Err(FreeBoundaryError::NoFreeBoundary { tau });
    }
    let x0 = fb_points[fb_points.len() / 2];
    let nu = inward_normal(field, x0).ok_or(FreeBoundaryError::NoFreeBoundary { tau })?;
    let lambda_hat = estimate_slope(field, &fb_points, opts.band)?;
    let sup_grad = sup_gradient(field);
    let proxy = limit_proxy(field, tau);
    let nondeg_ratios = nondegeneracy_ratios(&proxy, x0, &opts.radii)?;
    let h = field.domain.h();
    let band_measures = opts
        .band_deltas_h
        .iter()
        .map(|k| band_measure(field, tau, k * h, opts.band_radius, x0).map(|m| (k * h, m)))
        .collect::<Result<Vec<_>>>()?;
    let asym_residual = asymptotic_residual(&proxy, x0, nu, lambda_star, opts.t_max)?;
    Ok(FreeBoundaryReport {
        tau,
        fb_points,
        x0,
        nu,
        lambda_hat,
        sup_grad,
        nondeg_ratios,
        band_measures,
        asym_residual,
        gamma: opts.gamma,
    })
}
