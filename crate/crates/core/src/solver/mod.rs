//! Finite element minimization of the perturbed energy `J_eps`.

mod energy;
mod mesh;
mod newton;
mod snapshot;
mod sparse;

use thiserror::Error;

pub use energy::{
    assemble_energy, assemble_gradient, assemble_hessian, norm, EnergyModel, Regularized,
    GRAD_FLOOR,
};
pub use mesh::{BoundaryCondition, BoundaryData, Domain, DomainKind, Element, Mesh, Position};
pub use newton::{initial_guess, minimize, minimize_from, sweep, sweep_independent, SweepEntry};
pub use snapshot::{read_snapshot, write_snapshot};
pub use sparse::{pcg, CgOutcome, CsrMatrix};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no convergence: {reason} ({diagnostics})")]
    NonConvergence {
        reason: String,
        diagnostics: SolveDiagnostics,
    },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("sweep entry {index} (eps={eps}): {source}")]
    Sweep {
        index: usize,
        eps: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

/// How the regularization index `n` follows `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegSchedule {
    /// `n = max(10, 1/eps)`.
    Tied,
    Fixed(f64),
    /// No regularization (`n = inf`).
    Off,
}

impl RegSchedule {
    pub fn n_for(&self, eps: f64) -> f64 {
        match *self {
            RegSchedule::Tied => (1.0 / eps).max(10.0),
            RegSchedule::Fixed(n) => n,
            RegSchedule::Off => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged when `max|grad| <= tol * (1 + |energy|)`.
    pub tol: f64,
    pub max_iters: usize,
    pub reg: RegSchedule,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    pub cg_rel_tol: f64,
    /// CG iteration cap as a multiple of the unknown count.
    pub cg_max_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 200,
            reg: RegSchedule::Tied,
            armijo_c: 1e-4,
            max_backtracks: 60,
            cg_rel_tol: 1e-10,
            cg_max_factor: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub energy: f64,
    pub line_search_failures: usize,
    pub cg_iterations_total: usize,
    /// Steps taken along the preconditioned gradient instead of the Newton direction.
    pub gradient_steps: usize,
    /// Steps accepted because the energy change was below roundoff while the gradient shrank.
    pub noise_steps: usize,
    pub clamped: bool,
}

impl std::fmt::Display for SolveDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "iterations={} grad_norm={:e} energy={:e} line_search_failures={} cg_iterations={}",
            self.iterations,
            self.final_grad_norm,
            self.energy,
            self.line_search_failures,
            self.cg_iterations_total
        )
    }
}

/// Nodal values on a domain, with the `eps` and regularization index they were solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub domain: Domain,
    pub values: Vec<f64>,
    pub eps: f64,
    pub reg_n: f64,
}

impl DiscreteField {
    pub fn new(
        domain: Domain,
        values: Vec<f64>,
        eps: f64,
        reg_n: f64,
    ) -> Result<Self, SolverError> {
        if values.len() != domain.node_count() {
            return Err(SolverError::DimensionMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                domain.node_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::InvalidInput(format!(
                "value {i} is not finite"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) || !(reg_n > 0.0) {
            return Err(SolverError::InvalidInput(format!(
                "need eps > 0 and n > 0, got eps={eps} n={reg_n}"
            )));
        }
        Ok(Self {
            domain,
            values,
            eps,
            reg_n,
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
