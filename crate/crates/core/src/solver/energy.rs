//! Discrete energy, its gradient and its Hessian.

use rayon::prelude::*;

use super::mesh::{BoundaryData, Element, Mesh, Position};
use super::sparse::CsrMatrix;
use super::{DiscreteField, SolverError};
use crate::gfunc::GFunction;
use crate::reaction::ReactionTerm;

/// Gradients below this norm have no usable direction.
pub const GRAD_FLOOR: f64 = 1e-12;

/// Element loops shorter than this run sequentially.
const PAR_MIN_ELEMENTS: usize = 4096;

/// Regularized nonlinearity `g_n(t) = g(t) + t/n`, with `inv_n = 1/n` (zero for `n = inf`).
#[derive(Debug, Clone, Copy)]
pub struct Regularized<'a> {
    pub gf: &'a GFunction,
    pub inv_n: f64,
}

impl Regularized<'_> {
    pub fn big_g(&self, t: f64) -> f64 {
        self.gf.big_g(t) + 0.5 * self.inv_n * t * t
    }

    pub fn f_ratio(&self, t: f64) -> f64 {
        self.gf.f_ratio(t.max(GRAD_FLOOR)) + self.inv_n
    }

    pub fn dg(&self, t: f64) -> f64 {
        self.gf.dg(t.max(GRAD_FLOOR)) + self.inv_n
    }

    pub fn flux(&self, p: Position) -> Position {
        let f = self.f_ratio(norm(p));
        [f * p[0], f * p[1]]
    }

    /// Jacobian of the flux `A_n(p) = F_n(|p|) p`.
    pub fn flux_jacobian(&self, p: Position) -> [[f64; 2]; 2] {
        let t = norm(p);
        let f = self.f_ratio(t);
        if t == 0.0 {
            return [[f, 0.0], [0.0, f]];
        }
        let c = (self.dg(t) - f) / (t * t);
        [
            [f + c * p[0] * p[0], c * p[0] * p[1]],
            [c * p[1] * p[0], f + c * p[1] * p[1]],
        ]
    }
}

pub fn norm(p: Position) -> f64 {
    p[0].hypot(p[1])
}

/// Everything needed to evaluate the discrete energy of one problem repeatedly.
pub struct EnergyModel<'a> {
    pub reg: Regularized<'a>,
    pub rt: &'a ReactionTerm,
    pub eps: f64,
    pub mesh: Mesh,
    /// Prescribed value per node.
    pub fixed: Vec<Option<f64>>,
    pattern: CsrMatrix,
    slots: Vec<[[usize; 3]; 3]>,
}

impl<'a> EnergyModel<'a> {
    pub fn new(
        gf: &'a GFunction,
        rt: &'a ReactionTerm,
        mesh: Mesh,
        bc: Option<&BoundaryData>,
        eps: f64,
        reg_n: f64,
    ) -> Result<Self, SolverError> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(SolverError::InvalidInput(format!(
                "eps must be positive and finite, got {eps}"
            )));
        }
        if !(reg_n > 0.0) {
            return Err(SolverError::InvalidInput(format!(
                "regularization index must be positive, got {reg_n}"
            )));
        }
        let fixed = match bc {
            Some(bc) => {
                bc.check(&mesh.domain)?;
                mesh.dirichlet_values(bc)
            }
            None => vec![None; mesh.node_count()],
        };
        let pattern = CsrMatrix::from_mesh(&mesh);
        let slots = mesh
            .elements
            .iter()
            .map(|e| {
                let mut s = [[0; 3]; 3];
                for a in 0..e.n_local {
                    for b in 0..e.n_local {
                        s[a][b] = pattern.slot(e.nodes[a], e.nodes[b]);
                    }
                }
                s
            })
            .collect();
        Ok(Self {
            reg: Regularized {
                gf,
                inv_n: 1.0 / reg_n,
            },
            rt,
            eps,
            mesh,
            fixed,
            pattern,
            slots,
        })
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    fn per_element<T: Send, F: Fn(&Element) -> T + Sync + Send>(&self, f: F) -> Vec<T> {
        if self.mesh.elements.len() >= PAR_MIN_ELEMENTS {
            self.mesh.elements.par_iter().map(f).collect()
        } else {
            self.mesh.elements.iter().map(f).collect()
        }
    }

    fn check_len(&self, v: &[f64]) -> Result<(), SolverError> {
        if v.len() != self.node_count() {
            return Err(SolverError::DimensionMismatch(format!(
                "field has {} values, mesh has {} nodes",
                v.len(),
                self.node_count()
            )));
        }
        Ok(())
    }

    /// Energy and the sum of absolute contributions (a scale for roundoff).
    pub fn energy_with_scale(&self, v: &[f64]) -> (f64, f64) {
        let dens = self.per_element(|e| e.weight * self.reg.big_g(norm(e.gradient(v))));
        let mut total = 0.0;
        let mut scale = 0.0;
        for d in dens {
            total += d;
            scale += d.abs();
        }
        for (vi, m) in v.iter().zip(&self.mesh.lumped) {
            let b = m * self.rt.big_b_eps(self.eps, *vi);
            total += b;
            scale += b.abs();
        }
        (total, scale)
    }

    pub fn energy(&self, v: &[f64]) -> Result<f64, SolverError> {
        self.check_len(v)?;
        Ok(self.energy_with_scale(v).0)
    }

    /// Gradient with zero entries at prescribed nodes.
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.check_len(v)?;
        let fluxes = self.per_element(|e| {
            let a = self.reg.flux(e.gradient(v));
            [a[0] * e.weight, a[1] * e.weight]
        });
        let mut out: Vec<f64> = v
            .iter()
            .zip(&self.mesh.lumped)
            .map(|(vi, m)| m * self.rt.beta_eps(self.eps, *vi))
            .collect();
        for (e, a) in self.mesh.elements.iter().zip(&fluxes) {
            for k in 0..e.n_local {
                out[e.nodes[k]] += a[0] * e.grad[k][0] + a[1] * e.grad[k][1];
            }
        }
        for (o, f) in out.iter_mut().zip(&self.fixed) {
            if f.is_some() {
                *o = 0.0;
            }
        }
        Ok(out)
    }

    /// Hessian with identity rows and columns at prescribed nodes.
    pub fn hessian(&self, v: &[f64]) -> Result<CsrMatrix, SolverError> {
        self.check_len(v)?;
        let blocks = self.per_element(|e| {
            let j = self.reg.flux_jacobian(e.gradient(v));
            let mut blk = [[0.0; 3]; 3];
            for a in 0..e.n_local {
                let ga = e.grad[a];
                let ja = [
                    ga[0] * j[0][0] + ga[1] * j[1][0],
                    ga[0] * j[0][1] + ga[1] * j[1][1],
                ];
                for b in a..e.n_local {
                    blk[a][b] = e.weight * (ja[0] * e.grad[b][0] + ja[1] * e.grad[b][1]);
                    blk[b][a] = blk[a][b];
                }
            }
            blk
        });
        let mut h = self.pattern.clone();
        let vals = h.values_mut();
        for ((e, blk), slots) in self.mesh.elements.iter().zip(&blocks).zip(&self.slots) {
            for a in 0..e.n_local {
                if self.fixed[e.nodes[a]].is_some() {
                    continue;
                }
                for b in 0..e.n_local {
                    if self.fixed[e.nodes[b]].is_none() {
                        vals[slots[a][b]] += blk[a][b];
                    }
                }
            }
        }
        for i in 0..v.len() {
            let s = h.slot(i, i);
            let vals = h.values_mut();
            match self.fixed[i] {
                Some(_) => vals[s] = 1.0,
                None => vals[s] += self.mesh.lumped[i] * self.rt.dbeta_eps(self.eps, v[i]),
            }
        }
        Ok(h)
    }
}

fn model_for<'a>(
    gf: &'a GFunction,
    rt: &'a ReactionTerm,
    field: &DiscreteField,
    bc: Option<&BoundaryData>,
) -> Result<EnergyModel<'a>, SolverError> {
    EnergyModel::new(gf, rt, Mesh::new(&field.domain), bc, field.eps, field.reg_n)
}

/// Discrete `J_eps` of a field.
pub fn assemble_energy(
    gf: &GFunction,
    rt: &ReactionTerm,
    field: &DiscreteField,
) -> Result<f64, SolverError> {
    model_for(gf, rt, field, None)?.energy(&field.values)
}

/// Gradient of [`assemble_energy`] with entries at Dirichlet nodes of `bc` zeroed.
pub fn assemble_gradient(
    gf: &GFunction,
    rt: &ReactionTerm,
    field: &DiscreteField,
    bc: Option<&BoundaryData>,
) -> Result<Vec<f64>, SolverError> {
    model_for(gf, rt, field, bc)?.gradient(&field.values)
}

pub fn assemble_hessian(
    gf: &GFunction,
    rt: &ReactionTerm,
    field: &DiscreteField,
    bc: Option<&BoundaryData>,
) -> Result<CsrMatrix, SolverError> {
    model_for(gf, rt, field, bc)?.hessian(&field.values)
}
