//! Domains, boundary data and the structured linear-element meshes built from them.

use std::fmt;

use super::SolverError;

pub type Position = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainKind {
    Interval {
        x_lo: f64,
        x_hi: f64,
    },
    /// Radial profile on `[r_lo, r_hi]` of a radially symmetric field in `dim` dimensions.
    Radial {
        r_lo: f64,
        r_hi: f64,
        dim: u32,
    },
    Rectangle {
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    nx: usize,
    ny: usize,
}

impl Domain {
    pub fn interval(x_lo: f64, x_hi: f64, nodes: usize) -> Result<Self, SolverError> {
        ordered("interval", x_lo, x_hi)?;
        min_nodes(nodes)?;
        Ok(Self {
            kind: DomainKind::Interval { x_lo, x_hi },
            nx: nodes,
            ny: 1,
        })
    }

    pub fn radial(r_lo: f64, r_hi: f64, dim: u32, nodes: usize) -> Result<Self, SolverError> {
        ordered("radial", r_lo, r_hi)?;
        if r_lo <= 0.0 {
            return Err(SolverError::InvalidInput(format!(
                "radial domain needs r_lo > 0, got {r_lo}"
            )));
        }
        if dim < 2 {
            return Err(SolverError::InvalidInput(format!(
                "radial domain needs dim >= 2, got {dim}"
            )));
        }
        min_nodes(nodes)?;
        Ok(Self {
            kind: DomainKind::Radial { r_lo, r_hi, dim },
            nx: nodes,
            ny: 1,
        })
    }

    pub fn rectangle(
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
        nx: usize,
        ny: usize,
    ) -> Result<Self, SolverError> {
        ordered("rectangle x", x_lo, x_hi)?;
        ordered("rectangle y", y_lo, y_hi)?;
        min_nodes(nx)?;
        min_nodes(ny)?;
        Ok(Self {
            kind: DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            },
            nx,
            ny,
        })
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    /// Node counts per axis; `ny = 1` for one-dimensional kinds.
    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of boundary pieces: two for the 1D kinds, four for rectangles
    /// (left, right, bottom, top).
    pub fn boundary_pieces(&self) -> usize {
        match self.kind {
            DomainKind::Rectangle { .. } => 4,
            _ => 2,
        }
    }

    /// Spatial dimension of the mesh (the radial kind is meshed in 1D).
    pub fn mesh_dim(&self) -> usize {
        match self.kind {
            DomainKind::Rectangle { .. } => 2,
            _ => 1,
        }
    }

    /// Largest mesh spacing.
    pub fn h(&self) -> f64 {
        match self.kind {
            DomainKind::Interval { x_lo, x_hi } => (x_hi - x_lo) / (self.nx - 1) as f64,
            DomainKind::Radial { r_lo, r_hi, .. } => (r_hi - r_lo) / (self.nx - 1) as f64,
            DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            } => ((x_hi - x_lo) / (self.nx - 1) as f64).max((y_hi - y_lo) / (self.ny - 1) as f64),
        }
    }

    /// Bounding box `(lo, hi)` in mesh coordinates.
    pub fn bounds(&self) -> (Position, Position) {
        match self.kind {
            DomainKind::Interval { x_lo, x_hi } => ([x_lo, 0.0], [x_hi, 0.0]),
            DomainKind::Radial { r_lo, r_hi, .. } => ([r_lo, 0.0], [r_hi, 0.0]),
            DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            } => ([x_lo, y_lo], [x_hi, y_hi]),
        }
    }

    pub fn contains(&self, p: Position) -> bool {
        let (lo, hi) = self.bounds();
        let tol = 1e-12 * self.h();
        p[0] >= lo[0] - tol
            && p[0] <= hi[0] + tol
            && (self.mesh_dim() == 1 || (p[1] >= lo[1] - tol && p[1] <= hi[1] + tol))
    }
}

fn ordered(what: &str, lo: f64, hi: f64) -> Result<(), SolverError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(SolverError::InvalidInput(format!(
            "{what} bounds must be finite and ordered, got [{lo}, {hi}]"
        )))
    }
}

fn min_nodes(n: usize) -> Result<(), SolverError> {
    if n >= 2 {
        Ok(())
    } else {
        Err(SolverError::InvalidInput(format!(
            "need at least 2 nodes per axis, got {n}"
        )))
    }
}

impl fmt::Display for Domain {
    /// Descriptor line of the snapshot format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DomainKind::Interval { x_lo, x_hi } => write!(f, "interval {x_lo} {x_hi} {}", self.nx),
            DomainKind::Radial { r_lo, r_hi, dim } => {
                write!(f, "radial {r_lo} {r_hi} {dim} {}", self.nx)
            }
            DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            } => {
                write!(
                    f,
                    "rectangle {x_lo} {x_hi} {y_lo} {y_hi} {} {}",
                    self.nx, self.ny
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet(f64),
    NaturalZeroFlux,
}

/// One condition per boundary piece, in the order of [`Domain::boundary_pieces`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    pieces: Vec<BoundaryCondition>,
}

impl BoundaryData {
    pub fn new(pieces: Vec<BoundaryCondition>) -> Result<Self, SolverError> {
        if !pieces
            .iter()
            .any(|p| matches!(p, BoundaryCondition::Dirichlet(_)))
        {
            return Err(SolverError::InvalidInput(
                "at least one Dirichlet piece is required".into(),
            ));
        }
        for p in &pieces {
            if let BoundaryCondition::Dirichlet(v) = p {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(SolverError::InvalidInput(format!(
                        "Dirichlet values must be finite and >= 0, got {v}"
                    )));
                }
            }
        }
        Ok(Self { pieces })
    }

    /// Two Dirichlet values at the ends of an interval or annulus.
    pub fn dirichlet_ends(lo: f64, hi: f64) -> Result<Self, SolverError> {
        Self::new(vec![
            BoundaryCondition::Dirichlet(lo),
            BoundaryCondition::Dirichlet(hi),
        ])
    }

    pub fn pieces(&self) -> &[BoundaryCondition] {
        &self.pieces
    }

    pub fn max_dirichlet(&self) -> f64 {
        self.pieces
            .iter()
            .filter_map(|p| match p {
                BoundaryCondition::Dirichlet(v) => Some(*v),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn check(&self, domain: &Domain) -> Result<(), SolverError> {
        if self.pieces.len() != domain.boundary_pieces() {
            return Err(SolverError::DimensionMismatch(format!(
                "domain has {} boundary pieces, boundary data has {}",
                domain.boundary_pieces(),
                self.pieces.len()
            )));
        }
        Ok(())
    }
}

/// Linear element with constant gradient.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub n_local: usize,
    /// Gradients of the local basis functions.
    pub grad: [Position; 3],
    /// Element measure, times the radial weight for the radial kind.
    pub weight: f64,
}

impl Element {
    pub fn gradient(&self, values: &[f64]) -> Position {
        let mut p = [0.0; 2];
        for a in 0..self.n_local {
            let v = values[self.nodes[a]];
            p[0] += v * self.grad[a][0];
            p[1] += v * self.grad[a][1];
        }
        p
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        self.nodes[..self.n_local]
            .iter()
            .map(|&i| values[i])
            .sum::<f64>()
            / self.n_local as f64
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub coords: Vec<Position>,
    pub elements: Vec<Element>,
    /// Vertex-lumped mass: each element spreads its weight equally over its nodes.
    pub lumped: Vec<f64>,
    /// Node indices of each boundary piece.
    pub boundary: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(domain: &Domain) -> Self {
        let (nx, ny) = domain.resolution();
        let mut coords = Vec::with_capacity(nx * ny);
        let mut elements = Vec::new();
        let mut boundary = Vec::new();
        match domain.kind() {
            DomainKind::Interval { x_lo, x_hi }
            | DomainKind::Radial {
                r_lo: x_lo,
                r_hi: x_hi,
                ..
            } => {
                let h = (x_hi - x_lo) / (nx - 1) as f64;
                coords.extend((0..nx).map(|i| {
                    [
                        if i == nx - 1 {
                            x_hi
                        } else {
                            x_lo + i as f64 * h
                        },
                        0.0,
                    ]
                }));
                let radial_dim = match domain.kind() {
                    DomainKind::Radial { dim, .. } => Some(dim),
                    _ => None,
                };
                for i in 0..nx - 1 {
                    let mut weight = coords[i + 1][0] - coords[i][0];
                    if let Some(dim) = radial_dim {
                        let mid = 0.5 * (coords[i][0] + coords[i + 1][0]);
                        weight *= mid.powi(dim as i32 - 1);
                    }
                    let len = coords[i + 1][0] - coords[i][0];
                    elements.push(Element {
                        nodes: [i, i + 1, 0],
                        n_local: 2,
                        grad: [[-1.0 / len, 0.0], [1.0 / len, 0.0], [0.0; 2]],
                        weight,
                    });
                }
                boundary.push(vec![0]);
                boundary.push(vec![nx - 1]);
            }
            DomainKind::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
            } => {
                let hx = (x_hi - x_lo) / (nx - 1) as f64;
                let hy = (y_hi - y_lo) / (ny - 1) as f64;
                for j in 0..ny {
                    let y = if j == ny - 1 {
                        y_hi
                    } else {
                        y_lo + j as f64 * hy
                    };
                    for i in 0..nx {
                        let x = if i == nx - 1 {
                            x_hi
                        } else {
                            x_lo + i as f64 * hx
                        };
                        coords.push([x, y]);
                    }
                }
                let id = |i: usize, j: usize| j * nx + i;
                let area = 0.5 * hx * hy;
                for j in 0..ny - 1 {
                    for i in 0..nx - 1 {
                        // lower-right triangle (i,j), (i+1,j), (i+1,j+1)
                        elements.push(Element {
                            nodes: [id(i, j), id(i + 1, j), id(i + 1, j + 1)],
                            n_local: 3,
                            grad: [[-1.0 / hx, 0.0], [1.0 / hx, -1.0 / hy], [0.0, 1.0 / hy]],
                            weight: area,
                        });
                        // upper-left triangle (i,j), (i+1,j+1), (i,j+1)
                        elements.push(Element {
                            nodes: [id(i, j), id(i + 1, j + 1), id(i, j + 1)],
                            n_local: 3,
                            grad: [[0.0, -1.0 / hy], [1.0 / hx, 0.0], [-1.0 / hx, 1.0 / hy]],
                            weight: area,
                        });
                    }
                }
                boundary.push((0..ny).map(|j| id(0, j)).collect());
                boundary.push((0..ny).map(|j| id(nx - 1, j)).collect());
                boundary.push((0..nx).map(|i| id(i, 0)).collect());
                boundary.push((0..nx).map(|i| id(i, ny - 1)).collect());
            }
        }
        let mut lumped = vec![0.0; coords.len()];
        for e in &elements {
            for a in 0..e.n_local {
                lumped[e.nodes[a]] += e.weight / e.n_local as f64;
            }
        }
        Self {
            domain: *domain,
            coords,
            elements,
            lumped,
            boundary,
        }
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// Prescribed value per node; the first Dirichlet piece listing a node wins at corners.
    pub fn dirichlet_values(&self, bc: &BoundaryData) -> Vec<Option<f64>> {
        let mut out = vec![None; self.node_count()];
        for (piece, nodes) in bc.pieces().iter().zip(&self.boundary) {
            if let BoundaryCondition::Dirichlet(v) = piece {
                for &i in nodes {
                    out[i].get_or_insert(*v);
                }
            }
        }
        out
    }

    /// Element containing `p` with the barycentric weights of its nodes.
    pub fn locate(&self, p: Position) -> Option<(usize, [f64; 3])> {
        if !self.domain.contains(p) {
            return None;
        }
        let (nx, ny) = self.domain.resolution();
        let (lo, hi) = self.domain.bounds();
        let cell = |x: f64, lo: f64, hi: f64, n: usize| {
            let t = (x - lo) / (hi - lo) * (n - 1) as f64;
            let i = (t.floor().max(0.0) as usize).min(n - 2);
            (i, (t - i as f64).clamp(0.0, 1.0))
        };
        match self.domain.mesh_dim() {
            1 => {
                let (i, t) = cell(p[0], lo[0], hi[0], nx);
                Some((i, [1.0 - t, t, 0.0]))
            }
            _ => {
                let (i, tx) = cell(p[0], lo[0], hi[0], nx);
                let (j, ty) = cell(p[1], lo[1], hi[1], ny);
                let base = 2 * (j * (nx - 1) + i);
                if ty <= tx {
                    Some((base, [1.0 - tx, tx - ty, ty]))
                } else {
                    Some((base + 1, [1.0 - ty, tx, ty - tx]))
                }
            }
        }
    }

    /// Piecewise-linear interpolant of nodal `values` at `p`.
    pub fn interpolate(&self, values: &[f64], p: Position) -> Option<f64> {
        let (e, bary) = self.locate(p)?;
        let el = &self.elements[e];
        Some((0..el.n_local).map(|a| bary[a] * values[el.nodes[a]]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_lumped_mass_sums_to_length() {
        let m = Mesh::new(&Domain::interval(-1.0, 1.0, 11).unwrap());
        assert_eq!(m.elements.len(), 10);
        assert!((m.lumped.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((m.lumped[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn radial_weights() {
        let m = Mesh::new(&Domain::radial(0.5, 1.0, 3, 3).unwrap());
        // midpoints 0.625, 0.875, width 0.25
        assert!((m.elements[0].weight - 0.25 * 0.625f64.powi(2)).abs() < 1e-15);
        assert!((m.elements[1].weight - 0.25 * 0.875f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn rectangle_gradients_reproduce_linear_fields() {
        let m = Mesh::new(&Domain::rectangle(0.0, 2.0, -1.0, 1.0, 5, 4).unwrap());
        let v: Vec<f64> = m
            .coords
            .iter()
            .map(|c| 3.0 * c[0] - 2.0 * c[1] + 1.0)
            .collect();
        for e in &m.elements {
            let p = e.gradient(&v);
            assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] + 2.0).abs() < 1e-12);
        }
        let area: f64 = m.elements.iter().map(|e| e.weight).sum();
        assert!((area - 4.0).abs() < 1e-12);
        assert!((m.lumped.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        for p in [[0.3, 0.1], [1.99, -0.7], [0.0, 1.0], [1.234, 0.5]] {
            let expect = 3.0 * p[0] - 2.0 * p[1] + 1.0;
            assert!((m.interpolate(&v, p).unwrap() - expect).abs() < 1e-12);
        }
        assert!(m.interpolate(&v, [2.5, 0.0]).is_none());
    }

    #[test]
    fn domain_validation() {
        assert!(Domain::interval(1.0, 0.0, 10).is_err());
        assert!(Domain::interval(0.0, 1.0, 1).is_err());
        assert!(Domain::radial(0.0, 1.0, 2, 10).is_err());
        assert!(Domain::radial(0.1, 1.0, 1, 10).is_err());
        assert!(BoundaryData::new(vec![BoundaryCondition::NaturalZeroFlux; 2]).is_err());
        assert!(BoundaryData::dirichlet_ends(-1.0, 0.0).is_err());
    }

    #[test]
    fn corner_precedence_and_descriptor() {
        let d = Domain::rectangle(0.0, 1.0, 0.0, 1.0, 3, 3).unwrap();
        let m = Mesh::new(&d);
        let bc = BoundaryData::new(vec![
            BoundaryCondition::Dirichlet(1.0),
            BoundaryCondition::Dirichlet(2.0),
            BoundaryCondition::Dirichlet(3.0),
            BoundaryCondition::NaturalZeroFlux,
        ])
        .unwrap();
        let dv = m.dirichlet_values(&bc);
        assert_eq!(dv[0], Some(1.0));
        assert_eq!(dv[2], Some(2.0));
        assert_eq!(dv[1], Some(3.0));
        assert_eq!(dv[4], None);
        assert_eq!(d.to_string(), "rectangle 0 1 0 1 3 3");
    }
}
