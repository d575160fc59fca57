//! Convergence of the one-dimensional benchmark and the slab rectangle.

use orliczfb::freeboundary::{extract_free_boundary, verify, VerifyOptions};
use orliczfb::gfunc::GFunction;
use orliczfb::reaction::ReactionTerm;
use orliczfb::solver::*;

const SCHEDULE: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];

fn lambda_star() -> f64 {
    2f64.sqrt()
}

fn interval_sweep(nodes: usize, schedule: &[f64]) -> Vec<SweepEntry> {
    let gf = GFunction::power(2.0).unwrap();
    let rt = ReactionTerm::poly_bump(6.0).unwrap();
    let d = Domain::interval(-1.0, 1.0, nodes).unwrap();
    let bc = BoundaryData::dirichlet_ends(0.0, 0.5).unwrap();
    sweep(&gf, &rt, &d, &bc, schedule, &SolverOptions::default()).unwrap()
}

#[test]
fn slopes_increase_towards_lambda_star() {
    let lam = lambda_star();
    let entries = interval_sweep(4001, &SCHEDULE);
    let slopes: Vec<f64> = entries
        .iter()
        .map(|e| {
            verify(&e.field, lam, &VerifyOptions::default())
                .unwrap()
                .lambda_hat
        })
        .collect();
    for w in slopes.windows(2) {
        assert!(w[0] < w[1], "{slopes:?}");
    }
    assert!(*slopes.last().unwrap() <= lam * 1.02);
    assert!(
        (slopes.last().unwrap() - lam).abs() / lam < 0.005,
        "{slopes:?}"
    );
}

#[test]
fn coupled_refinement_reduces_errors() {
    let lam = lambda_star();
    let fb_exact = 1.0 - 0.5 / lam;
    let levels = [(1001, 3), (2001, 4), (4001, 5)];
    let errors: Vec<(f64, f64)> = levels
        .iter()
        .map(|&(nodes, k)| {
            let entries = interval_sweep(nodes, &SCHEDULE[..k]);
            let r = verify(
                &entries.last().unwrap().field,
                lam,
                &VerifyOptions::default(),
            )
            .unwrap();
            ((r.lambda_hat - lam).abs(), (r.x0[0] - fb_exact).abs())
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1].0 < w[0].0 && w[1].1 < w[0].1, "{errors:?}");
    }
}

#[test]
fn slab_rectangle_has_flat_free_boundary() {
    let lam = lambda_star();
    let gf = GFunction::power(2.0).unwrap();
    let rt = ReactionTerm::poly_bump(6.0).unwrap();
    let d = Domain::rectangle(-1.0, 1.0, 0.0, 0.5, 201, 51).unwrap();
    let bc = BoundaryData::new(vec![
        BoundaryCondition::Dirichlet(0.0),
        BoundaryCondition::Dirichlet(0.5),
        BoundaryCondition::NaturalZeroFlux,
        BoundaryCondition::NaturalZeroFlux,
    ])
    .unwrap();
    let entries = sweep(
        &gf,
        &rt,
        &d,
        &bc,
        &[0.1, 0.05, 0.025],
        &SolverOptions::default(),
    )
    .unwrap();
    let last = entries.last().unwrap();
    let xs: Vec<f64> = extract_free_boundary(&last.field, last.eps)
        .iter()
        .map(|p| p[0])
        .collect();
    assert!(!xs.is_empty());
    let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < d.h(), "spread {spread}");
    let r = verify(&last.field, lam, &VerifyOptions::default()).unwrap();
    assert!((r.lambda_hat - lam).abs() / lam < 0.05, "{}", r.lambda_hat);
    assert!(r.nu[0] > 0.99, "{:?}", r.nu);
}
