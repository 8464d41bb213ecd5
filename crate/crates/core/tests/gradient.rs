mod common;

use common::{atm_quote, grid};
use heston_sm::adjoint::{adjoint_solve, assemble_gradient, cost_and_gradient, quadrature_gradient};
use heston_sm::market::{cost, CostTarget, HestonParams};
use heston_sm::pde::{PdeOptions, PdeProblem};

fn fd_gradient(p: &HestonParams, target: &CostTarget, opts: PdeOptions) -> [f64; 4] {
    let m = atm_quote(0.25);
    let g = grid(&m, p.nu0, 30, 30, 12);
    let f = |q: &HestonParams| {
        let prob = PdeProblem::new(*q, &m, g, opts).unwrap();
        cost(&prob.model_output(target).unwrap(), target, g.dtau()).unwrap()
    };
    let x = p.to_vector();
    let mut out = [0.0; 4];
    for i in 0..4 {
        let h = 1e-5 * x[i].abs().max(1.0);
        let (mut a, mut b) = (x, x);
        a[i] += h;
        b[i] -= h;
        out[i] = (f(&p.with_vector(a)) - f(&p.with_vector(b))) / (2.0 * h);
    }
    out
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let m = atm_quote(0.25);
    let p = HestonParams::new(0.35, -0.45, 2.5, 0.2, 0.05);
    let g = grid(&m, p.nu0, 30, 30, 12);
    let opts = PdeOptions::default();
    let target = CostTarget::Scalar(4.0);
    let prob = PdeProblem::new(p, &m, g, opts).unwrap();
    let (_, grad) = cost_and_gradient(&prob, &target).unwrap();
    let fd = fd_gradient(&p, &target, opts);
    for (a, b) in grad.to_array().iter().zip(fd) {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "adjoint {a}, fd {b}");
    }
}

#[test]
fn trajectory_gradient_matches_central_differences() {
    let m = atm_quote(0.25);
    let p = HestonParams::new(0.35, -0.45, 2.5, 0.2, 0.05);
    let g = grid(&m, p.nu0, 30, 30, 12);
    let opts = PdeOptions::default();
    let target = CostTarget::Trajectory((0..=12).map(|k| 0.3 * k as f64).collect());
    let prob = PdeProblem::new(p, &m, g, opts).unwrap();
    let (_, grad) = cost_and_gradient(&prob, &target).unwrap();
    let fd = fd_gradient(&p, &target, opts);
    for (a, b) in grad.to_array().iter().zip(fd) {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-3), "adjoint {a}, fd {b}");
    }
}

#[test]
fn assembled_gradient_equals_solver_gradient() {
    let m = atm_quote(0.25);
    let p = HestonParams::new(0.35, -0.45, 2.5, 0.2, 0.05);
    let g = grid(&m, p.nu0, 20, 25, 8);
    let prob = PdeProblem::new(p, &m, g, PdeOptions::default()).unwrap();
    let fwd = prob.surface().unwrap();
    let adj = adjoint_solve(&prob, &fwd, &CostTarget::Scalar(3.0)).unwrap();
    assert_eq!(assemble_gradient(&fwd, &adj).unwrap(), adj.gradient);
    let quad = quadrature_gradient(&fwd, &adj, &p).unwrap();
    assert!(quad.is_finite());
}

#[test]
fn gradient_vanishes_at_a_perfect_fit() {
    let m = atm_quote(0.25);
    let p = HestonParams::new(0.35, -0.45, 2.5, 0.2, 0.05);
    let g = grid(&m, p.nu0, 20, 25, 8);
    let prob = PdeProblem::new(p, &m, g, PdeOptions::default()).unwrap();
    let v = prob.contract_price().unwrap();
    let (j, grad) = cost_and_gradient(&prob, &CostTarget::Scalar(v)).unwrap();
    assert_eq!(j, 0.0);
    assert_eq!(grad.norm(), 0.0);
}
