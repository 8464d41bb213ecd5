mod common;

use common::{atm_quote, grid};
use heston_sm::calibrate::{calibrate_coarse, DescentOptions, StopReason};
use heston_sm::market::{reference_guesses, CostTarget, HestonParams};
use heston_sm::pde::{PdeOptions, PdeProblem};
use heston_sm::space_map::{run_asm, AsmOptions, CoarseSetup, PdeFineModel};

#[test]
fn twin_experiment_converges_from_every_guess() {
    let mut m = atm_quote(0.25);
    let g = grid(&m, 0.05, 40, 40, 20);
    let pde = PdeOptions::default();
    let truth = HestonParams::new(0.3, -0.4, 3.0, 0.3, 0.05);
    m.observed_price = PdeProblem::new(truth, &m, g, pde).unwrap().contract_price().unwrap();
    let opts = DescentOptions::default();
    for xi0 in reference_guesses(0.05) {
        let rep = calibrate_coarse(&CostTarget::Scalar(m.observed_price), &xi0, &m, &g, &pde, &opts).unwrap();
        assert!(rep.converged, "{xi0:?}: stop {:?}, J {}", rep.stop, rep.final_cost);
        assert_eq!(rep.stop, StopReason::Converged);
        assert!(rep.final_cost < opts.j_tol);
        for w in rep.iterates.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }
}

#[test]
fn trajectory_calibration_reduces_the_cost() {
    let m = atm_quote(0.25);
    let g = grid(&m, 0.05, 30, 30, 10);
    let pde = PdeOptions::default();
    let truth = HestonParams::new(0.3, -0.4, 3.0, 0.3, 0.05);
    let traj = PdeProblem::new(truth, &m, g, pde).unwrap().contract_trajectory().unwrap();
    let opts = DescentOptions {
        max_iters: 10,
        j_tol: 1e-8,
        ..DescentOptions::default()
    };
    let rep = calibrate_coarse(&CostTarget::Trajectory(traj), &reference_guesses(0.05)[1], &m, &g, &pde, &opts)
        .unwrap();
    assert!(rep.reduction_pct > 50.0, "{}", rep.reduction_pct);
}

#[test]
fn space_mapping_against_a_finer_pde_reduces_the_fine_cost() {
    let mut m = atm_quote(0.25);
    let pde = PdeOptions::default();
    let fine = PdeFineModel {
        grid: grid(&m, 0.05, 60, 50, 30),
        options: pde,
    };
    let truth = HestonParams::new(0.3, -0.4, 3.0, 0.3, 0.05);
    m.observed_price = PdeProblem::new(truth, &m, fine.grid, pde).unwrap().contract_price().unwrap();
    let coarse = CoarseSetup {
        grid: grid(&m, 0.05, 20, 25, 8),
        pde,
        descent: DescentOptions {
            j_tol: 1e-10,
            ..DescentOptions::default()
        },
    };
    let xi0 = reference_guesses(0.05)[0];
    let rep = run_asm(&fine, &m, &xi0, &coarse, &AsmOptions::default()).unwrap();
    assert!(!rep.iterates.is_empty() && rep.iterates.len() <= 5);
    assert!(rep.converged);
    assert!(rep.reduction_vs_first > 90.0, "{rep:?}");
    for it in &rep.iterates {
        assert!(coarse.descent.bounds.is_feasible(&it.xi_f));
    }
}
