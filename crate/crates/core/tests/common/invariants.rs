//! Invariant checks shared by the property suite and the acceptance run.

use heston_sm::calibrate::{calibrate_coarse, DescentOptions};
use heston_sm::market::{project_to_feasible, CostTarget, HestonParams, MarketQuote, ParamBounds};
use heston_sm::mc::{asian_put_price, McConfig};
use heston_sm::pde::{build_grid, GridOverrides, PdeOptions, PdeProblem};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::grid;

pub type Check = Result<(), TestCaseError>;

pub fn any_params() -> impl Strategy<Value = HestonParams> {
    (-1.0..2.0f64, -1.5..1.5f64, -1.0..12.0f64, -0.5..1.5f64)
        .prop_map(|(s, r, k, m)| HestonParams::new(s, r, k, m, 0.05))
}

pub fn feasible_params() -> impl Strategy<Value = HestonParams> {
    any_params().prop_map(|p| project_to_feasible(&p, &ParamBounds::default()).unwrap())
}

pub fn quote() -> impl Strategy<Value = MarketQuote> {
    (80.0..120.0f64, 0.005..0.08f64, 0.0..0.04f64, 0.1..1.0f64).prop_map(|(k, r, q, t)| MarketQuote {
        s0: 100.0,
        r,
        q,
        strike: k,
        maturity: t,
        observed_price: 0.0,
    })
}

/// `(vol, r, strike, maturity)` of a Black-Scholes-like Heston model.
pub fn degenerate_case() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (0.1..0.5f64, 0.005..0.08f64, 80.0..120.0f64, 0.1..1.0f64)
}

pub fn projection_idempotent(p: HestonParams) -> Check {
    let b = ParamBounds::default();
    let once = project_to_feasible(&p, &b).unwrap();
    prop_assert!(b.is_feasible(&once));
    prop_assert_eq!(project_to_feasible(&once, &b).unwrap(), once);
    Ok(())
}

pub fn put_bounds(p: HestonParams, m: MarketQuote) -> Check {
    let g = grid(&m, p.nu0, 16, 25, 8);
    let s = PdeProblem::new(p, &m, g, PdeOptions::default()).unwrap().surface().unwrap();
    let tol = 1e-8 * m.strike;
    for (k, level) in s.values.iter().enumerate() {
        let cap = m.strike * (-m.r * g.tau(k)).exp();
        for v in level {
            prop_assert!(*v >= -tol && *v <= cap + tol, "level {}: {} outside [0, {}]", k, v, cap);
        }
    }
    Ok(())
}

pub fn monotone_in_spot((vol, r, k, t): (f64, f64, f64, f64)) -> Check {
    let nu = vol * vol;
    let p = HestonParams::new(1e-8, 0.0, 3.0, nu, nu);
    let m = MarketQuote {
        s0: 100.0,
        r,
        q: 0.0,
        strike: k,
        maturity: t,
        observed_price: 0.0,
    };
    // central x differences stay monotone while r dx / nu_min < 1
    let o = GridOverrides {
        n_x: Some(60),
        n_nu: Some(30),
        n_tau: Some(8),
        nu_max: Some(0.3),
        ..GridOverrides::default()
    };
    let g = build_grid(&m, nu, &o).unwrap();
    let u = PdeProblem::new(p, &m, g, PdeOptions::default()).unwrap().terminal_field().unwrap();
    for j in 0..g.ny() {
        for i in 0..g.nx() - 1 {
            let (a, b) = (u[g.idx(i, j)], u[g.idx(i + 1, j)]);
            prop_assert!(b <= a + 1e-8 * k, "node ({}, {}): {} then {}", i, j, a, b);
        }
    }
    Ok(())
}

pub fn iterates_feasible(p: HestonParams, target: f64) -> Check {
    let m = MarketQuote {
        s0: 100.0,
        r: 0.03,
        q: 0.01,
        strike: 100.0,
        maturity: 0.25,
        observed_price: target,
    };
    let g = grid(&m, p.nu0, 12, 25, 4);
    let opts = DescentOptions {
        max_iters: 2,
        max_halvings: 6,
        ..DescentOptions::default()
    };
    let rep = calibrate_coarse(&CostTarget::Scalar(target), &p, &m, &g, &PdeOptions::default(), &opts).unwrap();
    for it in &rep.iterates {
        prop_assert!(opts.bounds.is_feasible(&it.params), "{:?}", it.params);
    }
    Ok(())
}

pub fn mc_deterministic(p: HestonParams, seed: u64) -> Check {
    let m = MarketQuote {
        s0: 100.0,
        r: 0.03,
        q: 0.01,
        strike: 100.0,
        maturity: 0.5,
        observed_price: 0.0,
    };
    let c = McConfig {
        n_paths: 64,
        n_steps: 12,
        seed,
        antithetic: true,
    };
    let a = asian_put_price(&p, &m, &c).unwrap();
    let b = asian_put_price(&p, &m, &c).unwrap();
    prop_assert_eq!(a.price.to_bits(), b.price.to_bits());
    prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    Ok(())
}
