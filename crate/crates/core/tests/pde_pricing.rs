mod common;

use common::{atm_quote, bs_put, degenerate_bs, grid};
use heston_sm::market::HestonParams;
use heston_sm::pde::{NuMaxBoundary, PdeOptions, PdeProblem, Readout};

#[test]
fn degenerate_model_matches_black_scholes() {
    let (p, m) = degenerate_bs();
    let g = grid(&m, p.nu0, 120, 50, 60);
    let v = PdeProblem::new(p, &m, g, PdeOptions::default())
        .unwrap()
        .contract_price()
        .unwrap();
    let bs = bs_put(m.s0, m.strike, m.r, m.q, 0.2, m.maturity);
    assert!((v - bs).abs() / bs < 1e-3, "pde {v}, bs {bs}");
}

#[test]
fn degenerate_model_off_the_money() {
    let (p, mut m) = degenerate_bs();
    for strike in [90.0, 110.0] {
        m.strike = strike;
        let g = grid(&m, p.nu0, 120, 50, 60);
        let v = PdeProblem::new(p, &m, g, PdeOptions::default())
            .unwrap()
            .contract_price()
            .unwrap();
        let bs = bs_put(m.s0, m.strike, m.r, m.q, 0.2, m.maturity);
        assert!((v - bs).abs() < 2e-2, "K = {strike}: pde {v}, bs {bs}");
    }
}

#[test]
fn readouts_agree_on_nodes() {
    let p = HestonParams::new(0.3, -0.5, 2.0, 0.06, 0.05);
    let m = atm_quote(0.5);
    let g = grid(&m, p.nu0, 60, 25, 20);
    let price = |readout| {
        let o = PdeOptions {
            readout,
            ..PdeOptions::default()
        };
        PdeProblem::new(p, &m, g, o).unwrap().contract_price().unwrap()
    };
    let cubic = price(Readout::Cubic);
    let bilinear = price(Readout::Bilinear);
    let nearest = price(Readout::NearestNode);
    // the contract point sits on a nu node but between x nodes
    assert!((cubic - bilinear).abs() < 0.2);
    assert!((cubic - nearest).abs() < 1.5);
}

#[test]
fn higher_vol_of_vol_changes_the_price_smoothly() {
    let m = atm_quote(0.5);
    let g = grid(&m, 0.05, 60, 25, 20);
    let price = |s: f64| {
        let p = HestonParams::new(s, -0.5, 3.0, 0.06, 0.05);
        PdeProblem::new(p, &m, g, PdeOptions::default())
            .unwrap()
            .contract_price()
            .unwrap()
    };
    let a = price(0.2);
    let b = price(0.21);
    assert!((a - b).abs() < 0.05, "{a} {b}");
}

#[test]
fn top_boundary_choice_is_a_small_effect() {
    let p = HestonParams::new(0.3, -0.5, 2.0, 0.06, 0.05);
    let m = atm_quote(0.25);
    let g = grid(&m, p.nu0, 60, 50, 20);
    let price = |b| {
        let o = PdeOptions {
            nu_max_boundary: b,
            ..PdeOptions::default()
        };
        PdeProblem::new(p, &m, g, o).unwrap().contract_price().unwrap()
    };
    let ghost = price(NuMaxBoundary::Ghost);
    let dirichlet = price(NuMaxBoundary::Dirichlet);
    assert!((ghost - dirichlet).abs() < 1e-3, "{ghost} {dirichlet}");
}

#[test]
fn surface_csv_has_one_row_per_node_and_level() {
    let p = HestonParams::new(0.3, -0.5, 2.0, 0.06, 0.05);
    let m = atm_quote(0.25);
    let g = grid(&m, p.nu0, 10, 25, 3);
    let s = PdeProblem::new(p, &m, g, PdeOptions::default()).unwrap().surface().unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * g.nx() * g.ny());
    assert!(text.starts_with("tau,nu,x,value\n"));
}
