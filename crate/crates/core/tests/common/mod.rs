#![allow(dead_code)]

pub mod invariants;

use heston_sm::market::{HestonParams, MarketQuote};
use heston_sm::pde::{build_grid, Grid2D, GridOverrides};
use statrs::distribution::{ContinuousCDF, Normal};

/// Black–Scholes European put.
pub fn bs_put(s0: f64, k: f64, r: f64, q: f64, vol: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sd = vol * t.sqrt();
    let d1 = ((s0 / k).ln() + (r - q + 0.5 * vol * vol) * t) / sd;
    let d2 = d1 - sd;
    k * (-r * t).exp() * n.cdf(-d2) - s0 * (-q * t).exp() * n.cdf(-d1)
}

/// Degenerate configuration in which the Heston price collapses to
/// Black–Scholes with volatility 0.2.
pub fn degenerate_bs() -> (HestonParams, MarketQuote) {
    (
        HestonParams::new(1e-8, 0.0, 3.0, 0.04, 0.04),
        MarketQuote {
            s0: 100.0,
            r: 0.05,
            q: 0.0,
            strike: 100.0,
            maturity: 0.25,
            observed_price: 0.0,
        },
    )
}

pub fn atm_quote(maturity: f64) -> MarketQuote {
    MarketQuote {
        s0: 100.0,
        r: 0.03,
        q: 0.01,
        strike: 100.0,
        maturity,
        observed_price: 0.0,
    }
}

pub fn grid(m: &MarketQuote, nu0: f64, n_x: usize, n_nu: usize, n_tau: usize) -> Grid2D {
    let o = GridOverrides {
        n_x: Some(n_x),
        n_nu: Some(n_nu),
        n_tau: Some(n_tau),
        ..GridOverrides::default()
    };
    build_grid(m, nu0, &o).unwrap()
}
