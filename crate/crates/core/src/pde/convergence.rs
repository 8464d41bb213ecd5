use serde::Serialize;

use super::grid::{build_grid, GridOverrides};
use super::surface::{PdeOptions, PdeProblem};
use crate::error::{Error, Result};
use crate::market::{HestonParams, MarketQuote};

/// One level of a time-step halving study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementRow {
    pub n_tau: usize,
    pub price: f64,
    /// `max |V_{N} - V_{N/2}|` over all nodes at `tau = T`; NaN on the first level.
    pub diff_inf: f64,
    /// Previous `diff_inf` over this one; NaN until two differences exist.
    pub ratio: f64,
}

/// Prices with `base_n_tau * 2^l` steps for `l = 0..=refinements`, holding
/// the spatial grid fixed. A second-order scheme gives ratios near 4.
pub fn time_refinement_study(
    p: &HestonParams,
    m: &MarketQuote,
    overrides: &GridOverrides,
    pde: &PdeOptions,
    base_n_tau: usize,
    refinements: usize,
) -> Result<Vec<RefinementRow>> {
    if base_n_tau == 0 {
        return Err(Error::Config("base_n_tau must be >= 1".into()));
    }
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(refinements + 1);
    let mut prev: Option<Vec<f64>> = None;
    for l in 0..=refinements {
        let n_tau = base_n_tau << l;
        let o = GridOverrides {
            n_tau: Some(n_tau),
            ..*overrides
        };
        let g = build_grid(m, p.nu0, &o)?;
        let prob = PdeProblem::new(*p, m, g, *pde)?;
        let field = prob.terminal_field()?;
        let w = prob.contract_weights()?;
        let price = w.iter().map(|&(k, c)| c * field[k]).sum();
        let diff_inf = match &prev {
            Some(u) => u
                .iter()
                .zip(&field)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
            None => f64::NAN,
        };
        let ratio = match rows.last() {
            Some(r) if r.diff_inf.is_finite() => r.diff_inf / diff_inf,
            _ => f64::NAN,
        };
        rows.push(RefinementRow {
            n_tau,
            price,
            diff_inf,
            ratio,
        });
        prev = Some(field);
    }
    Ok(rows)
}
