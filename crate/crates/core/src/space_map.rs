//! Aggressive space mapping with an identity Jacobian: the fine model is
//! steered by coarse re-calibrations to its own outputs.

use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_coarse, CalibrationReport, DescentOptions};
use crate::error::{Error, Result};
use crate::market::{project_to_feasible, relative_reduction, CostTarget, HestonParams, MarketQuote};
use crate::mc::{asian_put_price, McConfig, McEstimate};
use crate::pde::{Grid2D, PdeOptions, PdeProblem};

/// Expensive model being calibrated.
pub trait FineModel {
    fn price(&self, p: &HestonParams, m: &MarketQuote) -> Result<McEstimate>;
}

/// Monte Carlo Asian put with a fixed seed.
#[derive(Debug, Clone, Copy)]
pub struct McFineModel {
    pub config: McConfig,
}

impl FineModel for McFineModel {
    fn price(&self, p: &HestonParams, m: &MarketQuote) -> Result<McEstimate> {
        asian_put_price(p, m, &self.config)
    }
}

/// The coarse PDE model used as its own fine model.
#[derive(Debug, Clone, Copy)]
pub struct PdeFineModel {
    pub grid: Grid2D,
    pub options: PdeOptions,
}

impl FineModel for PdeFineModel {
    fn price(&self, p: &HestonParams, m: &MarketQuote) -> Result<McEstimate> {
        let price = PdeProblem::new(*p, m, self.grid, self.options)?.contract_price()?;
        Ok(McEstimate {
            price,
            std_error: 0.0,
            n_paths: 0,
            seed: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsmOptions {
    pub max_sm_iters: usize,
    pub residual_tol: f64,
    pub line_search: bool,
    /// Halvings tried by the optional line search.
    pub max_line_search: u32,
}

impl Default for AsmOptions {
    fn default() -> Self {
        Self {
            max_sm_iters: 4,
            residual_tol: 1e-2,
            line_search: false,
            max_line_search: 4,
        }
    }
}

impl AsmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sm_iters == 0 {
            return Err(Error::Config("asm.max_sm_iters must be >= 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::Config(format!(
                "asm.residual_tol must be >= 0, got {}",
                self.residual_tol
            )));
        }
        Ok(())
    }
}

/// Coarse model settings shared by every re-calibration.
#[derive(Debug, Clone, Copy)]
pub struct CoarseSetup {
    pub grid: Grid2D,
    pub pde: PdeOptions,
    pub descent: DescentOptions,
}

/// Value of the space-mapping function at one fine parameter point.
#[derive(Debug, Clone)]
pub struct SpaceMapValue {
    pub s: HestonParams,
    pub fine: McEstimate,
    pub calibration: CalibrationReport,
}

/// Fine price at `xi_f`, then the coarse parameters reproducing it, starting
/// from `warm_start`.
pub fn evaluate_space_map(
    fine: &dyn FineModel,
    xi_f: &HestonParams,
    warm_start: &HestonParams,
    m: &MarketQuote,
    coarse: &CoarseSetup,
) -> Result<SpaceMapValue> {
    let est = fine.price(xi_f, m)?;
    let rep = calibrate_coarse(
        &CostTarget::Scalar(est.price),
        warm_start,
        m,
        &coarse.grid,
        &coarse.pde,
        &coarse.descent,
    )?;
    Ok(SpaceMapValue {
        s: rep.final_params,
        fine: est,
        calibration: rep,
    })
}

/// One space-mapping iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsmIterate {
    pub k: usize,
    pub xi_f: HestonParams,
    pub fine_price: f64,
    pub fine_std_error: f64,
    pub s: HestonParams,
    /// `|s(xi_f) - xi_c*|`.
    pub residual: f64,
    /// Displacement applied after this iterate (zero on the last one).
    pub step: [f64; 4],
    /// `0.5 (V_f(xi_f) - V_market)^2`.
    pub fine_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsmReport {
    pub initial_guess: HestonParams,
    /// Coarse calibration against the market price.
    pub coarse: CalibrationReport,
    pub xi_c_star: HestonParams,
    pub iterates: Vec<AsmIterate>,
    /// Fine cost at the initial guess.
    pub fine_cost_initial: f64,
    /// Iterate with the lowest fine cost.
    pub best: usize,
    pub converged: bool,
    /// Reduction of the best fine cost against the initial guess.
    pub reduction_vs_initial: f64,
    /// Reduction of the best fine cost against `xi_f^0 = xi_c*`.
    pub reduction_vs_first: f64,
}

fn fine_cost(price: f64, market: f64) -> f64 {
    0.5 * (price - market) * (price - market)
}

fn reduction(j0: f64, j: f64) -> Result<f64> {
    if j0 == 0.0 {
        Ok(100.0)
    } else {
        relative_reduction(j0, j)
    }
}

fn residual(s: &HestonParams, star: &HestonParams) -> f64 {
    s.distance(star)
}

/// Simplified aggressive space mapping for one quote.
pub fn run_asm(
    fine: &dyn FineModel,
    m: &MarketQuote,
    xi0: &HestonParams,
    coarse: &CoarseSetup,
    opts: &AsmOptions,
) -> Result<AsmReport> {
    opts.validate()?;
    let market = m.observed_price;
    let start = project_to_feasible(xi0, &coarse.descent.bounds)?;
    let cal0 = calibrate_coarse(
        &CostTarget::Scalar(market),
        &start,
        m,
        &coarse.grid,
        &coarse.pde,
        &coarse.descent,
    )?;
    let star = cal0.final_params;
    let fine_cost_initial = fine_cost(fine.price(&start, m)?.price, market);

    let mut iterates: Vec<AsmIterate> = Vec::new();
    let mut xi_f = star;
    let mut warm = star;
    let mut pending: Option<SpaceMapValue> = None;
    let mut converged = false;
    for k in 0..=opts.max_sm_iters {
        let val = match pending.take() {
            Some(v) => v,
            None => evaluate_space_map(fine, &xi_f, &warm, m, coarse)?,
        };
        let r = residual(&val.s, &star);
        iterates.push(AsmIterate {
            k,
            xi_f,
            fine_price: val.fine.price,
            fine_std_error: val.fine.std_error,
            s: val.s,
            residual: r,
            step: [0.0; 4],
            fine_cost: fine_cost(val.fine.price, market),
        });
        log::debug!("asm k = {k}: residual {r:e}, fine cost {:e}", iterates[k].fine_cost);
        if r <= opts.residual_tol {
            converged = true;
            break;
        }
        if k == opts.max_sm_iters {
            break;
        }
        let h: Vec<f64> = val
            .s
            .to_vector()
            .iter()
            .zip(star.to_vector())
            .map(|(a, b)| -(a - b))
            .collect();
        let x = xi_f.to_vector();
        let trial_at = |alpha: f64| -> Result<HestonParams> {
            let y = [0, 1, 2, 3].map(|i| x[i] + alpha * h[i]);
            project_to_feasible(&xi_f.with_vector(y), &coarse.descent.bounds)
        };
        let mut next = trial_at(1.0)?;
        if opts.line_search {
            let mut alpha = 1.0;
            for _ in 0..=opts.max_line_search {
                let cand = trial_at(alpha)?;
                let v = evaluate_space_map(fine, &cand, &val.s, m, coarse)?;
                let accept = residual(&v.s, &star) < r;
                next = cand;
                pending = Some(v);
                if accept {
                    break;
                }
                alpha *= 0.5;
            }
        }
        let nv = next.to_vector();
        iterates[k].step = [0, 1, 2, 3].map(|i| nv[i] - x[i]);
        warm = val.s;
        xi_f = next;
    }
    let best = iterates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.fine_cost.total_cmp(&b.1.fine_cost))
        .map(|(i, _)| i)
        .expect("at least one iterate");
    let jb = iterates[best].fine_cost;
    Ok(AsmReport {
        initial_guess: start,
        xi_c_star: star,
        reduction_vs_initial: reduction(fine_cost_initial, jb)?,
        reduction_vs_first: reduction(iterates[0].fine_cost, jb)?,
        fine_cost_initial,
        best,
        converged,
        coarse: cal0,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{build_grid, GridOverrides};

    fn setup() -> (MarketQuote, CoarseSetup) {
        let mut m = MarketQuote {
            s0: 100.0,
            r: 0.03,
            q: 0.01,
            strike: 100.0,
            maturity: 0.25,
            observed_price: 0.0,
        };
        let o = GridOverrides {
            n_x: Some(24),
            n_nu: Some(25),
            n_tau: Some(10),
            ..GridOverrides::default()
        };
        let grid = build_grid(&m, 0.05, &o).unwrap();
        let pde = PdeOptions::default();
        let truth = HestonParams::new(0.3, -0.4, 3.0, 0.3, 0.05);
        m.observed_price = PdeProblem::new(truth, &m, grid, pde).unwrap().contract_price().unwrap();
        (
            m,
            CoarseSetup {
                grid,
                pde,
                descent: DescentOptions {
                    j_tol: 1e-12,
                    ..DescentOptions::default()
                },
            },
        )
    }

    #[test]
    fn coarse_as_fine_is_a_fixed_point() {
        let (m, coarse) = setup();
        let fine = PdeFineModel {
            grid: coarse.grid,
            options: coarse.pde,
        };
        let xi0 = HestonParams::new(0.2, -0.3, 5.0, 0.6, 0.05);
        let rep = run_asm(&fine, &m, &xi0, &coarse, &AsmOptions::default()).unwrap();
        assert_eq!(rep.iterates.len(), 1);
        assert!(rep.converged);
        assert!(rep.iterates[0].residual <= 1e-2);
        assert_eq!(rep.iterates[0].step, [0.0; 4]);
    }

    #[test]
    fn zero_tolerance_runs_to_the_cap() {
        let (m, coarse) = setup();
        let fine = McFineModel {
            config: McConfig {
                n_paths: 200,
                n_steps: 20,
                ..McConfig::default()
            },
        };
        let opts = AsmOptions {
            residual_tol: 0.0,
            ..AsmOptions::default()
        };
        let xi0 = HestonParams::new(0.2, -0.3, 5.0, 0.6, 0.05);
        let rep = run_asm(&fine, &m, &xi0, &coarse, &opts).unwrap();
        assert_eq!(rep.iterates.len(), 5);
        assert!(rep.iterates.iter().take(4).all(|it| it.step != [0.0; 4]));
        for it in &rep.iterates {
            assert!(coarse.descent.bounds.is_feasible(&it.xi_f));
        }
        let jb = rep.iterates[rep.best].fine_cost;
        assert_eq!(
            rep.reduction_vs_first,
            reduction(rep.iterates[0].fine_cost, jb).unwrap()
        );
    }

    #[test]
    fn deterministic_fine_model_is_reproducible() {
        let (m, coarse) = setup();
        let fine = McFineModel {
            config: McConfig {
                n_paths: 100,
                n_steps: 10,
                ..McConfig::default()
            },
        };
        let xi = HestonParams::new(0.2, -0.3, 5.0, 0.6, 0.05);
        let a = evaluate_space_map(&fine, &xi, &xi, &m, &coarse).unwrap();
        let b = evaluate_space_map(&fine, &xi, &xi, &m, &coarse).unwrap();
        assert_eq!(a.s, b.s);
        assert_eq!(a.fine, b.fine);
    }
}
