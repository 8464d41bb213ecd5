use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_solve, Gradient4};
use crate::error::{Error, Result};
use crate::market::{cost, project_to_feasible, relative_reduction, CostTarget, HestonParams, MarketQuote, ParamBounds};
use crate::pde::{Grid2D, PdeOptions, PdeProblem};

/// Settings of the projected gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentOptions {
    pub max_iters: usize,
    pub j_tol: f64,
    /// Armijo constant.
    pub gamma: f64,
    /// Step sizes tried are `1, 1/2, ..., 2^-max_halvings`.
    pub max_halvings: u32,
    pub bounds: ParamBounds,
    /// Per-component gradient scaling.
    pub scaling: [f64; 4],
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            max_iters: 51,
            j_tol: 1e-3,
            gamma: 1e-4,
            max_halvings: 30,
            bounds: ParamBounds::default(),
            scaling: [1.0; 4],
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "descent.gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.j_tol >= 0.0) {
            return Err(Error::Config(format!(
                "descent.j_tol must be >= 0, got {}",
                self.j_tol
            )));
        }
        if self.scaling.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config(format!(
                "descent.scaling entries must be finite and > 0, got {:?}",
                self.scaling
            )));
        }
        self.bounds.validate()
    }
}

/// Result of one line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoOutcome {
    pub params: HestonParams,
    /// Accepted step size; `None` when no step qualified.
    pub sigma: Option<f64>,
    /// Merit at `params`.
    pub merit: f64,
}

impl ArmijoOutcome {
    pub fn stalled(&self) -> bool {
        self.sigma.is_none()
    }
}

fn sq_dist(a: &HestonParams, b: &HestonParams) -> f64 {
    a.to_vector()
        .iter()
        .zip(b.to_vector())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Projected Armijo rule: the largest `sigma` in the schedule with
/// `f(P(xi - sigma g)) - f(xi) <= -(gamma / sigma) |P(xi - sigma g) - xi|^2`.
pub fn armijo_step(
    xi: &HestonParams,
    f_xi: f64,
    grad: &Gradient4,
    mut merit: impl FnMut(&HestonParams) -> Result<f64>,
    opts: &DescentOptions,
) -> Result<ArmijoOutcome> {
    if !grad.is_finite() {
        return Err(Error::numerical(0, format!("non-finite gradient {grad:?}")));
    }
    let g = grad.to_array();
    let x = xi.to_vector();
    let mut sigma = 1.0;
    for _ in 0..=opts.max_halvings {
        let mut y = [0.0; 4];
        for i in 0..4 {
            y[i] = x[i] - sigma * opts.scaling[i] * g[i];
        }
        let trial = project_to_feasible(&xi.with_vector(y), &opts.bounds)?;
        let disp = sq_dist(&trial, xi);
        if disp == 0.0 {
            return Ok(ArmijoOutcome {
                params: *xi,
                sigma: Some(sigma),
                merit: f_xi,
            });
        }
        let f_trial = merit(&trial)?;
        if f_trial - f_xi <= -(opts.gamma / sigma) * disp {
            return Ok(ArmijoOutcome {
                params: trial,
                sigma: Some(sigma),
                merit: f_trial,
            });
        }
        sigma *= 0.5;
    }
    Ok(ArmijoOutcome {
        params: *xi,
        sigma: None,
        merit: f_xi,
    })
}

/// One row of the iterate history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub iter: usize,
    pub params: HestonParams,
    pub cost: f64,
    /// Step size that produced this iterate (0 for the start).
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Cost fell below `j_tol`.
    Converged,
    IterationCap,
    /// No step size passed the Armijo test.
    Stalled,
    /// The projected gradient step does not move the iterate.
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub initial_guess: HestonParams,
    pub iterates: Vec<IterateRecord>,
    pub final_params: HestonParams,
    pub final_cost: f64,
    pub converged: bool,
    pub stop: StopReason,
    /// `relative_reduction(J_0, J_final)`; 100 when `J_0 = 0`.
    pub reduction_pct: f64,
}

/// Projected-gradient calibration of the PDE model to `target`.
pub fn calibrate_coarse(
    target: &CostTarget,
    xi0: &HestonParams,
    m: &MarketQuote,
    g: &Grid2D,
    pde: &PdeOptions,
    opts: &DescentOptions,
) -> Result<CalibrationReport> {
    opts.validate()?;
    let start = project_to_feasible(xi0, &opts.bounds)?;
    let dt = g.dtau();
    let wrap = |iteration: usize| move |e: Error| Error::Calibration {
        iteration,
        source: Box::new(e),
    };

    let mut xi = start;
    let mut iterates = Vec::new();
    let mut step = 0.0;
    let stop = loop {
        let k = iterates.len();
        let prob = PdeProblem::new(xi, m, *g, *pde).map_err(wrap(k))?;
        let surface = prob.surface().map_err(wrap(k))?;
        let adj = adjoint_solve(&prob, &surface, target).map_err(wrap(k))?;
        let j = adj.cost;
        iterates.push(IterateRecord {
            iter: k,
            params: xi,
            cost: j,
            step,
            grad_norm: adj.gradient.norm(),
        });
        log::debug!("iter {k}: J = {j:e}, |g| = {:e}, xi = {xi:?}", adj.gradient.norm());
        if j < opts.j_tol {
            break StopReason::Converged;
        }
        if k >= opts.max_iters {
            break StopReason::IterationCap;
        }
        let merit = |p: &HestonParams| -> Result<f64> {
            let pr = PdeProblem::new(*p, m, *g, *pde)?;
            cost(&pr.model_output(target)?, target, dt)
        };
        let out = armijo_step(&xi, j, &adj.gradient, merit, opts).map_err(wrap(k))?;
        match out.sigma {
            None => break StopReason::Stalled,
            Some(_) if out.params == xi => break StopReason::Stationary,
            Some(s) => {
                step = s;
                xi = out.params;
            }
        }
    };
    let last = *iterates.last().expect("at least one iterate");
    let j0 = iterates[0].cost;
    let reduction_pct = if j0 == 0.0 {
        100.0
    } else {
        relative_reduction(j0, last.cost)?
    };
    Ok(CalibrationReport {
        initial_guess: start,
        final_params: last.params,
        final_cost: last.cost,
        converged: stop == StopReason::Converged,
        stop,
        reduction_pct,
        iterates,
    })
}
