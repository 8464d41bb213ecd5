use std::io::Write;

use serde::{Deserialize, Serialize};

use super::grid::Grid2D;
use super::hv::{hv_step, HvWorkspace};
use super::operators::{HestonOperators, NuMaxBoundary, SplitOperator};
use crate::error::{Error, Result};
use crate::market::{feller_holds, CostTarget, HestonParams, MarketQuote};

/// How the contract-point price is read off the grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Tensor-product four-point Lagrange interpolation.
    #[default]
    Cubic,
    Bilinear,
    NearestNode,
}

/// Discretisation switches for the PDE pricer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeOptions {
    pub theta: f64,
    pub nu_max_boundary: NuMaxBoundary,
    pub readout: Readout,
}

impl Default for PdeOptions {
    fn default() -> Self {
        Self {
            theta: 0.75,
            nu_max_boundary: NuMaxBoundary::Ghost,
            readout: Readout::Cubic,
        }
    }
}

impl PdeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!(
                "pde.theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

fn put_cell_integral(strike: f64, a: f64, b: f64) -> f64 {
    let k = strike.ln();
    if a >= k {
        return 0.0;
    }
    let b = b.min(k);
    strike * (b - a) - (b.exp() - a.exp())
}

/// Put payoff `max(K - e^x, 0)` on every node, with nodes closer than one
/// cell to the kink replaced by the cell average over `[x - dx/2, x + dx/2]`.
pub fn smooth_payoff(g: &Grid2D, strike: f64) -> Vec<f64> {
    let dx = g.dx();
    let kink = strike.ln();
    let row: Vec<f64> = (0..g.nx())
        .map(|i| {
            let x = g.x(i);
            if (x - kink).abs() < dx {
                put_cell_integral(strike, x - 0.5 * dx, x + 0.5 * dx) / dx
            } else {
                (strike - x.exp()).max(0.0)
            }
        })
        .collect();
    let mut out = Vec::with_capacity(g.len());
    for _ in 0..g.ny() {
        out.extend_from_slice(&row);
    }
    out
}

/// Interpolation weights of the point `(x, nu)` on the nodes of `g`.
pub fn readout_weights(g: &Grid2D, x: f64, nu: f64, mode: Readout) -> Result<Vec<(usize, f64)>> {
    if !g.contains(x, nu) || !x.is_finite() || !nu.is_finite() {
        return Err(Error::Range(format!(
            "point (x = {x}, nu = {nu}) lies outside [{}, {}] x [{}, {}]",
            g.x_min, g.x_max, g.nu_min, g.nu_max
        )));
    }
    let locate = |t: f64, n: usize| -> (usize, f64) {
        let r = t.round();
        if (t - r).abs() < 1e-9 {
            return (r as usize, 0.0);
        }
        let i = (t.floor() as usize).min(n - 2);
        (i, t - i as f64)
    };
    let tx = (x - g.x_min) / g.dx();
    let ty = (nu - g.nu_min) / g.dnu();
    let (i, fx) = locate(tx, g.nx());
    let (j, fy) = locate(ty, g.ny());
    let axis = |t: f64, node: usize, frac: f64, n: usize| -> Vec<(usize, f64)> {
        if frac == 0.0 {
            vec![(node, 1.0)]
        } else if n < 4 {
            vec![(node, 1.0 - frac), (node + 1, frac)]
        } else {
            let (start, w) = lagrange4(t, n);
            (0..4).map(|a| (start + a, w[a])).collect()
        }
    };
    match mode {
        Readout::Cubic => {
            let wx = axis(tx, i, fx, g.nx());
            let wy = axis(ty, j, fy, g.ny());
            let mut w = Vec::with_capacity(wx.len() * wy.len());
            for &(jj, cy) in &wy {
                for &(ii, cx) in &wx {
                    w.push((g.idx(ii, jj), cx * cy));
                }
            }
            Ok(w)
        }
        Readout::NearestNode => {
            let i = if fx > 0.5 { i + 1 } else { i };
            let j = if fy > 0.5 { j + 1 } else { j };
            Ok(vec![(g.idx(i, j), 1.0)])
        }
        Readout::Bilinear => {
            let mut w = Vec::with_capacity(4);
            for (dj, wy) in [(0, 1.0 - fy), (1, fy)] {
                for (di, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let ww = wx * wy;
                    if ww != 0.0 {
                        w.push((g.idx(i + di, j + dj), ww));
                    }
                }
            }
            Ok(w)
        }
    }
}

/// Four-point Lagrange weights on nodes `start..start + 4` for the
/// fractional node coordinate `t`.
fn lagrange4(t: f64, n: usize) -> (usize, [f64; 4]) {
    let start = (t.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let mut w = [1.0; 4];
    for (a, wa) in w.iter_mut().enumerate() {
        let xa = (start + a) as f64;
        for b in 0..4 {
            if b != a {
                let xb = (start + b) as f64;
                *wa *= (t - xb) / (xa - xb);
            }
        }
    }
    (start, w)
}

fn dot_weights(field: &[f64], w: &[(usize, f64)]) -> f64 {
    w.iter().map(|&(k, c)| c * field[k]).sum()
}

/// Full time history of the put price on a grid.
#[derive(Debug, Clone)]
pub struct PriceSurface {
    pub grid: Grid2D,
    /// `values[k]` is the field at `tau_k`, flat with x varying fastest.
    pub values: Vec<Vec<f64>>,
    /// Intermediate stage `Y2` of the step from `tau_k` to `tau_{k+1}`.
    pub(crate) stages: Vec<Vec<f64>>,
}

impl PriceSurface {
    pub fn value(&self, k: usize, i: usize, j: usize) -> f64 {
        self.values[k][self.grid.idx(i, j)]
    }

    /// Bilinear price at `(x, nu)` on level `k`.
    pub fn interpolate_price(&self, x: f64, nu: f64, k: usize) -> Result<f64> {
        if k >= self.values.len() {
            return Err(Error::Range(format!(
                "time level {k} beyond {}",
                self.values.len() - 1
            )));
        }
        let w = readout_weights(&self.grid, x, nu, Readout::Bilinear)?;
        Ok(dot_weights(&self.values[k], &w))
    }

    /// Rows `tau,nu,x,value`, ordered by k, then j, then i.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(w, "tau,nu,x,value")?;
        for (k, level) in self.values.iter().enumerate() {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    writeln!(
                        w,
                        "{:.16e},{:.16e},{:.16e},{:.16e}",
                        g.tau(k),
                        g.nu(j),
                        g.x(i),
                        level[g.idx(i, j)]
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// A PDE pricing problem: parameters, quote, grid and discretisation.
#[derive(Debug)]
pub struct PdeProblem<'a> {
    pub params: HestonParams,
    pub quote: &'a MarketQuote,
    pub grid: Grid2D,
    pub options: PdeOptions,
}

impl<'a> PdeProblem<'a> {
    pub fn new(
        params: HestonParams,
        quote: &'a MarketQuote,
        grid: Grid2D,
        options: PdeOptions,
    ) -> Result<Self> {
        grid.validate()?;
        options.validate()?;
        quote.validate()?;
        if !params.is_finite() || !feller_holds(&params) || params.rho.abs() > 1.0 {
            return Err(Error::Contract(format!(
                "PDE pricing needs finite parameters satisfying the Feller condition and |rho| <= 1, got {params:?}"
            )));
        }
        Ok(Self {
            params,
            quote,
            grid,
            options,
        })
    }

    pub fn operators(&self) -> HestonOperators {
        HestonOperators::assemble(
            &self.params,
            &self.grid,
            self.quote,
            self.options.theta,
            self.options.nu_max_boundary,
        )
    }

    /// Readout weights at the contract point `(log S0, nu0)`.
    pub fn contract_weights(&self) -> Result<Vec<(usize, f64)>> {
        readout_weights(
            &self.grid,
            self.quote.log_spot(),
            self.params.nu0,
            self.options.readout,
        )
    }

    /// March from `tau = 0` to maturity, calling `visit(k, field, stage)` on
    /// every level; `stage` is `Y2` of the step leaving level `k`.
    fn march(&self, mut visit: impl FnMut(usize, &[f64], Option<&[f64]>)) -> Result<()> {
        let g = &self.grid;
        let ops = self.operators();
        let mut u = smooth_payoff(g, self.quote.strike);
        ops.impose_boundary(&mut u, 0.0);
        let mut next = vec![0.0; g.len()];
        let mut ws = HvWorkspace::new(g.len());
        let dt = g.dtau();
        for k in 0..g.n_tau {
            hv_step(&ops, &u, &mut next, g.tau(k), dt, self.options.theta, k, &mut ws)?;
            visit(k, &u, Some(&ws.y2));
            std::mem::swap(&mut u, &mut next);
        }
        visit(g.n_tau, &u, None);
        Ok(())
    }

    pub fn surface(&self) -> Result<PriceSurface> {
        let mut values = Vec::with_capacity(self.grid.n_tau + 1);
        let mut stages = Vec::with_capacity(self.grid.n_tau);
        self.march(|_, u, y2| {
            values.push(u.to_vec());
            if let Some(y2) = y2 {
                stages.push(y2.to_vec());
            }
        })?;
        Ok(PriceSurface {
            grid: self.grid,
            values,
            stages,
        })
    }

    /// Price at the contract point and maturity.
    pub fn contract_price(&self) -> Result<f64> {
        let w = self.contract_weights()?;
        let mut price = f64::NAN;
        self.march(|k, u, _| {
            if k == self.grid.n_tau {
                price = dot_weights(u, &w);
            }
        })?;
        Ok(price)
    }

    /// Field at `tau = T` without storing the history.
    pub fn terminal_field(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.march(|k, u, _| {
            if k == self.grid.n_tau {
                out = u.to_vec();
            }
        })?;
        Ok(out)
    }

    /// Contract-point price at every level `tau_0 .. tau_N`.
    pub fn contract_trajectory(&self) -> Result<Vec<f64>> {
        let w = self.contract_weights()?;
        let mut out = Vec::with_capacity(self.grid.n_tau + 1);
        self.march(|_, u, _| out.push(dot_weights(u, &w)))?;
        Ok(out)
    }

    /// Model output shaped like `target`.
    pub fn model_output(&self, target: &CostTarget) -> Result<CostTarget> {
        Ok(match target {
            CostTarget::Scalar(_) => CostTarget::Scalar(self.contract_price()?),
            CostTarget::Trajectory(_) => CostTarget::Trajectory(self.contract_trajectory()?),
        })
    }

    /// Model output read from an already computed surface.
    pub fn output_from_surface(&self, s: &PriceSurface, target: &CostTarget) -> Result<CostTarget> {
        if !s.grid.same_as(&self.grid) {
            return Err(Error::Contract("surface grid differs from problem grid".into()));
        }
        let w = self.contract_weights()?;
        Ok(match target {
            CostTarget::Scalar(_) => CostTarget::Scalar(dot_weights(&s.values[self.grid.n_tau], &w)),
            CostTarget::Trajectory(_) => {
                CostTarget::Trajectory(s.values.iter().map(|u| dot_weights(u, &w)).collect())
            }
        })
    }
}

/// Convenience wrapper returning the full surface with default options.
pub fn price_surface(p: &HestonParams, m: &MarketQuote, g: &Grid2D) -> Result<PriceSurface> {
    PdeProblem::new(*p, m, *g, PdeOptions::default())?.surface()
}
