use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketQuote;

/// Uniform space-time grid in log-price `x`, variance `nu` and time to maturity `tau`.
///
/// x nodes: `x_i = x_min + i dx`, `i = 0..=n_x`, `dx = (x_max - x_min) / n_x`.
/// nu nodes: `nu_j = nu_min + j dnu`, `j = 0..n_nu`, `dnu = (nu_max - nu_min) / (n_nu - 1)`,
/// so the default `nu_min = nu_max / n_nu` yields `dnu = nu_max / n_nu`.
/// tau levels: `tau_k = k dtau`, `k = 0..=n_tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub nu_min: f64,
    pub nu_max: f64,
    pub n_nu: usize,
    pub n_tau: usize,
    pub maturity: f64,
}

/// Optional replacements for the default grid fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridOverrides {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_x: Option<usize>,
    pub nu_min: Option<f64>,
    pub nu_max: Option<f64>,
    pub n_nu: Option<usize>,
    pub n_tau: Option<usize>,
}

pub const DEFAULT_N_X: usize = 120;
pub const DEFAULT_N_NU: usize = 100;
pub const DEFAULT_N_TAU: usize = 170;
pub const DEFAULT_NU_MAX: f64 = 1.0;
pub const DEFAULT_SPOT_MULTIPLE: f64 = 1.2;

impl Grid2D {
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_x as f64
    }

    pub fn dnu(&self) -> f64 {
        (self.nu_max - self.nu_min) / (self.n_nu - 1) as f64
    }

    pub fn dtau(&self) -> f64 {
        self.maturity / self.n_tau as f64
    }

    /// Number of x nodes, `n_x + 1`.
    pub fn nx(&self) -> usize {
        self.n_x + 1
    }

    /// Number of nu nodes.
    pub fn ny(&self) -> usize {
        self.n_nu
    }

    /// Nodes per time level.
    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(i, j)`; x varies fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn nu(&self, j: usize) -> f64 {
        self.nu_min + j as f64 * self.dnu()
    }

    pub fn tau(&self, k: usize) -> f64 {
        k as f64 * self.dtau()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_nu < 2 || self.n_tau < 2 {
            return Err(Error::Config(format!(
                "grid counts must be >= 2 (n_x = {}, n_nu = {}, n_tau = {})",
                self.n_x, self.n_nu, self.n_tau
            )));
        }
        let vals = [
            self.x_min,
            self.x_max,
            self.nu_min,
            self.nu_max,
            self.maturity,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite grid bound in {self:?}")));
        }
        if !(self.dx() > 0.0 && self.dnu() > 0.0 && self.dtau() > 0.0) {
            return Err(Error::Config(format!(
                "grid spacings must be positive (dx = {}, dnu = {}, dtau = {})",
                self.dx(),
                self.dnu(),
                self.dtau()
            )));
        }
        if self.nu_min < 0.0 {
            return Err(Error::Config(format!(
                "grid.nu_min must be >= 0, got {}",
                self.nu_min
            )));
        }
        Ok(())
    }

    /// Strict interior test used for the contract point.
    pub fn strictly_contains(&self, x: f64, nu: f64) -> bool {
        self.x_min < x && x < self.x_max && self.nu_min < nu && nu < self.nu_max
    }

    pub fn contains(&self, x: f64, nu: f64) -> bool {
        self.x_min <= x && x <= self.x_max && self.nu_min <= nu && nu <= self.nu_max
    }

    /// True when two grids describe the same nodes.
    pub fn same_as(&self, other: &Grid2D) -> bool {
        self == other
    }
}

/// Default grid: `x_max = log(1.2 S0)`, `N_x = 120`, `x_min = dx`;
/// `nu_max = 1`, `N_nu = 100`, `nu_min = dnu`; `N_tau = 170` up to maturity.
///
/// `contract_nu` is the initial variance; together with `log S0` it must lie
/// strictly inside the grid.
pub fn build_grid(m: &MarketQuote, contract_nu: f64, o: &GridOverrides) -> Result<Grid2D> {
    if !(m.s0 > 0.0 && m.maturity > 0.0) {
        return Err(Error::Config(format!(
            "quote needs s0 > 0 and maturity > 0, got s0 = {}, maturity = {}",
            m.s0, m.maturity
        )));
    }
    let n_x = o.n_x.unwrap_or(DEFAULT_N_X);
    let x_max = o.x_max.unwrap_or((DEFAULT_SPOT_MULTIPLE * m.s0).ln());
    // x_min equal to the spacing: x_i = (i + 1) dx
    let x_min = o.x_min.unwrap_or(x_max / (n_x as f64 + 1.0));
    let n_nu = o.n_nu.unwrap_or(DEFAULT_N_NU);
    let nu_max = o.nu_max.unwrap_or(DEFAULT_NU_MAX);
    let nu_min = o.nu_min.unwrap_or(nu_max / n_nu as f64);
    let g = Grid2D {
        x_min,
        x_max,
        n_x,
        nu_min,
        nu_max,
        n_nu,
        n_tau: o.n_tau.unwrap_or(DEFAULT_N_TAU),
        maturity: m.maturity,
    };
    g.validate()?;
    let x = m.log_spot();
    if !g.strictly_contains(x, contract_nu) {
        return Err(Error::Config(format!(
            "contract point (x = {x}, nu = {contract_nu}) is not strictly inside the grid \
             [{}, {}] x [{}, {}]",
            g.x_min, g.x_max, g.nu_min, g.nu_max
        )));
    }
    Ok(g)
}
