//! Central-difference split operators `F = F0 + F1 + F2` of the log-price
//! Heston PDE `V_tau = F V`.
//!
//! `F0 = sigma rho nu D_xnu` (mixed), `F1 = b2 D_x + a22 D_xx - r/2`,
//! `F2 = b1 D_nu + a11 D_nunu - r/2` with `a11 = sigma^2 nu / 2`,
//! `a22 = nu / 2`, `b1 = kappa (mu - nu)`, `b2 = r - q - nu / 2`.
//!
//! The lowest nu row follows the reduced first-order equation (no nu
//! diffusion, no mixed term, upwinded nu drift). The top row is closed by a
//! zero-order ghost layer or by a Dirichlet value.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::grid::Grid2D;
use super::tridiag::Tridiagonal;
use crate::market::{HestonParams, MarketQuote};

/// One piece of the operator splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Mixed,
    X,
    Nu,
}

/// Implicit directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Nu,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::X => write!(f, "x"),
            Direction::Nu => write!(f, "nu"),
        }
    }
}

/// Closure at `nu_max`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuMaxBoundary {
    /// Ghost layer filled by zero-order extrapolation.
    #[default]
    Ghost,
    /// `V = K exp(-r tau)` on the top row.
    Dirichlet,
}

/// Operator interface required by the Hundsdorfer–Verwer stepper.
///
/// Fields are flat vectors. Nodes may be *fixed* (Dirichlet); every
/// `apply` leaves zeros there and every solve writes the boundary value.
pub trait SplitOperator {
    fn len(&self) -> usize;

    /// `out = F_part u` on free nodes, zero on fixed nodes.
    fn apply(&self, part: Part, u: &[f64], out: &mut [f64]);

    /// Solve `(y - c F_dir y) = rhs` on free nodes with fixed nodes of `y`
    /// set to their values at `tau`.
    fn solve(
        &self,
        dir: Direction,
        c: f64,
        tau: f64,
        rhs: &[f64],
        y: &mut [f64],
    ) -> std::result::Result<(), String>;

    /// Overwrite the fixed nodes of `u` with boundary data at `tau`.
    fn impose_boundary(&self, u: &mut [f64], tau: f64);
}

#[derive(Debug)]
struct Factors {
    c: f64,
    /// One factorisation per free nu row for the x lines.
    x: Vec<Tridiagonal>,
    x_t: Vec<Tridiagonal>,
    /// Shared by every x column.
    nu: Tridiagonal,
    nu_t: Tridiagonal,
}

/// Assembled split operators on a fixed grid for constant parameters.
#[derive(Debug)]
pub struct HestonOperators {
    grid: Grid2D,
    nx: usize,
    ny: usize,
    /// Rows `0..free_rows` carry unknowns.
    free_rows: usize,
    nu: Vec<f64>,
    x_stencil: Vec<[f64; 3]>,
    nu_stencil: Vec<[f64; 3]>,
    /// Unit nu stencils multiplying `a11` and `b1`.
    nu_unit_diff: Vec<[f64; 3]>,
    nu_unit_drift: Vec<[f64; 3]>,
    /// Row coefficient of the cross stencil, `sigma rho nu / (4 dx dnu)`.
    mixed: Vec<f64>,
    inv_4dxdnu: f64,
    top_ghost: bool,
    strike: f64,
    rate: f64,
    params: HestonParams,
    theta_dt: f64,
    factors: OnceLock<std::result::Result<Factors, String>>,
}

impl HestonOperators {
    /// Assemble `F0, F1, F2` for `p` on `g`; implicit factorisations are
    /// cached for `c = theta * dtau`.
    pub fn assemble(
        p: &HestonParams,
        g: &Grid2D,
        m: &MarketQuote,
        theta: f64,
        top: NuMaxBoundary,
    ) -> Self {
        let nx = g.nx();
        let ny = g.ny();
        let dx = g.dx();
        let dnu = g.dnu();
        let top_ghost = top == NuMaxBoundary::Ghost;
        let free_rows = if top_ghost { ny } else { ny - 1 };
        let nu: Vec<f64> = (0..ny).map(|j| g.nu(j)).collect();
        let half_r = 0.5 * m.r;

        let x_stencil = nu
            .iter()
            .map(|&v| {
                let a22 = 0.5 * v;
                let b2 = m.r - m.q - 0.5 * v;
                [
                    a22 / (dx * dx) - b2 / (2.0 * dx),
                    -2.0 * a22 / (dx * dx) - half_r,
                    a22 / (dx * dx) + b2 / (2.0 * dx),
                ]
            })
            .collect();

        let idnu2 = 1.0 / (dnu * dnu);
        let i2dnu = 1.0 / (2.0 * dnu);
        let mut nu_unit_diff = Vec::with_capacity(ny);
        let mut nu_unit_drift = Vec::with_capacity(ny);
        let mut nu_stencil = Vec::with_capacity(ny);
        let mut mixed = Vec::with_capacity(ny);
        let inv_4dxdnu = 1.0 / (4.0 * dx * dnu);
        for (j, &v) in nu.iter().enumerate() {
            let a11 = 0.5 * p.sigma_nu * p.sigma_nu * v;
            let b1 = p.kappa_nu * (p.mu_nu - v);
            let (ud, ub) = if j == 0 {
                // reduced hyperbolic row: upwind drift; backward differences
                // see the ghost copy of this row and vanish
                let ub = if b1 >= 0.0 {
                    [0.0, -1.0 / dnu, 1.0 / dnu]
                } else {
                    [0.0; 3]
                };
                ([0.0; 3], ub)
            } else if j == ny - 1 && top_ghost {
                ([idnu2, -idnu2, 0.0], [-i2dnu, i2dnu, 0.0])
            } else {
                ([idnu2, -2.0 * idnu2, idnu2], [-i2dnu, 0.0, i2dnu])
            };
            nu_stencil.push([
                a11 * ud[0] + b1 * ub[0],
                a11 * ud[1] + b1 * ub[1] - half_r,
                a11 * ud[2] + b1 * ub[2],
            ]);
            nu_unit_diff.push(ud);
            nu_unit_drift.push(ub);
            mixed.push(if j == 0 {
                0.0
            } else {
                p.sigma_nu * p.rho * v * inv_4dxdnu
            });
        }

        Self {
            grid: *g,
            nx,
            ny,
            free_rows,
            nu,
            x_stencil,
            nu_stencil,
            nu_unit_diff,
            nu_unit_drift,
            mixed,
            inv_4dxdnu,
            top_ghost,
            strike: m.strike,
            rate: m.r,
            params: *p,
            theta_dt: theta * g.dtau(),
            factors: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn params(&self) -> &HestonParams {
        &self.params
    }

    /// True for Dirichlet nodes.
    #[inline]
    pub fn is_fixed(&self, i: usize, j: usize) -> bool {
        i == 0 || i == self.nx - 1 || j >= self.free_rows
    }

    /// Zero every fixed node of `v`.
    pub fn zero_fixed(&self, v: &mut [f64]) {
        let nx = self.nx;
        for j in 0..self.ny {
            let row = &mut v[j * nx..(j + 1) * nx];
            if j >= self.free_rows {
                row.fill(0.0);
            } else {
                row[0] = 0.0;
                row[nx - 1] = 0.0;
            }
        }
    }

    fn build_factors(&self, c: f64) -> std::result::Result<Factors, String> {
        let m = self.nx - 2;
        let mut x = Vec::with_capacity(self.free_rows);
        let mut x_t = Vec::with_capacity(self.free_rows);
        for j in 0..self.free_rows {
            let [l, d, u] = self.x_stencil[j];
            let sub = vec![-c * l; m];
            let diag = vec![1.0 - c * d; m];
            let sup = vec![-c * u; m];
            x.push(Tridiagonal::factor(&sub, &diag, &sup).map_err(|e| format!("x row {j}: {e}"))?);
            x_t.push(
                Tridiagonal::factor(&sup, &diag, &sub).map_err(|e| format!("x row {j}: {e}"))?,
            );
        }
        let n = self.free_rows;
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for j in 0..n {
            let [l, d, u] = self.nu_stencil[j];
            sub[j] = -c * l;
            diag[j] = 1.0 - c * d;
            sup[j] = -c * u;
        }
        // transpose: sub'_j = sup_{j-1}, sup'_j = sub_{j+1}
        let mut sub_t = vec![0.0; n];
        let mut sup_t = vec![0.0; n];
        for j in 0..n {
            if j > 0 {
                sub_t[j] = sup[j - 1];
            }
            if j + 1 < n {
                sup_t[j] = sub[j + 1];
            }
        }
        Ok(Factors {
            c,
            x,
            x_t,
            nu: Tridiagonal::factor(&sub, &diag, &sup).map_err(|e| format!("nu lines: {e}"))?,
            nu_t: Tridiagonal::factor(&sub_t, &diag, &sup_t)
                .map_err(|e| format!("nu lines: {e}"))?,
        })
    }

    fn with_factors<R>(
        &self,
        c: f64,
        f: impl FnOnce(&Factors) -> R,
    ) -> std::result::Result<R, String> {
        if c == self.theta_dt {
            match self.factors.get_or_init(|| self.build_factors(c)) {
                Ok(fac) => Ok(f(fac)),
                Err(e) => Err(e.clone()),
            }
        } else {
            let fac = self.build_factors(c)?;
            debug_assert_eq!(fac.c, c);
            Ok(f(&fac))
        }
    }

    fn boundary_value(&self, i: usize, tau: f64) -> f64 {
        if i == self.nx - 1 {
            0.0
        } else {
            self.strike * (-self.rate * tau).exp()
        }
    }

    /// Transposed operator `out = F_part^T w` for `w` vanishing on fixed
    /// nodes; fixed entries of `out` are zeroed.
    pub fn apply_transpose(&self, part: Part, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let nx = self.nx;
        match part {
            Part::X => {
                for j in 0..self.free_rows {
                    let [l, d, u] = self.x_stencil[j];
                    let base = j * nx;
                    for i in 1..nx - 1 {
                        let wi = w[base + i];
                        out[base + i - 1] += l * wi;
                        out[base + i] += d * wi;
                        out[base + i + 1] += u * wi;
                    }
                }
            }
            Part::Nu => {
                for j in 0..self.free_rows {
                    let [l, d, u] = self.nu_stencil[j];
                    let base = j * nx;
                    for i in 1..nx - 1 {
                        let wi = w[base + i];
                        if j > 0 {
                            out[base - nx + i] += l * wi;
                        }
                        out[base + i] += d * wi;
                        if j + 1 < self.ny {
                            out[base + nx + i] += u * wi;
                        }
                    }
                }
            }
            Part::Mixed => {
                for j in 1..self.free_rows {
                    let c = self.mixed[j];
                    if c == 0.0 {
                        continue;
                    }
                    let up = if j + 1 < self.ny { j + 1 } else { j } * nx;
                    let dn = (j - 1) * nx;
                    let base = j * nx;
                    for i in 1..nx - 1 {
                        let wi = c * w[base + i];
                        out[up + i + 1] += wi;
                        out[dn + i + 1] -= wi;
                        out[up + i - 1] -= wi;
                        out[dn + i - 1] += wi;
                    }
                }
            }
        }
        self.zero_fixed(out);
    }

    /// Solve `(I - c F_dir)^T y = rhs` on free nodes; fixed nodes of `y` are zero.
    pub fn solve_transpose(
        &self,
        dir: Direction,
        c: f64,
        rhs: &[f64],
        y: &mut [f64],
    ) -> std::result::Result<(), String> {
        y.copy_from_slice(rhs);
        self.zero_fixed(y);
        let nx = self.nx;
        self.with_factors(c, |fac| match dir {
            Direction::X => {
                for j in 0..self.free_rows {
                    fac.x_t[j].solve_in_place(&mut y[j * nx + 1..(j + 1) * nx - 1]);
                }
            }
            Direction::Nu => {
                fac.nu_t.solve_columns(&mut y[..self.free_rows * nx], nx, 1, nx - 1);
            }
        })
    }

    /// Bilinear forms `w^T (dF_part / dxi) y` for `xi = (sigma, rho, kappa, mu)`.
    ///
    /// `y` is a full field including fixed nodes; `w` is read on free nodes.
    pub fn parameter_forms(&self, part: Part, w: &[f64], y: &[f64]) -> [f64; 4] {
        let nx = self.nx;
        let p = &self.params;
        let mut g = [0.0; 4];
        match part {
            Part::X => {}
            Part::Nu => {
                for j in 0..self.free_rows {
                    let base = j * nx;
                    let ud = self.nu_unit_diff[j];
                    let ub = self.nu_unit_drift[j];
                    let (mut pa, mut pb) = (0.0, 0.0);
                    for i in 1..nx - 1 {
                        let wi = w[base + i];
                        if wi == 0.0 {
                            continue;
                        }
                        let ym = if j > 0 { y[base - nx + i] } else { 0.0 };
                        let y0 = y[base + i];
                        let yp = if j + 1 < self.ny { y[base + nx + i] } else { 0.0 };
                        pa += wi * (ud[0] * ym + ud[1] * y0 + ud[2] * yp);
                        pb += wi * (ub[0] * ym + ub[1] * y0 + ub[2] * yp);
                    }
                    let v = self.nu[j];
                    // a11 = sigma^2 nu / 2, b1 = kappa (mu - nu)
                    g[0] += p.sigma_nu * v * pa;
                    g[2] += (p.mu_nu - v) * pb;
                    g[3] += p.kappa_nu * pb;
                }
            }
            Part::Mixed => {
                for j in 1..self.free_rows {
                    let up = if j + 1 < self.ny { j + 1 } else { j } * nx;
                    let dn = (j - 1) * nx;
                    let base = j * nx;
                    let mut px = 0.0;
                    for i in 1..nx - 1 {
                        let wi = w[base + i];
                        if wi == 0.0 {
                            continue;
                        }
                        px += wi * (y[up + i + 1] - y[dn + i + 1] - y[up + i - 1] + y[dn + i - 1]);
                    }
                    let v = self.nu[j] * self.inv_4dxdnu;
                    // coefficient sigma rho nu
                    g[0] += p.rho * v * px;
                    g[1] += p.sigma_nu * v * px;
                }
            }
        }
        g
    }
}

impl SplitOperator for HestonOperators {
    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn apply(&self, part: Part, u: &[f64], out: &mut [f64]) {
        let nx = self.nx;
        out.fill(0.0);
        match part {
            Part::X => {
                for j in 0..self.free_rows {
                    let [l, d, c] = self.x_stencil[j];
                    let row = &u[j * nx..(j + 1) * nx];
                    let o = &mut out[j * nx..(j + 1) * nx];
                    for i in 1..nx - 1 {
                        o[i] = l * row[i - 1] + d * row[i] + c * row[i + 1];
                    }
                }
            }
            Part::Nu => {
                for j in 0..self.free_rows {
                    let [l, d, c] = self.nu_stencil[j];
                    let base = j * nx;
                    for i in 1..nx - 1 {
                        let mut acc = d * u[base + i];
                        if j > 0 {
                            acc += l * u[base - nx + i];
                        }
                        if j + 1 < self.ny {
                            acc += c * u[base + nx + i];
                        }
                        out[base + i] = acc;
                    }
                }
            }
            Part::Mixed => {
                for j in 1..self.free_rows {
                    let c = self.mixed[j];
                    if c == 0.0 {
                        continue;
                    }
                    let up = if j + 1 < self.ny { j + 1 } else { j } * nx;
                    let dn = (j - 1) * nx;
                    let base = j * nx;
                    for i in 1..nx - 1 {
                        out[base + i] =
                            c * (u[up + i + 1] - u[dn + i + 1] - u[up + i - 1] + u[dn + i - 1]);
                    }
                }
            }
        }
    }

    fn solve(
        &self,
        dir: Direction,
        c: f64,
        tau: f64,
        rhs: &[f64],
        y: &mut [f64],
    ) -> std::result::Result<(), String> {
        let nx = self.nx;
        y.copy_from_slice(rhs);
        self.impose_boundary(y, tau);
        self.with_factors(c, |fac| match dir {
            Direction::X => {
                for j in 0..self.free_rows {
                    let [l, _, u] = self.x_stencil[j];
                    let row = &mut y[j * nx..(j + 1) * nx];
                    let (left, right) = (row[0], row[nx - 1]);
                    row[1] += c * l * left;
                    row[nx - 2] += c * u * right;
                    fac.x[j].solve_in_place(&mut row[1..nx - 1]);
                }
            }
            Direction::Nu => {
                if !self.top_ghost {
                    let j = self.free_rows - 1;
                    let u = self.nu_stencil[j][2];
                    for i in 1..nx - 1 {
                        y[j * nx + i] += c * u * y[(j + 1) * nx + i];
                    }
                }
                fac.nu.solve_columns(&mut y[..self.free_rows * nx], nx, 1, nx - 1);
            }
        })
    }

    fn impose_boundary(&self, u: &mut [f64], tau: f64) {
        let nx = self.nx;
        let left = self.boundary_value(0, tau);
        let right = self.boundary_value(nx - 1, tau);
        for j in 0..self.ny {
            let row = &mut u[j * nx..(j + 1) * nx];
            if j >= self.free_rows {
                row.fill(left);
            }
            row[0] = left;
            row[nx - 1] = right;
        }
    }
}
