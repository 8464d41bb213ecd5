//! Adjoint of the discrete forward solve and the parameter gradient of the
//! misfit.
//!
//! The backward sweep applies the exact transpose of each Hundsdorfer–Verwer
//! step, so [`adjoint_solve`] yields the gradient of the discrete cost up to
//! round-off. [`constraint_sensitivities`] evaluates the continuous gradient
//! integrals by quadrature on the same fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{cost, trapezoid_weights, CostTarget};
use crate::pde::grid::Grid2D;
use crate::pde::operators::{Direction, HestonOperators, Part};
use crate::pde::surface::{PdeProblem, PriceSurface};

/// Gradient with respect to `(sigma_nu, rho, kappa_nu, mu_nu)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Gradient4 {
    pub d_sigma_nu: f64,
    pub d_rho: f64,
    pub d_kappa_nu: f64,
    pub d_mu_nu: f64,
}

impl Gradient4 {
    pub fn from_array(g: [f64; 4]) -> Self {
        Self {
            d_sigma_nu: g[0],
            d_rho: g[1],
            d_kappa_nu: g[2],
            d_mu_nu: g[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.d_sigma_nu, self.d_rho, self.d_kappa_nu, self.d_mu_nu]
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::from_array(self.to_array().map(|v| a * v))
    }
}

/// Backward solution of the discrete adjoint.
#[derive(Debug, Clone)]
pub struct AdjointSurface {
    pub grid: Grid2D,
    /// `values[k]`: sensitivity of the cost to the field at `tau_k` carried
    /// back from later levels, per unit cell area. `values[N]` is zero.
    pub values: Vec<Vec<f64>>,
    /// Point sources `(flat index, density)` injected at each level.
    pub sources: Vec<Vec<(usize, f64)>>,
    /// Discrete cost of the forward solution.
    pub cost: f64,
    /// Exact gradient of `cost`.
    pub gradient: Gradient4,
}

struct Buffers {
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: Vec<f64>,
    r4: Vec<f64>,
    w: [Vec<f64>; 3],
    z: [Vec<f64>; 3],
    y0b: Vec<f64>,
    acc: Vec<f64>,
    tmp: Vec<f64>,
}

impl Buffers {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            r1: z(),
            r2: z(),
            r3: z(),
            r4: z(),
            w: [z(), z(), z()],
            z: [z(), z(), z()],
            y0b: z(),
            acc: z(),
            tmp: z(),
        }
    }
}

const PARTS: [Part; 3] = [Part::Mixed, Part::X, Part::Nu];

fn add_forms(grad: &mut [f64; 4], f: [f64; 4], scale: f64) {
    for (g, v) in grad.iter_mut().zip(f) {
        *g += scale * v;
    }
}

/// Transpose of one forward step `u -> u_next` applied to `lam_next`,
/// written to `out`; parameter sensitivities are added to `grad`.
#[allow(clippy::too_many_arguments)]
fn reverse_step(
    ops: &HestonOperators,
    c: f64,
    dt: f64,
    lam_next: &[f64],
    u: &[f64],
    y2: &[f64],
    u_next: &[f64],
    out: &mut [f64],
    grad: &mut [f64; 4],
    b: &mut Buffers,
) -> std::result::Result<(), String> {
    let n = out.len();
    let half = 0.5 * dt;
    ops.solve_transpose(Direction::Nu, c, lam_next, &mut b.r4)?;
    ops.solve_transpose(Direction::X, c, &b.r4, &mut b.r3)?;
    for i in 0..n {
        let t0 = half * b.r3[i];
        b.w[0][i] = t0;
        b.w[1][i] = t0 - c * b.r3[i];
        b.w[2][i] = t0 - c * b.r4[i];
    }
    b.acc.fill(0.0);
    for (p, w) in PARTS.iter().zip(&b.w) {
        ops.apply_transpose(*p, w, &mut b.tmp);
        b.acc.iter_mut().zip(&b.tmp).for_each(|(a, t)| *a += t);
    }
    ops.solve_transpose(Direction::Nu, c, &b.acc, &mut b.r2)?;
    ops.solve_transpose(Direction::X, c, &b.r2, &mut b.r1)?;
    for i in 0..n {
        b.y0b[i] = b.r3[i] + b.r1[i];
        let z = dt * b.y0b[i] - half * b.r3[i];
        b.z[0][i] = z;
        b.z[1][i] = z - c * b.r1[i];
        b.z[2][i] = z - c * b.r2[i];
    }
    out.copy_from_slice(&b.y0b);
    for (p, z) in PARTS.iter().zip(&b.z) {
        ops.apply_transpose(*p, z, &mut b.tmp);
        out.iter_mut().zip(&b.tmp).for_each(|(a, t)| *a += t);
    }
    ops.zero_fixed(out);

    // F2 enters through A2 Y2, through both nu solves and through A2 u
    for i in 0..n {
        b.tmp[i] = b.w[2][i] + c * b.r2[i];
    }
    add_forms(grad, ops.parameter_forms(Part::Nu, &b.tmp, y2), 1.0);
    add_forms(grad, ops.parameter_forms(Part::Nu, &b.r4, u_next), c);
    add_forms(grad, ops.parameter_forms(Part::Nu, &b.z[2], u), 1.0);
    add_forms(grad, ops.parameter_forms(Part::Mixed, &b.w[0], y2), 1.0);
    add_forms(grad, ops.parameter_forms(Part::Mixed, &b.z[0], u), 1.0);
    Ok(())
}

/// Backward sweep for the misfit between the forward solution and `target`.
///
/// `forward` must come from `problem.surface()`.
pub fn adjoint_solve(
    problem: &PdeProblem<'_>,
    forward: &PriceSurface,
    target: &CostTarget,
) -> Result<AdjointSurface> {
    let g = problem.grid;
    if !forward.grid.same_as(&g) {
        return Err(Error::Contract(format!(
            "forward surface grid {:?} differs from problem grid {g:?}",
            forward.grid
        )));
    }
    if forward.values.len() != g.n_tau + 1 || forward.stages.len() != g.n_tau {
        return Err(Error::Contract(
            "forward surface lacks the stage history of a full solve".into(),
        ));
    }
    let n_levels = g.n_tau + 1;
    if let CostTarget::Trajectory(t) = target {
        if t.len() != n_levels {
            return Err(Error::Contract(format!(
                "trajectory target has {} levels, grid has {n_levels}",
                t.len()
            )));
        }
    }
    let dt = g.dtau();
    let model = problem.output_from_surface(forward, target)?;
    let j = cost(&model, target, dt)?;

    let ops = problem.operators();
    let mut weights = problem.contract_weights()?;
    weights.retain(|&(k, _)| {
        let (i, jj) = (k % g.nx(), k / g.nx());
        !ops.is_fixed(i, jj)
    });
    let cell = g.dx() * g.dnu();
    let residual_weights: Vec<f64> = match (&model, target) {
        (CostTarget::Scalar(v), CostTarget::Scalar(t)) => {
            let mut r = vec![0.0; n_levels];
            r[g.n_tau] = v - t;
            r
        }
        (CostTarget::Trajectory(v), CostTarget::Trajectory(t)) => trapezoid_weights(n_levels, dt)
            .iter()
            .zip(v.iter().zip(t))
            .map(|(w, (a, b))| w * (a - b))
            .collect(),
        _ => unreachable!("model output is shaped like the target"),
    };
    let sources: Vec<Vec<(usize, f64)>> = residual_weights
        .iter()
        .map(|&s| {
            if s == 0.0 {
                Vec::new()
            } else {
                weights.iter().map(|&(k, w)| (k, s * w / cell)).collect()
            }
        })
        .collect();

    let n = g.len();
    let c = problem.options.theta * dt;
    let mut values = vec![vec![0.0; n]; n_levels];
    let mut lam = vec![0.0; n];
    let mut lam_prev = vec![0.0; n];
    for &(k, d) in &sources[g.n_tau] {
        lam[k] += d * cell;
    }
    let mut grad = [0.0; 4];
    let mut buf = Buffers::new(n);
    for k in (0..g.n_tau).rev() {
        reverse_step(
            &ops,
            c,
            dt,
            &lam,
            &forward.values[k],
            &forward.stages[k],
            &forward.values[k + 1],
            &mut lam_prev,
            &mut grad,
            &mut buf,
        )
        .map_err(|e| Error::numerical(k, format!("adjoint solve: {e}")))?;
        if let Some(pos) = lam_prev.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(k, format!("non-finite adjoint at flat index {pos}")));
        }
        values[k].iter_mut().zip(&lam_prev).for_each(|(v, l)| *v = l / cell);
        for &(idx, d) in &sources[k] {
            lam_prev[idx] += d * cell;
        }
        std::mem::swap(&mut lam, &mut lam_prev);
    }
    let gradient = Gradient4::from_array(grad);
    if !gradient.is_finite() {
        return Err(Error::numerical(0, format!("non-finite gradient {gradient:?}")));
    }
    Ok(AdjointSurface {
        grid: g,
        values,
        sources,
        cost: j,
        gradient,
    })
}

/// Forward solve, backward sweep and gradient in one call.
pub fn cost_and_gradient(problem: &PdeProblem<'_>, target: &CostTarget) -> Result<(f64, Gradient4)> {
    let forward = problem.surface()?;
    let adj = adjoint_solve(problem, &forward, target)?;
    Ok((adj.cost, adj.gradient))
}

/// Gradient carried by a finished backward sweep, after checking that both
/// surfaces share one grid.
pub fn assemble_gradient(forward: &PriceSurface, adjoint: &AdjointSurface) -> Result<Gradient4> {
    if !forward.grid.same_as(&adjoint.grid) {
        return Err(Error::Contract("forward and adjoint grids differ".into()));
    }
    Ok(adjoint.gradient)
}

/// Derivative along an axis at node `i` of `n` with spacing `h`: central
/// inside, one-sided second order at both ends.
#[inline]
fn d1(f: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    if i == 0 {
        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
    } else {
        (f(i + 1) - f(i - 1)) / (2.0 * h)
    }
}

#[inline]
fn d2(f: impl Fn(usize) -> f64, i: usize, n: usize, h: f64) -> f64 {
    if n < 4 {
        let c = i.clamp(1, n - 2);
        return (f(c + 1) - 2.0 * f(c) + f(c - 1)) / (h * h);
    }
    if i == 0 {
        (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) / (h * h)
    } else if i == n - 1 {
        (2.0 * f(n - 1) - 5.0 * f(n - 2) + 4.0 * f(n - 3) - f(n - 4)) / (h * h)
    } else {
        (f(i + 1) - 2.0 * f(i) + f(i - 1)) / (h * h)
    }
}

/// Space-time integrals of the state against derivatives of a multiplier
/// field `phi`, by the trapezoid rule in `x`, `nu` and `tau`:
///
/// ```text
/// s_sigma = ∫∫ V (-sigma nu phi_nunu - 2 sigma phi_nu - rho phi_x - rho nu phi_xnu)
/// s_rho   = ∫∫ V (-sigma phi_x - sigma nu phi_xnu)
/// s_kappa = ∫∫ V ((mu - nu) phi_nu - phi)
/// s_mu    = ∫∫ kappa V phi_nu
/// ```
///
/// With `phi` the adjoint density, `-s` is the continuous-adjoint gradient
/// (see [`quadrature_gradient`]). The adjoint starts from a point source, so
/// on practical grids its derivatives are badly resolved and `-s` is a poor
/// estimate of the discrete gradient.
pub fn constraint_sensitivities(
    g: &Grid2D,
    v: &[Vec<f64>],
    phi: &[Vec<f64>],
    p: &crate::market::HestonParams,
) -> Result<Gradient4> {
    if v.len() != g.n_tau + 1 || phi.len() != v.len() {
        return Err(Error::Contract(format!(
            "expected {} levels, got {} state and {} multiplier levels",
            g.n_tau + 1,
            v.len(),
            phi.len()
        )));
    }
    let (nx, ny) = (g.nx(), g.ny());
    if nx < 3 || ny < 3 {
        return Err(Error::Contract("quadrature needs at least 3 nodes per axis".into()));
    }
    let (dx, dnu) = (g.dx(), g.dnu());
    let wx = trapezoid_weights(nx, dx);
    let wy = trapezoid_weights(ny, dnu);
    let wt = trapezoid_weights(g.n_tau + 1, g.dtau());
    let (s, r, k, m) = (p.sigma_nu, p.rho, p.kappa_nu, p.mu_nu);
    let mut acc = [0.0; 4];
    for (lvl, (vk, fk)) in v.iter().zip(phi).enumerate() {
        if vk.len() != g.len() || fk.len() != g.len() {
            return Err(Error::Contract(format!("level {lvl} has the wrong length")));
        }
        let at = |i: usize, j: usize| fk[j * nx + i];
        for j in 0..ny {
            let nu = g.nu(j);
            for i in 0..nx {
                let val = vk[j * nx + i];
                let w = wt[lvl] * wx[i] * wy[j];
                if w == 0.0 || val == 0.0 {
                    continue;
                }
                let fx = d1(|ii| at(ii, j), i, nx, dx);
                let fnu = d1(|jj| at(i, jj), j, ny, dnu);
                let fnunu = d2(|jj| at(i, jj), j, ny, dnu);
                let fxnu = d1(|jj| d1(|ii| at(ii, jj), i, nx, dx), j, ny, dnu);
                let terms = [
                    val * (-s * nu * fnunu - 2.0 * s * fnu - r * fx - r * nu * fxnu),
                    val * (-s * fx - s * nu * fxnu),
                    val * ((m - nu) * fnu - at(i, j)),
                    k * val * fnu,
                ];
                if terms.iter().any(|t| !t.is_finite()) {
                    return Err(Error::numerical(
                        lvl,
                        format!("non-finite gradient integrand at node (i = {i}, j = {j})"),
                    ));
                }
                for (a, t) in acc.iter_mut().zip(terms) {
                    *a += w * t;
                }
            }
        }
    }
    Ok(Gradient4::from_array(acc))
}

/// Continuous-adjoint gradient estimate from the quadrature integrals.
pub fn quadrature_gradient(
    forward: &PriceSurface,
    adjoint: &AdjointSurface,
    p: &crate::market::HestonParams,
) -> Result<Gradient4> {
    if !forward.grid.same_as(&adjoint.grid) {
        return Err(Error::Contract("forward and adjoint grids differ".into()));
    }
    Ok(constraint_sensitivities(&forward.grid, &forward.values, &adjoint.values, p)?.scaled(-1.0))
}
