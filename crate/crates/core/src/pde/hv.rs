use super::operators::{Direction, Part, SplitOperator};
use crate::error::{Error, Result};

/// Scratch buffers for one Hundsdorfer–Verwer step.
///
/// After a step, `y0` and `y2` hold the first predictor and the end of the
/// first implicit sweep; the adjoint reads `y2`.
#[derive(Debug, Clone)]
pub struct HvWorkspace {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    fu: [Vec<f64>; 3],
    fy: [Vec<f64>; 3],
    rhs: Vec<f64>,
}

impl HvWorkspace {
    pub fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Self {
            y0: z(),
            y1: z(),
            y2: z(),
            fu: [z(), z(), z()],
            fy: [z(), z(), z()],
            rhs: z(),
        }
    }
}

const PARTS: [Part; 3] = [Part::Mixed, Part::X, Part::Nu];

/// Advance `u` (level `level`, time `tau`) to `out` at `tau + dtau`.
///
/// ```text
/// Y0 = u + dt F u
/// (I - th dt F1) Y1 = Y0 - th dt F1 u
/// (I - th dt F2) Y2 = Y1 - th dt F2 u
/// Z0 = Y0 + dt/2 (F Y2 - F u)
/// (I - th dt F1) Z1 = Z0 - th dt F1 Y2
/// (I - th dt F2) Z2 = Z1 - th dt F2 Y2
/// out = Z2
/// ```
#[allow(clippy::too_many_arguments)]
pub fn hv_step<O: SplitOperator>(
    ops: &O,
    u: &[f64],
    out: &mut [f64],
    tau: f64,
    dtau: f64,
    theta: f64,
    level: usize,
    ws: &mut HvWorkspace,
) -> Result<()> {
    let n = ops.len();
    if u.len() != n || out.len() != n || ws.y0.len() != n {
        return Err(Error::Contract(format!(
            "field length mismatch: operator {n}, input {}, output {}, workspace {}",
            u.len(),
            out.len(),
            ws.y0.len()
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Contract(format!("theta must lie in (0, 1], got {theta}")));
    }
    let c = theta * dtau;
    let tau_next = tau + dtau;
    let next = level + 1;
    let fail = |d: Direction, e: String| Error::numerical(next, format!("{d}-direction solve: {e}"));

    for (p, f) in PARTS.iter().zip(ws.fu.iter_mut()) {
        ops.apply(*p, u, f);
    }
    let [f0, f1, f2] = &ws.fu;
    for i in 0..n {
        ws.y0[i] = u[i] + dtau * (f0[i] + f1[i] + f2[i]);
        ws.rhs[i] = ws.y0[i] - c * f1[i];
    }
    ops.solve(Direction::X, c, tau_next, &ws.rhs, &mut ws.y1)
        .map_err(|e| fail(Direction::X, e))?;
    for i in 0..n {
        ws.rhs[i] = ws.y1[i] - c * f2[i];
    }
    ops.solve(Direction::Nu, c, tau_next, &ws.rhs, &mut ws.y2)
        .map_err(|e| fail(Direction::Nu, e))?;

    for (p, f) in PARTS.iter().zip(ws.fy.iter_mut()) {
        ops.apply(*p, &ws.y2, f);
    }
    let [g0, g1, g2] = &ws.fy;
    let half = 0.5 * dtau;
    for i in 0..n {
        let z0 = ws.y0[i] + half * (g0[i] + g1[i] + g2[i] - f0[i] - f1[i] - f2[i]);
        ws.rhs[i] = z0 - c * g1[i];
    }
    // y1 is free again; reuse it for Z1
    ops.solve(Direction::X, c, tau_next, &ws.rhs, &mut ws.y1)
        .map_err(|e| fail(Direction::X, e))?;
    for i in 0..n {
        ws.rhs[i] = ws.y1[i] - c * g2[i];
    }
    ops.solve(Direction::Nu, c, tau_next, &ws.rhs, out)
        .map_err(|e| fail(Direction::Nu, e))?;

    if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::numerical(next, format!("non-finite value at flat index {pos}")));
    }
    Ok(())
}
