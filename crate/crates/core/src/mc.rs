//! Fine model: Euler–Maruyama simulation of the log-price Heston SDE with
//! antithetic variates, pricing arithmetic-average Asian puts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{feller_holds, HestonParams, MarketQuote};

/// Monte Carlo settings. Variance positivity uses full truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Number of samples; with antithetic sampling each sample is a path pair.
    pub n_paths: usize,
    /// Number of time steps.
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 170,
            seed: 42,
            antithetic: true,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("mc.n_paths must be >= 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("mc.n_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Discounted Monte Carlo price with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub price: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Simulated path and its sign-flipped mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPair {
    /// `(1/N_t) sum_{k=1..N_t} exp(x_k)` for the primary path.
    pub average_plus: f64,
    /// Same average for the antithetic path.
    pub average_minus: f64,
    /// `exp(x_{N_t})` for the primary path.
    pub terminal_plus: f64,
    pub terminal_minus: f64,
}

/// `(w_x, w_nu) = (w1, rho w1 + sqrt(1 - rho^2) w2)`.
#[inline]
pub fn correlate_normals(w1: f64, w2: f64, rho: f64) -> (f64, f64) {
    let c = (1.0 - rho * rho).max(0.0).sqrt();
    (w1, rho * w1 + c * w2)
}

fn check_inputs(p: &HestonParams, m: &MarketQuote, c: &McConfig) -> Result<()> {
    c.validate()?;
    if !p.is_finite() {
        return Err(Error::Contract(format!("non-finite parameters {p:?}")));
    }
    if !feller_holds(p) {
        return Err(Error::Contract(format!(
            "Feller condition violated for {p:?}"
        )));
    }
    if !(-1.0..=1.0).contains(&p.rho) {
        return Err(Error::Contract(format!("rho {} outside [-1, 1]", p.rho)));
    }
    if !(m.s0 > 0.0 && m.maturity > 0.0 && m.strike >= 0.0 && m.r.is_finite() && m.q.is_finite())
    {
        return Err(Error::Contract(format!("invalid quote for pricing: {m:?}")));
    }
    Ok(())
}

struct Stepper {
    drift_x: f64,
    dt: f64,
    sqrt_dt: f64,
    kappa: f64,
    mu: f64,
    sigma: f64,
    rho: f64,
}

impl Stepper {
    fn new(p: &HestonParams, m: &MarketQuote, c: &McConfig) -> Self {
        let dt = m.maturity / c.n_steps as f64;
        Self {
            drift_x: m.r - m.q,
            dt,
            sqrt_dt: dt.sqrt(),
            kappa: p.kappa_nu,
            mu: p.mu_nu,
            sigma: p.sigma_nu,
            rho: p.rho,
        }
    }

    #[inline]
    fn step(&self, x: &mut f64, nu: &mut f64, w1: f64, w2: f64) {
        let (wx, wnu) = correlate_normals(w1, w2, self.rho);
        let v = nu.max(0.0);
        let sv = v.sqrt() * self.sqrt_dt;
        *x += (self.drift_x - 0.5 * v) * self.dt + sv * wx;
        *nu += self.kappa * (self.mu - v) * self.dt + self.sigma * sv * wnu;
    }
}

fn path_rng(seed: u64, path_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index as u64);
    rng
}

fn simulate(
    p: &HestonParams,
    m: &MarketQuote,
    c: &McConfig,
    path_index: usize,
    with_mirror: bool,
) -> Result<PathPair> {
    let stepper = Stepper::new(p, m, c);
    let mut rng = path_rng(c.seed, path_index);
    let x0 = m.s0.ln();
    let (mut xp, mut np) = (x0, p.nu0);
    let (mut xm, mut nm) = (x0, p.nu0);
    let (mut sum_p, mut sum_m) = (0.0, 0.0);
    for k in 0..c.n_steps {
        let w1: f64 = rng.sample(StandardNormal);
        let w2: f64 = rng.sample(StandardNormal);
        stepper.step(&mut xp, &mut np, w1, w2);
        let sp = xp.exp();
        sum_p += sp;
        if with_mirror {
            stepper.step(&mut xm, &mut nm, -w1, -w2);
            sum_m += xm.exp();
        }
        if !(sp.is_finite() && np.is_finite() && sum_p.is_finite())
            || (with_mirror && !(xm.is_finite() && nm.is_finite() && sum_m.is_finite()))
        {
            return Err(Error::Simulation {
                path: path_index,
                step: k + 1,
                message: format!("non-finite state (x = {xp}, nu = {np})"),
            });
        }
    }
    let n = c.n_steps as f64;
    Ok(PathPair {
        average_plus: sum_p / n,
        average_minus: if with_mirror { sum_m / n } else { f64::NAN },
        terminal_plus: xp.exp(),
        terminal_minus: if with_mirror { xm.exp() } else { f64::NAN },
    })
}

/// Simulate path `path_index` and its antithetic mirror (all draws negated).
///
/// The Gaussian stream is a function of `(seed, path_index)` only.
pub fn simulate_path_pair(
    p: &HestonParams,
    m: &MarketQuote,
    c: &McConfig,
    path_index: usize,
) -> Result<PathPair> {
    check_inputs(p, m, c)?;
    if path_index >= c.n_paths {
        return Err(Error::Contract(format!(
            "path index {path_index} >= n_paths {}",
            c.n_paths
        )));
    }
    simulate(p, m, c, path_index, true)
}

#[derive(Clone, Copy)]
enum Payoff {
    AsianPut,
    EuropeanPut,
}

fn estimate(p: &HestonParams, m: &MarketQuote, c: &McConfig, payoff: Payoff) -> Result<McEstimate> {
    check_inputs(p, m, c)?;
    let k = m.strike;
    let put = |s: f64| (k - s).max(0.0);
    // collect keeps index order, so the reduction below is schedule independent
    let samples: Vec<f64> = (0..c.n_paths)
        .into_par_iter()
        .map(|i| {
            let pair = simulate(p, m, c, i, c.antithetic)?;
            let (a, b) = match payoff {
                Payoff::AsianPut => (pair.average_plus, pair.average_minus),
                Payoff::EuropeanPut => (pair.terminal_plus, pair.terminal_minus),
            };
            Ok(if c.antithetic {
                0.5 * (put(a) + put(b))
            } else {
                put(a)
            })
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let df = (-m.r * m.maturity).exp();
    Ok(McEstimate {
        price: df * mean,
        std_error: df * (var / n).sqrt(),
        n_paths: c.n_paths,
        seed: c.seed,
    })
}

/// Arithmetic-average Asian put, `exp(-rT) mean(phi_p)`.
pub fn asian_put_price(p: &HestonParams, m: &MarketQuote, c: &McConfig) -> Result<McEstimate> {
    estimate(p, m, c, Payoff::AsianPut)
}

/// European put on the simulated terminal price; cross-check for the PDE.
pub fn european_put_price_mc(
    p: &HestonParams,
    m: &MarketQuote,
    c: &McConfig,
) -> Result<McEstimate> {
    estimate(p, m, c, Payoff::EuropeanPut)
}
