//! Domain types shared by the fine and coarse models: Heston parameters and
//! their feasible set, market quotes, and the cost functionals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heston variance-process parameters.
///
/// The calibrated vector is `(sigma_nu, rho, kappa_nu, mu_nu)`; `nu0` is the
/// initial variance and stays fixed during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    /// Volatility of variance.
    pub sigma_nu: f64,
    /// Correlation between the asset and variance Brownian motions.
    pub rho: f64,
    /// Mean-reversion rate of the variance.
    pub kappa_nu: f64,
    /// Long-term mean of the variance.
    pub mu_nu: f64,
    /// Initial variance.
    pub nu0: f64,
}

impl HestonParams {
    pub fn new(sigma_nu: f64, rho: f64, kappa_nu: f64, mu_nu: f64, nu0: f64) -> Self {
        Self {
            sigma_nu,
            rho,
            kappa_nu,
            mu_nu,
            nu0,
        }
    }

    /// Calibration vector in the order `(sigma_nu, rho, kappa_nu, mu_nu)`.
    pub fn to_vector(&self) -> [f64; 4] {
        [self.sigma_nu, self.rho, self.kappa_nu, self.mu_nu]
    }

    /// Rebuild from a calibration vector, keeping `nu0`.
    pub fn with_vector(&self, v: [f64; 4]) -> Self {
        Self {
            sigma_nu: v[0],
            rho: v[1],
            kappa_nu: v[2],
            mu_nu: v[3],
            nu0: self.nu0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite()) && self.nu0.is_finite()
    }

    /// Strict model invariants: positivity, `|rho| <= 1` and the Feller condition.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Config(format!("non-finite parameters {self:?}")));
        }
        let positive = [
            ("sigma_nu", self.sigma_nu),
            ("kappa_nu", self.kappa_nu),
            ("mu_nu", self.mu_nu),
            ("nu0", self.nu0),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!(
                "rho must lie in [-1, 1], got {}",
                self.rho
            )));
        }
        if !feller_holds(self) {
            return Err(Error::Config(format!(
                "Feller condition 2*kappa*mu >= sigma^2 violated: 2*{}*{} < {}^2",
                self.kappa_nu, self.mu_nu, self.sigma_nu
            )));
        }
        Ok(())
    }

    /// Euclidean distance between calibration vectors.
    pub fn distance(&self, other: &HestonParams) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// The six starting points of the default calibration protocol, in
/// `(kappa, mu, sigma, rho)` reading order of the guess table.
pub fn reference_guesses(nu0: f64) -> [HestonParams; 6] {
    let g = |kappa: f64, mu: f64, sigma: f64, rho: f64| HestonParams::new(sigma, rho, kappa, mu, nu0);
    [
        g(3.0, 0.3, 0.1, -0.2),
        g(5.0, 0.6, 0.2, -0.3),
        g(4.5, 0.8, 0.5, -0.15),
        g(2.0, 0.4, 0.45, -0.2),
        g(4.0, 0.5, 0.15, -0.35),
        g(3.5, 0.35, 0.5, -0.5),
    ]
}

/// `2 kappa mu >= sigma^2`.
pub fn feller_holds(p: &HestonParams) -> bool {
    2.0 * p.kappa_nu * p.mu_nu >= p.sigma_nu * p.sigma_nu
}

/// Box bounds on the calibration vector plus a Feller margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub sigma_nu: (f64, f64),
    pub rho: (f64, f64),
    pub kappa_nu: (f64, f64),
    pub mu_nu: (f64, f64),
    /// Projection enforces `2 kappa mu >= (1 + feller_margin) sigma^2`.
    pub feller_margin: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            sigma_nu: (0.01, 1.0),
            rho: (-0.99, 0.0),
            kappa_nu: (0.1, 10.0),
            mu_nu: (0.01, 1.0),
            feller_margin: 1e-6,
        }
    }
}

impl ParamBounds {
    fn boxes(&self) -> [(&'static str, (f64, f64)); 4] {
        [
            ("sigma_nu", self.sigma_nu),
            ("rho", self.rho),
            ("kappa_nu", self.kappa_nu),
            ("mu_nu", self.mu_nu),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in self.boxes() {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Config(format!(
                    "bounds.{name}: lower {lo} must be finite and below upper {hi}"
                )));
            }
        }
        if self.rho.0 < -1.0 || self.rho.1 > 1.0 {
            return Err(Error::Config(format!(
                "bounds.rho: [{}, {}] must lie inside [-1, 1]",
                self.rho.0, self.rho.1
            )));
        }
        if self.sigma_nu.0 <= 0.0 || self.kappa_nu.0 <= 0.0 || self.mu_nu.0 <= 0.0 {
            return Err(Error::Config(
                "bounds on sigma_nu, kappa_nu and mu_nu must be strictly positive".into(),
            ));
        }
        if !(self.feller_margin >= 0.0 && self.feller_margin.is_finite()) {
            return Err(Error::Config(format!(
                "bounds.feller_margin must be finite and >= 0, got {}",
                self.feller_margin
            )));
        }
        let best = 2.0 * self.kappa_nu.1 * self.mu_nu.1;
        let needed = (1.0 + self.feller_margin) * self.sigma_nu.0 * self.sigma_nu.0;
        if best < needed {
            return Err(Error::Config(format!(
                "bounds admit no Feller-feasible point: 2*kappa_max*mu_max = {best} < {needed}"
            )));
        }
        Ok(())
    }

    /// Box membership plus the Feller condition with margin.
    pub fn is_feasible(&self, p: &HestonParams) -> bool {
        let v = p.to_vector();
        self.boxes()
            .iter()
            .zip(v.iter())
            .all(|((_, (lo, hi)), x)| *lo <= *x && *x <= *hi)
            && self.feller_ok(p.sigma_nu, p.kappa_nu, p.mu_nu)
    }

    fn feller_ok(&self, sigma: f64, kappa: f64, mu: f64) -> bool {
        2.0 * kappa * mu >= (1.0 + self.feller_margin) * sigma * sigma
    }
}

/// Projection onto the box and the Feller set.
///
/// A feasible point is returned unchanged. Otherwise the box is clamped and,
/// if the Feller condition still fails, `sigma_nu` is lowered to
/// `sqrt(2 kappa mu / (1 + eps))`. Only when that would cross the lower
/// `sigma_nu` bound are `mu_nu` and then `kappa_nu` raised.
pub fn project_to_feasible(p: &HestonParams, b: &ParamBounds) -> Result<HestonParams> {
    b.validate()?;
    if !p.is_finite() {
        return Err(Error::Contract(format!(
            "cannot project non-finite parameters {p:?}"
        )));
    }
    if b.is_feasible(p) {
        return Ok(*p);
    }
    let clamp = |x: f64, (lo, hi): (f64, f64)| x.clamp(lo, hi);
    let mut sigma = clamp(p.sigma_nu, b.sigma_nu);
    let rho = clamp(p.rho, b.rho);
    let mut kappa = clamp(p.kappa_nu, b.kappa_nu);
    let mut mu = clamp(p.mu_nu, b.mu_nu);

    if !b.feller_ok(sigma, kappa, mu) {
        let mut s = (2.0 * kappa * mu / (1.0 + b.feller_margin)).sqrt();
        while s > 0.0 && !b.feller_ok(s, kappa, mu) {
            s = s.next_down();
        }
        if s >= b.sigma_nu.0 {
            sigma = s;
        } else {
            sigma = b.sigma_nu.0;
            let need = (1.0 + b.feller_margin) * sigma * sigma / 2.0;
            mu = (need / kappa).min(b.mu_nu.1);
            while mu < b.mu_nu.1 && !b.feller_ok(sigma, kappa, mu) {
                mu = mu.next_up();
            }
            if !b.feller_ok(sigma, kappa, mu) {
                kappa = (need / mu).min(b.kappa_nu.1);
                while kappa < b.kappa_nu.1 && !b.feller_ok(sigma, kappa, mu) {
                    kappa = kappa.next_up();
                }
            }
            if !b.feller_ok(sigma, kappa, mu) {
                return Err(Error::Config(
                    "bounds admit no Feller-feasible projection".into(),
                ));
            }
        }
    }
    Ok(HestonParams {
        sigma_nu: sigma,
        rho,
        kappa_nu: kappa,
        mu_nu: mu,
        nu0: p.nu0,
    })
}

/// Contract and market data for one quote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketQuote {
    /// Spot price.
    pub s0: f64,
    /// Risk-free rate.
    pub r: f64,
    /// Continuous dividend rate.
    pub q: f64,
    pub strike: f64,
    /// Time to maturity in years.
    pub maturity: f64,
    /// Observed option price.
    pub observed_price: f64,
}

impl MarketQuote {
    /// Checks every quote invariant, returning the first offending field.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let finite = [
            ("s0", self.s0),
            ("r", self.r),
            ("q", self.q),
            ("strike", self.strike),
            ("maturity", self.maturity),
            ("price", self.observed_price),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err((name, format!("value {v} is not finite")));
            }
        }
        if self.s0 <= 0.0 {
            return Err(("s0", format!("spot must be > 0, got {}", self.s0)));
        }
        if self.r <= 0.0 {
            return Err(("r", format!("rate must be > 0, got {}", self.r)));
        }
        if self.q < 0.0 {
            return Err(("q", format!("dividend rate must be >= 0, got {}", self.q)));
        }
        if self.strike <= 0.0 {
            return Err(("strike", format!("strike must be > 0, got {}", self.strike)));
        }
        if self.maturity <= 0.0 {
            return Err((
                "maturity",
                format!("maturity must be > 0, got {}", self.maturity),
            ));
        }
        if self.observed_price < 0.0 {
            return Err((
                "price",
                format!("price must be >= 0, got {}", self.observed_price),
            ));
        }
        if self.observed_price > self.strike * (1.0 + 1e-12) {
            return Err((
                "price",
                format!(
                    "put price {} exceeds the strike {}",
                    self.observed_price, self.strike
                ),
            ));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|(field, msg)| Error::Config(format!("quote.{field}: {msg}")))
    }

    /// Log-spot, the contract point on the x axis.
    pub fn log_spot(&self) -> f64 {
        self.s0.ln()
    }
}

/// Data a model output is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CostTarget {
    /// Price today (tau = T).
    Scalar(f64),
    /// Price per time level tau_k, k = 0..N_tau.
    Trajectory(Vec<f64>),
}

impl CostTarget {
    pub fn len(&self) -> usize {
        match self {
            CostTarget::Scalar(_) => 1,
            CostTarget::Trajectory(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Composite trapezoid weights for `n` equally spaced levels.
pub fn trapezoid_weights(n: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; n];
    if n == 1 {
        w[0] = 0.0;
    } else if n > 1 {
        w[0] = 0.5 * dt;
        w[n - 1] = 0.5 * dt;
    }
    w
}

/// Least-squares misfit.
///
/// Scalar: `0.5 (v - target)^2`. Trajectory: `0.5 * trapezoid_tau (v - target)^2`.
pub fn cost(model: &CostTarget, target: &CostTarget, dt: f64) -> Result<f64> {
    match (model, target) {
        (CostTarget::Scalar(v), CostTarget::Scalar(t)) => Ok(0.5 * (v - t) * (v - t)),
        (CostTarget::Trajectory(v), CostTarget::Trajectory(t)) => {
            if v.len() != t.len() {
                return Err(Error::Contract(format!(
                    "trajectory lengths differ: {} vs {}",
                    v.len(),
                    t.len()
                )));
            }
            if !(dt > 0.0) {
                return Err(Error::Contract(format!("time step must be > 0, got {dt}")));
            }
            let w = trapezoid_weights(v.len(), dt);
            Ok(0.5
                * v.iter()
                    .zip(t)
                    .zip(&w)
                    .map(|((a, b), w)| w * (a - b) * (a - b))
                    .sum::<f64>())
        }
        _ => Err(Error::Contract(
            "cost needs two scalars or two trajectories".into(),
        )),
    }
}

/// `100 (1 - j_opt / j_init)`, in percent.
pub fn relative_reduction(j_init: f64, j_opt: f64) -> Result<f64> {
    if !(j_init > 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "relative reduction needs a positive initial cost, got {j_init}"
        )));
    }
    if !(j_opt >= 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "relative reduction needs a non-negative final cost, got {j_opt}"
        )));
    }
    Ok(100.0 * (1.0 - j_opt / j_init))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(sigma: f64, rho: f64, kappa: f64, mu: f64) -> HestonParams {
        HestonParams::new(sigma, rho, kappa, mu, 0.05)
    }

    #[test]
    fn feller_examples() {
        assert!(feller_holds(&p(0.1, -0.2, 3.0, 0.3)));
        assert!(!feller_holds(&p(1.0, 0.0, 1.0, 0.1)));
        assert!(feller_holds(&p(1.0, 0.0, 0.5, 1.0)));
    }

    #[test]
    fn reference_guesses_are_feasible() {
        let b = ParamBounds::default();
        for g in reference_guesses(0.05) {
            assert!(feller_holds(&g));
            assert!(b.is_feasible(&g), "{g:?}");
            g.validate().unwrap();
        }
    }

    #[test]
    fn projection_identity_on_feasible() {
        let g = p(0.1, -0.2, 3.0, 0.3);
        assert_eq!(project_to_feasible(&g, &ParamBounds::default()).unwrap(), g);
    }

    #[test]
    fn projection_clamps_rho() {
        let b = ParamBounds {
            rho: (-1.0, 0.0),
            ..ParamBounds::default()
        };
        let q = project_to_feasible(&p(0.1, -1.5, 3.0, 0.3), &b).unwrap();
        assert_eq!(q.rho, -1.0);
        assert_eq!(q.sigma_nu, 0.1);
        assert_eq!(q.kappa_nu, 3.0);
        assert_eq!(q.mu_nu, 0.3);
    }

    #[test]
    fn projection_lowers_sigma_for_feller() {
        let b = ParamBounds::default();
        let q = project_to_feasible(&p(1.0, -0.2, 2.0, 0.1), &b).unwrap();
        let expected = (2.0 * 2.0 * 0.1 / (1.0 + b.feller_margin)).sqrt();
        assert!((q.sigma_nu - expected).abs() < 1e-12);
        assert!(q.sigma_nu <= expected);
        assert!(feller_holds(&q));
        assert_eq!((q.kappa_nu, q.mu_nu), (2.0, 0.1));
    }

    #[test]
    fn projection_raises_mu_when_sigma_floor_binds() {
        let b = ParamBounds {
            sigma_nu: (0.5, 1.0),
            mu_nu: (0.01, 1.0),
            kappa_nu: (0.1, 10.0),
            ..ParamBounds::default()
        };
        let q = project_to_feasible(&p(0.6, -0.2, 0.5, 0.02), &b).unwrap();
        assert_eq!(q.sigma_nu, 0.5);
        assert!(b.is_feasible(&q));
    }

    #[test]
    fn infeasible_bounds_are_rejected() {
        let b = ParamBounds {
            sigma_nu: (0.9, 1.0),
            kappa_nu: (0.1, 0.2),
            mu_nu: (0.01, 0.02),
            ..ParamBounds::default()
        };
        assert!(matches!(
            project_to_feasible(&p(0.95, 0.0, 0.15, 0.015), &b),
            Err(Error::Config(_))
        ));
        let reversed = ParamBounds {
            rho: (0.0, -0.5),
            ..ParamBounds::default()
        };
        assert!(reversed.validate().is_err());
    }

    #[test]
    fn cost_examples() {
        let s = CostTarget::Scalar(3.0);
        assert_eq!(cost(&s, &s, 1.0).unwrap(), 0.0);
        assert_eq!(cost(&CostTarget::Scalar(1.0), &CostTarget::Scalar(3.0), 1.0).unwrap(), 2.0);
        let t = 0.25;
        let n = 11;
        let dt = t / (n - 1) as f64;
        let c = 0.7;
        let a = CostTarget::Trajectory(vec![1.0 + c; n]);
        let b = CostTarget::Trajectory(vec![1.0; n]);
        assert!((cost(&a, &b, dt).unwrap() - 0.5 * c * c * t).abs() < 1e-14);
        let two = cost(
            &CostTarget::Trajectory(vec![0.0, 1.0]),
            &CostTarget::Trajectory(vec![0.0, 0.0]),
            1.0,
        )
        .unwrap();
        assert_eq!(two, 0.25);
    }

    #[test]
    fn cost_shape_mismatch() {
        let a = CostTarget::Trajectory(vec![1.0; 3]);
        let b = CostTarget::Trajectory(vec![1.0; 4]);
        assert!(matches!(cost(&a, &b, 0.1), Err(Error::Contract(_))));
        assert!(matches!(
            cost(&a, &CostTarget::Scalar(1.0), 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn relative_reduction_examples() {
        assert_eq!(relative_reduction(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(relative_reduction(2.0, 0.0).unwrap(), 100.0);
        assert!((relative_reduction(1.0, 3e-4).unwrap() - 99.97).abs() < 1e-12);
        assert!(matches!(
            relative_reduction(0.0, 0.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn quote_validation() {
        let mut q = MarketQuote {
            s0: 100.0,
            r: 0.05,
            q: 0.0,
            strike: 100.0,
            maturity: 0.25,
            observed_price: 3.0,
        };
        q.validate().unwrap();
        q.observed_price = 101.0;
        assert_eq!(q.check().unwrap_err().0, "price");
        q.observed_price = 3.0;
        q.strike = 0.0;
        assert_eq!(q.check().unwrap_err().0, "strike");
    }

    fn arb_params() -> impl Strategy<Value = HestonParams> {
        (-0.5f64..2.0, -2.0f64..1.5, -1.0f64..12.0, -0.5f64..1.5)
            .prop_map(|(s, r, k, m)| HestonParams::new(s, r, k, m, 0.05))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn projection_is_idempotent_and_feasible(x in arb_params()) {
            let b = ParamBounds::default();
            let once = project_to_feasible(&x, &b).unwrap();
            let twice = project_to_feasible(&once, &b).unwrap();
            prop_assert_eq!(once, twice);
            prop_assert!(b.is_feasible(&once));
            prop_assert!(feller_holds(&once));
        }

        #[test]
        fn cost_is_symmetric_and_nonnegative(
            a in proptest::collection::vec(-10.0f64..10.0, 5),
            b in proptest::collection::vec(-10.0f64..10.0, 5),
        ) {
            let (ta, tb) = (CostTarget::Trajectory(a), CostTarget::Trajectory(b));
            let ab = cost(&ta, &tb, 0.1).unwrap();
            let ba = cost(&tb, &ta, 0.1).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn reduction_decreases_in_final_cost(j0 in 1e-6f64..10.0, a in 0.0f64..20.0, d in 1e-9f64..5.0) {
            let lo = relative_reduction(j0, a).unwrap();
            let hi = relative_reduction(j0, a + d).unwrap();
            prop_assert!(hi <= lo);
        }
    }
}
