mod common;

use common::invariants::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_is_idempotent_and_feasible(p in any_params()) {
        projection_idempotent(p)?;
    }

    #[test]
    fn pde_values_stay_within_put_bounds(p in feasible_params(), m in quote()) {
        put_bounds(p, m)?;
    }

    #[test]
    fn degenerate_prices_fall_with_spot(case in degenerate_case()) {
        monotone_in_spot(case)?;
    }

    #[test]
    fn calibration_iterates_are_feasible(p in any_params(), target in 0.5..10.0f64) {
        iterates_feasible(p, target)?;
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed(p in feasible_params(), seed in any::<u64>()) {
        mc_deterministic(p, seed)?;
    }
}
