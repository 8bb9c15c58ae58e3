mod common;

use common::props::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn posterior_std_never_rises_with_more_data(case in gp_case()) {
        gp_variance_monotone(case)?;
    }

    #[test]
    fn local_penalty_grows_with_distance(case in penalty_case()) {
        gamma_monotone(case)?;
    }

    #[test]
    fn robots_respect_the_speed_limit(case in mission_case()) {
        speed_bound(case)?;
    }

    #[test]
    fn knowledge_only_grows(case in mission_case()) {
        knowledge_monotone(case)?;
    }

    #[test]
    fn knowledge_is_never_clairvoyant(case in mission_case()) {
        no_clairvoyance(case)?;
    }
}
