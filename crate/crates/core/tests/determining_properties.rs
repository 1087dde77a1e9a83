mod common;

use common::{check_reduction, deterministic_field, nullspace_sweep, sde_strategy};
use proptest::prelude::*;

#[test]
fn nullspace_agrees_with_coefficient_collection() {
    assert_eq!(nullspace_sweep(), Ok(6 * 162));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn stochastic_system_reduces_to_classical_without_noise((f, g) in sde_strategy(), (tau, phi) in deterministic_field()) {
        if let Err(e) = check_reduction(f, g, &tau, &phi) {
            prop_assert!(false, "{}", e);
        }
    }
}
