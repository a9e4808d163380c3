mod common;

use common::{relative_error, Composition};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reverse_mode_matches_central_differences(seed in any::<u64>()) {
        let c = Composition::random(seed);
        let (_, grad) = c.tape_loss_grad();
        let fd = c.central_difference();
        prop_assert_eq!(grad.len(), c.num_params());
        let err = relative_error(&grad, &fd);
        prop_assert!(err < 1e-4, "relative error {err:.3e} over {} params", grad.len());
    }

    #[test]
    fn batched_tape_loss_equals_pointwise_loss(seed in any::<u64>()) {
        let c = Composition::random(seed);
        let (tape_loss, _) = c.tape_loss_grad();
        let direct = c.direct_loss(&c.params());
        prop_assert!((tape_loss - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }
}

#[test]
fn gradient_is_not_trivially_zero() {
    let c = Composition::random(11);
    let (_, g) = c.tape_loss_grad();
    let nt = c.field.template.len();
    let nd = c.field.deformation.len();
    assert!(g[..nt].iter().any(|v| *v != 0.0));
    assert!(g[nt..nt + nd].iter().any(|v| *v != 0.0));
    assert!(g[nt + nd..].iter().any(|v| *v != 0.0));
}
