mod common;

use common::conditionals::{max_discrepancy, BLOCKS};

#[test]
fn every_conditional_matches_joint_ratios() {
    for b in BLOCKS {
        let err = max_discrepancy(b, 100);
        assert!(err < 1e-8, "{b}: max discrepancy {err:e}");
    }
}
