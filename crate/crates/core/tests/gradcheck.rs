mod common;

use common::gradcheck::{cases, run_case, TOLERANCE};

#[test]
fn every_tape_op_matches_finite_differences() {
    let mut bad = Vec::new();
    for (i, case) in cases().iter().enumerate() {
        let out = run_case(case, 100, 7 + i as u64);
        if !(out.worst < TOLERANCE) {
            bad.push(format!("{}: worst relative error {:.3e}", out.name, out.worst));
        }
    }
    assert!(bad.is_empty(), "{bad:#?}");
}
