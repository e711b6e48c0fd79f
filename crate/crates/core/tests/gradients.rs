mod common;

use common::gradcheck::{check_case, check_model, op_cases};
use domain_sieve::classifier::EncoderKind;

const TOL: f64 = 1e-4;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[test]
fn every_op_matches_central_differences() {
    for (name, shapes, build) in op_cases() {
        for seed in SEEDS {
            let err = check_case(&shapes, &build, seed);
            assert!(err < TOL, "{name} seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn cnn_classifier_gradients() {
    for seed in SEEDS {
        let err = check_model(EncoderKind::Cnn, seed);
        assert!(err < TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn blstm_classifier_gradients() {
    for seed in SEEDS {
        let err = check_model(EncoderKind::Blstm, seed);
        assert!(err < TOL, "seed {seed}: relative error {err:e}");
    }
}
