//! Property suites for the annotation and history stores.

#[path = "support/annotation_model.rs"]
mod annotation_model;
#[path = "support/history_model.rs"]
mod history_model;

use annotation_model::{annotation_case, check_conflicts, check_digest_permutation, check_excerpts};
use history_model::{check_history_sequence, history_ops};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn test_digest_ignores_insertion_order(case in annotation_case()) {
        check_digest_permutation(&case)?;
    }

    #[test]
    fn test_conflicts_match_all_pairs(case in annotation_case()) {
        check_conflicts(&case)?;
    }

    #[test]
    fn test_excerpts_reslice(case in annotation_case()) {
        check_excerpts(&case)?;
    }

    #[test]
    fn test_history_matches_model(ops in history_ops()) {
        check_history_sequence(&ops)?;
    }
}
