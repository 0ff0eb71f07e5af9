//! Analytic first and second derivatives against central differences.

mod common;

use common::derivative_errors;

#[test]
fn all_families_match_central_differences() {
    let errs = derivative_errors();
    for (family, e) in &errs {
        println!("{family:<20} {e:.3e}");
    }
    assert_eq!(errs.len(), 8, "{errs:?}");
    for (family, e) in &errs {
        assert!(*e <= 1e-6, "{family}: {e:.3e}");
    }
}
