//! The quick verification battery must be green on a fresh build.

use sl0::harness::verify::{run, VerifyLevel};

#[test]
fn quick_verification_suite_passes() {
    let report = run(VerifyLevel::Quick);
    let mut failed = 0;
    for c in &report.checks {
        println!(
            "{} {:32} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += (!c.pass) as usize;
    }
    assert_eq!(failed, 0, "{failed} verification checks failed");
}
