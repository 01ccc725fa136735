// Full-scale battery: every criterion at its stated tolerance and time
// limit, one line per criterion. Lines are written straight to stderr
// (bypassing test capture) so the per-criterion report is printed even
// when the whole suite passes.

use std::io::Write;
use std::path::PathBuf;

use ang_core::{battery, GoldenTruths, Scale, Tier, EXPECTED_STRUCTURAL};

#[test]
fn full_battery_meets_stated_tolerances() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let truths = GoldenTruths::from_dir(&dir).expect("golden tables load");
    let results = battery(
        Scale::Full,
        &truths,
        &[Tier::Unit, Tier::Measure, Tier::Conditional, Tier::Extended],
    );

    let mut err = std::io::stderr().lock();
    let mut unexpected = Vec::new();
    for r in &results {
        let structural = EXPECTED_STRUCTURAL.contains(&r.name);
        let tag = if !r.passed && structural { "  [expected]" } else { "" };
        writeln!(err, "{}{}", r.line(), tag).unwrap();
        if !r.passed && !structural {
            unexpected.push(r.name);
        }
    }
    let passed = results.iter().filter(|r| r.passed).count();
    writeln!(err, "{passed} of {} criteria passed", results.len()).unwrap();
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
