#![no_main]
use auditkit::allocation::{parse_testers, validate_testers};
use auditkit::design::AuditDesign;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(testers) = parse_testers(data) {
        let _ = validate_testers(&AuditDesign::paper(), &testers);
    }
});
