#![no_main]
use auditkit::analysis::AnalysisPlan;
use auditkit::design::AuditDesign;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(plan) = AnalysisPlan::from_json_slice(data) {
        let _ = plan.is_locked();
        let _ = plan.unknown_factors(&AuditDesign::paper());
        let again = AnalysisPlan::from_json_slice(plan.to_json_pretty().as_bytes()).unwrap();
        assert_eq!(again.plan_hash(), plan.plan_hash());
    }
});
