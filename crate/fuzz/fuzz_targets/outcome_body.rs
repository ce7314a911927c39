#![no_main]
use auditkit::ledger::OutcomeSubmission;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = serde_json::from_slice::<OutcomeSubmission>(data) {
        let obs = body.into_observation("a-0000000000000000-0");
        assert!(obs.notes.as_deref().is_none_or(|n| !n.trim().is_empty()));
    }
});
