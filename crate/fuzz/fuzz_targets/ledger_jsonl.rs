#![no_main]
use auditkit::ledger::{parse_and_verify, Ledger};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(entries) = parse_and_verify(data) else { return };
    if let Ok(ledger) = Ledger::from_entries(entries) {
        assert_eq!(ledger.to_jsonl(), data);
        let _ = ledger.export_dataset();
        let _ = ledger.progress();
    }
});
