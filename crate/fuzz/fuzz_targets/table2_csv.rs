#![no_main]
use auditkit::ledger::{parse_table2_csv, reconstruct_reference_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = parse_table2_csv(data) else { return };
    if rows.iter().map(|r| r.n as u64).sum::<u64>() > 100_000 {
        return;
    }
    if let Ok(rec) = reconstruct_reference_dataset(&rows) {
        assert_eq!(rec.published.len(), rows.len());
        for (row, k) in rows.iter().zip(&rec.published) {
            assert!(*k <= row.n);
        }
    }
});
