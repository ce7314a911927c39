#![no_main]
use auditkit::dataset::AnalysisTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = AnalysisTable::from_csv(data) {
        let again = AnalysisTable::from_csv(table.to_csv().as_bytes()).unwrap();
        assert_eq!(again, table);
    }
});
