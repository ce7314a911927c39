#![no_main]
use auditkit::design::{enumerate_cells, AuditDesign};
use auditkit::diagnosis::DecisionModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = DecisionModel::from_json_slice(data) else { return };
    let design = AuditDesign::paper();
    let cells = enumerate_cells(&design).unwrap();
    if let Ok(rates) = model.cell_rates(&design, &cells) {
        assert_eq!(rates.len(), cells.len());
        assert!(rates.iter().all(|p| (0.0..=1.0).contains(p)));
    }
});
