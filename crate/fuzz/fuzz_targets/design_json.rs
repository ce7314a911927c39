#![no_main]
use auditkit::design::{enumerate_cells, validate_design, AuditDesign, Cell};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(design) = AuditDesign::from_json_slice(data) else { return };
    let violations = validate_design(&design);
    match enumerate_cells(&design) {
        Ok(cells) => {
            assert!(violations.is_empty());
            for cell in cells {
                assert_eq!(Cell::parse_id(&cell.id()).unwrap(), cell);
            }
        }
        Err(_) => assert!(!violations.is_empty()),
    }
});
