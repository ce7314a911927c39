#![no_main]
use auditkit::design::Cell;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cell) = Cell::parse_id(text) {
        assert_eq!(cell.id(), text);
    }
});
