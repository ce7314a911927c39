#![no_main]
use auditkit::ingest::{parse_fixture, serialize_fixture, SubjectKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let kind = [SubjectKind::Candidate, SubjectKind::Album, SubjectKind::Park, SubjectKind::Parade]
        [selector as usize % 4];
    if let Ok(records) = parse_fixture(kind, text) {
        let again = parse_fixture(kind, &serialize_fixture(&records)).unwrap();
        assert_eq!(again, records);
    }
});
