#![no_main]
use auditkit::prompts::{parse_prompts_jsonl, prompts_to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(prompts) = parse_prompts_jsonl(text) {
        assert_eq!(parse_prompts_jsonl(&prompts_to_jsonl(&prompts)).unwrap(), prompts);
    }
});
