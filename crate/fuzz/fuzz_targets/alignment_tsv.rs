#![no_main]

use layerscope::store::parse_alignments;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_alignments(text, "fuzz") {
        for r in records {
            assert!(r.end_s > r.start_s && r.start_s >= 0.0);
            assert!(!r.label.is_empty());
        }
    }
});
