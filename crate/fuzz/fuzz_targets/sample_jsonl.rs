#![no_main]

use layerscope::report::results_from_jsonl;
use layerscope::sampling::{SampleSet, TripletSet};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(s) = SampleSet::from_jsonl(text) {
        let again = SampleSet::from_jsonl(&s.to_jsonl().unwrap()).unwrap();
        assert_eq!(again, s);
    }
    if let Ok(t) = TripletSet::from_jsonl(text) {
        let again = TripletSet::from_jsonl(&t.to_jsonl().unwrap()).unwrap();
        assert_eq!(again, t);
    }
    let _ = results_from_jsonl(text);
});
