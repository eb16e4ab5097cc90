#![no_main]

use layerscope::store::CorpusManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(m) = CorpusManifest::from_json_str(text) {
        assert!(!m.layers.is_empty());
        assert!(m.frame_hop_s > 0.0);
    }
});
