#![no_main]

use layerscope::config::{parse_layer_range, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = RunConfig::from_json_str(text) {
        assert!(!cfg.datasets.is_empty());
        let _ = cfg.hash();
    }
    if let Ok(layers) = parse_layer_range(text) {
        assert!(layers.windows(2).all(|w| w[0] < w[1]));
    }
});
