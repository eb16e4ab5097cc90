#![no_main]

use layerscope::container::Container;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = Container::decode(data) {
        assert_eq!(c.encode(), data);
    }
});
