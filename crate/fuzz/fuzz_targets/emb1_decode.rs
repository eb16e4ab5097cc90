#![no_main]

use layerscope::store::FrameMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = FrameMatrix::decode(data) {
        assert!(m.data().iter().all(|v| v.is_finite()));
        assert_eq!(m.encode(), data);
    }
});
