#![no_main]

use layerscope::store::{FrameMatrix, ReferenceVectors};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, 1.0, -1.0]).collect();
    let matrix = FrameMatrix::from_rows(0, &rows).unwrap();
    if let Ok(r) = ReferenceVectors::from_parts(&matrix, text) {
        for (_, v) in r.iter() {
            assert_eq!(v.len(), 3);
        }
    }
});
