use serde::{Deserialize, Serialize};

use super::frame::FrameMatrix;
use crate::error::{Error, Result};

/// Slack used when converting times to frame indices, so that values like
/// `0.06 / 0.02 = 2.9999999999999996` floor to the intended frame.
const FRAME_EPS: f64 = 1e-9;

/// Half-open frame range `[first, last_exclusive)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpan {
    pub first: usize,
    pub last_exclusive: usize,
}

impl FrameSpan {
    pub fn len(&self) -> usize {
        self.last_exclusive - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last_exclusive <= self.first
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMethod {
    #[default]
    Mean,
}

/// Maps `[start_s, end_s)` onto frames by flooring against the hop. The span
/// always holds at least one frame and is clamped to the matrix length.
pub fn time_to_frame_span(
    start_s: f64,
    end_s: f64,
    frame_hop_s: f64,
    num_frames: usize,
) -> Result<FrameSpan> {
    if !(frame_hop_s.is_finite() && frame_hop_s > 0.0) {
        return Err(Error::Parameter(format!("frame hop must be > 0, got {frame_hop_s}")));
    }
    if num_frames == 0 {
        return Err(Error::Parameter("num_frames must be > 0".into()));
    }
    if !(start_s.is_finite() && end_s.is_finite() && start_s >= 0.0 && start_s < end_s) {
        return Err(Error::Parameter(format!(
            "invalid segment times [{start_s}, {end_s})"
        )));
    }
    let to_frame = |t: f64| (t / frame_hop_s + FRAME_EPS).floor() as usize;
    let first = to_frame(start_s);
    if first >= num_frames {
        return Err(Error::Data(format!(
            "segment starting at {start_s}s lies beyond the embedding ({num_frames} frames of {frame_hop_s}s)"
        )));
    }
    let last_exclusive = to_frame(end_s).max(first + 1).min(num_frames);
    Ok(FrameSpan {
        first,
        last_exclusive,
    })
}

/// Mean-pools the frames of `span` into one `f64` vector.
pub fn pool_segment(matrix: &FrameMatrix, span: FrameSpan, method: PoolMethod) -> Result<Vec<f64>> {
    if span.is_empty() || span.last_exclusive > matrix.num_frames() {
        return Err(Error::Parameter(format!(
            "span [{}, {}) out of bounds for {} frames",
            span.first,
            span.last_exclusive,
            matrix.num_frames()
        )));
    }
    match method {
        PoolMethod::Mean => {
            let mut acc = vec![0.0f64; matrix.dim()];
            for frame in span.first..span.last_exclusive {
                for (a, &v) in acc.iter_mut().zip(matrix.row(frame)) {
                    *a += f64::from(v);
                }
            }
            let n = span.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            Ok(acc)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn span(a: usize, b: usize) -> FrameSpan {
        FrameSpan {
            first: a,
            last_exclusive: b,
        }
    }

    #[test]
    fn span_examples() {
        assert_eq!(time_to_frame_span(0.10, 0.20, 0.02, 100).unwrap(), span(5, 10));
        assert_eq!(time_to_frame_span(0.00, 0.01, 0.02, 100).unwrap(), span(0, 1));
        assert_eq!(time_to_frame_span(1.99, 2.00, 0.02, 100).unwrap(), span(99, 100));
        // end a few ms past the matrix is clamped
        assert_eq!(time_to_frame_span(1.90, 2.05, 0.02, 100).unwrap(), span(95, 100));
        assert_eq!(time_to_frame_span(0.06, 0.12, 0.02, 100).unwrap(), span(3, 6));
    }

    #[test]
    fn span_out_of_range() {
        assert!(matches!(
            time_to_frame_span(2.0, 2.1, 0.02, 100),
            Err(Error::Data(_))
        ));
        assert!(time_to_frame_span(0.2, 0.1, 0.02, 100).is_err());
        assert!(time_to_frame_span(0.1, 0.2, 0.0, 100).is_err());
    }

    #[test]
    fn pooling_examples() {
        let m = FrameMatrix::from_rows(0, &[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(pool_segment(&m, span(0, 1), PoolMethod::Mean).unwrap(), vec![1.0, 3.0]);
        assert_eq!(pool_segment(&m, span(0, 2), PoolMethod::Mean).unwrap(), vec![2.0, 4.0]);
        let v = vec![0.25, -1.5, 7.0];
        let same = FrameMatrix::from_rows(0, &[v.clone(), v.clone(), v.clone()]).unwrap();
        assert_eq!(pool_segment(&same, span(0, 3), PoolMethod::Mean).unwrap(), v);
        assert!(pool_segment(&m, span(1, 3), PoolMethod::Mean).is_err());
    }

    proptest! {
        #[test]
        fn positive_length_segments_get_frames(
            start in 0.0f64..3.0, len in 1e-6f64..1.0, frames in 1usize..200
        ) {
            let hop = 0.02;
            match time_to_frame_span(start, start + len, hop, frames) {
                Ok(s) => {
                    prop_assert!(s.first < s.last_exclusive);
                    prop_assert!(s.last_exclusive <= frames);
                }
                Err(_) => prop_assert!(start / hop + FRAME_EPS >= frames as f64),
            }
        }

        #[test]
        fn pooling_is_linear(
            rows in prop::collection::vec(prop::collection::vec(-100i32..100, 3), 1..6),
            alpha in -4i32..4,
        ) {
            // small integers scaled by powers of two keep f32 storage exact
            let base: Vec<Vec<f64>> =
                rows.iter().map(|r| r.iter().map(|&v| v as f64 / 8.0).collect()).collect();
            let scaled: Vec<Vec<f64>> =
                base.iter().map(|r| r.iter().map(|v| v * alpha as f64).collect()).collect();
            let s = span(0, base.len());
            let p = pool_segment(&FrameMatrix::from_rows(0, &base).unwrap(), s, PoolMethod::Mean).unwrap();
            let q = pool_segment(&FrameMatrix::from_rows(0, &scaled).unwrap(), s, PoolMethod::Mean).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a * alpha as f64 - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }
}
