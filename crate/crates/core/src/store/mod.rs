//! On-disk inputs (frame matrices, alignments, manifests) and segment pooling.

mod align;
mod frame;
mod manifest;
mod pool;
mod reference;
mod table;

pub use align::{load_alignments, parse_alignments, SegmentRecord, Tier};
pub use frame::{read_frame_matrix, write_frame_matrix, FrameMatrix};
pub use manifest::{CorpusManifest, UtteranceEntry, DEFAULT_FRAME_HOP_S};
pub use pool::{pool_segment, time_to_frame_span, FrameSpan, PoolMethod};
pub use reference::ReferenceVectors;
pub use table::{build_segment_table, SegmentId, SegmentMeta, SegmentTable, TableBuild};
