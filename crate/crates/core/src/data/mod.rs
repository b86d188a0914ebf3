//! Audio ingestion, segmentation, and the synthetic corpus generator.

mod corpus;
mod segment;
pub mod synth;
mod wav;

pub use corpus::{
    read_corpus, read_manifest, synthesize_corpus, synthesize_utterance, write_corpus,
    ChannelKind, ChannelModel, ManifestEntry, Task, Utterance, MANIFEST,
};
pub use segment::{
    peak, peak_normalize, segment_and_normalize, segment_recording, MultichannelSegment,
    NormalizeScope, DEFAULT_SEGMENT_LENGTH,
};
pub use synth::NoiseKind;
pub use wav::{load_wav, save_wav, Audio, Encoding};
