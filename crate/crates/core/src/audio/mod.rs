//! Waveform ingestion, MFCC extraction and the feature archive.

mod archive;
mod features;
mod mfcc;
mod wav;

pub use archive::{index_path, read_archive, write_archive, Archive};
pub use features::{FeatureKind, FeatureMatrix};
pub use mfcc::{
    append_deltas, compute_mfcc, dct_matrix, frame_count, frame_signal, hz_to_mel, mel_to_hz,
    stft_power, FeatureConfig, MelFilterbank, FFT_SIZE,
};
pub use wav::{load_wav, probe_wav, read_wav, write_wav, Waveform};
