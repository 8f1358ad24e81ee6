//! Audio file I/O and dataset discovery.

mod dataset;
mod wav;

pub use dataset::{scan_dataset, DatasetItem, DatasetLayout};
pub use wav::{probe_wav, read_wav, write_wav, WavFormat};
