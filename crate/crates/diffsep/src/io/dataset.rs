//! Paired-stem dataset discovery: `<root>/<track>/{mixture.wav, vocals.wav}`.

use std::path::{Path, PathBuf};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::wav;

/// Dataset directory layouts. Only paired subdirectories are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetLayout {
    PairedSubdirs,
}

/// One mixture/vocals pair, validated at scan time.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub name: String,
    pub mixture_path: PathBuf,
    pub target_path: PathBuf,
    pub duration_seconds: f64,
    pub sample_rate: u32,
    pub channels: usize,
    /// Common length in samples (files may differ by at most one sample; the
    /// excess is trimmed at load).
    pub frames: usize,
}

impl DatasetItem {
    /// Load the pair, trimmed to the common length.
    pub fn load(&self) -> Result<(AudioBuffer, AudioBuffer)> {
        let mixture = wav::read_wav(&self.mixture_path)?.slice(0, self.frames)?;
        let vocals = wav::read_wav(&self.target_path)?.slice(0, self.frames)?;
        Ok((mixture, vocals))
    }
}

/// Scan `root` for track folders, in lexicographic order. Folders that fail
/// validation are logged and skipped; an entirely invalid root is an error.
pub fn scan_dataset(root: impl AsRef<Path>, layout: DatasetLayout) -> Result<Vec<DatasetItem>> {
    let DatasetLayout::PairedSubdirs = layout;
    let root = root.as_ref();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut items = Vec::new();
    for dir in dirs {
        match validate_track(&dir) {
            Ok(item) => items.push(item),
            Err(reason) => log::warn!("skipping {}: {reason}", dir.display()),
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no valid mixture/vocals pairs under {}",
            root.display()
        )));
    }
    Ok(items)
}

fn validate_track(dir: &Path) -> std::result::Result<DatasetItem, String> {
    let mixture_path = dir.join("mixture.wav");
    let target_path = dir.join("vocals.wav");
    if !mixture_path.is_file() {
        return Err("missing mixture.wav".into());
    }
    if !target_path.is_file() {
        return Err("missing vocals.wav".into());
    }
    let (m_ch, m_rate, m_len) =
        wav::probe_wav(&mixture_path).map_err(|e| format!("mixture.wav: {e}"))?;
    let (v_ch, v_rate, v_len) =
        wav::probe_wav(&target_path).map_err(|e| format!("vocals.wav: {e}"))?;
    if m_rate != v_rate {
        return Err(format!("sample rate mismatch ({m_rate} vs {v_rate})"));
    }
    if m_ch != v_ch {
        return Err(format!("channel count mismatch ({m_ch} vs {v_ch})"));
    }
    if m_len.abs_diff(v_len) > 1 {
        return Err(format!("length mismatch beyond one sample ({m_len} vs {v_len})"));
    }
    let frames = m_len.min(v_len);
    Ok(DatasetItem {
        name: dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        mixture_path,
        target_path,
        duration_seconds: frames as f64 / m_rate as f64,
        sample_rate: m_rate,
        channels: m_ch,
        frames,
    })
}
