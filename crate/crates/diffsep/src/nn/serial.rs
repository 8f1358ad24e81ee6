//! Model file format: a single binary container.
//!
//! ```text
//! magic   b"DSEPMODL"
//! version u32 = 1
//! config  u32 length + key-value text
//! fourier u32 count + f32 LE frequencies
//! params  u32 count, then per parameter:
//!         u32 name length + name bytes,
//!         u32 batch, u32 channels, u32 len,
//!         f32 LE data (batch * channels * len values)
//! ```
//!
//! Parameters are stored and matched by name, so the on-disk order does not
//! matter; any missing, extra, or reshaped entry is a structured error.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, SeparationModel};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DSEPMODL";
const VERSION: u32 = 1;

pub fn save_model(path: impl AsRef<Path>, model: &SeparationModel<f32>) -> Result<()> {
    let path = path.as_ref();
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());

    let config = model.config.to_kv().serialize();
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());

    out.extend_from_slice(&(model.fourier_freqs.len() as u32).to_le_bytes());
    for f in &model.fourier_freqs {
        out.extend_from_slice(&f.to_le_bytes());
    }

    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, name, tensor) in model.store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (b, c, l) = tensor.shape();
        out.extend_from_slice(&(b as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        out.extend_from_slice(&(l as u32).to_le_bytes());
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    let tmp = path.with_extension("model.tmp");
    fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::ModelFormat {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.fail(format!("truncated at offset {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SeparationModel<f32>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };

    if cur.take(8)? != MAGIC {
        return Err(cur.fail("not a model file (bad magic)"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(cur.fail(format!(
            "unsupported version {version} (this build reads {VERSION})"
        )));
    }

    let config_len = cur.u32()? as usize;
    let config_text = std::str::from_utf8(cur.take(config_len)?)
        .map_err(|_| cur.fail("config block is not utf-8"))?;
    let config = ModelConfig::from_kv(&KvMap::parse(config_text)?)?;

    let mut model = SeparationModel::<f32>::new(config, 0)?;

    let n_freqs = cur.u32()? as usize;
    if n_freqs != model.fourier_freqs.len() {
        return Err(cur.fail(format!(
            "fourier table has {n_freqs} entries, config implies {}",
            model.fourier_freqs.len()
        )));
    }
    for f in model.fourier_freqs.iter_mut() {
        *f = cur.f32()?;
    }

    let n_params = cur.u32()? as usize;
    if n_params != model.store.len() {
        return Err(cur.fail(format!(
            "file has {n_params} parameters, architecture has {}",
            model.store.len()
        )));
    }
    let by_name: HashMap<String, crate::tensor::ParamId> = model
        .store
        .iter()
        .map(|(id, name, _)| (name.to_string(), id))
        .collect();
    let mut seen = vec![false; model.store.len()];
    for _ in 0..n_params {
        let name_len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| cur.fail("parameter name is not utf-8"))?
            .to_string();
        let b = cur.u32()? as usize;
        let c = cur.u32()? as usize;
        let l = cur.u32()? as usize;
        let id = *by_name
            .get(&name)
            .ok_or_else(|| cur.fail(format!("unknown parameter `{name}`")))?;
        if seen[id.index()] {
            return Err(cur.fail(format!("duplicate parameter `{name}`")));
        }
        seen[id.index()] = true;
        let expect = model.store.get(id).shape();
        if expect != (b, c, l) {
            return Err(cur.fail(format!(
                "parameter `{name}`: file shape ({b}, {c}, {l}) vs architecture {expect:?}"
            )));
        }
        let mut data = vec![0.0f32; b * c * l];
        for v in &mut data {
            *v = cur.f32()?;
        }
        *model.store.get_mut(id) = Tensor::from_vec(b, c, l, data)?;
    }

    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{tensor_from_audio, ModelConfig};
    use crate::rng;
    use crate::tensor::Tensor;

    #[test]
    fn save_load_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dsep");
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 99).unwrap();
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(model.config, back.config);
        assert_eq!(model.fourier_freqs, back.fourier_freqs);
        for ((_, na, ta), (_, nb, tb)) in model.store.iter().zip(back.store.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
    }

    #[test]
    fn forward_identical_after_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dsep");
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 3).unwrap();
        save_model(&path, &model).unwrap();
        let back = load_model(&path).unwrap();

        let d = model.config.total_downsample();
        let mut x = Tensor::zeros(1, 1, 4 * d);
        rng::fill_standard_normal(&mut rng::stream(1, "serial", 0), x.data_mut());
        let c = crate::audio::AudioBuffer::from_fn(1, 4 * d, 8_000, |_, i| (i as f32 * 0.01).sin());
        let ct = tensor_from_audio::<f32>(&c);
        let fa = model.condition_features(&ct).unwrap();
        let fb = back.condition_features(&ct).unwrap();
        let va = model.predict_v_tensor(&x, &[0.4], &fa).unwrap();
        let vb = back.predict_v_tensor(&x, &[0.4], &fb).unwrap();
        assert_eq!(va, vb);
    }

    #[test]
    fn version_and_corruption_are_structured_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.dsep");
        let model = SeparationModel::<f32>::new(ModelConfig::tiny(), 5).unwrap();
        save_model(&path, &model).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 9; // bump version field
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelFormat { .. })));

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_model(&path).is_err());
    }
}
