use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DomainId, Frame, Observation};
use crate::error::{Error, Result, ResultExt};

pub const MAGIC: &[u8; 4] = b"ROBS";
const HEADER_LEN: usize = 4 + 4 * 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub domain: DomainId,
    pub frame_ids: Vec<u64>,
    pub progress: Vec<f64>,
    /// Free-form collection details (source checkpoints, seeds, counts).
    #[serde(default)]
    pub collection: serde_json::Value,
}

/// An in-memory set of equally sized RGB frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStore {
    width: usize,
    height: usize,
    frames: Vec<Frame>,
    meta: StoreMeta,
}

impl ObservationStore {
    pub fn new(domain: DomainId) -> Self {
        Self {
            width: 0,
            height: 0,
            frames: Vec::new(),
            meta: StoreMeta {
                domain,
                frame_ids: Vec::new(),
                progress: Vec::new(),
                collection: serde_json::Value::Null,
            },
        }
    }

    pub fn from_observations(domain: DomainId, observations: Vec<Observation>) -> Result<Self> {
        let mut store = Self::new(domain);
        for obs in observations {
            store.push(obs)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if self.frames.is_empty() {
            self.width = obs.frame.width();
            self.height = obs.frame.height();
        } else if obs.frame.width() != self.width || obs.frame.height() != self.height {
            return Err(Error::Dimension(format!(
                "store holds {}x{} frames, got {}x{}",
                self.width,
                self.height,
                obs.frame.width(),
                obs.frame.height()
            )));
        }
        self.meta.frame_ids.push(obs.frame_id);
        self.meta.progress.push(obs.progress);
        self.frames.push(obs.frame);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn frame_id(&self, i: usize) -> u64 {
        self.meta.frame_ids[i]
    }

    pub fn meta(&self) -> &StoreMeta {
        &self.meta
    }

    pub fn set_collection_info(&mut self, info: serde_json::Value) {
        self.meta.collection = info;
    }

    pub fn observation(&self, i: usize) -> Observation {
        Observation {
            frame: self.frames[i].clone(),
            frame_id: self.meta.frame_ids[i],
            domain: self.meta.domain.clone(),
            progress: self.meta.progress[i],
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let frame_len = self.width * self.height * 3;
        let mut out = Vec::with_capacity(HEADER_LEN + frame_len * self.len());
        out.extend_from_slice(MAGIC);
        for v in [self.len(), self.height, self.width, 3] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for f in &self.frames {
            out.extend_from_slice(f.data());
        }
        out
    }

    pub fn decode(bytes: &[u8], meta: StoreMeta, path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "not an observation store"));
        }
        let field = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (count, h, w, c) = (field(0), field(1), field(2), field(3));
        if c != 3 {
            return Err(Error::format(path, format!("expected 3 channels, header says {c}")));
        }
        let frame_len = h * w * 3;
        if bytes.len() != HEADER_LEN + frame_len * count {
            return Err(Error::format(path, format!("size does not match {count} frames of {h}x{w}")));
        }
        if meta.frame_ids.len() != count || meta.progress.len() != count {
            return Err(Error::format(path, "sidecar metadata does not match the frame count"));
        }
        let mut frames = Vec::with_capacity(count);
        for chunk in bytes[HEADER_LEN..].chunks_exact(frame_len.max(1)).take(count) {
            frames.push(Frame::new(w, h, chunk.to_vec())?);
        }
        Ok(Self {
            width: if count == 0 { 0 } else { w },
            height: if count == 0 { 0 } else { h },
            frames,
            meta,
        })
    }

    /// Writes `path` and a JSON sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
        file.write_all(&self.encode())?;
        file.flush()?;
        let sidecar = sidecar_path(path);
        fs::write(&sidecar, serde_json::to_vec_pretty(&self.meta)?)
            .with_context(|| format!("writing {}", sidecar.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let sidecar = sidecar_path(path);
        let meta: StoreMeta = serde_json::from_slice(
            &fs::read(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?,
        )
        .map_err(|e| Error::format(&sidecar, e.to_string()))?;
        Self::decode(&bytes, meta, path)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}
