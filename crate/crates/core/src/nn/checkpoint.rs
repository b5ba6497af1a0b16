//! `RDNN` checkpoint files.
//!
//! Layout (little endian): magic `RDNN`, `u32` version, `u32` layer count,
//! then for every layer its weight and bias tensors, each written as
//! `u32` rank, `u32` dims, and the `f32` values. A JSON sidecar next to the
//! binary (same stem, `.json`) holds the architecture and the seed.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{NetSpec, Parameters, PolicyNet, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RDNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub architecture: NetSpec,
    pub seed: u64,
    #[serde(default)]
    pub iteration: Option<usize>,
    #[serde(default)]
    pub note: Option<String>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(net: &PolicyNet<f32>) -> Vec<u8> {
    let params = net.parameters();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&((params.len() / 2) as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Option<&[u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8], spec: &NetSpec, path: &Path) -> Result<PolicyNet<f32>> {
    let bad = |msg: &str| Error::format(path, msg);
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("missing RDNN magic"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let layers = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut tensors = Vec::with_capacity(layers * 2);
    for _ in 0..layers * 2 {
        let rank = r.u32().ok_or_else(|| bad("truncated tensor header"))? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated tensor shape"))?;
        let count: usize = shape.iter().product();
        let raw = r.take(count * 4).ok_or_else(|| bad("truncated tensor data"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::from_vec(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after last layer"));
    }
    PolicyNet::from_tensors(spec, tensors)
}

pub fn save(net: &PolicyNet<f32>, path: &Path, meta: &CheckpointMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path)?.write_all(&encode(net))?;
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(PolicyNet<f32>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let net = decode(&bytes, &meta.architecture, path)?;
    Ok((net, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::glorot_init;

    #[test]
    fn round_trip_is_bit_identical() {
        let spec = NetSpec::standard(48, 64, 7);
        let net: PolicyNet<f32> = glorot_init(&spec, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iteration_0001.rdnn");
        let meta = CheckpointMeta {
            architecture: spec.clone(),
            seed: 21,
            iteration: Some(1),
            note: None,
        };
        save(&net, &path, &meta).unwrap();
        let (back, m) = load(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back, net);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"RDNN");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let spec = NetSpec::standard(48, 64, 7);
        let net: PolicyNet<f32> = glorot_init(&spec, 1).unwrap();
        let bytes = encode(&net);
        let p = Path::new("x.rdnn");
        assert!(decode(&bytes[..bytes.len() - 1], &spec, p).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode(&wrong, &spec, p).is_err());
        let other = NetSpec::standard(48, 64, 8);
        assert!(decode(&bytes, &other, p).is_err());
    }
}
