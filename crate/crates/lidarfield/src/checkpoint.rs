//! Single-file model checkpoints.
//!
//! Layout: the 8-byte magic, a little-endian `u32` version, a `u64` header
//! length, a JSON header with every hyperparameter, the scene normalization
//! and the submap local-to-world transform, then the `u64` parameter count
//! and the parameters as little-endian `f64`. Round trips are bit-exact.

use std::path::Path;

use lidarfield_core::field::{FieldConfig, RadianceField, SceneNormalization};
use lidarfield_core::train::TrainConfig;
use lidarfield_core::trajectory::Sim3;
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};

pub const MAGIC: &[u8; 8] = b"LFIELD\0\x01";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Maps the model's coordinates to world coordinates.
    pub local_to_world: Sim3,
    /// Cluster index for submap models.
    pub cluster: Option<usize>,
    /// Frames the model was trained on.
    pub frame_ids: Vec<usize>,
    pub iteration: usize,
    pub train: Option<TrainConfig>,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self {
            local_to_world: Sim3::identity(),
            cluster: None,
            frame_ids: Vec::new(),
            iteration: 0,
            train: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    field: FieldConfig,
    normalization: SceneNormalization,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub field: RadianceField,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(field: RadianceField, meta: CheckpointMeta) -> Self {
        Self { field, meta }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            field: self.field.config().clone(),
            normalization: *self.field.normalization(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let params = self.field.params();
        let mut out = Vec::with_capacity(28 + json.len() + params.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a model checkpoint".into());
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(len)?).map_err(|e| format!("bad header: {e}"))?;
        let n = r.u64()? as usize;
        let raw = r.take(n.checked_mul(8).ok_or("parameter count overflows")?)?;
        if r.pos != bytes.len() {
            return Err("trailing bytes after parameters".into());
        }
        let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let field = RadianceField::from_params(header.field, header.normalization, params).map_err(|e| e.to_string())?;
        Ok(Self {
            field,
            meta: header.meta,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or("checkpoint is truncated")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write(path, &ckpt.to_bytes())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read(path)?).map_err(|m| Error::format(path, m))
}
