//! `ASCP` checkpoint files.
//!
//! Layout: magic `ASCP`, `u32` format version, `u64` descriptor length,
//! the JSON descriptor, then every tensor listed in the descriptor as
//! little-endian `f64` values in listed order. All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blocks::{ArchCode, Model, NetworkConfig, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ASCP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Model,
    Supernet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: CheckpointKind,
    /// Architecture in text form; absent for SuperNets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<String>,
    pub network: NetworkConfig,
    pub params: Vec<TensorEntry>,
    pub buffers: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub arch: Option<ArchCode>,
    pub network: NetworkConfig,
    pub store: ParamStore,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            kind: CheckpointKind::Model,
            arch: Some(model.arch),
            network: model.cfg.clone(),
            store: model.store.clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let arch = self
            .arch
            .ok_or_else(|| Error::Format("checkpoint holds a SuperNet, not a single model".into()))?;
        Model::from_store(arch, self.network, self.store)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let entries = |it: &mut dyn Iterator<Item = (&String, &Tensor)>| -> Vec<TensorEntry> {
            it.map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect()
        };
        let desc = Descriptor {
            kind: self.kind,
            arch: self.arch.map(|a| a.to_string()),
            network: self.network.clone(),
            params: entries(&mut self.store.params()),
            buffers: entries(&mut self.store.buffers()),
        };
        let json = serde_json::to_vec(&desc)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in self.store.params().chain(self.store.buffers()) {
            let mut buf = Vec::with_capacity(t.numel() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!("bad checkpoint magic {magic:?}, expected ASCP")));
        }
        let mut b4 = [0u8; 4];
        read_exact(&mut r, &mut b4, "version")?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let mut b8 = [0u8; 8];
        read_exact(&mut r, &mut b8, "descriptor length")?;
        let len = usize::try_from(u64::from_le_bytes(b8))
            .map_err(|_| Error::Format("descriptor length overflows".into()))?;
        let mut json = vec![0u8; len];
        read_exact(&mut r, &mut json, "descriptor")?;
        let desc: Descriptor = serde_json::from_slice(&json)?;
        let arch = desc.arch.as_deref().map(str::parse::<ArchCode>).transpose()?;
        if (desc.kind == CheckpointKind::Model) != arch.is_some() {
            return Err(Error::Format("model checkpoints must name exactly one architecture".into()));
        }

        let mut store = ParamStore::default();
        let mut read_tensor = |e: &TensorEntry| -> Result<Tensor> {
            let n: usize = e.shape.iter().product();
            let mut raw = vec![0u8; n * 8];
            read_exact(&mut r, &mut raw, &e.name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Tensor::new(e.shape.clone(), data)
        };
        for e in &desc.params {
            let t = read_tensor(e)?;
            store.insert_param(e.name.clone(), t);
        }
        for e in &desc.buffers {
            let t = read_tensor(e)?;
            store.insert_buffer(e.name.clone(), t);
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after the last tensor", rest.len())));
        }
        Ok(Checkpoint {
            kind: desc.kind,
            arch,
            network: desc.network,
            store,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("checkpoint truncated while reading {what}")))
}
