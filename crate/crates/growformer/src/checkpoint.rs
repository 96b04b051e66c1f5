//! The `GRWF` checkpoint format.
//!
//! ```text
//! "GRWF"                      4 bytes
//! version                     u32 LE (= 1)
//! config length, config       u32 LE, UTF-8 TOML (ModelConfig)
//! manifest length, manifest   u32 LE, UTF-8 TOML ([[tensor]] tables)
//! payload                     little-endian f32, row-major, manifest order
//! ```
//!
//! Each manifest entry carries the tensor name, shape, byte offset into the
//! payload, byte length and the SHA-256 of those bytes. Offsets are
//! contiguous and follow the canonical tensor order.

use std::fs;
use std::io::Write;
use std::path::Path;

use growformer_core::transformer::TensorId;
use growformer_core::{ModelConfig, ParamSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 4] = b"GRWF";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a GRWF checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("tensor {name}: checksum mismatch")]
    Checksum { name: String },
    #[error("tensor {name}: {detail}")]
    Shape { name: String, detail: String },
    #[error(transparent)]
    Model(#[from] growformer_core::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    length: u64,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tensor: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn header_err(e: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Header(e.to_string())
}

/// Serializes a model; identical models give identical bytes.
pub fn to_bytes(config: &ModelConfig, params: &ParamSet) -> Result<Vec<u8>> {
    params.validate(config)?;
    let mut payload = Vec::new();
    let mut entries = Vec::new();
    for id in TensorId::all(config.layers) {
        let start = payload.len();
        for v in params.get(id) {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: id.to_string(),
            shape: id.shape(config),
            offset: start as u64,
            length: (payload.len() - start) as u64,
            sha256: sha256_hex(&payload[start..]),
        });
    }
    let config_text = toml::to_string(config).map_err(header_err)?;
    let manifest_text = toml::to_string(&Manifest { tensor: entries }).map_err(header_err)?;
    let mut out = Vec::with_capacity(16 + config_text.len() + manifest_text.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for text in [&config_text, &manifest_text] {
        let len = u32::try_from(text.len()).map_err(|_| header_err("header section too large"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(text.as_bytes());
    }
    out.extend_from_slice(&payload);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn text(&mut self, what: &'static str) -> Result<&'a str> {
        let n = self.u32(what)? as usize;
        std::str::from_utf8(self.take(n, what)?).map_err(header_err)
    }
}

/// Parses and fully validates a checkpoint.
pub fn from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ParamSet)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let config: ModelConfig = toml::from_str(r.text("config")?).map_err(header_err)?;
    config.validate()?;
    let manifest: Manifest = toml::from_str(r.text("manifest")?).map_err(header_err)?;
    let payload = &bytes[r.pos..];

    let ids = TensorId::all(config.layers);
    if manifest.tensor.len() != ids.len() {
        return Err(header_err(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensor.len(),
            ids.len()
        )));
    }
    let mut params = ParamSet::zeros(&config);
    let mut expected_offset = 0u64;
    for (entry, id) in manifest.tensor.iter().zip(ids) {
        let name = entry.name.clone();
        if entry.name != id.to_string() {
            return Err(header_err(format!("expected tensor {id}, found {}", entry.name)));
        }
        let shape = id.shape(&config);
        if entry.shape != shape {
            return Err(CheckpointError::Shape {
                name,
                detail: format!("shape {:?}, config implies {:?}", entry.shape, shape),
            });
        }
        let numel: usize = shape.iter().product();
        if entry.length != 4 * numel as u64 || entry.offset != expected_offset {
            return Err(CheckpointError::Shape {
                name,
                detail: format!("bytes {}+{} do not tile the payload", entry.offset, entry.length),
            });
        }
        expected_offset += entry.length;
        let (start, end) = (entry.offset as usize, (entry.offset + entry.length) as usize);
        let data = payload.get(start..end).ok_or(CheckpointError::Truncated("payload"))?;
        if sha256_hex(data) != entry.sha256 {
            return Err(CheckpointError::Checksum { name });
        }
        for (dst, chunk) in params.get_mut(id).iter_mut().zip(data.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    if expected_offset != payload.len() as u64 {
        return Err(header_err(format!(
            "{} trailing payload bytes",
            payload.len() as u64 - expected_offset
        )));
    }
    params.validate(&config)?;
    Ok((config, params))
}

/// Writes atomically: a temporary file in the same directory, then rename.
pub fn save(config: &ModelConfig, params: &ParamSet, path: &Path) -> Result<()> {
    write_atomic(path, &to_bytes(config, params)?)
}

pub fn load(path: &Path) -> Result<(ModelConfig, ParamSet)> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_bytes(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}
