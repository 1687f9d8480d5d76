//! Self-describing binary container for tables and sector states.
//!
//! Layout: the magic bytes `QLBT`, a little-endian u32 header length, a
//! UTF-8 JSON header, then every block as little-endian f64 (re, im)
//! pairs in header order. The header carries the format name, version,
//! content kind, metadata, block names and lengths, and the SHA-256 of
//! the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "qlbt";
pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"QLBT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Kernel,
    State,
}

/// Decoded container contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub meta: Value,
    pub blocks: Vec<(String, Vec<Complex64>)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: ContainerKind,
    meta: Value,
    blocks: Vec<BlockInfo>,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    len: usize,
}

fn payload(blocks: &[(String, Vec<Complex64>)]) -> Vec<u8> {
    let n: usize = blocks.iter().map(|b| b.1.len()).sum();
    let mut out = Vec::with_capacity(16 * n);
    for (_, v) in blocks {
        for z in v {
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_container(path: &Path, c: &Container) -> Result<()> {
    let body = payload(&c.blocks);
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: c.kind,
        meta: c.meta.clone(),
        blocks: c.blocks.iter().map(|(n, v)| BlockInfo { name: n.clone(), len: v.len() }).collect(),
        sha256: hex_digest(&body),
    };
    let head = serde_json::to_vec(&header)?;
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(head.len() as u32).to_le_bytes())?;
    f.write_all(&head)?;
    f.write_all(&body)?;
    f.flush()?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{} is not a table container", path.display())));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes")) as usize;
    let head = bytes.get(8..8 + hlen).ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(head)?;
    if header.format != FORMAT_NAME {
        return Err(Error::Format(format!("unknown format '{}'", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let body = &bytes[8 + hlen..];
    let found = hex_digest(body);
    if found != header.sha256 {
        return Err(Error::ChecksumMismatch { expected: header.sha256, found });
    }
    let total: usize = header.blocks.iter().map(|b| b.len).sum();
    if body.len() != 16 * total {
        return Err(Error::Format(format!("payload holds {} bytes, header lists {}", body.len(), 16 * total)));
    }
    let mut blocks = Vec::with_capacity(header.blocks.len());
    let mut pos = 0;
    for b in header.blocks {
        let v = body[pos..pos + 16 * b.len]
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().expect("eight bytes")),
                    f64::from_le_bytes(c[8..].try_into().expect("eight bytes")),
                )
            })
            .collect();
        pos += 16 * b.len;
        blocks.push((b.name, v));
    }
    Ok(Container { kind: header.kind, meta: header.meta, blocks })
}
