//! Checkpoint format: `manifest.txt` lists parameter paths and shapes in
//! lexicographic order, `params.bin` is the flat little-endian f32 payload in
//! manifest order. Round-trips are bit-exact.

use super::{NnError, ParameterStore};
use std::fs;
use std::io::Write;
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const PAYLOAD_FILE: &str = "params.bin";

pub fn save_checkpoint(dir: &Path, params: &ParameterStore<f32>) -> Result<(), NnError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut payload: Vec<u8> = Vec::with_capacity(params.num_values() * 4);
    for (path, t) in params.iter() {
        manifest.push_str(path);
        for d in t.shape() {
            manifest.push(' ');
            manifest.push_str(&d.to_string());
        }
        manifest.push('\n');
        for &v in t.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::File::create(dir.join(MANIFEST_FILE))?.write_all(manifest.as_bytes())?;
    fs::File::create(dir.join(PAYLOAD_FILE))?.write_all(&payload)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ParameterStore<f32>, NnError> {
    let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let payload = fs::read(dir.join(PAYLOAD_FILE))?;
    let mut params = ParameterStore::new();
    let mut offset = 0usize;
    for (lineno, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let path = fields.next().ok_or_else(|| {
            NnError::CheckpointFormat(format!("manifest line {} is empty", lineno + 1))
        })?;
        let shape: Vec<usize> = fields
            .map(|f| {
                f.parse::<usize>().map_err(|_| {
                    NnError::CheckpointFormat(format!("bad extent {f:?} on manifest line {}", lineno + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        let numel: usize = shape.iter().product();
        let bytes = numel * 4;
        if offset + bytes > payload.len() {
            return Err(NnError::CheckpointFormat(format!(
                "payload too short for {path:?}: need {} bytes at offset {}, have {}",
                bytes,
                offset,
                payload.len()
            )));
        }
        let values: Vec<f32> = payload[offset..offset + bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        offset += bytes;
        params.insert(path, values, &shape)?;
    }
    if offset != payload.len() {
        return Err(NnError::CheckpointFormat(format!(
            "payload has {} trailing bytes",
            payload.len() - offset
        )));
    }
    Ok(params)
}
