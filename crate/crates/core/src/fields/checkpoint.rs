//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, JSON header, then
//! every parameter block as little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::AnnealSchedule;
use crate::error::{Error, Result};
use crate::fields::canonical::CanonicalImage;
use crate::fields::density::DensityGrid;
use crate::fields::model::{BlockKind, ColorField, DensityField, Model, ModelConfig, SceneFrame, UpscalePlan};

const MAGIC: &[u8; 8] = b"CNFLDCK1";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BlockRecord {
    kind: BlockKind,
    len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    step: u64,
    model: ModelConfig,
    frame: SceneFrame,
    anneal: AnnealSchedule,
    grid_resolution: Option<[usize; 3]>,
    image_size: Option<[usize; 2]>,
    blocks: Vec<BlockRecord>,
    /// Free-form run configuration echo.
    run: serde_json::Value,
}

/// A loaded checkpoint with its content hash (hex SHA-256 of the file bytes).
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub step: u64,
    pub run: serde_json::Value,
    pub hash: String,
}

pub fn content_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_checkpoint(model: &Model, step: u64, run: &serde_json::Value) -> Result<Vec<u8>> {
    let kinds = model.block_kinds();
    let header = Header {
        step,
        model: model.config.clone(),
        frame: model.frame.clone(),
        anneal: model.anneal,
        grid_resolution: model.grid().map(|g| g.res),
        image_size: model.image().map(|i| [i.height, i.width]),
        blocks: kinds.iter().map(|&kind| BlockRecord { kind, len: model.block(kind).len() }).collect(),
        run: run.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let total: usize = kinds.iter().map(|&k| model.block(k).len() * 8).sum();
    let mut out = Vec::with_capacity(20 + json.len() + total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for &k in &kinds {
        for v in model.block(k) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let corrupt = |m: &str| Error::CheckpointIo(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::CheckpointIo(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| Error::CheckpointIo(format!("bad header: {e}")))?;

    let mut model = Model::with_frame(header.frame.clone(), &header.model, UpscalePlan::default(), header.anneal, 0)?;
    if let (DensityField::Grid(g), Some(res)) = (&mut model.density, header.grid_resolution) {
        *g = DensityGrid::new(res, g.domain)?;
    }
    if let (ColorField::Image(img), Some([h, w])) = (&mut model.color, header.image_size) {
        *img = CanonicalImage::new(h, w, img.canvas)?;
    }
    if model.block_kinds() != header.blocks.iter().map(|b| b.kind).collect::<Vec<_>>() {
        return Err(corrupt("block list does not match model configuration"));
    }
    let mut pos = 20 + hlen;
    for rec in &header.blocks {
        let dst = model.block_mut(rec.kind);
        if dst.len() != rec.len {
            return Err(Error::CheckpointIo(format!("block {} has {} values, expected {}", rec.kind.name(), rec.len, dst.len())));
        }
        let src = bytes.get(pos..pos + rec.len * 8).ok_or_else(|| corrupt("truncated parameter block"))?;
        for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(8)) {
            *d = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        pos += rec.len * 8;
    }
    if pos != bytes.len() {
        return Err(corrupt("trailing bytes after parameter blocks"));
    }
    Ok(Checkpoint { model, step: header.step, run: header.run, hash: content_hash(bytes) })
}

/// Writes the checkpoint and returns its content hash.
pub fn save_checkpoint(path: &Path, model: &Model, step: u64, run: &serde_json::Value) -> Result<String> {
    let bytes = encode_checkpoint(model, step, run)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::CheckpointIo(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, &bytes).map_err(|e| Error::CheckpointIo(format!("{}: {e}", path.display())))?;
    Ok(content_hash(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::CheckpointIo(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::HashGridConfig;
    use crate::scene::{SceneKind, SynthSpec, SyntheticScene};
    use rand::{Rng, SeedableRng};

    #[test]
    fn round_trip_is_bit_exact() {
        let scene = SyntheticScene::build(&SynthSpec::new(1, SceneKind::ForwardFacing, 4, 32)).unwrap();
        let manifest = scene.manifest(Path::new("."));
        let cfg = ModelConfig {
            hash: HashGridConfig { levels: 3, features: 2, log2_table_size: 8, base_resolution: 4, finest_resolution: 16 },
            offset_layers: 2,
            offset_width: 8,
            grid_resolution: Some([10, 10, 8]),
            image_height: 16,
            ..ModelConfig::default()
        };
        let mut model = Model::new(&manifest, &cfg, UpscalePlan { grid: 1, image: 1 }, cfg.anneal_schedule(1.0), 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for k in model.block_kinds() {
            for v in model.block_mut(k) {
                *v = rng.gen_range(-3.0..3.0);
            }
        }
        let run = serde_json::json!({"train": {"steps": 7}});
        let bytes = encode_checkpoint(&model, 42, &run).unwrap();
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.model, model);
        assert_eq!(ck.step, 42);
        assert_eq!(ck.run, run);
        assert_eq!(ck.hash, content_hash(&bytes));
        assert_eq!(encode_checkpoint(&ck.model, 42, &run).unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode_checkpoint(b"hello world, not a checkpoint"), Err(Error::CheckpointIo(_))));
    }
}
