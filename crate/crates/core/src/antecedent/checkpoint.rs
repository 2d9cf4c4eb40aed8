//! `MWM1` model files: magic, u32 layer count, u32 widths (count + 1), then
//! per layer the row-major weights and the bias as little-endian binary32.
//! A JSON sidecar next to the file records how the model was trained.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Mlp, PairExample, TrainConfig};
use crate::embeddings::Embeddings;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &[u8; 4] = b"MWM1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format: String,
    pub layer_sizes: Vec<usize>,
    pub train_config: TrainConfig,
    pub training_pairs: usize,
    /// SHA-256 over the training pairs and their features.
    pub fingerprint: String,
}

/// Hex SHA-256 of every pair's indices, flags and binary32 features.
pub fn fingerprint<T: Scalar>(pairs: &[PairExample], emb: &Embeddings<T>) -> String {
    let mut h = Sha256::new();
    for p in pairs {
        h.update((p.mention_i as u64).to_le_bytes());
        h.update((p.mention_j as u64).to_le_bytes());
        h.update([p.surface_match as u8, p.label as u8]);
        for v in p.features(emb) {
            h.update((v.as_f64() as f32).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn write_model<T: Scalar, W: Write>(model: &Mlp<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(MODEL_MAGIC)?;
    let sizes = model.sizes();
    w.write_all(&((sizes.len() - 1) as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for v in model.params() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Checkpoint(format!("truncated {what}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_model<T: Scalar, R: Read>(mut reader: R) -> Result<Mlp<T>> {
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated magic".into()))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {:?}", String::from_utf8_lossy(&magic))));
    }
    let layers = read_u32(&mut reader, "layer count")? as usize;
    if layers == 0 || layers > 64 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let sizes: Vec<usize> = (0..=layers).map(|_| read_u32(&mut reader, "layer widths").map(|v| v as usize)).collect::<Result<_>>()?;
    if sizes.contains(&0) || sizes[layers] != 1 {
        return Err(Error::Checkpoint(format!("bad layer widths {sizes:?}")));
    }
    let mut model = Mlp::from_sizes(&sizes);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != model.num_params() * 4 {
        return Err(Error::Checkpoint(format!("{} weight bytes, expected {}", bytes.len(), model.num_params() * 4)));
    }
    let params: Vec<T> = bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint("non-finite weight".into()));
    }
    model.set_params(&params);
    Ok(model)
}

/// `model.bin` → `model.bin.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_model<T: Scalar>(model: &Mlp<T>, sidecar: &ModelSidecar, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_model(model, File::create(path)?)?;
    let json = serde_json::to_string_pretty(sidecar).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Mlp<f64>> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<ModelSidecar> {
    let text = std::fs::read_to_string(sidecar_path(path.as_ref()))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_binary32_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Mlp::<f64>::new(5, &[4, 3], &mut rng);
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MWM1");
        assert_eq!(buf.len(), 4 + 4 + 4 * 4 + 4 * m.num_params());
        let back: Mlp<f64> = read_model(buf.as_slice()).unwrap();
        assert_eq!(back.sizes(), m.sizes());
        for (a, b) in back.params().iter().zip(m.params()) {
            assert_eq!(*a, b as f32 as f64);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = Mlp::<f64>::zeros(3, &[2]);
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert!(read_model::<f64, _>(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_model::<f64, _>(bad.as_slice()), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let m = Mlp::<f64>::zeros(3, &[2]);
        let emb = Embeddings::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let pairs = [PairExample { mention_i: 1, mention_j: 0, surface_match: true, label: true }];
        let side = ModelSidecar {
            format: "MWM1".into(),
            layer_sizes: m.sizes().to_vec(),
            train_config: TrainConfig::default(),
            training_pairs: 1,
            fingerprint: fingerprint(&pairs, &emb),
        };
        save_model(&m, &side, &path).unwrap();
        assert_eq!(read_sidecar(&path).unwrap(), side);
        assert_eq!(load_model(&path).unwrap(), m);
        assert_eq!(side.fingerprint.len(), 64);
        let other = [PairExample { label: false, ..pairs[0] }];
        assert_ne!(fingerprint(&other, &emb), side.fingerprint);
    }
}
