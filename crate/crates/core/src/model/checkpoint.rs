//! Binary checkpoint files.
//!
//! Layout (little-endian): magic `MMPK`, `u16` format version, `u32` length
//! of a UTF-8 `key=value` config block, the 32-byte vocabulary fingerprint,
//! `u32` tensor count, then per tensor `u32` rank, `u32` dims and `f32`
//! data, in parameter declaration order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use super::tape::{Mat, ParamSet};
use super::train::TrainConfig;
use super::transformer::{ModelConfig, Transformer};
use super::vocab::Vocabulary;

pub const MAGIC: &[u8; 4] = b"MMPK";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Transformer,
    pub vocab: Vocabulary,
    pub train_config: TrainConfig,
    /// Epochs completed when these parameters were taken.
    pub epoch: usize,
    pub best_valid_loss: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u16),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("vocabulary fingerprint mismatch")]
    FingerprintMismatch,
    #[error("parameter shapes do not match the model configuration: {0}")]
    Shape(String),
}

fn malformed(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed(msg.into())
}

impl Checkpoint {
    fn config_block(&self) -> String {
        let m = self.model.config();
        let t = &self.train_config;
        let mut lines = vec![
            format!("model.d_model={}", m.d_model),
            format!("model.n_heads={}", m.n_heads),
            format!("model.n_encoder_layers={}", m.n_encoder_layers),
            format!("model.n_decoder_layers={}", m.n_decoder_layers),
            format!("model.d_ffn={}", m.d_ffn),
            format!("model.max_src_len={}", m.max_src_len),
            format!("model.max_tgt_len={}", m.max_tgt_len),
            format!("model.dropout={}", m.dropout),
            format!("train.batch_size={}", t.batch_size),
            format!("train.learning_rate={}", t.learning_rate),
            format!("train.early_stop_patience_epochs={}", t.early_stop_patience_epochs),
            format!("train.max_epochs={}", t.max_epochs),
            format!("train.seed={}", t.seed),
            format!("epoch={}", self.epoch),
            format!("best_valid_loss={}", self.best_valid_loss),
        ];
        lines.push(format!("vocab={}", self.vocab.tokens().join(" ")));
        lines.join("\n") + "\n"
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let block = self.config_block();
        out.write_all(MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(block.len() as u32).to_le_bytes())?;
        out.write_all(block.as_bytes())?;
        out.write_all(&self.vocab.fingerprint())?;
        let params = self.model.params();
        out.write_all(&(params.len() as u32).to_le_bytes())?;
        for value in params.values() {
            out.write_all(&2u32.to_le_bytes())?;
            out.write_all(&(value.nrows() as u32).to_le_bytes())?;
            out.write_all(&(value.ncols() as u32).to_le_bytes())?;
            let mut buf = Vec::with_capacity(value.len() * 4);
            for &x in value.iter() {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    /// Writes atomically via a sibling temporary file.
    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let file = fs::File::create(&tmp)?;
            self.write_to(io::BufWriter::new(file))?;
        }
        fs::rename(tmp, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u16::from_le_bytes(take(&mut r)?);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let block_len = u32::from_le_bytes(take(&mut r)?) as usize;
        if r.len() < block_len {
            return Err(malformed("truncated config block"));
        }
        let (block, rest) = r.split_at(block_len);
        r = rest;
        let block = std::str::from_utf8(block).map_err(|_| malformed("config block is not UTF-8"))?;
        let fingerprint: [u8; 32] = take(&mut r)?;

        let mut kv = BTreeMap::new();
        for line in block.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("config line without '=': {line}")))?;
            kv.insert(k, v);
        }
        let vocab = Vocabulary::from_tokens(
            field::<String>(&kv, "vocab")?
                .split(' ')
                .map(str::to_string)
                .collect(),
        )
        .map_err(|e| malformed(e.to_string()))?;
        if vocab.fingerprint() != fingerprint {
            return Err(CheckpointError::FingerprintMismatch);
        }
        let model_config = ModelConfig {
            d_model: field(&kv, "model.d_model")?,
            n_heads: field(&kv, "model.n_heads")?,
            n_encoder_layers: field(&kv, "model.n_encoder_layers")?,
            n_decoder_layers: field(&kv, "model.n_decoder_layers")?,
            d_ffn: field(&kv, "model.d_ffn")?,
            max_src_len: field(&kv, "model.max_src_len")?,
            max_tgt_len: field(&kv, "model.max_tgt_len")?,
            dropout: field(&kv, "model.dropout")?,
        };
        let train_config = TrainConfig {
            batch_size: field(&kv, "train.batch_size")?,
            learning_rate: field(&kv, "train.learning_rate")?,
            early_stop_patience_epochs: field(&kv, "train.early_stop_patience_epochs")?,
            max_epochs: field(&kv, "train.max_epochs")?,
            seed: field(&kv, "train.seed")?,
        };
        let epoch = field(&kv, "epoch")?;
        let best_valid_loss = field(&kv, "best_valid_loss")?;

        let shapes = Transformer::declared_shapes(&model_config, vocab.len());
        let count = u32::from_le_bytes(take(&mut r)?) as usize;
        if count != shapes.len() {
            return Err(CheckpointError::Shape(format!(
                "expected {} tensors, found {count}",
                shapes.len()
            )));
        }
        let mut params = ParamSet::new();
        for (name, shape) in shapes {
            let rank = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(take(&mut r)?) as usize);
            }
            if dims != [shape.0, shape.1] {
                return Err(CheckpointError::Shape(format!(
                    "{name}: expected {:?}, found {dims:?}",
                    [shape.0, shape.1]
                )));
            }
            let n = shape.0 * shape.1;
            if r.len() < n * 4 {
                return Err(malformed(format!("truncated tensor {name}")));
            }
            let (data, rest) = r.split_at(n * 4);
            r = rest;
            let values = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let value = Mat::from_shape_vec(shape, values).expect("length checked");
            params.push(name, value);
        }
        if !r.is_empty() {
            return Err(malformed("trailing bytes after tensors"));
        }
        let model = Transformer::from_params(model_config, vocab.len(), params).map_err(CheckpointError::Shape)?;
        Ok(Checkpoint {
            model,
            vocab,
            train_config,
            epoch,
            best_valid_loss,
        })
    }

    /// Fails unless `vocab` is exactly the vocabulary this model was
    /// trained with.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<(), CheckpointError> {
        if vocab.fingerprint() == self.vocab.fingerprint() {
            Ok(())
        } else {
            Err(CheckpointError::FingerprintMismatch)
        }
    }
}

fn take<const N: usize>(r: &mut &[u8]) -> Result<[u8; N], CheckpointError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|_| malformed("unexpected end of file"))?;
    Ok(buf)
}

fn field<T: std::str::FromStr>(kv: &BTreeMap<&str, &str>, key: &str) -> Result<T, CheckpointError> {
    let raw = kv.get(key).ok_or_else(|| malformed(format!("missing key {key}")))?;
    raw.parse()
        .map_err(|_| malformed(format!("bad value for {key}: {raw}")))
}
