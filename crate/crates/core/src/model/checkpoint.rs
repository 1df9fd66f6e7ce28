//! Binary checkpoint format, little-endian throughout:
//!
//! ```text
//! "ATKN"                 4-byte magic
//! u32                    format version (1)
//! u64                    Adam step counter
//! u32 + bytes            model config as UTF-8 key=value lines
//! u32                    record count
//! record*:
//!   u32 + bytes          tensor name (UTF-8)
//!   u32                  rank
//!   u32 × rank           extents
//!   f32 × Π extents      values
//! ```
//!
//! Records are, per trainable tensor in canonical order, the value followed
//! by `<name>.adam_m` and `<name>.adam_v`; then `bn<i>.running_mean` and
//! `bn<i>.running_var` for each batchnorm layer.

use std::collections::HashMap;
use std::path::Path;

use super::{ConvParams, DenseParams, Model, ModelConfig, Moments, CONV_LAYERS};
use crate::error::{CheckpointError, Error, Result};
use crate::layers::BatchNormState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ATKN";
pub const VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_record(buf: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, t.rank() as u32);
    for &e in t.shape() {
        put_u32(buf, e as u32);
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    buf.extend_from_slice(&model.adam_step().to_le_bytes());
    let cfg = model.config().to_key_values();
    put_u32(&mut buf, cfg.len() as u32);
    buf.extend_from_slice(cfg.as_bytes());

    let names = Model::param_names();
    let params = model.params();
    put_u32(&mut buf, (3 * names.len() + 2 * CONV_LAYERS) as u32);
    for ((name, p), mo) in names.iter().zip(&params).zip(model.moments()) {
        put_record(&mut buf, name, p);
        put_record(&mut buf, &format!("{name}.adam_m"), &mo.m);
        put_record(&mut buf, &format!("{name}.adam_v"), &mo.v);
    }
    for (i, n) in model.norms().iter().enumerate() {
        put_record(
            &mut buf,
            &format!("bn{}.running_mean", i + 1),
            &n.running_mean,
        );
        put_record(
            &mut buf,
            &format!("bn{}.running_var", i + 1),
            &n.running_var,
        );
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated(self.bytes.len())),
        }
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| CheckpointError::Malformed("non-UTF-8 string".into()))
    }

    fn tensor(&mut self) -> Result<Tensor, CheckpointError> {
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| CheckpointError::Malformed("tensor extent overflow".into()))?;
        let raw = self.take(
            count
                .checked_mul(4)
                .ok_or(CheckpointError::Truncated(self.bytes.len()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::new(&shape, data).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| CheckpointError::BadMagic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version).into());
    }
    let step = r.u64()?;
    let cfg_text = r.string()?;
    let config = ModelConfig::from_key_values(&cfg_text)
        .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;
    let count = r.u32()? as usize;
    let mut records: HashMap<String, Tensor> = HashMap::new();
    for _ in 0..count {
        let name = r.string()?;
        let t = r.tensor()?;
        if records.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Malformed(format!("duplicate record {name}")).into());
        }
    }
    if r.pos != bytes.len() {
        return Err(
            CheckpointError::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)).into(),
        );
    }

    let mut take = |name: &str| {
        records.remove(name).ok_or_else(|| {
            Error::from(CheckpointError::Malformed(format!("missing record {name}")))
        })
    };
    let mut convs = Vec::new();
    let mut norms = Vec::new();
    for i in 1..=CONV_LAYERS {
        convs.push(ConvParams {
            weight: take(&format!("conv{i}.weight"))?,
            bias: take(&format!("conv{i}.bias"))?,
        });
        norms.push(BatchNormState {
            gamma: take(&format!("bn{i}.gamma"))?,
            beta: take(&format!("bn{i}.beta"))?,
            running_mean: take(&format!("bn{i}.running_mean"))?,
            running_var: take(&format!("bn{i}.running_var"))?,
            momentum: config.bn_momentum,
            epsilon: config.bn_epsilon,
        });
    }
    let fc1 = DenseParams {
        weight: take("fc1.weight")?,
        bias: take("fc1.bias")?,
    };
    let fc2 = DenseParams {
        weight: take("fc2.weight")?,
        bias: take("fc2.bias")?,
    };
    let mut moments = Vec::new();
    for name in Model::param_names() {
        moments.push(Moments {
            m: take(&format!("{name}.adam_m"))?,
            v: take(&format!("{name}.adam_v"))?,
        });
    }
    if let Some(extra) = records.keys().next() {
        return Err(CheckpointError::Malformed(format!("unexpected record {extra}")).into());
    }
    let mut model = Model::from_parts(config, convs, norms, fc1, fc2)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    model
        .set_optimizer_state(moments, step)
        .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &write_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_model;
    use crate::rng::Prng;

    fn model() -> Model {
        let cfg = ModelConfig {
            input_h: 8,
            input_w: 8,
            phase1_filters: 2,
            phase2_filters: 4,
            dense_width: 3,
            ..ModelConfig::default()
        };
        build_model(&cfg, &mut Prng::new(2)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = write_checkpoint(&m);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = write_checkpoint(&model());
        for cut in [0, 3, 4, 7, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = read_checkpoint(&bytes[..cut]).unwrap_err();
            match err {
                Error::Checkpoint(CheckpointError::Truncated(_))
                | Error::Checkpoint(CheckpointError::BadMagic) => {}
                other => panic!("cut {cut}: unexpected {other:?}"),
            }
        }
        assert!(matches!(
            read_checkpoint(&bytes[..bytes.len() - 1]),
            Err(Error::Checkpoint(CheckpointError::Truncated(_)))
        ));
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = write_checkpoint(&model());
        bytes[0] = b'X';
        assert!(matches!(
            read_checkpoint(&bytes),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));
        let mut bytes = write_checkpoint(&model());
        bytes[4] = 9;
        assert!(matches!(
            read_checkpoint(&bytes),
            Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(9)))
        ));
    }
}
