use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::epoch::{EpochRecord, TrainState};
use super::optim::Adam;
use super::schedule::ScheduleState;
use crate::autograd::Mat;
use crate::error::{Error, Result};
use crate::model::{ParameterSet, Seq2Seq};

const MAGIC: &[u8; 4] = b"XFBA";
const HEADER: usize = 16;
const META: &str = "meta.json";

/// Everything needed to resume training or reuse a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Seq2Seq,
    pub train: TrainConfig,
    pub params: ParameterSet,
    pub schedule: ScheduleState,
    pub optimizer: Option<Adam>,
    pub rng: ChaCha8Rng,
    /// Free-form provenance (task, vocabulary hashes, parent checkpoint).
    pub info: BTreeMap<String, String>,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn from_state(model: &Seq2Seq, train: &TrainConfig, state: &TrainState) -> Self {
        Self {
            model: model.clone(),
            train: train.clone(),
            params: state.params.clone(),
            schedule: state.schedule.clone(),
            optimizer: Some(state.optimizer.clone()),
            rng: state.rng.clone(),
            info: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    /// Resumable state; a fresh optimizer when none was saved.
    pub fn into_state(self) -> TrainState {
        let optimizer = self.optimizer.unwrap_or_else(|| Adam::new(&self.params));
        TrainState {
            params: self.params,
            optimizer,
            schedule: self.schedule,
            rng: self.rng,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: u32,
    model: Seq2Seq,
    train: TrainConfig,
    schedule: ScheduleState,
    rng: RngState,
    parameters: Vec<String>,
    optimizer: Option<OptimMeta>,
    info: BTreeMap<String, String>,
    history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct OptimMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
    }
    Some(out)
}

/// Serializes a matrix as `XFBA | width | 0 0 0 | rows u32 | cols u32 | data`
/// with little-endian f32 (width 4) or f64 (width 8) values.
pub fn encode_array(m: &Mat, width: u8) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER + m.len() * width as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&[width, 0, 0, 0]);
    buf.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for &v in m.iter() {
        if width == 4 {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        } else {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_array(name: &str, bytes: &[u8]) -> Result<Mat> {
    let corrupt = |reason: String| Error::CorruptParameter {
        name: name.to_string(),
        reason,
    };
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(corrupt("missing array header".into()));
    }
    let width = bytes[4] as usize;
    if width != 4 && width != 8 {
        return Err(corrupt(format!("unsupported value width {width}")));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = HEADER + rows * cols * width;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "{} bytes, expected {expected} for {rows}x{cols}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[HEADER..]
        .chunks_exact(width)
        .map(|c| {
            if width == 4 {
                f32::from_le_bytes(c.try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(c.try_into().unwrap())
            }
        })
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite value".into()));
    }
    Ok(Mat::from_shape_vec((rows, cols), data).expect("size checked"))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_array(dir: &Path, name: &str) -> Result<Mat> {
    let path = dir.join(format!("{name}.bin"));
    let bytes = fs::read(&path).map_err(|e| Error::CorruptParameter {
        name: name.to_string(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    decode_array(name, &bytes)
}

/// Writes `meta.json`, `params/<name>.bin` (f32) and, when present,
/// `optim/{m,v}/<name>.bin` (f64) under `dir`.
pub fn save_checkpoint(dir: &Path, ck: &Checkpoint) -> Result<()> {
    let pdir = dir.join("params");
    fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    for (name, value) in ck.params.iter() {
        write(&pdir.join(format!("{name}.bin")), &encode_array(value, 4))?;
    }
    if let Some(opt) = &ck.optimizer {
        for (sub, moments) in [("m", &opt.m), ("v", &opt.v)] {
            let odir = dir.join("optim").join(sub);
            fs::create_dir_all(&odir).map_err(|e| Error::io(&odir, e))?;
            for (name, value) in ck.params.names().iter().zip(moments) {
                write(&odir.join(format!("{name}.bin")), &encode_array(value, 8))?;
            }
        }
    }
    let meta = Meta {
        format: 1,
        model: ck.model.clone(),
        train: ck.train.clone(),
        schedule: ck.schedule.clone(),
        rng: RngState {
            seed: hex(&ck.rng.get_seed()),
            stream: ck.rng.get_stream(),
            word_pos: ck.rng.get_word_pos().to_string(),
        },
        parameters: ck.params.names().to_vec(),
        optimizer: ck.optimizer.as_ref().map(|o| OptimMeta {
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            step: o.step,
        }),
        info: ck.info.clone(),
        history: ck.history.clone(),
    };
    let path = dir.join(META);
    write(
        &path,
        (serde_json::to_string_pretty(&meta)? + "\n").as_bytes(),
    )
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path: PathBuf = dir.join(META);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: Meta = serde_json::from_str(&text)?;
    if meta.format != 1 {
        return Err(Error::invalid(format!(
            "unsupported checkpoint format {}",
            meta.format
        )));
    }
    let mut params = ParameterSet::new();
    let pdir = dir.join("params");
    for name in &meta.parameters {
        params.insert(name.clone(), read_array(&pdir, name)?)?;
    }
    meta.model.check_params(&params)?;
    let optimizer = match meta.optimizer {
        None => None,
        Some(o) => {
            let load = |sub: &str| -> Result<Vec<Mat>> {
                let odir = dir.join("optim").join(sub);
                meta.parameters
                    .iter()
                    .map(|n| read_array(&odir, n))
                    .collect()
            };
            Some(Adam {
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                step: o.step,
                m: load("m")?,
                v: load("v")?,
            })
        }
    };
    let bad_rng = || Error::invalid("corrupt generator state in checkpoint");
    let mut rng = ChaCha8Rng::from_seed(unhex(&meta.rng.seed).ok_or_else(bad_rng)?);
    rng.set_stream(meta.rng.stream);
    rng.set_word_pos(meta.rng.word_pos.parse().map_err(|_| bad_rng())?);
    Ok(Checkpoint {
        model: meta.model,
        train: meta.train,
        params,
        schedule: meta.schedule,
        optimizer,
        rng,
        info: meta.info,
        history: meta.history,
    })
}

/// Loads a checkpoint and requires its model configuration to equal
/// `expected`.
pub fn load_checkpoint_for(dir: &Path, expected: &Seq2Seq) -> Result<Checkpoint> {
    let ck = load_checkpoint(dir)?;
    if &ck.model != expected {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint model {:?} differs from requested {:?}",
            ck.model, expected
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip_both_widths() {
        let m = Mat::from_shape_fn((3, 2), |(i, j)| (i as f64 - 1.5) * 0.25 + j as f64);
        assert_eq!(decode_array("x", &encode_array(&m, 4)).unwrap(), m);
        let fine = Mat::from_elem((1, 1), 0.1);
        assert_eq!(decode_array("x", &encode_array(&fine, 8)).unwrap(), fine);
    }

    #[test]
    fn truncated_array_names_parameter() {
        let bytes = encode_array(&Mat::zeros((2, 2)), 4);
        match decode_array("decoder.embedding", &bytes[..bytes.len() - 1]) {
            Err(Error::CorruptParameter { name, .. }) => assert_eq!(name, "decoder.embedding"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seed_hex_round_trip() {
        let seed: [u8; 32] = std::array::from_fn(|i| (i * 37) as u8);
        assert_eq!(unhex(&hex(&seed)), Some(seed));
        assert_eq!(unhex("zz"), None);
    }
}
