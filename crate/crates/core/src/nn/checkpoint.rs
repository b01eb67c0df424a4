//! Model checkpoints: a rank-1 TDEP1 tensor of all parameters plus a JSON
//! header describing how to cut it back into matrices.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::Encoder;
use super::train::{Model, Standardizer};
use super::EncoderConfig;
use crate::store::{read_tensor, write_tensor, Tdep1Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: EncoderConfig,
    pub seed: u64,
    pub epoch: usize,
    pub params: Vec<ParamShape>,
    pub scaler: Standardizer,
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.json")), dir.join(format!("{stem}.tdep")))
}

/// Writes `<stem>.json` and `<stem>.tdep`. Parameters are stored as f32.
pub fn save_model(model: &Model, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let header = CheckpointHeader {
        config: *model.config(),
        seed: model.seed,
        epoch: model.epochs,
        params: model
            .params
            .names()
            .iter()
            .zip(model.params.mats())
            .map(|(n, m)| ParamShape { name: n.clone(), rows: m.rows, cols: m.cols })
            .collect(),
        scaler: model.scaler.clone(),
    };
    let (json, tensor) = paths(dir, stem);
    let flat = model.params.flatten();
    write_tensor(&Tdep1Tensor::from_f64(vec![flat.len()], &flat)?, tensor)?;
    fs::write(json, serde_json::to_string_pretty(&header)? + "\n")?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>, stem: &str) -> Result<Model> {
    let (json, tensor) = paths(dir.as_ref(), stem);
    let header: CheckpointHeader = serde_json::from_slice(&fs::read(json)?)?;
    header.config.validate()?;
    let (encoder, mut params) = Encoder::build(header.config, &mut ChaCha8Rng::seed_from_u64(0));
    let layout_matches = params.len() == header.params.len()
        && params
            .names()
            .iter()
            .zip(params.mats())
            .zip(&header.params)
            .all(|((n, m), s)| *n == s.name && m.rows == s.rows && m.cols == s.cols);
    if !layout_matches {
        return Err(Error::Shape(format!("checkpoint `{stem}` does not match its encoder config")));
    }
    let values = read_tensor(tensor)?.to_f64();
    if values.len() != params.num_values() {
        return Err(Error::Shape(format!(
            "checkpoint `{stem}` holds {} values, encoder needs {}",
            values.len(),
            params.num_values()
        )));
    }
    let mut off = 0;
    for m in params.mats_mut() {
        let n = m.len();
        m.data.copy_from_slice(&values[off..off + n]);
        off += n;
    }
    Ok(Model { encoder, params, scaler: header.scaler, seed: header.seed, epochs: header.epoch })
}
