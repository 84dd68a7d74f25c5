use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization recipe. Parsed from `key = value` lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub lr_decay: f64,
    pub patience: usize,
    pub sample_pred_prob: f64,
    pub rand_word_prob: f64,
    pub rand_word_start_epoch: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Training stops once the learning rate falls below this.
    pub min_lr: f64,
    /// Momentum of the batch-norm running statistics.
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_init: 0.001,
            lr_decay: 0.5,
            patience: 1,
            sample_pred_prob: 0.2,
            rand_word_prob: 0.3,
            rand_word_start_epoch: 20,
            dropout: 0.3,
            weight_decay: 0.0001,
            batch_size: 16,
            max_epochs: 100,
            seed: 0,
            min_lr: 1e-6,
            bn_momentum: 0.1,
        }
    }
}

fn prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        prob("sample_pred_prob", self.sample_pred_prob)?;
        prob("rand_word_prob", self.rand_word_prob)?;
        prob("bn_momentum", self.bn_momentum)?;
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if !(self.lr_init > 0.0 && self.lr_init.is_finite()) {
            return Err(Error::invalid("lr_init must be positive"));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1)"));
        }
        if !(self.weight_decay >= 0.0) || !(self.min_lr >= 0.0) {
            return Err(Error::invalid(
                "weight_decay and min_lr must be non-negative",
            ));
        }
        if self.patience == 0 || self.batch_size == 0 {
            return Err(Error::invalid("patience and batch_size must be positive"));
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
        }
        match key {
            "lr_init" => self.lr_init = num(key, value)?,
            "lr_decay" => self.lr_decay = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "sample_pred_prob" => self.sample_pred_prob = num(key, value)?,
            "rand_word_prob" => self.rand_word_prob = num(key, value)?,
            "rand_word_start_epoch" => self.rand_word_start_epoch = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "min_lr" => self.min_lr = num(key, value)?,
            "bn_momentum" => self.bn_momentum = num(key, value)?,
            _ => return Err(Error::invalid(format!("unknown training key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    /// Keys in `skip` are ignored so one file can also carry model keys.
    pub fn parse(text: &str, skip: &[&str]) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in key_values(text)? {
            if !skip.contains(&key.as_str()) {
                cfg.set(&key, &value)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, skip: &[&str]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, skip)
    }
}

/// Splits `key = value` lines, dropping blanks and `#` comments.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: "<config>".into(),
            line: i + 1,
            reason: format!("expected key = value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = TrainConfig::parse(
            "# recipe\nlr_init = 0.01\nbatch_size=4 # small\n\nembed_dim = 8\n",
            &["embed_dim"],
        )
        .unwrap();
        assert_eq!(cfg.lr_init, 0.01);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.lr_decay, 0.5);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(TrainConfig::parse("warmup = 3", &[]).is_err());
        assert!(TrainConfig::parse("sample_pred_prob = 1.5", &[]).is_err());
        assert!(TrainConfig::parse("lr_decay = 1", &[]).is_err());
        assert!(TrainConfig::parse("lr_init", &[]).is_err());
    }
}
