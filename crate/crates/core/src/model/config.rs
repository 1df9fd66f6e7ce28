use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::trainer::AugmentSpec;

/// Architecture, optimizer and run hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_h: usize,
    pub input_w: usize,
    pub input_channels: usize,
    pub phase1_filters: usize,
    pub phase2_filters: usize,
    /// When set, `phase2_filters` must equal `2 × phase1_filters`.
    pub double_filters: bool,
    pub leaky_alpha: f32,
    pub dense_width: usize,
    pub num_classes: usize,
    pub dropout_conv: f32,
    pub dropout_dense: f32,
    pub bn_momentum: f32,
    pub bn_epsilon: f32,
    pub lr: f32,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    /// `None` disables augmentation.
    pub augment: Option<AugmentSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_h: 32,
            input_w: 32,
            input_channels: 3,
            phase1_filters: 16,
            phase2_filters: 32,
            double_filters: true,
            leaky_alpha: 0.1,
            dense_width: 128,
            num_classes: 2,
            dropout_conv: 0.25,
            dropout_dense: 0.5,
            bn_momentum: 0.1,
            bn_epsilon: 1e-5,
            lr: 0.001,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            augment: Some(AugmentSpec::default()),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(format!("invalid value {value:?} for key {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(config_err(format!(
            "invalid boolean {value:?} for key {key}"
        ))),
    }
}

/// Splits `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            config_err(format!(
                "line {}: expected key=value, got {line:?}",
                lineno + 1
            ))
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(config_err(format!("line {}: empty key", lineno + 1)));
        }
        if out
            .iter()
            .any(|(existing, _): &(String, String)| existing == key)
        {
            return Err(config_err(format!(
                "line {}: duplicate key {key}",
                lineno + 1
            )));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ModelConfig {
    /// Applies one key; returns `Ok(false)` when the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "input_h" => self.input_h = parse_value(key, value)?,
            "input_w" => self.input_w = parse_value(key, value)?,
            "input_channels" => self.input_channels = parse_value(key, value)?,
            "phase1_filters" => self.phase1_filters = parse_value(key, value)?,
            "phase2_filters" => self.phase2_filters = parse_value(key, value)?,
            "double_filters" => self.double_filters = parse_bool(key, value)?,
            "leaky_alpha" => self.leaky_alpha = parse_value(key, value)?,
            "dense_width" => self.dense_width = parse_value(key, value)?,
            "num_classes" => self.num_classes = parse_value(key, value)?,
            "dropout_conv" => self.dropout_conv = parse_value(key, value)?,
            "dropout_dense" => self.dropout_dense = parse_value(key, value)?,
            "bn_momentum" => self.bn_momentum = parse_value(key, value)?,
            "bn_epsilon" => self.bn_epsilon = parse_value(key, value)?,
            "lr" => self.lr = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "max_epochs" => self.max_epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, value)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, value)?,
            "adam_eps" => self.adam_eps = parse_value(key, value)?,
            "augment" => {
                let on = parse_bool(key, value)?;
                self.augment = match (on, self.augment.take()) {
                    (true, Some(spec)) => Some(spec),
                    (true, None) => Some(AugmentSpec::default()),
                    (false, _) => None,
                };
            }
            "aug_rotation_deg" | "aug_shift_frac" | "aug_shear_deg" | "aug_zoom_min"
            | "aug_zoom_max" => {
                let v: f32 = parse_value(key, value)?;
                // range keys apply to the stored spec even while disabled
                let spec = self.augment.get_or_insert_with(AugmentSpec::default);
                match key {
                    "aug_rotation_deg" => spec.rotation_deg = v,
                    "aug_shift_frac" => spec.shift_frac = v,
                    "aug_shear_deg" => spec.shear_deg = v,
                    "aug_zoom_min" => spec.zoom_min = v,
                    _ => spec.zoom_max = v,
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses a full key=value document; unknown keys are rejected.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let pairs = parse_key_values(text)?;
        let mut augment_flag = None;
        for (k, v) in &pairs {
            if k == "augment" {
                augment_flag = Some(parse_bool(k, v)?);
                continue;
            }
            if !cfg.set(k, v)? {
                return Err(config_err(format!("unknown key {k}")));
            }
        }
        if augment_flag == Some(false) {
            cfg.augment = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical key=value rendering; reparses to an identical config.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let aug = self.augment.clone();
        let spec = aug.clone().unwrap_or_default();
        let _ = writeln!(s, "input_h={}", self.input_h);
        let _ = writeln!(s, "input_w={}", self.input_w);
        let _ = writeln!(s, "input_channels={}", self.input_channels);
        let _ = writeln!(s, "phase1_filters={}", self.phase1_filters);
        let _ = writeln!(s, "phase2_filters={}", self.phase2_filters);
        let _ = writeln!(s, "double_filters={}", self.double_filters);
        let _ = writeln!(s, "leaky_alpha={}", self.leaky_alpha);
        let _ = writeln!(s, "dense_width={}", self.dense_width);
        let _ = writeln!(s, "num_classes={}", self.num_classes);
        let _ = writeln!(s, "dropout_conv={}", self.dropout_conv);
        let _ = writeln!(s, "dropout_dense={}", self.dropout_dense);
        let _ = writeln!(s, "bn_momentum={}", self.bn_momentum);
        let _ = writeln!(s, "bn_epsilon={}", self.bn_epsilon);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "max_epochs={}", self.max_epochs);
        let _ = writeln!(s, "patience={}", self.patience);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "adam_beta1={}", self.adam_beta1);
        let _ = writeln!(s, "adam_beta2={}", self.adam_beta2);
        let _ = writeln!(s, "adam_eps={}", self.adam_eps);
        let _ = writeln!(s, "augment={}", aug.is_some());
        let _ = writeln!(s, "aug_rotation_deg={}", spec.rotation_deg);
        let _ = writeln!(s, "aug_shift_frac={}", spec.shift_frac);
        let _ = writeln!(s, "aug_shear_deg={}", spec.shear_deg);
        let _ = writeln!(s, "aug_zoom_min={}", spec.zoom_min);
        let _ = writeln!(s, "aug_zoom_max={}", spec.zoom_max);
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 3 {
            return Err(config_err(format!(
                "input_channels must be 3 (RGB), got {}",
                self.input_channels
            )));
        }
        if self.num_classes != 2 {
            return Err(config_err(format!(
                "num_classes must be 2, got {}",
                self.num_classes
            )));
        }
        if self.input_h == 0
            || self.input_w == 0
            || !self.input_h.is_multiple_of(4)
            || !self.input_w.is_multiple_of(4)
        {
            return Err(config_err(format!(
                "input size {}×{} must be positive and divisible by 4",
                self.input_h, self.input_w
            )));
        }
        if self.phase1_filters == 0 || self.phase2_filters == 0 || self.dense_width == 0 {
            return Err(config_err("filter counts and dense width must be positive"));
        }
        if self.double_filters && self.phase2_filters != 2 * self.phase1_filters {
            return Err(config_err(format!(
                "phase2_filters ({}) must double phase1_filters ({})",
                self.phase2_filters, self.phase1_filters
            )));
        }
        crate::layers::check_alpha(self.leaky_alpha)?;
        crate::layers::check_rate(self.dropout_conv as f64)?;
        crate::layers::check_rate(self.dropout_dense as f64)?;
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) || !(self.bn_epsilon > 0.0) {
            return Err(config_err(
                "bn_momentum must lie in (0,1) and bn_epsilon be positive",
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(config_err(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(config_err(
                "adam betas must lie in [0,1) and adam_eps be positive",
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(config_err(
                "batch_size, max_epochs and patience must be positive",
            ));
        }
        if let Some(spec) = &self.augment {
            spec.validate()?;
        }
        Ok(())
    }

    /// Width of the flattened feature vector entering the dense head.
    pub fn flatten_dim(&self) -> usize {
        self.phase2_filters * (self.input_h / 4) * (self.input_w / 4)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ModelConfig::default().validate().unwrap();
        assert_eq!(ModelConfig::default().flatten_dim(), 2048);
    }

    #[test]
    fn rejects_bad_input_size() {
        let cfg = ModelConfig {
            input_h: 30,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn doubling_enforced() {
        let cfg = ModelConfig {
            phase2_filters: 24,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            double_filters: false,
            ..cfg
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn key_values_round_trip() {
        let cfg = ModelConfig {
            seed: 99,
            lr: 0.0003,
            leaky_alpha: 0.05,
            augment: None,
            ..ModelConfig::default()
        };
        let text = cfg.to_key_values();
        let back = ModelConfig::from_key_values(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_key_values(), text);
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(ModelConfig::from_key_values("bogus=1\n").is_err());
        assert!(ModelConfig::from_key_values("lr\n").is_err());
        assert!(ModelConfig::from_key_values("lr=fast\n").is_err());
        assert!(ModelConfig::from_key_values("lr=0.1\nlr=0.2\n").is_err());
        let cfg = ModelConfig::from_key_values("# comment\n\nseed = 5\n").unwrap();
        assert_eq!(cfg.seed, 5);
    }
}
