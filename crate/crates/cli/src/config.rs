//! Layered run configuration: built-in defaults, a named profile, an
//! optional `key = value` config file with `[section]` headers, then flag
//! overrides on top.

use std::fmt;

use c2c_core::train_eval::{PipelineConfig, TrainConfig};

/// Merged view of every tunable plus the splitting fraction.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub pipe: PipelineConfig,
    pub train: TrainConfig,
    pub val_fraction: f64,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            pipe: PipelineConfig::default(),
            train: TrainConfig::default(),
            val_fraction: 0.08,
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    UnknownProfile(String),
    /// Config file problem with its 1-based line number.
    File {
        line: usize,
        detail: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownProfile(p) => {
                write!(
                    f,
                    "unknown profile `{p}` (expected `desk` or `paper_scale`)"
                )
            }
            ConfigError::File { line, detail } => {
                write!(f, "config file line {line}: {detail}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl CliConfig {
    /// Applies a named profile. `desk` is sized for minutes-scale runs;
    /// `paper_scale` keeps the long-schedule defaults (3900 epochs, batch
    /// 32, peak learning rate 3e-4).
    pub fn apply_profile(&mut self, name: &str) -> Result<(), ConfigError> {
        match name {
            "desk" => {
                self.train.epochs = 30;
                self.train.batch_size = 8;
                self.train.lr_max = 0.003;
                self.train.lr_min = 1e-6;
                self.train.cycle_len_epochs = 30;
                self.train.cycle_mult = 1.0;
                self.train.warmup_epochs = 2;
                Ok(())
            }
            "paper_scale" => {
                self.train.epochs = 3900;
                self.train.batch_size = 32;
                self.train.lr_max = 0.0003;
                self.train.lr_min = 1e-6;
                self.train.cycle_len_epochs = 390;
                self.train.cycle_mult = 1.0;
                self.train.warmup_epochs = 39;
                Ok(())
            }
            other => Err(ConfigError::UnknownProfile(other.to_string())),
        }
    }

    /// Applies a `[section]` / `key = value` file. Unknown sections or keys
    /// are errors so typos never pass silently.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::File {
                line: line_no,
                detail: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            self.apply_kv(&section, key, value)
                .map_err(|detail| ConfigError::File {
                    line: line_no,
                    detail,
                })?;
        }
        Ok(())
    }

    fn apply_kv(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value
                .parse()
                .map_err(|_| format!("cannot parse `{value}` for key `{key}`"))
        }
        match (section, key) {
            ("preprocess", "window_ms") => self.pipe.preprocess.window_ms = num(key, value)?,
            ("preprocess", "hop_ms") => self.pipe.preprocess.hop_ms = num(key, value)?,
            ("preprocess", "onset_threshold") => {
                self.pipe.preprocess.onset_threshold = num(key, value)?
            }
            ("preprocess", "offset_threshold") => {
                self.pipe.preprocess.offset_threshold = num(key, value)?
            }
            ("frontend", "frame_ms") => self.pipe.frontend.frame_ms = num(key, value)?,
            ("frontend", "hop_ms") => self.pipe.frontend.hop_ms = num(key, value)?,
            ("frontend", "fft_size") => self.pipe.frontend.fft_size = num(key, value)?,
            ("frontend", "mel_bins") => self.pipe.frontend.mel_bins = num(key, value)?,
            ("frontend", "f_min") => self.pipe.frontend.f_min = num(key, value)?,
            ("frontend", "f_max") => self.pipe.frontend.f_max = num(key, value)?,
            ("frontend", "log_floor") => self.pipe.frontend.log_floor = num(key, value)?,
            ("augment", "segment_sec") => self.pipe.augment.segment_sec = num(key, value)?,
            ("augment", "max_shift_sec") => self.pipe.augment.max_shift_sec = num(key, value)?,
            ("augment", "time_masks") => self.pipe.augment.time_masks = num(key, value)?,
            ("augment", "max_time_mask") => self.pipe.augment.max_time_mask = num(key, value)?,
            ("augment", "freq_masks") => self.pipe.augment.freq_masks = num(key, value)?,
            ("augment", "max_freq_mask") => self.pipe.augment.max_freq_mask = num(key, value)?,
            ("augment", "mask_value") => self.pipe.augment.mask_value = num(key, value)?,
            ("model", "channels") => self.pipe.encoder.channels = num(key, value)?,
            ("model", "blocks") => self.pipe.encoder.blocks = num(key, value)?,
            ("model", "dilations") => {
                let parsed: Result<Vec<usize>, _> =
                    value.split(',').map(|v| v.trim().parse()).collect();
                self.pipe.encoder.dilations =
                    parsed.map_err(|_| format!("cannot parse dilation list `{value}`"))?;
            }
            ("model", "se_bottleneck") => self.pipe.encoder.se_bottleneck = num(key, value)?,
            ("model", "attn_hidden") => self.pipe.encoder.attn_hidden = num(key, value)?,
            ("model", "embed_dim") => self.pipe.encoder.embed_dim = num(key, value)?,
            ("classifier", "hidden_dim") => self.pipe.classifier.hidden_dim = num(key, value)?,
            ("train", "epochs") => self.train.epochs = num(key, value)?,
            ("train", "batch_size") => self.train.batch_size = num(key, value)?,
            ("train", "lr_max") => self.train.lr_max = num(key, value)?,
            ("train", "lr_min") => self.train.lr_min = num(key, value)?,
            ("train", "cycle_len_epochs") => self.train.cycle_len_epochs = num(key, value)?,
            ("train", "cycle_mult") => self.train.cycle_mult = num(key, value)?,
            ("train", "warmup_epochs") => self.train.warmup_epochs = num(key, value)?,
            ("train", "seed") => self.train.seed = num(key, value)?,
            ("train", "val_fraction") => self.val_fraction = num(key, value)?,
            _ => return Err(format!("unknown key `{key}` in section `[{section}]`")),
        }
        Ok(())
    }
}
