use std::path::Path;

use super::train::TrainConfig;
use crate::error::{Error, Result};

/// Keys accepted in a training config file.
pub const CONFIG_KEYS: [&str; 15] = [
    "patch_size",
    "batch_size",
    "lr",
    "lr_decay_epoch",
    "lr_decay",
    "epochs",
    "samples_per_epoch",
    "seed",
    "qp",
    "width_div",
    "radius",
    "lstm_layers",
    "fusion",
    "guidance",
    "format",
];

/// Parses flat `key = value` lines onto `base`. `#` starts a comment;
/// blank lines are ignored; unknown or repeated keys are errors.
pub fn parse_train_config(text: &str, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = base;
    let mut seen = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| Error::Parse { line: line_no, reason };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err(format!("expected `key = value`, found {line:?}")))?;
        if seen.contains(&key) {
            return Err(err(format!("duplicate key {key:?}")));
        }
        fn num<T: std::str::FromStr>(v: &str, key: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        let r: std::result::Result<(), String> = (|| {
            match key {
                "patch_size" => cfg.patch_size = num(value, key)?,
                "batch_size" => cfg.batch_size = num(value, key)?,
                "lr" => cfg.lr = num(value, key)?,
                "lr_decay_epoch" => cfg.lr_decay_epoch = num(value, key)?,
                "lr_decay" => cfg.lr_decay = num(value, key)?,
                "epochs" => cfg.epochs = num(value, key)?,
                "samples_per_epoch" => cfg.samples_per_epoch = num(value, key)?,
                "seed" => cfg.seed = num(value, key)?,
                "qp" => cfg.qp = num(value, key)?,
                "width_div" => cfg.model.width_div = num(value, key)?,
                "radius" => cfg.model.radius = num(value, key)?,
                "lstm_layers" => cfg.model.lstm_layers = num(value, key)?,
                "fusion" => cfg.model.fusion = value.parse().map_err(|e: Error| e.to_string())?,
                "guidance" => cfg.model.guidance = num(value, key)?,
                "format" if value == "1" => {}
                "format" => return Err(format!("unsupported config format {value:?}")),
                other => return Err(format!("unknown key {other:?}")),
            }
            Ok(())
        })();
        r.map_err(err)?;
        seen.push(key);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_train_config(path: impl AsRef<Path>, base: TrainConfig) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_train_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mganet::Fusion;

    #[test]
    fn parses_keys_and_comments() {
        let cfg = parse_train_config(
            "# toy run\nformat = 1\npatch_size = 32\nlr = 1e-3  # faster\nfusion = slow\nguidance = false\n\n",
            TrainConfig::default(),
        )
        .unwrap();
        assert_eq!(cfg.patch_size, 32);
        assert_eq!(cfg.lr, 1e-3);
        assert_eq!(cfg.model.fusion, Fusion::Slow);
        assert!(!cfg.model.guidance);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_train_config("seed = 1\nbogus = 2\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_train_config("seed = 1\nseed = 2\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_train_config("patch_size 32\n", TrainConfig::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(parse_train_config("patch_size = 40\n", TrainConfig::default()).is_err());
    }
}
