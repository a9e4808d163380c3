//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys are rejected, absent keys take their defaults, and
//! [`Config::to_text`] writes every key so that artifacts can carry the
//! effective configuration.

use std::path::Path;
use std::str::FromStr;

use crate::error::{NfmpError, Result};
use crate::tasks::TaskKind;

trait ConfigValue: Sized {
    fn parse_value(raw: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(raw: &str) -> std::result::Result<Self, String> {
                raw.parse::<$t>().map_err(|e| format!("cannot parse `{raw}`: {e}"))
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

numeric_value!(usize, u64, f64);

impl ConfigValue for bool {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        match raw {
            "true" | "on" | "1" => Ok(true),
            "false" | "off" | "0" => Ok(false),
            _ => Err(format!("cannot parse `{raw}` as a boolean")),
        }
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for TaskKind {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        TaskKind::from_str(raw).map_err(|e| e.to_string())
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

type Check<T> = fn(&T) -> std::result::Result<(), String>;

fn any<T>(_: &T) -> std::result::Result<(), String> {
    Ok(())
}

fn positive(v: &usize) -> std::result::Result<(), String> {
    if *v == 0 {
        Err("must be at least 1".into())
    } else {
        Ok(())
    }
}

fn at_least<const N: usize>(v: &usize) -> std::result::Result<(), String> {
    if *v < N {
        Err(format!("must be at least {N}"))
    } else {
        Ok(())
    }
}

fn bands(v: &usize) -> std::result::Result<(), String> {
    if *v > 20 {
        Err("at most 20 frequency bands are supported".into())
    } else {
        Ok(())
    }
}

fn non_negative(v: &f64) -> std::result::Result<(), String> {
    if !v.is_finite() || *v < 0.0 {
        Err("must be finite and non-negative".into())
    } else {
        Ok(())
    }
}

fn strictly_positive(v: &f64) -> std::result::Result<(), String> {
    if !v.is_finite() || *v <= 0.0 {
        Err("must be finite and positive".into())
    } else {
        Ok(())
    }
}

fn unit_fraction(v: &f64) -> std::result::Result<(), String> {
    if !(*v > 0.0 && *v <= 1.0) {
        Err("must lie in (0, 1]".into())
    } else {
        Ok(())
    }
}

fn channels(v: &usize) -> std::result::Result<(), String> {
    if *v == 1 || *v == 3 {
        Ok(())
    } else {
        Err("must be 1 or 3".into())
    }
}

macro_rules! config_struct {
    ($( $key:literal => $field:ident : $ty:ty = $default:expr, $check:expr; )*) => {
        /// Effective run configuration. Field names mirror the dotted keys.
        #[derive(Clone, Debug, PartialEq)]
        pub struct Config {
            $( pub $field: $ty, )*
        }

        impl Default for Config {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl Config {
            /// Every recognised key, in output order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            fn assign(&mut self, key: &str, raw: &str) -> std::result::Result<(), AssignError> {
                match key {
                    $( $key => {
                        let v = <$ty as ConfigValue>::parse_value(raw).map_err(AssignError::Value)?;
                        let check: Check<$ty> = $check;
                        check(&v).map_err(AssignError::Value)?;
                        self.$field = v;
                        Ok(())
                    } )*
                    _ => Err(AssignError::UnknownKey),
                }
            }

            /// All keys with their current values, one per line.
            pub fn to_text(&self) -> String {
                let mut out = String::new();
                $( out.push_str(&format!("{} = {}\n", $key, self.$field.format_value())); )*
                out
            }
        }
    };
}

enum AssignError {
    UnknownKey,
    Value(String),
}

config_struct! {
    "task.kind" => task_kind: TaskKind = TaskKind::Peg, any;
    "task.seed" => task_seed: u64 = 42, any;
    "grid.train" => grid_train: usize = 3, at_least::<2>;
    "grid.test" => grid_test: usize = 5, at_least::<2>;
    "image.res" => image_res: usize = 64, at_least::<4>;
    "image.channels" => image_channels: usize = 1, channels;
    "model.embed_dim" => embed_dim: usize = 128, positive;
    "model.L_template" => template_bands: usize = 8, bands;
    "model.L_deform" => deform_bands: usize = 2, bands;
    "model.L_motion" => motion_bands: usize = 8, bands;
    "model.hidden" => hidden: usize = 128, positive;
    "model.layers" => layers: usize = 3, positive;
    "hyper.hidden" => hyper_hidden: usize = 64, positive;
    "hyper.layers" => hyper_layers: usize = 2, positive;
    "loss.w1" => w_motion: f64 = 1.0, non_negative;
    "loss.w2" => w_scene: f64 = 1.0, non_negative;
    "loss.w3" => w_deform: f64 = 1e-2, non_negative;
    "loss.w4" => w_embed: f64 = 1e-4, non_negative;
    "train.steps" => train_steps: usize = 20_000, positive;
    "train.lr_params" => lr_params: f64 = 1e-3, non_negative;
    "train.lr_embed" => lr_embed: f64 = 1e-4, non_negative;
    "train.anneal_fraction" => anneal_fraction: f64 = 0.5, unit_fraction;
    "train.anneal" => anneal: bool = true, any;
    "train.scene_batch" => scene_batch: usize = 1024, positive;
    "train.motion_batch" => motion_batch: usize = 256, positive;
    "train.seed" => seed: u64 = 1, any;
    "infer.lr_alpha" => lr_alpha: f64 = 0.05, strictly_positive;
    "infer.iters" => infer_iters: usize = 300, positive;
    "infer.batch" => infer_batch: usize = 1024, positive;
    "traj.K" => traj_k: usize = 64, at_least::<2>;
    "traj.iters" => traj_iters: usize = 500, positive;
    "traj.lr" => traj_lr: f64 = 0.01, strictly_positive;
    "traj.smooth_weight" => smooth_weight: f64 = 1e-3, non_negative;
    "mesh.res" => mesh_res: usize = 32, at_least::<8>;
    "eval.success_tol" => success_tol: f64 = 0.05, strictly_positive;
}

impl Config {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let content = raw_line.split('#').next().unwrap_or("");
            if content.trim().is_empty() {
                continue;
            }
            let key_col = content.len() - content.trim_start().len() + 1;
            let Some(eq) = content.find('=') else {
                return Err(NfmpError::Config {
                    line: line_no,
                    column: key_col,
                    key: content.trim().to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = content[..eq].trim();
            let value_part = &content[eq + 1..];
            let value = value_part.trim();
            let value_col = eq + 2 + (value_part.len() - value_part.trim_start().len());
            match self.assign(key, value) {
                Ok(()) => {}
                Err(AssignError::UnknownKey) => {
                    return Err(NfmpError::Config {
                        line: line_no,
                        column: key_col,
                        key: key.to_string(),
                        message: "unknown key".into(),
                    })
                }
                Err(AssignError::Value(message)) => {
                    return Err(NfmpError::Config { line: line_no, column: value_col, key: key.to_string(), message })
                }
            }
        }
        Ok(())
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NfmpError::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a single `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.assign(key, value).map_err(|e| NfmpError::Config {
            line: 0,
            column: 0,
            key: key.to_string(),
            message: match e {
                AssignError::UnknownKey => "unknown key".into(),
                AssignError::Value(m) => m,
            },
        })
    }
}

/// Parses a configuration file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<Config> {
    Config::parse_file(path)
}
