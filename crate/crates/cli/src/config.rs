//! Flat `key = value` run configuration shared by every command.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use sccdr::centrality::KatzConfig;
use sccdr::encoder::EncoderDims;
use sccdr::synthdata::SynthConfig;
use sccdr::trainer::{Mode, TrainConfig};
use sccdr::{Error, Result};

pub const EFFECTIVE_CONFIG: &str = "effective_config.txt";

/// Every tunable of a run. Field names double as config keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub katz: KatzConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            synth: SynthConfig::default(),
            katz: KatzConfig::default(),
            // One epoch of the default synthetic target then takes a handful
            // of steps instead of a single one.
            train: TrainConfig {
                batch_size: 256,
                ..TrainConfig::default()
            },
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("key {key:?}: cannot parse value {raw:?}")))
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Config keys in documentation order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            /// Sets one key; unknown keys are rejected.
            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $($key => self.$($field).+ = parse_value(key, raw)?,)*
                    "mode" => {
                        self.train.mode = Mode::parse(raw)
                            .ok_or_else(|| Error::Config(format!("key \"mode\": unknown mode {raw:?}")))?
                    }
                    "embedding_dim" => {
                        let d: usize = parse_value(key, raw)?;
                        self.train.dims = EncoderDims {
                            jk_include_input: self.train.dims.jk_include_input,
                            ..EncoderDims::with_width(d)
                        };
                    }
                    _ => return Err(Error::Config(format!("unknown key {key:?}"))),
                }
                Ok(())
            }

            /// Current value of a key, formatted as it would be parsed back.
            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$($field).+.to_string()),)*
                    "mode" => Some(self.train.mode.name().to_string()),
                    "embedding_dim" => Some(self.train.dims.d0.to_string()),
                    _ => None,
                }
            }
        }
    };
}

keys! {
    "seed" => train.seed,
    "clusters" => synth.clusters,
    "source_users" => synth.source_users,
    "target_users" => synth.target_users,
    "overlap" => synth.overlap,
    "source_items" => synth.source_items,
    "target_items" => synth.target_items,
    "source_degree" => synth.source_degree,
    "target_degree" => synth.target_degree,
    "p_in" => synth.p_in,
    "katz_alpha" => katz.alpha,
    "katz_beta" => katz.beta,
    "katz_tol" => katz.tol,
    "katz_max_iter" => katz.max_iter,
    "katz_normalize" => katz.normalize,
    "fanout" => train.fanout,
    "tau" => train.loss.tau,
    "n_pos_intra" => train.loss.n_pos_intra,
    "n_neg_intra" => train.loss.n_neg_intra,
    "n_neg_inter" => train.loss.n_neg_inter,
    "lambda_intra" => train.loss.lambda_intra,
    "lambda_inter" => train.loss.lambda_inter,
    "denominator_negatives_only" => train.loss.denominator_negatives_only,
    "epochs_intra" => train.epochs_intra,
    "epochs_inter" => train.epochs_inter,
    "batch_size" => train.batch_size,
    "lr" => train.lr,
    "weight_decay" => train.weight_decay,
    "jk_include_input" => train.dims.jk_include_input,
}

/// Keys handled outside the macro, listed after the generated ones.
pub const EXTRA_KEYS: &[&str] = &["mode", "embedding_dim"];

pub fn all_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().chain(EXTRA_KEYS).copied()
}

impl RunConfig {
    /// Applies a config file over `self`. Blank lines and `#` comments are
    /// ignored; a repeated key keeps its last value.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    n + 1
                )));
            };
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then an optional seed override.
    pub fn resolve(file: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(f) = file {
            cfg.apply_file(f)?;
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// The single `seed` key drives both generation and training.
    pub fn sync(&mut self) {
        self.synth.seed = self.train.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.katz.validate()?;
        self.train.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in all_keys() {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed key"));
        }
        s
    }

    pub fn write_effective(&self, dir: &Path) -> Result<()> {
        let p = dir.join(EFFECTIVE_CONFIG);
        fs::write(&p, self.to_text()).map_err(|e| Error::Io { path: p, source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("lr", "0.01").unwrap();
        cfg.set("mode", "no-stopgrad").unwrap();
        cfg.set("embedding_dim", "32").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, cfg.to_text()).unwrap();
        let mut back = RunConfig::default();
        back.apply_file(&p).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.train.dims.output_dim(), 64);
    }

    #[test]
    fn every_key_has_a_default_value() {
        let cfg = RunConfig::default();
        for k in all_keys() {
            assert!(cfg.get(k).is_some(), "{k}");
        }
        assert_eq!(all_keys().count(), KEYS.len() + EXTRA_KEYS.len());
    }

    #[test]
    fn unknown_key_and_bad_value_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "# comment\n\nlr = 1e-2\nlearning_rate = 3\n").unwrap();
        let e = RunConfig::default().apply_file(&p).unwrap_err().to_string();
        assert!(e.contains("learning_rate") && e.contains(":4:"), "{e}");
        fs::write(&p, "tau = warm\n").unwrap();
        let e = RunConfig::default().apply_file(&p).unwrap_err().to_string();
        assert!(e.contains("tau"), "{e}");
    }

    #[test]
    fn seed_override_reaches_generator() {
        let cfg = RunConfig::resolve(None, Some(7)).unwrap();
        assert_eq!((cfg.train.seed, cfg.synth.seed), (7, 7));
        assert_eq!(RunConfig::resolve(None, None).unwrap().train.batch_size, 256);
    }
}
