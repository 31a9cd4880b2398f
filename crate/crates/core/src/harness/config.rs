//! Flat `key = value` configuration files.
//!
//! Keys mirror the fields of [`SyntheticSpec`], [`TrainConfig`],
//! [`AttackConfig`] and the evaluation options. `#` starts a comment.
//! Unknown keys are rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::SyntheticSpec;
use crate::attacks::AttackConfig;
use crate::error::{Error, Result};
use crate::nn::Architecture;
use crate::training::TrainConfig;

pub const SYNTHETIC_KEYS: &[&str] = &[
    "n", "classes", "alpha", "samples", "offset", "skill", "noise", "sample_noise", "prior", "embed_dim",
    "expertise_cap",
];
pub const TRAIN_KEYS: &[&str] = &[
    "steps", "epochs", "inner_samples", "fgsm_step", "adv_steps", "lr", "batch", "f",
    "per_example_draws", "init_scale", "embed", "rho_hidden", "mu_hidden",
];
pub const ATTACK_KEYS: &[&str] = &["amplification", "pgd_steps", "pgd_step_size", "similarity", "policy"];
pub const EVAL_KEYS: &[&str] = &["seed", "seeds", "aggregators", "attacks", "oracle", "data", "model"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, (usize, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim().to_string();
            let known = [SYNTHETIC_KEYS, TRAIN_KEYS, ATTACK_KEYS, EVAL_KEYS]
                .iter()
                .any(|keys| keys.contains(&key.as_str()));
            if !known {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown key {key:?}"),
                });
            }
            if values.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate key {key:?}"),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                msg: format!("bad value {v:?} for {key}"),
            }),
        }
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn apply_synthetic(&self, spec: &mut SyntheticSpec) -> Result<()> {
        self.set("n", &mut spec.n)?;
        self.set("classes", &mut spec.classes)?;
        self.set("alpha", &mut spec.alpha)?;
        self.set("samples", &mut spec.samples)?;
        self.set("offset", &mut spec.offset)?;
        self.set("skill", &mut spec.skill)?;
        self.set("noise", &mut spec.noise)?;
        self.set("sample_noise", &mut spec.sample_noise)?;
        self.set("prior", &mut spec.prior)?;
        self.set("embed_dim", &mut spec.embed_dim)?;
        self.set("expertise_cap", &mut spec.expertise_cap)?;
        self.set("seed", &mut spec.seed)
    }

    /// `epochs` needs the dataset size and is resolved by the caller.
    pub fn apply_train(&self, cfg: &mut TrainConfig) -> Result<()> {
        self.set("steps", &mut cfg.steps)?;
        self.set("inner_samples", &mut cfg.samples)?;
        self.set("fgsm_step", &mut cfg.fgsm_step)?;
        self.set("adv_steps", &mut cfg.adv_steps)?;
        self.set("lr", &mut cfg.lr)?;
        self.set("batch", &mut cfg.batch)?;
        self.set("f", &mut cfg.f)?;
        self.set("per_example_draws", &mut cfg.per_example_draws)?;
        self.set("init_scale", &mut cfg.init_scale)?;
        self.set("seed", &mut cfg.seed)
    }

    pub fn apply_architecture(&self, arch: &mut Architecture) -> Result<()> {
        self.set("embed", &mut arch.embed)?;
        self.set("rho_hidden", &mut arch.rho_hidden)?;
        self.set("mu_hidden", &mut arch.mu_hidden)
    }

    /// The similarity matrix is a path and is loaded by the caller.
    pub fn apply_attack(&self, cfg: &mut AttackConfig) -> Result<()> {
        self.set("amplification", &mut cfg.amplification)?;
        self.set("pgd_steps", &mut cfg.pgd_steps)?;
        self.set("pgd_step_size", &mut cfg.pgd_step_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::AttackKind;

    #[test]
    fn parses_and_applies() {
        let cfg = Config::parse("# synthetic\nalpha = 2.5\nsamples=40 # inline\n\nlr = 1e-3\npgd_steps = 7\n").unwrap();
        let mut spec = SyntheticSpec::default();
        cfg.apply_synthetic(&mut spec).unwrap();
        assert_eq!(spec.alpha, 2.5);
        assert_eq!(spec.samples, 40);
        let mut train = TrainConfig::default();
        cfg.apply_train(&mut train).unwrap();
        assert_eq!(train.lr, 1e-3);
        let mut attack = AttackConfig::new(AttackKind::PgdCw);
        cfg.apply_attack(&mut attack).unwrap();
        assert_eq!(attack.pgd_steps, 7);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match Config::parse("alpha = 1\nbogus = 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(Config::parse("alpha 1").is_err());
        assert!(Config::parse("alpha = 1\nalpha = 2").is_err());
        let cfg = Config::parse("\n\nsamples = many").unwrap();
        match cfg.apply_synthetic(&mut SyntheticSpec::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
