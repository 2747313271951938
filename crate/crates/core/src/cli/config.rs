//! `key=value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::SyntheticConfig;
use crate::dynamics::{DynTrainConfig, EncoderMode};
use crate::embedding::{InitMode, MfTrainConfig, OnlineScope};
use crate::error::{Error, Result};
use crate::evaluation::ModelSpec;

/// Where a default value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Taken from the published method description.
    Published,
    /// Chosen for this tool.
    Artifact,
}

pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub provenance: Provenance,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, provenance: Provenance, help: &'static str) -> Key {
    Key {
        name,
        default,
        provenance,
        help,
    }
}

use Provenance::{Artifact, Published};

pub const KEYS: &[Key] = &[
    key("seed", "0", Artifact, "master seed"),
    key("data", "", Artifact, "interaction file"),
    key("model", "dynemb", Artifact, "bmf | bmf_online | dynemb | dynemb_concat | dkt"),
    key("mf.dim", "50", Published, "embedding dimension (RNN input width 2d = 100)"),
    key("mf.learning_rate", "0.01", Artifact, "SGD step size"),
    key("mf.epochs", "20", Artifact, "passes over the data"),
    key("mf.minibatch", "32", Artifact, "interactions per SGD step"),
    key("mf.init_scale", "0.1", Artifact, "std of random initial factors"),
    key("mf.lambda", "0.1", Artifact, "squared-norm penalty"),
    key("mf.mu", "0", Artifact, "l1 penalty on question embeddings"),
    key("mf.init", "random", Artifact, "random | skill_onehot"),
    key("online.learning_rate", "0.05", Artifact, "step size of the per-batch student refit"),
    key("online.epochs", "50", Artifact, "passes of the per-batch student refit"),
    key("online.scope", "students", Artifact, "students | students_and_questions"),
    key("dyn.learning_rate", "0.005", Artifact, "Adam step size"),
    key("dyn.epochs", "10", Artifact, "passes over the training sequences"),
    key("dyn.minibatch", "16", Artifact, "student sequences per update"),
    key("dyn.truncation", "100", Artifact, "BPTT window length"),
    key("dyn.clip", "5", Artifact, "per-tensor gradient norm cap"),
    key("dyn.hidden_dim", "auto", Artifact, "LSTM width; auto = mf.dim, or 50 for dkt"),
    key("dyn.fusion_dim", "50", Artifact, "tag-fusion output width"),
    key("dyn.e2e_init_scale", "0.1", Artifact, "std of question embeddings for end-to-end training from scratch"),
    key("eval.protocol", "new-user", Published, "new-user | most-recent"),
    key("eval.batch_size", "50", Artifact, "interactions per online batch"),
    key("eval.test_fraction", "0.2", Artifact, "share of students held out"),
    key("eval.holdout_fraction", "0.2", Artifact, "share of each sequence held out (most-recent)"),
    key("synth.students", "300", Artifact, "students"),
    key("synth.questions", "80", Artifact, "questions"),
    key("synth.dim", "2", Artifact, "latent dimension"),
    key("synth.seq_len", "60", Artifact, "interactions per student"),
    key("synth.drift_rate", "0.1", Artifact, "random-walk scale"),
    key("synth.learn_gain", "0.3", Artifact, "step toward a missed question"),
    key("synth.skills", "0", Artifact, "skill count, 0 for untagged data"),
    key("sweep.dims", "10,25,50,100", Artifact, "embedding dimensions to sweep"),
    key("sweep.seeds", "0", Artifact, "seeds to sweep"),
    key("mds.sample_size", "200", Published, "questions to project"),
];

fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Resolved settings: every registered key has a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    explicit: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|k| (k.name.to_owned(), k.default.to_owned())).collect(),
            explicit: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if lookup(key).is_none() {
            return Err(Error::config(key, "unknown key"));
        }
        self.values.insert(key.to_owned(), value.into());
        if !self.explicit.iter().any(|k| k == key) {
            self.explicit.push(key.to_owned());
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_pair(line).map_err(|e| match e {
                Error::Config { key, msg } => Error::config(key, format!("line {}: {msg}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` string.
    pub fn apply_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair.trim(), "expected key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .parse()
            .map_err(|e| Error::config(key, format!("cannot parse {:?}: {e}", self.get(key))))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        self.parse(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v: f64 = self.parse(key)?;
        if !v.is_finite() {
            return Err(Error::config(key, "must be finite"));
        }
        Ok(v)
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.parse(key)
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::config(key, format!("cannot parse {s:?}: {e}"))))
            .collect()
    }

    /// All settings as `key=value` lines.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in map {
            cfg.set(k, v.clone())?;
        }
        Ok(cfg)
    }

    /// Keys left at a tool-chosen default.
    pub fn artifact_defaults(&self) -> Vec<String> {
        KEYS.iter()
            .filter(|k| k.provenance == Provenance::Artifact && !self.explicit.iter().any(|e| e == k.name))
            .map(|k| k.name.to_owned())
            .collect()
    }

    pub fn mf_config(&self) -> Result<MfTrainConfig> {
        let cfg = MfTrainConfig {
            dim: self.usize("mf.dim")?,
            learning_rate: self.f64("mf.learning_rate")?,
            epochs: self.usize("mf.epochs")?,
            minibatch_size: self.usize("mf.minibatch")?,
            init_scale: self.f64("mf.init_scale")?,
            lambda: self.f64("mf.lambda")?,
            mu: self.f64("mf.mu")?,
            init_mode: self.get("mf.init").parse::<InitMode>().map_err(|_| {
                Error::config("mf.init", format!("unknown init mode {:?}", self.get("mf.init")))
            })?,
        };
        cfg.validate().map_err(|e| prefix_key(e, "mf."))?;
        Ok(cfg)
    }

    pub fn online_config(&self) -> Result<(MfTrainConfig, OnlineScope)> {
        let refit = MfTrainConfig {
            learning_rate: self.f64("online.learning_rate")?,
            epochs: self.usize("online.epochs")?,
            ..self.mf_config()?
        };
        let scope = match self.get("online.scope") {
            "students" => OnlineScope::StudentsOnly,
            "students_and_questions" => OnlineScope::StudentsAndQuestions,
            other => return Err(Error::config("online.scope", format!("unknown scope {other:?}"))),
        };
        refit.validate().map_err(|e| prefix_key(e, "online."))?;
        Ok((refit, scope))
    }

    pub fn dyn_config(&self, encoder: EncoderMode) -> Result<DynTrainConfig> {
        let hidden_dim = match self.get("dyn.hidden_dim") {
            "auto" if encoder == EncoderMode::SkillOnehotDkt => 50,
            "auto" => self.usize("mf.dim")?,
            _ => self.usize("dyn.hidden_dim")?,
        };
        let cfg = DynTrainConfig {
            learning_rate: self.f64("dyn.learning_rate")?,
            epochs: self.usize("dyn.epochs")?,
            minibatch: self.usize("dyn.minibatch")?,
            truncation: self.usize("dyn.truncation")?,
            clip: self.f64("dyn.clip")?,
            hidden_dim,
            encoder,
            fusion_dim: self.usize("dyn.fusion_dim")?,
            e2e_init_scale: self.f64("dyn.e2e_init_scale")?,
        };
        cfg.validate().map_err(|e| prefix_key(e, "dyn."))?;
        Ok(cfg)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(match self.get("model") {
            "bmf" => ModelSpec::OfflineBmf { mf: self.mf_config()? },
            "bmf_online" => {
                let (online, scope) = self.online_config()?;
                ModelSpec::OnlineBmf {
                    mf: self.mf_config()?,
                    online,
                    scope,
                }
            }
            "dynemb" => ModelSpec::DynEmb {
                mf: self.mf_config()?,
                dynamics: self.dyn_config(EncoderMode::QuestionOnly)?,
            },
            "dynemb_concat" => ModelSpec::DynEmb {
                mf: self.mf_config()?,
                dynamics: self.dyn_config(EncoderMode::ConcatTags)?,
            },
            "dkt" => ModelSpec::Dkt {
                dynamics: self.dyn_config(EncoderMode::SkillOnehotDkt)?,
            },
            other => return Err(Error::config("model", format!("unknown model {other:?}"))),
        })
    }

    pub fn synthetic_config(&self) -> Result<SyntheticConfig> {
        let mut cfg = SyntheticConfig::new(
            self.usize("synth.students")?,
            self.usize("synth.questions")?,
            self.usize("synth.dim")?,
            self.usize("synth.seq_len")?,
        )
        .dynamics(self.f64("synth.drift_rate")?, self.f64("synth.learn_gain")?);
        for key in ["synth.students", "synth.questions", "synth.dim", "synth.seq_len"] {
            if self.usize(key)? == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        for key in ["synth.drift_rate", "synth.learn_gain"] {
            if self.f64(key)? < 0.0 {
                return Err(Error::config(key, "must be non-negative"));
            }
        }
        let skills = self.usize("synth.skills")?;
        if skills > 0 {
            cfg = cfg.skills(skills);
        }
        Ok(cfg)
    }
}

fn prefix_key(e: Error, prefix: &str) -> Error {
    match e {
        Error::Config { key, msg } => {
            let full = match key.as_str() {
                "minibatch_size" => "minibatch".to_owned(),
                "init_mode" => "init".to_owned(),
                k => k.to_owned(),
            };
            Error::config(format!("{prefix}{full}"), msg)
        }
        other => other,
    }
}
