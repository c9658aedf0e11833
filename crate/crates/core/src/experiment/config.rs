//! Run configuration and the flat `key = value` config format.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DmlError, Result};
use crate::solver::LossModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Durp,
    Duori,
    Srp,
    Spca,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Durp, Method::Duori, Method::Srp, Method::Spca];

    pub fn name(self) -> &'static str {
        match self {
            Method::Durp => "durp",
            Method::Duori => "duori",
            Method::Srp => "srp",
            Method::Spca => "spca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DmlError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown method {s:?} (expected durp, duori, srp or spca)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Hinge,
    SmoothedHinge,
}

impl FromStr for LossName {
    type Err = DmlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "hinge" => Ok(LossName::Hinge),
            "smoothed_hinge" | "smooth_hinge" | "smoothed" => Ok(LossName::SmoothedHinge),
            _ => Err(invalid(format!("unknown loss {s:?} (expected hinge or smoothed_hinge)"))),
        }
    }
}

/// Parameters of a train/eval run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub method: Method,
    /// Projected dimension (ignored by `duori`).
    pub m: usize,
    /// Number of active triplets `N`.
    pub triplets: usize,
    pub epochs: usize,
    /// `None` means `1/N`.
    pub lambda: Option<f64>,
    pub loss: LossName,
    /// Smoothing width of the smoothed hinge.
    pub gamma: f64,
    pub k: usize,
    pub seed: u64,
    pub trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train_file: None,
            test_file: None,
            out: None,
            method: Method::Durp,
            m: 10,
            triplets: 100_000,
            epochs: 3,
            lambda: None,
            loss: LossName::Hinge,
            gamma: 1.0,
            k: 5,
            seed: 0,
            trials: 5,
        }
    }
}

/// Config file listing every key with its default.
pub const DEFAULT_CONFIG: &str = "\
# method: durp | duori | srp | spca
method = durp
# projected dimension
m = 10
# number of active triplets N
triplets = 100000
epochs = 3
# regularization; auto = 1/N
lambda = auto
# hinge | smoothed_hinge
loss = hinge
# smoothing width of smoothed_hinge
gamma = 1
# neighbours for kNN
k = 5
seed = 0
trials = 5
# train_file = train.libsvm
# test_file = test.libsvm
# out = report.json
";

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| invalid(format!("bad value {value:?} for {key}")))
}

/// Splits a flat config into `(key, value)` pairs. Blank lines and text
/// after `#` are ignored.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| DmlError::Parse {
            line: n + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(DmlError::Parse { line: n + 1, msg: "empty key".into() });
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.replace('-', "_").as_str() {
            "method" => self.method = value.parse()?,
            "m" => self.m = parse_num(key, value)?,
            "triplets" | "n" => self.triplets = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "lambda" => {
                self.lambda = if value.eq_ignore_ascii_case("auto") { None } else { Some(parse_num(key, value)?) }
            }
            "loss" => self.loss = value.parse()?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "k" => self.k = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "train_file" => self.train_file = Some(PathBuf::from(value)),
            "test_file" => self.test_file = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Defaults overridden by the pairs of a config file.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_config_text(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn lambda_for(&self, n_triplets: usize) -> f64 {
        self.lambda.unwrap_or(1.0 / n_triplets.max(1) as f64)
    }

    pub fn loss_model(&self) -> Result<LossModel> {
        match self.loss {
            LossName::Hinge => Ok(LossModel::Hinge),
            LossName::SmoothedHinge => LossModel::smoothed_hinge(self.gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method != Method::Duori && self.m == 0 {
            return Err(invalid("m must be positive"));
        }
        if self.triplets == 0 {
            return Err(invalid("triplets must be positive"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be positive"));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(invalid(format!("lambda must be positive, got {l}")));
            }
        }
        if self.k == 0 {
            return Err(invalid("k must be positive"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be positive"));
        }
        self.loss_model().map(|_| ())
    }
}
