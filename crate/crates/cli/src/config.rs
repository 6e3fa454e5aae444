//! Flat `key = value` configuration files for sweeps.
//!
//! ```text
//! # comment
//! ratings = data/ml-100k/u.data
//! f_values = 10, 20, 50, 100
//! runs = 10
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use erbm::eval::{ExperimentConfig, GridShape, ModelTag};
use erbm::rbm::{ExplainabilityMode, HiddenStatistics, MTreatment, TrainConfig};

use crate::CliError;

/// Parsed key/value pairs with the line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", idx + 1)))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(CliError::Usage(format!("config line {}: duplicate key {key}", idx + 1)));
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets or replaces one entry, as from a `--set key=value` flag.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got {assignment:?}")))?;
        self.entries.insert(k.trim().to_string(), (0, v.trim().to_string()));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|(line, v)| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config line {line}: bad {key} {v:?}: {e}")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.entries
            .get(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|e| CliError::Usage(format!("config line {line}: bad {key} entry {x:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Everything a sweep needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSettings {
    /// A raw ratings file, split on the fly...
    pub ratings: Option<PathBuf>,
    /// ...or a directory written by `ingest`.
    pub split_dir: Option<PathBuf>,
    pub separator: char,
    pub scale: u8,
    pub test_fraction: f64,
    pub output: Option<PathBuf>,
    pub experiment: ExperimentConfig,
}

const SWEEP_KEYS: &[&str] = &[
    "ratings",
    "split_dir",
    "separator",
    "scale",
    "test_fraction",
    "output",
    "models",
    "f_values",
    "k_values",
    "default_f",
    "default_k",
    "runs",
    "shape",
    "top_n",
    "theta",
    "epochs",
    "learning_rate",
    "learning_rate_d",
    "cd_steps",
    "batch_size",
    "momentum_initial",
    "momentum_final",
    "momentum_switch_epoch",
    "weight_decay",
    "init_std",
    "m_treatment",
    "hidden_statistics",
];

fn separator(s: &str) -> Result<char, CliError> {
    match s {
        "tab" | "\\t" => Ok('\t'),
        "comma" => Ok(','),
        "space" => Ok(' '),
        _ => {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::Usage(format!("bad separator {s:?}"))),
            }
        }
    }
}

pub fn parse_separator(s: &str) -> Result<char, CliError> {
    separator(s)
}

/// Fills in `TrainConfig` fields present in `file`.
fn train_config(file: &ConfigFile) -> Result<TrainConfig, CliError> {
    let mut t = TrainConfig::default();
    macro_rules! take {
        ($key:literal, $field:expr) => {
            if let Some(v) = file.parsed($key)? {
                $field = v;
            }
        };
    }
    take!("epochs", t.epochs);
    take!("learning_rate", t.learning_rate_w);
    t.learning_rate_d = t.learning_rate_w;
    take!("learning_rate_d", t.learning_rate_d);
    take!("cd_steps", t.cd_steps);
    take!("batch_size", t.batch_size);
    take!("momentum_initial", t.momentum_initial);
    take!("momentum_final", t.momentum_final);
    take!("momentum_switch_epoch", t.momentum_switch_epoch);
    take!("weight_decay", t.weight_decay);
    take!("init_std", t.init_std);
    if let Some(v) = file.get("m_treatment") {
        t.m_treatment = v.parse::<MTreatment>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(v) = file.get("hidden_statistics") {
        t.hidden_statistics = v.parse::<HiddenStatistics>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    t.explainability_mode = ExplainabilityMode::Conditioned;
    Ok(t)
}

impl SweepSettings {
    pub fn from_config(file: &ConfigFile) -> Result<Self, CliError> {
        if let Some(unknown) = file.keys().find(|k| !SWEEP_KEYS.contains(k)) {
            return Err(CliError::Usage(format!("unknown config key {unknown:?}")));
        }
        let ratings = file.get("ratings").map(PathBuf::from);
        let split_dir = file.get("split_dir").map(PathBuf::from);
        if ratings.is_some() == split_dir.is_some() {
            return Err(CliError::Usage("config needs exactly one of ratings or split_dir".into()));
        }
        let mut e = ExperimentConfig {
            train: train_config(file)?,
            ..ExperimentConfig::default()
        };
        if let Some(v) = file.list::<String>("models")? {
            e.models = v
                .iter()
                .map(|m| m.parse::<ModelTag>().map_err(|err| CliError::Usage(err.to_string())))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = file.list("f_values")? {
            e.f_values = v;
        }
        if let Some(v) = file.list("k_values")? {
            e.k_values = v;
        }
        if let Some(v) = file.parsed("default_f")? {
            e.default_f = v;
        }
        if let Some(v) = file.parsed("default_k")? {
            e.default_k = v;
        }
        if let Some(v) = file.parsed("runs")? {
            e.runs = v;
        }
        if let Some(v) = file.get("shape") {
            e.shape = v.parse::<GridShape>().map_err(|err| CliError::Usage(err.to_string()))?;
        }
        if let Some(v) = file.parsed("top_n")? {
            e.top_n = v;
        }
        if let Some(v) = file.parsed("theta")? {
            e.theta = v;
        }
        e.validate().map_err(|err| CliError::Usage(err.to_string()))?;
        Ok(SweepSettings {
            ratings,
            split_dir,
            separator: file.get("separator").map(separator).transpose()?.unwrap_or('\t'),
            scale: file.parsed("scale")?.unwrap_or(erbm::dataset::DEFAULT_SCALE),
            test_fraction: file.parsed("test_fraction")?.unwrap_or(erbm::dataset::DEFAULT_TEST_FRACTION),
            output: file.get("output").map(PathBuf::from),
            experiment: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_lists_and_defaults() {
        let file = ConfigFile::parse(
            "# sweep\nratings = u.data\n\nmodels = erbm, most_popular\nf_values=10,20\nruns = 2\nlearning_rate = 0.05\n",
        )
        .unwrap();
        let s = SweepSettings::from_config(&file).unwrap();
        assert_eq!(s.ratings, Some(PathBuf::from("u.data")));
        assert_eq!(s.experiment.models, vec![ModelTag::Erbm, ModelTag::MostPopular]);
        assert_eq!(s.experiment.f_values, vec![10, 20]);
        assert_eq!(s.experiment.k_values, vec![10, 25, 50, 100]);
        assert_eq!(s.experiment.runs, 2);
        assert_eq!(s.experiment.train.learning_rate_w, 0.05);
        assert_eq!(s.experiment.train.learning_rate_d, 0.05);
        assert_eq!(s.separator, '\t');
        assert_eq!(s.test_fraction, 0.1);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(ConfigFile::parse("runs 3").is_err());
        assert!(ConfigFile::parse("runs = 3\nruns = 4").is_err());
        let unknown = ConfigFile::parse("ratings = x\nrunz = 3").unwrap();
        assert!(SweepSettings::from_config(&unknown).is_err());
        let bad_num = ConfigFile::parse("ratings = x\nruns = three").unwrap();
        assert!(SweepSettings::from_config(&bad_num).is_err());
        let both = ConfigFile::parse("ratings = x\nsplit_dir = y").unwrap();
        assert!(SweepSettings::from_config(&both).is_err());
    }

    #[test]
    fn set_overrides_entries() {
        let mut file = ConfigFile::parse("ratings = x\nruns = 3").unwrap();
        file.set("runs=1").unwrap();
        assert_eq!(SweepSettings::from_config(&file).unwrap().experiment.runs, 1);
        assert!(file.set("runs").is_err());
    }
}
