use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::features::{load_feature_specs_dir, shipped_feature_specs, FeatureSpec};
use crate::gateway::{ModelEndpointConfig, OracleConfig};
use crate::prompt::{SerializationPolicy, TechniqueKind};
use crate::skeleton::{DatasetId, Label, SplitPolicy};
use crate::synthetic::SYNTHETIC_EXERCISES;

/// Where repetitions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// Generated squat / shoulder-abduction repetitions (UI-PRMD layout).
    Synthetic {
        #[serde(default = "default_n_reps")]
        n_reps: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `<dir>/<exercise_id>.jsonl` files in the interchange format.
    Generic { dir: PathBuf },
    Uiprmd { root: PathBuf },
    Rehab24 { root: PathBuf, annotations: PathBuf },
}

fn default_n_reps() -> usize {
    40
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputVariant {
    Features,
    RawJoints,
}

impl InputVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::Features => "features",
            InputVariant::RawJoints => "raw_joints",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackConfig {
    pub persona: String,
    /// Number of assessed samples to ask feedback for.
    pub samples: usize,
    /// Exercise to draw samples from; the first configured one when unset.
    pub exercise_id: Option<String>,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            persona: "physiotherapist".into(),
            samples: 3,
            exercise_id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset_id: DatasetId,
    pub exercise_ids: Vec<String>,
    #[serde(default = "default_techniques")]
    pub techniques: Vec<TechniqueKind>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    /// Shot count for the technique comparison and per-exercise runs.
    #[serde(default = "default_compare_k")]
    pub compare_k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub split_policy: SplitPolicy,
    #[serde(default)]
    pub serialization: SerializationPolicy,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint: ModelEndpointConfig,
    /// Oracle rules for mock runs. Empty means the synthetic-data rules.
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_positive")]
    pub positive_class: Label,
    #[serde(default = "default_variants")]
    pub input_variants: Vec<InputVariant>,
    /// Directory of feature configs replacing the shipped catalog.
    #[serde(default)]
    pub feature_config_dir: Option<PathBuf>,
    pub data: DataSource,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Response cache location; `<output_dir>/cache` when unset.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub feedback: FeedbackConfig,
}

fn default_techniques() -> Vec<TechniqueKind> {
    TechniqueKind::ASSESSMENT.to_vec()
}
fn default_k_values() -> Vec<usize> {
    (0..=5).collect()
}
fn default_compare_k() -> usize {
    3
}
fn default_backend() -> BackendKind {
    BackendKind::Live
}
fn default_threshold() -> f64 {
    crate::parser::DEFAULT_THRESHOLD
}
fn default_positive() -> Label {
    Label::Correct
}
fn default_variants() -> Vec<InputVariant> {
    vec![InputVariant::Features]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Offline configuration over generated data for the two synthetic
    /// exercises.
    pub fn synthetic(output_dir: &Path) -> Self {
        Self {
            dataset_id: DatasetId::Uiprmd,
            exercise_ids: SYNTHETIC_EXERCISES.iter().map(|s| s.to_string()).collect(),
            techniques: default_techniques(),
            k_values: default_k_values(),
            compare_k: default_compare_k(),
            seed: 0,
            split_policy: SplitPolicy::Any,
            serialization: SerializationPolicy::default(),
            backend: BackendKind::Mock,
            endpoint: ModelEndpointConfig::default(),
            oracle: OracleConfig::default(),
            threshold: default_threshold(),
            positive_class: Label::Correct,
            input_variants: default_variants(),
            feature_config_dir: None,
            data: DataSource::Synthetic { n_reps: 40, seed: 0 },
            output_dir: output_dir.to_path_buf(),
            cache_dir: None,
            feedback: FeedbackConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::Synthetic { .. } => {}
            DataSource::Generic { dir } => fix(dir),
            DataSource::Uiprmd { root } => fix(root),
            DataSource::Rehab24 { root, annotations } => {
                fix(root);
                fix(annotations);
            }
        }
        if let Some(d) = &mut self.feature_config_dir {
            fix(d);
        }
        if let Some(d) = &mut self.cache_dir {
            fix(d);
        }
        fix(&mut self.output_dir);
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn oracle_config(&self) -> OracleConfig {
        if self.oracle.rules.is_empty() && self.oracle.default_rule.is_none() {
            OracleConfig {
                certainty: self.oracle.certainty,
                ..OracleConfig::synthetic()
            }
        } else {
            self.oracle.clone()
        }
    }

    /// Feature configs keyed by exercise id.
    pub fn feature_specs(&self) -> Result<BTreeMap<String, FeatureSpec>, RunError> {
        let specs = match &self.feature_config_dir {
            Some(dir) => load_feature_specs_dir(dir).map_err(|e| RunError::Config(e.to_string()))?,
            None => shipped_feature_specs(),
        };
        Ok(specs.into_iter().map(|s| (s.exercise_id.clone(), s)).collect())
    }

    /// Checks everything that can be checked without touching data or the
    /// model.
    pub fn validate(&self, specs: &BTreeMap<String, FeatureSpec>) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.k_values.is_empty() {
            return bad("k_values must not be empty".into());
        }
        if self.exercise_ids.is_empty() {
            return bad("exercise_ids must not be empty".into());
        }
        for ex in &self.exercise_ids {
            let Some(spec) = specs.get(ex) else {
                return bad(format!("unknown exercise id {ex:?}"));
            };
            if self.dataset_id != DatasetId::Generic && spec.dataset_id != self.dataset_id {
                return bad(format!(
                    "exercise {ex} belongs to {}, not {}",
                    spec.dataset_id.as_str(),
                    self.dataset_id.as_str()
                ));
            }
            if matches!(self.data, DataSource::Synthetic { .. }) && !SYNTHETIC_EXERCISES.contains(&ex.as_str()) {
                return bad(format!(
                    "no synthetic generator for {ex}; available: {}",
                    SYNTHETIC_EXERCISES.join(", ")
                ));
            }
        }
        if self.techniques.contains(&TechniqueKind::RolePlayFeedback) {
            return bad("role-play feedback is run by the feedback step, not listed as a technique".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        if self.input_variants.is_empty() {
            return bad("input_variants must not be empty".into());
        }
        if self.feedback.persona.trim().is_empty() {
            return bad("feedback persona must not be empty".into());
        }
        if let Some(ex) = &self.feedback.exercise_id {
            if !self.exercise_ids.contains(ex) {
                return bad(format!("feedback exercise {ex} is not in exercise_ids"));
            }
        }
        self.serialization
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        self.endpoint
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
dataset_id = "UIPRMD"
exercise_ids = ["m01", "m07"]

[data]
source = "synthetic"
"#;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.k_values, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(c.compare_k, 3);
        assert_eq!(c.techniques.len(), 5);
        assert_eq!(c.backend, BackendKind::Live);
        assert_eq!(c.data, DataSource::Synthetic { n_reps: 40, seed: 0 });
        assert_eq!(c.cache_dir(), PathBuf::from("out/cache"));
        c.validate(&c.feature_specs().unwrap()).unwrap();
    }

    #[test]
    fn rejects_unknown_exercise_and_fields() {
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("\"m07\"", "\"m99\"")).unwrap();
        assert!(matches!(c.validate(&c.feature_specs().unwrap()), Err(RunError::Config(_))));
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("\"m07\"", "\"ex1\"")).unwrap();
        assert!(c.validate(&c.feature_specs().unwrap()).is_err());
        assert!(ExperimentConfig::from_toml(&format!("api_key = \"x\"\n{MINIMAL}")).is_err());
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.k_values.clear();
        assert!(c.validate(&c.feature_specs().unwrap()).is_err());
    }

    #[test]
    fn full_round_trip() {
        let c = ExperimentConfig::synthetic(Path::new("o"));
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }
}
