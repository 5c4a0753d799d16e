use std::cell::{OnceCell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use super::{io_at, DataSource, ExperimentConfig, InputVariant, RunError};
use crate::features::{extract_features, FeatureSequence, FeatureSpec};
use crate::prompt::format_value;
use crate::skeleton::{
    load_annotation_table, load_generic, load_rehab24, load_uiprmd, save_generic, DataError, GenericHeader,
    RepetitionSample, SampleId, SkeletonSpec,
};
use crate::synthetic::synthetic_dataset;

/// Loaded repetitions of one exercise with their feature tables.
pub struct ExerciseData {
    pub skeleton: SkeletonSpec,
    pub feature_spec: FeatureSpec,
    pub samples: Vec<RepetitionSample>,
    pub frame_rate_hz: f64,
    features: HashMap<SampleId, FeatureSequence>,
    raw: OnceCell<HashMap<SampleId, FeatureSequence>>,
}

impl ExerciseData {
    pub fn sequences(&self, input: InputVariant) -> &HashMap<SampleId, FeatureSequence> {
        match input {
            InputVariant::Features => &self.features,
            InputVariant::RawJoints => self.raw.get_or_init(|| {
                self.samples
                    .iter()
                    .map(|s| (s.id(), FeatureSequence::from_raw_joints(s, &self.skeleton)))
                    .collect()
            }),
        }
    }

    /// Feature tables in sample order.
    pub fn ordered_features(&self) -> Vec<&FeatureSequence> {
        self.samples.iter().map(|s| &self.features[&s.id()]).collect()
    }
}

/// Validated config plus lazily loaded per-exercise data.
pub struct DataContext {
    config: ExperimentConfig,
    feature_specs: BTreeMap<String, FeatureSpec>,
    loaded: RefCell<BTreeMap<String, Rc<ExerciseData>>>,
}

impl DataContext {
    pub fn new(config: ExperimentConfig) -> Result<Self, RunError> {
        let feature_specs = config.feature_specs()?;
        config.validate(&feature_specs)?;
        Ok(Self {
            config,
            feature_specs,
            loaded: RefCell::new(BTreeMap::new()),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn load_samples(&self, exercise_id: &str) -> Result<(SkeletonSpec, Vec<RepetitionSample>, f64), RunError> {
        let builtin = || {
            SkeletonSpec::for_dataset(self.config.dataset_id)
                .ok_or_else(|| RunError::Config(format!("{} has no built-in skeleton", self.config.dataset_id.as_str())))
        };
        Ok(match &self.config.data {
            DataSource::Synthetic { n_reps, seed } => {
                let samples = synthetic_dataset(exercise_id, *n_reps, *seed)
                    .ok_or_else(|| RunError::Config(format!("no synthetic generator for {exercise_id}")))?;
                (SkeletonSpec::uiprmd(), samples, 30.0)
            }
            DataSource::Generic { dir } => {
                let path = dir.join(format!("{exercise_id}.jsonl"));
                let (header, samples) = load_generic(&path)?;
                if header.exercise_id != exercise_id {
                    return Err(DataError::Schema(format!(
                        "{} holds exercise {}, expected {exercise_id}",
                        path.display(),
                        header.exercise_id
                    ))
                    .into());
                }
                (header.skeleton_spec()?, samples, header.frame_rate_hz)
            }
            DataSource::Uiprmd { root } => {
                let spec = builtin()?;
                let samples = load_uiprmd(root, exercise_id, &spec)?;
                (spec, samples, 30.0)
            }
            DataSource::Rehab24 { root, annotations } => {
                let spec = builtin()?;
                let ann = load_annotation_table(annotations, Some(exercise_id))?;
                let samples = load_rehab24(root, exercise_id, &spec, &ann)?;
                (spec, samples, 30.0)
            }
        })
    }

    /// Loads (once) the samples and feature tables of `exercise_id`.
    pub fn exercise(&self, exercise_id: &str) -> Result<Rc<ExerciseData>, RunError> {
        if let Some(d) = self.loaded.borrow().get(exercise_id) {
            return Ok(d.clone());
        }
        let feature_spec = self
            .feature_specs
            .get(exercise_id)
            .cloned()
            .ok_or_else(|| RunError::Config(format!("unknown exercise id {exercise_id:?}")))?;
        let (skeleton, samples, frame_rate_hz) = self.load_samples(exercise_id)?;
        if samples.is_empty() {
            return Err(DataError::Capacity(format!("no samples for {exercise_id}")).into());
        }
        let mut features = HashMap::with_capacity(samples.len());
        for s in &samples {
            let seq = extract_features(s, &skeleton, &feature_spec)?;
            if features.insert(s.id(), seq).is_some() {
                return Err(DataError::Schema(format!("duplicate sample {}", s.id())).into());
            }
        }
        let data = Rc::new(ExerciseData {
            skeleton,
            feature_spec,
            samples,
            frame_rate_hz,
            features,
            raw: OnceCell::new(),
        });
        self.loaded
            .borrow_mut()
            .insert(exercise_id.to_string(), data.clone());
        Ok(data)
    }

    /// Writes every configured exercise in the interchange format to
    /// `<out>/<exercise_id>.jsonl`.
    pub fn ingest(&self, out: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(out).map_err(io_at(out))?;
        let mut written = Vec::new();
        for ex in &self.config.exercise_ids {
            let data = self.exercise(ex)?;
            let header = GenericHeader::new(&data.skeleton, ex, data.frame_rate_hz);
            let path = out.join(format!("{ex}.jsonl"));
            save_generic(&path, &header, &data.samples)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Writes one CSV of feature values per exercise to
    /// `<out>/<exercise_id>.csv`, one row per frame.
    pub fn export_features(&self, out: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(out).map_err(io_at(out))?;
        let mut written = Vec::new();
        for ex in &self.config.exercise_ids {
            let data = self.exercise(ex)?;
            let path = out.join(format!("{ex}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
            let mut header = vec!["sample_id".to_string(), "label".to_string(), "frame".to_string()];
            header.extend(data.feature_spec.feature_names());
            let csv_err = |e: csv::Error| RunError::Io(format!("{}: {e}", path.display()));
            w.write_record(&header).map_err(csv_err)?;
            for seq in data.ordered_features() {
                for f in 0..seq.num_frames() {
                    let mut rec = vec![seq.id().to_string(), seq.label.token().to_string(), f.to_string()];
                    rec.extend(seq.values.row(f).iter().map(|v| format_value(*v, 4)));
                    w.write_record(&rec).map_err(csv_err)?;
                }
            }
            w.flush().map_err(io_at(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}
