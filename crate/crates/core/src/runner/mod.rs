//! Experiment orchestration: shot sweeps, technique comparison, per-exercise
//! cells and the two-step feedback flow.
//!
//! Every operation writes its results below `output_dir/<operation>/`:
//! `summary.json` (metrics), `cells.jsonl` (one report per cell), `audit/`
//! (one row per scored sample) and a rendered text table.

mod config;
mod data;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{BackendKind, DataSource, ExperimentConfig, FeedbackConfig, InputVariant};
pub use data::{DataContext, ExerciseData};

use crate::features::{FeatureError, FeatureSequence};
use crate::gateway::{GatewayError, GatewayStats, LiveBackend, LlmGateway, ResponseCache};
use crate::metrics::tables::{exercise_table, shot_table, technique_table};
use crate::metrics::{CellKey, MetricsReport};
use crate::parser::{parse, AssessmentOutcome, ParseStatus};
use crate::prompt::{render_feedback_prompt, render_prompt, PromptError, PromptTechnique, TechniqueKind};
use crate::skeleton::{split_support_and_test, DataError, DatasetId, Label, SampleId};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("state error: {0}")]
    State(String),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn is_config(&self) -> bool {
        matches!(self, RunError::Config(_))
            || matches!(self, RunError::Gateway(GatewayError::Config(_)))
    }

    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            RunError::Gateway(GatewayError::Transport { .. } | GatewayError::Endpoint { .. })
        )
    }
}

impl From<PromptError> for RunError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Config(m) => RunError::Config(m),
            PromptError::State(m) => RunError::State(m),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io(format!("{}: {e}", path.display()))
}

/// Split seed for a cell. The technique is left out so every technique sees
/// the same support and test samples.
pub fn split_seed(global_seed: u64, exercise_id: &str, k: usize) -> u64 {
    let digest = Sha256::digest(format!("{global_seed}/{exercise_id}/{k}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// One scored test sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub sample_id: SampleId,
    pub truth: Label,
    pub prompt_hash: String,
    pub support_ids: Vec<SampleId>,
    pub response_text: String,
    pub outcome: AssessmentOutcome,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCellResult {
    pub key: CellKey,
    pub input: InputVariant,
    pub split_seed: u64,
    pub report: Option<MetricsReport>,
    /// Why the cell was not scored.
    pub skipped: Option<String>,
    #[serde(skip)]
    pub audit: Vec<AuditRow>,
}

impl ExperimentCellResult {
    fn file_stem(&self) -> String {
        format!(
            "{}_{:?}_k{}_{}",
            self.key.exercise_id,
            self.key.technique,
            self.key.k,
            self.input.as_str()
        )
    }

    fn scored_pairs(&self) -> Vec<(AssessmentOutcome, Label)> {
        self.audit.iter().map(|r| (r.outcome.clone(), r.truth)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub input: InputVariant,
    /// All exercises' samples scored together.
    pub pooled: Option<MetricsReport>,
    /// Unweighted mean of per-exercise accuracies.
    pub macro_accuracy: Option<f64>,
    pub per_exercise: Vec<MetricsReport>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub dataset_id: DatasetId,
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn render(&self) -> String {
        let mut variants: Vec<InputVariant> = self.rows.iter().map(|r| r.input).collect();
        variants.dedup();
        let mut out = String::new();
        for v in variants {
            let rows: Vec<(usize, MetricsReport)> = self
                .rows
                .iter()
                .filter(|r| r.input == v)
                .filter_map(|r| r.pooled.clone().map(|p| (r.k, p)))
                .collect();
            let title = format!("Shot sweep, {} ({}), pooled over exercises", self.dataset_id.as_str(), v.as_str());
            out.push_str(&shot_table(&title, self.dataset_id, &rows));
            out.push('\n');
        }
        out
    }

    /// Plot data: one row per k, pooled and macro accuracy per input variant.
    pub fn plot_csv(&self) -> String {
        let mut variants: Vec<InputVariant> = self.rows.iter().map(|r| r.input).collect();
        variants.sort();
        variants.dedup();
        let mut ks: Vec<usize> = self.rows.iter().map(|r| r.k).collect();
        ks.dedup();
        let mut out = String::from("k");
        for v in &variants {
            out.push_str(&format!(",{0}_pooled_accuracy,{0}_macro_accuracy", v.as_str()));
        }
        out.push('\n');
        let cell = |x: Option<f64>| x.map_or(String::new(), |x| format!("{x}"));
        for k in ks {
            out.push_str(&k.to_string());
            for v in &variants {
                let row = self.rows.iter().find(|r| r.k == k && r.input == *v);
                out.push(',');
                out.push_str(&cell(row.and_then(|r| r.pooled.as_ref().map(|p| p.accuracy))));
                out.push(',');
                out.push_str(&cell(row.and_then(|r| r.macro_accuracy)));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub dataset_id: DatasetId,
    pub k: usize,
    pub rows: Vec<(TechniqueKind, Option<MetricsReport>)>,
    pub per_exercise: Vec<MetricsReport>,
    pub skipped: Vec<String>,
}

impl CompareSummary {
    pub fn render(&self) -> String {
        let rows: Vec<(TechniqueKind, MetricsReport)> = self
            .rows
            .iter()
            .filter_map(|(t, r)| r.clone().map(|r| (*t, r)))
            .collect();
        let title = format!(
            "Prompting techniques, {}, {}-shot, pooled over exercises",
            self.dataset_id.as_str(),
            self.k
        );
        technique_table(&title, self.dataset_id, &rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerExerciseSummary {
    pub dataset_id: DatasetId,
    pub k: usize,
    pub reports: Vec<MetricsReport>,
    pub skipped: Vec<String>,
}

impl PerExerciseSummary {
    pub fn render(&self) -> String {
        let title = format!(
            "Per exercise, {}, {}-shot with certainty",
            self.dataset_id.as_str(),
            self.k
        );
        exercise_table(&title, &self.reports)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub sample_id: SampleId,
    pub persona: String,
    pub verdict: Label,
    pub truth: Label,
    pub prompt_hash: String,
    pub prompt: String,
    pub feedback_text: String,
    /// Whether the feedback names any feature from the prompt.
    pub mentions_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackTranscript {
    pub entries: Vec<FeedbackEntry>,
}

impl FeedbackTranscript {
    pub fn feature_mention_rate(&self) -> Option<f64> {
        (!self.entries.is_empty()).then(|| {
            self.entries.iter().filter(|e| e.mentions_feature).count() as f64 / self.entries.len() as f64
        })
    }
}

pub const SWEEP_DIR: &str = "sweep";
pub const COMPARE_DIR: &str = "compare";
pub const PER_EXERCISE_DIR: &str = "per_exercise";
pub const FEEDBACK_DIR: &str = "feedback";

/// Builds the gateway a config asks for. `force_mock` overrides the
/// configured backend.
pub fn build_gateway(config: &ExperimentConfig, force_mock: bool) -> Result<LlmGateway, RunError> {
    let cache = ResponseCache::open(&config.cache_dir())?;
    if force_mock || config.backend == BackendKind::Mock {
        Ok(LlmGateway::mock(config.oracle_config(), Some(cache))?)
    } else {
        let backend = LiveBackend::from_env(&config.endpoint)?;
        Ok(LlmGateway::new(config.endpoint.clone(), Box::new(backend), Some(cache))?)
    }
}

pub struct Runner<'g> {
    ctx: DataContext,
    gateway: &'g LlmGateway,
}

impl<'g> Runner<'g> {
    /// Validates the config (no data or model access happens before this
    /// succeeds).
    pub fn new(config: ExperimentConfig, gateway: &'g LlmGateway) -> Result<Self, RunError> {
        Ok(Self {
            ctx: DataContext::new(config)?,
            gateway,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.ctx.config()
    }

    pub fn context(&self) -> &DataContext {
        &self.ctx
    }

    pub fn stats(&self) -> GatewayStats {
        self.gateway.stats()
    }

    fn op_dir(&self, op: &str) -> Result<PathBuf, RunError> {
        let dir = self.config().output_dir.join(op);
        fs::create_dir_all(dir.join("audit")).map_err(io_at(&dir))?;
        Ok(dir)
    }

    /// Runs one cell: split, render, complete, parse, score.
    pub fn run_cell(
        &self,
        exercise_id: &str,
        technique: TechniqueKind,
        k: usize,
        input: InputVariant,
    ) -> Result<ExperimentCellResult, RunError> {
        let cfg = self.config();
        let key = CellKey {
            exercise_id: exercise_id.to_string(),
            technique,
            k,
            seed: cfg.seed,
        };
        let seed = split_seed(cfg.seed, exercise_id, k);
        let skipped = |why: String| {
            tracing::warn!(exercise_id, k, ?technique, "cell skipped: {why}");
            Ok(ExperimentCellResult {
                key: key.clone(),
                input,
                split_seed: seed,
                report: None,
                skipped: Some(why),
                audit: Vec::new(),
            })
        };
        let data = self.ctx.exercise(exercise_id)?;
        let (support, test) = match split_support_and_test(&data.samples, k, seed, cfg.split_policy) {
            Ok(s) => s,
            Err(DataError::Capacity(m)) => return skipped(m),
            Err(e) => return Err(e.into()),
        };
        if test.is_empty() {
            return skipped("empty test set".into());
        }
        let seqs = data.sequences(input);
        let lookup = |id: &SampleId| -> Result<&FeatureSequence, RunError> {
            seqs.get(id)
                .ok_or_else(|| RunError::State(format!("no sequence for sample {id}")))
        };
        let support_seqs: Vec<FeatureSequence> = support
            .iter()
            .map(|s| lookup(&s.id()).cloned())
            .collect::<Result<_, _>>()?;
        let technique_spec = PromptTechnique::new(technique, k);
        let sensor = data.skeleton.dataset_id().sensor_name();
        let bundles = test
            .iter()
            .map(|s| {
                render_prompt(
                    &technique_spec,
                    &support_seqs,
                    lookup(&s.id())?,
                    &data.feature_spec.exercise_name,
                    sensor,
                    &cfg.serialization,
                )
                .map_err(RunError::from)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let records = self.gateway.complete_many(&bundles);
        let mut audit = Vec::with_capacity(test.len());
        for ((sample, bundle), record) in test.iter().zip(&bundles).zip(records) {
            let record = record?;
            let outcome = parse(&record.response_text, bundle.expected_output_format, cfg.threshold);
            audit.push(AuditRow {
                sample_id: sample.id(),
                truth: sample.label,
                prompt_hash: record.prompt_hash,
                support_ids: bundle.support_ids.iter().map(|(id, _)| id.clone()).collect(),
                response_text: record.response_text,
                parse_status: outcome.parse_status,
                outcome,
            });
        }
        let pairs: Vec<(AssessmentOutcome, Label)> = audit.iter().map(|r| (r.outcome.clone(), r.truth)).collect();
        let report = MetricsReport::compute(
            key.clone(),
            &self.gateway.config().model_name,
            &pairs,
            technique.elicits_probability(),
            cfg.positive_class,
        )
        .map_err(|e| RunError::State(e.to_string()))?;
        Ok(ExperimentCellResult {
            key,
            input,
            split_seed: seed,
            report: Some(report),
            skipped: None,
            audit,
        })
    }

    fn persist_cell(&self, dir: &Path, cell: &ExperimentCellResult) -> Result<(), RunError> {
        let cells = dir.join("cells.jsonl");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&cells)
            .map_err(io_at(&cells))?;
        writeln!(f, "{}", serde_json::to_string(cell).expect("cell serializes")).map_err(io_at(&cells))?;
        let audit_path = dir.join("audit").join(format!("{}.jsonl", cell.file_stem()));
        let mut text = String::new();
        for row in &cell.audit {
            text.push_str(&serde_json::to_string(row).expect("audit row serializes"));
            text.push('\n');
        }
        fs::write(&audit_path, text).map_err(io_at(&audit_path))?;
        Ok(())
    }

    fn fresh_op_dir(&self, op: &str) -> Result<PathBuf, RunError> {
        let dir = self.op_dir(op)?;
        let cells = dir.join("cells.jsonl");
        if cells.exists() {
            fs::remove_file(&cells).map_err(io_at(&cells))?;
        }
        Ok(dir)
    }

    fn pooled(
        &self,
        cells: &[ExperimentCellResult],
        technique: TechniqueKind,
        k: usize,
    ) -> Result<Option<MetricsReport>, RunError> {
        let pairs: Vec<(AssessmentOutcome, Label)> = cells
            .iter()
            .filter(|c| c.report.is_some())
            .flat_map(|c| c.scored_pairs())
            .collect();
        if pairs.is_empty() {
            return Ok(None);
        }
        let key = CellKey {
            exercise_id: "ALL".into(),
            technique,
            k,
            seed: self.config().seed,
        };
        MetricsReport::compute(
            key,
            &self.gateway.config().model_name,
            &pairs,
            technique.elicits_probability(),
            self.config().positive_class,
        )
        .map(Some)
        .map_err(|e| RunError::State(e.to_string()))
    }

    /// Classification accuracy against shot count, for each input variant.
    pub fn run_shot_sweep(&self) -> Result<SweepSummary, RunError> {
        let dir = self.fresh_op_dir(SWEEP_DIR)?;
        let cfg = self.config();
        let mut rows = Vec::new();
        for &input in &cfg.input_variants {
            for &k in &cfg.k_values {
                let mut cells = Vec::new();
                for ex in &cfg.exercise_ids {
                    let cell = self.run_cell(ex, TechniqueKind::Classification, k, input)?;
                    self.persist_cell(&dir, &cell)?;
                    cells.push(cell);
                }
                let per_exercise: Vec<MetricsReport> = cells.iter().filter_map(|c| c.report.clone()).collect();
                let macro_accuracy = (!per_exercise.is_empty())
                    .then(|| per_exercise.iter().map(|r| r.accuracy).sum::<f64>() / per_exercise.len() as f64);
                rows.push(SweepRow {
                    k,
                    input,
                    pooled: self.pooled(&cells, TechniqueKind::Classification, k)?,
                    macro_accuracy,
                    per_exercise,
                    skipped: skipped_notes(&cells),
                });
            }
        }
        let summary = SweepSummary {
            dataset_id: cfg.dataset_id,
            rows,
        };
        write_summary(&dir, &summary, &summary.render())?;
        let plot = dir.join("plot.csv");
        fs::write(&plot, summary.plot_csv()).map_err(io_at(&plot))?;
        Ok(summary)
    }

    /// Every configured technique at `compare_k` shots on identical splits.
    pub fn run_reasoning_comparison(&self) -> Result<CompareSummary, RunError> {
        let dir = self.fresh_op_dir(COMPARE_DIR)?;
        let cfg = self.config();
        let k = cfg.compare_k;
        let mut rows = Vec::new();
        let mut per_exercise = Vec::new();
        let mut skipped = Vec::new();
        for &t in &cfg.techniques {
            let mut cells = Vec::new();
            for ex in &cfg.exercise_ids {
                let cell = self.run_cell(ex, t, k, InputVariant::Features)?;
                self.persist_cell(&dir, &cell)?;
                cells.push(cell);
            }
            per_exercise.extend(cells.iter().filter_map(|c| c.report.clone()));
            skipped.extend(skipped_notes(&cells));
            rows.push((t, self.pooled(&cells, t, k)?));
        }
        let summary = CompareSummary {
            dataset_id: cfg.dataset_id,
            k,
            rows,
            per_exercise,
            skipped,
        };
        write_summary(&dir, &summary, &summary.render())?;
        Ok(summary)
    }

    /// One certainty-elicitation cell per exercise at `compare_k` shots.
    /// Returns the cells too, for the feedback step.
    pub fn run_per_exercise(&self) -> Result<(PerExerciseSummary, Vec<ExperimentCellResult>), RunError> {
        let dir = self.fresh_op_dir(PER_EXERCISE_DIR)?;
        let cfg = self.config();
        let k = cfg.compare_k;
        let mut cells = Vec::new();
        for ex in &cfg.exercise_ids {
            let cell = self.run_cell(ex, TechniqueKind::Certainty, k, InputVariant::Features)?;
            self.persist_cell(&dir, &cell)?;
            cells.push(cell);
        }
        let summary = PerExerciseSummary {
            dataset_id: cfg.dataset_id,
            k,
            reports: cells.iter().filter_map(|c| c.report.clone()).collect(),
            skipped: skipped_notes(&cells),
        };
        write_summary(&dir, &summary, &summary.render())?;
        Ok((summary, cells))
    }

    /// Asks for role-play feedback on the first `feedback.samples` assessed
    /// samples of the feedback exercise, passing each step-one verdict along.
    pub fn run_feedback(&self, cells: &[ExperimentCellResult]) -> Result<FeedbackTranscript, RunError> {
        let cfg = self.config();
        let fb = &cfg.feedback;
        let exercise = fb.exercise_id.clone().unwrap_or_else(|| cfg.exercise_ids[0].clone());
        let rows: Vec<&AuditRow> = cells
            .iter()
            .filter(|c| c.key.exercise_id == exercise && c.input == InputVariant::Features)
            .flat_map(|c| &c.audit)
            .take(fb.samples)
            .collect();
        if rows.len() < fb.samples {
            return Err(RunError::State(format!(
                "{} step-one outcomes for {exercise}, {} requested",
                rows.len(),
                fb.samples
            )));
        }
        let data = self.ctx.exercise(&exercise)?;
        let seqs = data.sequences(InputVariant::Features);
        let sensor = data.skeleton.dataset_id().sensor_name();
        let mut bundles = Vec::with_capacity(rows.len());
        for row in &rows {
            let seq = seqs
                .get(&row.sample_id)
                .ok_or_else(|| RunError::State(format!("no sequence for sample {}", row.sample_id)))?;
            bundles.push(render_feedback_prompt(
                &fb.persona,
                &row.outcome,
                seq,
                &data.feature_spec.exercise_name,
                sensor,
                &cfg.serialization,
            )?);
        }
        let names: Vec<String> = data.feature_spec.feature_names().iter().map(|n| n.to_lowercase()).collect();
        let mut entries = Vec::with_capacity(rows.len());
        for ((row, bundle), record) in rows.iter().zip(&bundles).zip(self.gateway.complete_many(&bundles)) {
            let record = record?;
            let feedback = parse(&record.response_text, bundle.expected_output_format, cfg.threshold);
            let text = feedback.feedback_text.unwrap_or_default();
            let lower = text.to_lowercase();
            entries.push(FeedbackEntry {
                sample_id: row.sample_id.clone(),
                persona: fb.persona.clone(),
                verdict: row.outcome.scored_label().expect("checked by render_feedback_prompt"),
                truth: row.truth,
                prompt_hash: record.prompt_hash,
                prompt: bundle.rendered_text.clone(),
                mentions_feature: names.iter().any(|n| lower.contains(n.as_str())),
                feedback_text: text,
            });
        }
        let transcript = FeedbackTranscript { entries };
        let dir = self.op_dir(FEEDBACK_DIR)?;
        let path = dir.join("transcript.jsonl");
        let mut text = String::new();
        for e in &transcript.entries {
            text.push_str(&serde_json::to_string(e).expect("entry serializes"));
            text.push('\n');
        }
        fs::write(&path, text).map_err(io_at(&path))?;
        Ok(transcript)
    }
}

fn skipped_notes(cells: &[ExperimentCellResult]) -> Vec<String> {
    cells
        .iter()
        .filter_map(|c| {
            c.skipped
                .as_ref()
                .map(|why| format!("{} k={} {:?}: {why}", c.key.exercise_id, c.key.k, c.key.technique))
        })
        .collect()
}

fn write_summary<T: Serialize>(dir: &Path, summary: &T, table: &str) -> Result<(), RunError> {
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(&path, json).map_err(io_at(&path))?;
    let path = dir.join("table.txt");
    fs::write(&path, table).map_err(io_at(&path))?;
    Ok(())
}

/// Re-renders the tables of every operation found under `output_dir`.
pub fn render_reports(output_dir: &Path) -> Result<String, RunError> {
    fn read<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, RunError> {
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(path).map_err(io_at(path))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
    }
    let mut out = String::new();
    if let Some(s) = read::<SweepSummary>(&output_dir.join(SWEEP_DIR).join("summary.json"))? {
        out.push_str(&s.render());
        out.push('\n');
    }
    if let Some(s) = read::<CompareSummary>(&output_dir.join(COMPARE_DIR).join("summary.json"))? {
        out.push_str(&s.render());
        out.push('\n');
    }
    if let Some(s) = read::<PerExerciseSummary>(&output_dir.join(PER_EXERCISE_DIR).join("summary.json"))? {
        out.push_str(&s.render());
        out.push('\n');
    }
    let transcript = output_dir.join(FEEDBACK_DIR).join("transcript.jsonl");
    if transcript.exists() {
        let text = fs::read_to_string(&transcript).map_err(io_at(&transcript))?;
        let entries: Vec<FeedbackEntry> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(|e| RunError::Io(format!("{}: {e}", transcript.display())))?;
        let t = FeedbackTranscript { entries };
        out.push_str(&format!(
            "Feedback: {} entries, feature mention rate {}\n",
            t.entries.len(),
            t.feature_mention_rate().map_or("-".into(), |r| format!("{r:.2}"))
        ));
    }
    if out.is_empty() {
        return Err(RunError::State(format!("no results under {}", output_dir.display())));
    }
    Ok(out)
}
