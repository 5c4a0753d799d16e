//! Prompt rendering: feature tables to text, and the assessment and
//! role-play feedback templates.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureSequence;
use crate::parser::{AssessmentOutcome, OutputFormat};
use crate::skeleton::{Label, SampleId};

pub const ASSESSMENT_TEMPLATE: &str = include_str!("../../../templates/assessment.txt");
pub const FEEDBACK_TEMPLATE: &str = include_str!("../../../templates/feedback.txt");

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("prompt config: {0}")]
    Config(String),
    #[error("prompt state: {0}")]
    State(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TechniqueKind {
    Classification,
    ChainOfThought,
    Probability,
    Certainty,
    ChainOfThoughtPlusCertainty,
    RolePlayFeedback,
}

impl TechniqueKind {
    /// The five assessment techniques, in report order.
    pub const ASSESSMENT: [TechniqueKind; 5] = [
        TechniqueKind::Classification,
        TechniqueKind::ChainOfThought,
        TechniqueKind::Certainty,
        TechniqueKind::Probability,
        TechniqueKind::ChainOfThoughtPlusCertainty,
    ];

    pub fn output_format(self) -> OutputFormat {
        match self {
            TechniqueKind::Classification => OutputFormat::Label,
            TechniqueKind::ChainOfThought => OutputFormat::LabelReasoning,
            TechniqueKind::Probability => OutputFormat::ProbabilityOnly,
            TechniqueKind::Certainty => OutputFormat::LabelCertainty,
            TechniqueKind::ChainOfThoughtPlusCertainty => OutputFormat::LabelCertaintyReasoning,
            TechniqueKind::RolePlayFeedback => OutputFormat::FreeText,
        }
    }

    /// Output-format clause following "Ensure the output adheres to the
    /// output format: ".
    pub fn format_clause(self) -> &'static str {
        match self {
            TechniqueKind::Classification => {
                "\"Label\". The label is either 'correct' or 'incorrect'."
            }
            TechniqueKind::ChainOfThought => {
                "\"Label, Reasoning\". Explain your reasoning step by step."
            }
            TechniqueKind::Probability => {
                "\"Probability\". Provide a probability score, where a higher score means a higher probability towards 'correct' and a lower score for 'incorrect'."
            }
            TechniqueKind::Certainty => {
                "\"Label, Certainty\". Give a score between 0 and 1 for how certain you are in your classification."
            }
            TechniqueKind::ChainOfThoughtPlusCertainty => {
                "\"Label, Certainty, Reasoning\". Explain your reasoning step by step. Give a score between 0 and 1 for how certain you are in your classification."
            }
            TechniqueKind::RolePlayFeedback => "",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TechniqueKind::Classification => "Classification",
            TechniqueKind::ChainOfThought => "Chain-of-Thought",
            TechniqueKind::Probability => "Probability",
            TechniqueKind::Certainty => "Certainty",
            TechniqueKind::ChainOfThoughtPlusCertainty => "Chain-of-Thought + Certainty",
            TechniqueKind::RolePlayFeedback => "Role-play feedback",
        }
    }

    pub fn elicits_probability(self) -> bool {
        self == TechniqueKind::Probability
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptTechnique {
    pub kind: TechniqueKind,
    /// Labelled examples per class.
    #[serde(default)]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<String>,
}

impl PromptTechnique {
    pub fn new(kind: TechniqueKind, k: usize) -> Self {
        Self {
            kind,
            k,
            persona: None,
        }
    }

    pub fn role_play(persona: &str) -> Self {
        Self {
            kind: TechniqueKind::RolePlayFeedback,
            k: 0,
            persona: Some(persona.to_string()),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let is_feedback = self.kind == TechniqueKind::RolePlayFeedback;
        match (&self.persona, is_feedback) {
            (Some(p), true) if p.trim().is_empty() => {
                Err(PromptError::Config("persona must not be empty".into()))
            }
            (None, true) => Err(PromptError::Config("role-play feedback needs a persona".into())),
            (Some(_), false) => Err(PromptError::Config(format!(
                "{:?} does not take a persona",
                self.kind
            ))),
            (_, true) if self.k != 0 => Err(PromptError::Config(
                "role-play feedback carries no labelled examples".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerializationPolicy {
    pub target_frames: usize,
    pub decimals: usize,
    pub delimiter: String,
    pub include_header: bool,
}

impl Default for SerializationPolicy {
    fn default() -> Self {
        Self {
            target_frames: 30,
            decimals: 1,
            delimiter: ",".into(),
            include_header: true,
        }
    }
}

impl SerializationPolicy {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.target_frames < 2 {
            return Err(PromptError::Config("target_frames must be at least 2".into()));
        }
        if self.decimals > 6 {
            return Err(PromptError::Config("decimals must be at most 6".into()));
        }
        if self.delimiter.is_empty() || self.delimiter.contains(['\n', '<', '-', '.']) {
            return Err(PromptError::Config(format!(
                "unusable delimiter {:?}",
                self.delimiter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub technique: PromptTechnique,
    pub rendered_text: String,
    pub support_ids: Vec<(SampleId, Label)>,
    pub test_id: SampleId,
    pub expected_output_format: OutputFormat,
}

/// Rounds half away from zero to `decimals` places and formats without a
/// negative zero.
pub fn format_value(v: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let rounded = (v * scale).round() / scale;
    let s = format!("{rounded:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Row indices picked by nearest-index resampling of `n` rows to `target`.
pub fn resample_indices(n: usize, target: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    if target == 1 {
        return vec![0];
    }
    let (num, den) = (n - 1, target - 1);
    (0..target).map(|i| (2 * i * num + den) / (2 * den)).collect()
}

/// Text table of a feature sequence: optional header of feature names, then
/// one delimited row per resampled frame. No trailing newline.
pub fn serialize_features(seq: &FeatureSequence, policy: &SerializationPolicy) -> String {
    assert!(seq.num_frames() > 0, "cannot serialize an empty sequence");
    let mut out = String::new();
    if policy.include_header {
        out.push_str(&seq.feature_names.join(&policy.delimiter));
    }
    for r in resample_indices(seq.num_frames(), policy.target_frames) {
        if !out.is_empty() {
            out.push('\n');
        }
        let row = seq.values.row(r);
        for (c, &v) in row.iter().enumerate() {
            if c > 0 {
                out.push_str(&policy.delimiter);
            }
            out.push_str(&format_value(v, policy.decimals));
        }
    }
    out
}

/// English ordinal: 1st, 2nd, 3rd, 4th, 11th, 21st, ...
pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// Renders an assessment prompt: `2k` labelled blocks (Correct first, by
/// sample identity within a class) followed by the unlabelled test block.
pub fn render_prompt(
    technique: &PromptTechnique,
    support: &[FeatureSequence],
    test: &FeatureSequence,
    exercise_name: &str,
    sensor_name: &str,
    policy: &SerializationPolicy,
) -> Result<PromptBundle, PromptError> {
    technique.validate()?;
    policy.validate()?;
    if technique.kind == TechniqueKind::RolePlayFeedback {
        return Err(PromptError::Config(
            "use render_feedback_prompt for role-play feedback".into(),
        ));
    }
    let k = technique.k;
    let per_class = |l| support.iter().filter(|s| s.label == l).count();
    if support.len() != 2 * k || per_class(Label::Correct) != k {
        return Err(PromptError::Config(format!(
            "support must hold {k} correct and {k} incorrect examples, got {} correct and {} incorrect",
            per_class(Label::Correct),
            per_class(Label::Incorrect)
        )));
    }
    let mut ordered: Vec<&FeatureSequence> = support.iter().collect();
    ordered.sort_by_key(|s| (s.label, s.id()));

    let mut blocks = String::new();
    for (i, s) in ordered.iter().enumerate() {
        let n = i + 1;
        let _ = write!(
            blocks,
            "<Data {n}, Label {n}: {}>\n{}\n\n",
            s.label,
            serialize_features(s, policy)
        );
    }
    let n = ordered.len() + 1;
    let _ = write!(blocks, "<Data {n}>\n{}", serialize_features(test, policy));

    let rendered_text = fill(
        ASSESSMENT_TEMPLATE,
        &[
            ("ordinal", &ordinal(n)),
            ("exercise", exercise_name),
            ("sensor", sensor_name),
            ("format_clause", technique.kind.format_clause()),
            ("data_blocks", &blocks),
        ],
    );
    Ok(PromptBundle {
        technique: technique.clone(),
        rendered_text,
        support_ids: ordered.iter().map(|s| (s.id(), s.label)).collect(),
        test_id: test.id(),
        expected_output_format: technique.kind.output_format(),
    })
}

/// Second-step prompt asking `persona` for corrective advice on a sample
/// whose verdict is already known.
pub fn render_feedback_prompt(
    persona: &str,
    prior: &AssessmentOutcome,
    test: &FeatureSequence,
    exercise_name: &str,
    sensor_name: &str,
    policy: &SerializationPolicy,
) -> Result<PromptBundle, PromptError> {
    let technique = PromptTechnique::role_play(persona);
    technique.validate()?;
    policy.validate()?;
    let verdict = prior.scored_label().ok_or_else(|| {
        PromptError::State(format!("no step-one label for sample {}", test.id()))
    })?;
    let blocks = format!("<Data 1>\n{}", serialize_features(test, policy));
    let rendered_text = fill(
        FEEDBACK_TEMPLATE,
        &[
            ("persona", persona.trim()),
            ("exercise", exercise_name),
            ("verdict", verdict.token()),
            ("sensor", sensor_name),
            ("data_blocks", &blocks),
        ],
    );
    Ok(PromptBundle {
        technique,
        rendered_text,
        support_ids: Vec::new(),
        test_id: test.id(),
        expected_output_format: OutputFormat::FreeText,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureUnits;
    use crate::matrix::Matrix;
    use crate::parser::parse;

    fn seq(label: Label, rep: usize, rows: usize, cols: usize) -> FeatureSequence {
        let mut values = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                values.set(r, c, r as f64 + 0.1 * c as f64);
            }
        }
        FeatureSequence {
            exercise_id: "m01".into(),
            subject_id: "s01".into(),
            repetition_index: rep,
            label,
            feature_names: (0..cols).map(|c| format!("F{c}")).collect(),
            units: vec![FeatureUnits::Degrees; cols],
            values,
        }
    }

    fn support(k: usize) -> Vec<FeatureSequence> {
        (0..k)
            .flat_map(|i| [seq(Label::Incorrect, i, 4, 2), seq(Label::Correct, i, 4, 2)])
            .collect()
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(format_value(12.345, 1), "12.3");
        assert_eq!(format_value(0.25, 1), "0.3");
        assert_eq!(format_value(-0.25, 1), "-0.3");
        assert_eq!(format_value(-0.01, 1), "0.0");
        assert_eq!(format_value(7.0, 0), "7");
    }

    #[test]
    fn resampling_row_counts() {
        let s = seq(Label::Correct, 0, 60, 2);
        let text = serialize_features(&s, &SerializationPolicy::default());
        assert_eq!(text.lines().count(), 31);
        let s = seq(Label::Correct, 0, 30, 2);
        let policy = SerializationPolicy {
            include_header: false,
            ..Default::default()
        };
        let text = serialize_features(&s, &policy);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 30);
        assert_eq!(rows[0], "0.0,0.1");
        assert_eq!(rows[29], "29.0,29.1");
        assert_eq!(resample_indices(30, 30), (0..30).collect::<Vec<_>>());
        assert_eq!(resample_indices(3, 5), vec![0, 1, 1, 2, 2]);
    }

    #[test]
    fn ordinals() {
        let got: Vec<String> = [1, 2, 3, 4, 5, 11, 12, 13, 21, 22, 101, 111].map(ordinal).to_vec();
        assert_eq!(
            got,
            ["1st", "2nd", "3rd", "4th", "5th", "11th", "12th", "13th", "21st", "22nd", "101st", "111th"]
        );
    }

    #[test]
    fn two_shot_squat() {
        let t = PromptTechnique::new(TechniqueKind::Classification, 2);
        let test = seq(Label::Incorrect, 9, 4, 2);
        let b = render_prompt(&t, &support(2), &test, "squat", "Kinect", &SerializationPolicy::default())
            .unwrap();
        assert!(b.rendered_text.contains("the 5th data sample"));
        assert_eq!(b.rendered_text.matches("<Data").count(), 5);
        assert_eq!(b.rendered_text.matches(": correct>").count(), 2);
        assert_eq!(b.rendered_text.matches(": incorrect>").count(), 2);
        assert!(b.rendered_text.contains("<Data 5>\n"));
        assert_eq!(b.expected_output_format, OutputFormat::Label);
        assert_eq!(b.support_ids.len(), 4);
        assert_eq!(b.support_ids[0].1, Label::Correct);
        assert_eq!(b.support_ids[3].1, Label::Incorrect);
    }

    #[test]
    fn certainty_clause() {
        let t = PromptTechnique::new(TechniqueKind::Certainty, 1);
        let b = render_prompt(
            &t,
            &support(1),
            &seq(Label::Correct, 5, 3, 2),
            "squat",
            "Kinect",
            &SerializationPolicy::default(),
        )
        .unwrap();
        assert!(b.rendered_text.contains("\"Label, Certainty\""));
        assert!(b.rendered_text.contains("Give a score between 0 and 1"));
    }

    #[test]
    fn zero_shot() {
        let t = PromptTechnique::new(TechniqueKind::Classification, 0);
        let b = render_prompt(&t, &[], &seq(Label::Correct, 0, 3, 2), "squat", "Kinect", &Default::default())
            .unwrap();
        assert!(b.rendered_text.contains("the 1st data sample"));
        assert!(b.rendered_text.contains("<Data 1>\n"));
        assert!(!b.rendered_text.contains("Label 1"));
        assert_eq!(b.rendered_text.matches("<Data").count(), 1);
    }

    #[test]
    fn imbalanced_support_is_rejected() {
        let t = PromptTechnique::new(TechniqueKind::Classification, 1);
        let sup = vec![seq(Label::Correct, 0, 3, 2), seq(Label::Correct, 1, 3, 2)];
        let err = render_prompt(&t, &sup, &seq(Label::Correct, 2, 3, 2), "squat", "Kinect", &Default::default());
        assert!(matches!(err, Err(PromptError::Config(_))));
    }

    #[test]
    fn rendering_is_deterministic_and_order_free() {
        let t = PromptTechnique::new(TechniqueKind::Probability, 2);
        let test = seq(Label::Correct, 7, 5, 2);
        let mut sup = support(2);
        let a = render_prompt(&t, &sup, &test, "squat", "Kinect", &Default::default()).unwrap();
        sup.reverse();
        let b = render_prompt(&t, &sup, &test, "squat", "Kinect", &Default::default()).unwrap();
        assert_eq!(a.rendered_text, b.rendered_text);
    }

    #[test]
    fn feedback_prompt() {
        let test = seq(Label::Incorrect, 0, 4, 2);
        let prior = parse("incorrect", OutputFormat::Label, 0.5);
        let b = render_feedback_prompt("physiotherapist", &prior, &test, "squat", "Kinect", &Default::default())
            .unwrap();
        assert!(b.rendered_text.starts_with("You are a physiotherapist."));
        assert!(b.rendered_text.contains("assessed as incorrect"));
        assert_eq!(b.expected_output_format, OutputFormat::FreeText);
        assert_eq!(b.technique.persona.as_deref(), Some("physiotherapist"));

        let prior = parse("correct", OutputFormat::Label, 0.5);
        let b = render_feedback_prompt("physiotherapist", &prior, &test, "squat", "Kinect", &Default::default())
            .unwrap();
        assert!(b.rendered_text.contains("assessed as correct"));

        assert!(matches!(
            render_feedback_prompt("", &prior, &test, "squat", "Kinect", &Default::default()),
            Err(PromptError::Config(_))
        ));
        let failed = parse("???", OutputFormat::Label, 0.5);
        assert!(matches!(
            render_feedback_prompt("physiotherapist", &failed, &test, "squat", "Kinect", &Default::default()),
            Err(PromptError::State(_))
        ));
    }

    #[test]
    fn technique_invariants() {
        assert!(PromptTechnique::new(TechniqueKind::Classification, 0).validate().is_ok());
        let mut t = PromptTechnique::new(TechniqueKind::Certainty, 3);
        t.persona = Some("coach".into());
        assert!(t.validate().is_err());
        let t = PromptTechnique::new(TechniqueKind::RolePlayFeedback, 0);
        assert!(t.validate().is_err());
    }
}
