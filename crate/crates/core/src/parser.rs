//! Turns model response text into an [`AssessmentOutcome`].
//!
//! Parsing is total. A strict pass accepts exactly the requested output
//! format (labels case-insensitive, surrounding whitespace, quotes and a
//! trailing period tolerated). When that fails a recovery pass looks for the
//! first standalone label word and the first number in `[0, 1]`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::skeleton::Label;

/// Default decision threshold for elicited probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Shape of the answer a prompt asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputFormat {
    Label,
    LabelReasoning,
    ProbabilityOnly,
    LabelCertainty,
    LabelCertaintyReasoning,
    FreeText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseStatus {
    Parsed,
    Recovered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentOutcome {
    pub predicted_label: Option<Label>,
    pub probability_correct: Option<f64>,
    pub certainty: Option<f64>,
    pub reasoning_text: Option<String>,
    pub feedback_text: Option<String>,
    pub parse_status: ParseStatus,
    /// Original response, kept for audit when parsing failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

impl AssessmentOutcome {
    fn empty(status: ParseStatus) -> Self {
        Self {
            predicted_label: None,
            probability_correct: None,
            certainty: None,
            reasoning_text: None,
            feedback_text: None,
            parse_status: status,
            raw_text: None,
        }
    }

    pub fn failed(raw: &str) -> Self {
        Self {
            raw_text: Some(raw.to_string()),
            ..Self::empty(ParseStatus::Failed)
        }
    }

    /// Label used for scoring; `None` when parsing failed.
    pub fn scored_label(&self) -> Option<Label> {
        match self.parse_status {
            ParseStatus::Failed => None,
            _ => self.predicted_label,
        }
    }
}

fn label_from_word(word: &str) -> Option<Label> {
    match word.to_ascii_lowercase().as_str() {
        "correct" => Some(Label::Correct),
        "incorrect" => Some(Label::Incorrect),
        _ => None,
    }
}

fn unit_interval(v: f64) -> Option<f64> {
    (v.is_finite() && (0.0..=1.0).contains(&v)).then_some(v)
}

fn strict_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(incorrect|correct)$").unwrap())
}

fn strict_label_rest() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)^(incorrect|correct)\s*,\s*(.*)$").unwrap())
}

fn strict_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\d+(?:\.\d*)?|\.\d+)$").unwrap())
}

fn strict_number_rest() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)^(\d+(?:\.\d*)?|\.\d+)\s*,\s*(.*)$").unwrap())
}

fn any_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|\.\d+").unwrap())
}

fn word_correct() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bcorrect\b").unwrap())
}

/// Strips whitespace, wrapping quotes/backticks and one trailing period.
fn clean(text: &str) -> &str {
    let mut t = text.trim();
    loop {
        let before = t;
        t = t.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim();
        t = t.strip_suffix('.').unwrap_or(t).trim();
        if t == before {
            return t;
        }
    }
}

fn strict_pass(text: &str, expected: OutputFormat, threshold: f64) -> Option<AssessmentOutcome> {
    let t = match expected {
        OutputFormat::LabelReasoning | OutputFormat::LabelCertaintyReasoning => text
            .trim()
            .trim_matches(|c| c == '"' || c == '`')
            .trim(),
        _ => clean(text),
    };
    let mut out = AssessmentOutcome::empty(ParseStatus::Parsed);
    match expected {
        OutputFormat::Label => {
            let caps = strict_label().captures(t)?;
            out.predicted_label = label_from_word(&caps[1]);
        }
        OutputFormat::LabelReasoning => {
            let caps = strict_label_rest().captures(t)?;
            let reasoning = caps[2].trim();
            if reasoning.is_empty() {
                return None;
            }
            out.predicted_label = label_from_word(&caps[1]);
            out.reasoning_text = Some(reasoning.to_string());
        }
        OutputFormat::ProbabilityOnly => {
            if !strict_number().is_match(t) {
                return None;
            }
            let p = unit_interval(t.parse().ok()?)?;
            out.probability_correct = Some(p);
            out.predicted_label = Some(derive_label(p, threshold));
        }
        OutputFormat::LabelCertainty => {
            let caps = strict_label_rest().captures(t)?;
            let num = clean(&caps[2]);
            if !strict_number().is_match(num) {
                return None;
            }
            out.predicted_label = label_from_word(&caps[1]);
            out.certainty = Some(unit_interval(num.parse().ok()?)?);
        }
        OutputFormat::LabelCertaintyReasoning => {
            let caps = strict_label_rest().captures(t)?;
            let rest = strict_number_rest().captures(caps[2].trim())?;
            let reasoning = rest[2].trim();
            if reasoning.is_empty() {
                return None;
            }
            out.predicted_label = label_from_word(&caps[1]);
            out.certainty = Some(unit_interval(rest[1].parse().ok()?)?);
            out.reasoning_text = Some(reasoning.to_string());
        }
        OutputFormat::FreeText => {
            let body = text.trim();
            if body.is_empty() {
                return None;
            }
            out.feedback_text = Some(body.to_string());
        }
    }
    Some(out)
}

/// Label found by the recovery scan. Any occurrence of "incorrect", even
/// inside a longer word such as "incorrectly", rules out `Correct`.
pub fn recover_label(text: &str) -> Option<Label> {
    if text.to_ascii_lowercase().contains("incorrect") {
        return Some(Label::Incorrect);
    }
    word_correct().is_match(text).then_some(Label::Correct)
}

/// First number in the text that lies in `[0, 1]`.
pub fn recover_unit_number(text: &str) -> Option<f64> {
    any_number()
        .find_iter(text)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find_map(unit_interval)
}

fn recovery_pass(text: &str, expected: OutputFormat, threshold: f64) -> Option<AssessmentOutcome> {
    let mut out = AssessmentOutcome::empty(ParseStatus::Recovered);
    match expected {
        OutputFormat::ProbabilityOnly => {
            let p = recover_unit_number(text)?;
            out.probability_correct = Some(p);
            out.predicted_label = Some(derive_label(p, threshold));
        }
        OutputFormat::FreeText => return None,
        _ => {
            out.predicted_label = Some(recover_label(text)?);
            if matches!(
                expected,
                OutputFormat::LabelCertainty | OutputFormat::LabelCertaintyReasoning
            ) {
                out.certainty = recover_unit_number(text);
            }
            if matches!(
                expected,
                OutputFormat::LabelReasoning | OutputFormat::LabelCertaintyReasoning
            ) {
                out.reasoning_text = Some(text.trim().to_string());
            }
        }
    }
    Some(out)
}

/// `Correct` iff `probability_correct >= threshold`.
pub fn derive_label(probability_correct: f64, threshold: f64) -> Label {
    if probability_correct >= threshold {
        Label::Correct
    } else {
        Label::Incorrect
    }
}

/// Parses `response_text` against the expected output format. Never fails;
/// the outcome's `parse_status` records which pass succeeded.
pub fn parse(response_text: &str, expected: OutputFormat, threshold: f64) -> AssessmentOutcome {
    strict_pass(response_text, expected, threshold)
        .or_else(|| recovery_pass(response_text, expected, threshold))
        .unwrap_or_else(|| AssessmentOutcome::failed(response_text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_certainty_strict() {
        let o = parse("incorrect, 0.85", OutputFormat::LabelCertainty, 0.5);
        assert_eq!(o.predicted_label, Some(Label::Incorrect));
        assert_eq!(o.certainty, Some(0.85));
        assert_eq!(o.parse_status, ParseStatus::Parsed);
    }

    #[test]
    fn probability_threshold() {
        let o = parse("0.70", OutputFormat::ProbabilityOnly, 0.5);
        assert_eq!(o.probability_correct, Some(0.70));
        assert_eq!(o.predicted_label, Some(Label::Correct));
        assert_eq!(o.parse_status, ParseStatus::Parsed);
        let o = parse("0.70", OutputFormat::ProbabilityOnly, 0.71);
        assert_eq!(o.predicted_label, Some(Label::Incorrect));
    }

    #[test]
    fn recovery_from_prose() {
        let o = parse(
            "The movement looks Correct because the knee flexion reaches 95 degrees",
            OutputFormat::Label,
            0.5,
        );
        assert_eq!(o.predicted_label, Some(Label::Correct));
        assert_eq!(o.parse_status, ParseStatus::Recovered);
    }

    #[test]
    fn label_prefix_is_case_insensitive() {
        let o = parse("Label: INCORRECT", OutputFormat::Label, 0.5);
        assert_eq!(o.predicted_label, Some(Label::Incorrect));
        assert_eq!(o.parse_status, ParseStatus::Recovered);
    }

    #[test]
    fn quotes_and_whitespace_are_tolerated() {
        for text in ["  \"correct\" ", "'Correct'.", "`incorrect`\n"] {
            assert_eq!(parse(text, OutputFormat::Label, 0.5).parse_status, ParseStatus::Parsed, "{text}");
        }
    }

    #[test]
    fn reasoning_captures_everything_after_separator() {
        let o = parse(
            "correct, The knee angle stays above 80.\nTrunk is upright.",
            OutputFormat::LabelReasoning,
            0.5,
        );
        assert_eq!(o.parse_status, ParseStatus::Parsed);
        assert_eq!(
            o.reasoning_text.as_deref(),
            Some("The knee angle stays above 80.\nTrunk is upright.")
        );
    }

    #[test]
    fn certainty_and_reasoning() {
        let o = parse(
            "incorrect, 0.9, the trunk leans forward",
            OutputFormat::LabelCertaintyReasoning,
            0.5,
        );
        assert_eq!(o.parse_status, ParseStatus::Parsed);
        assert_eq!(o.certainty, Some(0.9));
        assert_eq!(o.reasoning_text.as_deref(), Some("the trunk leans forward"));
    }

    #[test]
    fn failures_keep_raw_text() {
        let o = parse("I cannot tell.", OutputFormat::Label, 0.5);
        assert_eq!(o.parse_status, ParseStatus::Failed);
        assert_eq!(o.raw_text.as_deref(), Some("I cannot tell."));
        let o = parse("probability is high", OutputFormat::ProbabilityOnly, 0.5);
        assert_eq!(o.parse_status, ParseStatus::Failed);
        assert_eq!(parse("   ", OutputFormat::FreeText, 0.5).parse_status, ParseStatus::Failed);
    }

    #[test]
    fn out_of_range_numbers_are_skipped_in_recovery() {
        let o = parse("I'd say 75 percent, so 0.75", OutputFormat::ProbabilityOnly, 0.5);
        assert_eq!(o.probability_correct, Some(0.75));
        assert_eq!(o.parse_status, ParseStatus::Recovered);
    }

    #[test]
    fn incorrectly_does_not_become_correct() {
        assert_eq!(
            recover_label("performed incorrectly, otherwise correct"),
            Some(Label::Incorrect)
        );
        assert_eq!(recover_label("nothing here"), None);
    }

    proptest! {
        #[test]
        fn parse_is_total(text in ".{0,200}", fmt in 0usize..6, th in 0.0f64..=1.0) {
            let formats = [
                OutputFormat::Label, OutputFormat::LabelReasoning, OutputFormat::ProbabilityOnly,
                OutputFormat::LabelCertainty, OutputFormat::LabelCertaintyReasoning, OutputFormat::FreeText,
            ];
            let o = parse(&text, formats[fmt], th);
            if let Some(p) = o.probability_correct { prop_assert!((0.0..=1.0).contains(&p)); }
            if let Some(c) = o.certainty { prop_assert!((0.0..=1.0).contains(&c)); }
            if o.parse_status == ParseStatus::Failed {
                prop_assert_eq!(o.raw_text.as_deref(), Some(text.as_str()));
            }
        }

        #[test]
        fn recovery_never_maps_incorrect_text_to_correct(
            pre in "[a-zA-Z ,.]{0,30}", post in "[a-zA-Z ,.]{0,30}", upper: bool,
        ) {
            let word = if upper { "INCORRECT" } else { "incorrect" };
            let text = format!("{pre}{word}{post}");
            prop_assert_eq!(recover_label(&text), Some(Label::Incorrect));
            let o = parse(&text, OutputFormat::Label, 0.5);
            prop_assert_ne!(o.predicted_label, Some(Label::Correct));
        }

        #[test]
        fn threshold_monotonicity(p in 0.0f64..=1.0, ts in prop::collection::vec(0.0f64..=1.0, 2..20)) {
            let mut ts = ts;
            ts.sort_by(f64::total_cmp);
            let labels: Vec<Label> = ts.iter().map(|&t| derive_label(p, t)).collect();
            let changes = labels.windows(2).filter(|w| w[0] != w[1]).count();
            prop_assert!(changes <= 1);
            for (t, l) in ts.iter().zip(&labels) {
                prop_assert_eq!(*l == Label::Correct, *t <= p);
            }
        }
    }
}
