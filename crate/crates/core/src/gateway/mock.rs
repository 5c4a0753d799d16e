//! Deterministic offline stand-in for a chat model.
//!
//! The oracle reads the last data block of a prompt, averages one feature
//! column and answers "correct" when the mean is above the exercise's
//! threshold. The answer is written in whatever format the prompt asked for.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{now_millis, prompt_hash, Backend, BackendError, CompletionRecord, GatewayError, ModelEndpointConfig, TransportStatus};
use crate::parser::OutputFormat;
use crate::prompt::PromptBundle;
use crate::skeleton::Label;
use crate::synthetic::{synthetic_rule, SYNTHETIC_EXERCISES};

pub const MOCK_MODEL_NAME: &str = "mock-oracle";
pub const DEFAULT_CERTAINTY: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRule {
    /// Column of the data block to average.
    pub feature: usize,
    pub threshold: f64,
}

impl OracleRule {
    pub fn decide(&self, mean: f64) -> Label {
        if mean > self.threshold {
            Label::Correct
        } else {
            Label::Incorrect
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Rules keyed by exercise id.
    pub rules: BTreeMap<String, OracleRule>,
    /// Used for exercises without an entry in `rules`.
    pub default_rule: Option<OracleRule>,
    pub certainty: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rules: BTreeMap::new(),
            default_rule: None,
            certainty: DEFAULT_CERTAINTY,
        }
    }
}

impl OracleConfig {
    /// Rules matching the labels of [`crate::synthetic::synthetic_dataset`].
    pub fn synthetic() -> Self {
        let rules = SYNTHETIC_EXERCISES
            .iter()
            .map(|ex| {
                let r = synthetic_rule(ex).expect("synthetic exercise has a rule");
                (
                    ex.to_string(),
                    OracleRule {
                        feature: r.feature,
                        threshold: r.threshold,
                    },
                )
            })
            .collect();
        Self {
            rules,
            ..Default::default()
        }
    }

    pub fn rule_for(&self, exercise_id: &str) -> Option<OracleRule> {
        self.rules.get(exercise_id).copied().or(self.default_rule)
    }
}

pub type FinalBlock = (Option<Vec<String>>, Vec<Vec<f64>>);

/// Header (if any) and numeric rows of the last `<Data n>` block in `text`.
pub fn parse_final_block(text: &str) -> Result<FinalBlock, String> {
    static OPEN: OnceLock<Regex> = OnceLock::new();
    static NUM: OnceLock<Regex> = OnceLock::new();
    let open = OPEN.get_or_init(|| Regex::new(r"(?m)^<Data \d+>$").unwrap());
    let num = NUM.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

    let start = open
        .find_iter(text)
        .last()
        .ok_or("no unlabelled data block")?
        .end();
    let mut lines = text[start..]
        .lines()
        .skip_while(|l| l.is_empty())
        .take_while(|l| !l.trim().is_empty())
        .peekable();
    let header = match lines.peek() {
        Some(l) if l.chars().any(char::is_alphabetic) => {
            let h = lines.next().unwrap();
            Some(
                h.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.' || c == ' '))
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect(),
            )
        }
        _ => None,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        if line.chars().any(char::is_alphabetic) {
            return Err(format!("non-numeric row {line:?}"));
        }
        let row: Vec<f64> = num
            .find_iter(line)
            .map(|m| m.as_str().parse().map_err(|_| format!("bad number {:?}", m.as_str())))
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("ragged row {line:?}"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err("empty data block".into());
    }
    Ok((header, rows))
}

fn column_mean(rows: &[Vec<f64>], c: usize) -> Result<f64, String> {
    if c >= rows[0].len() {
        return Err(format!("feature column {c} out of range ({} columns)", rows[0].len()));
    }
    Ok(rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64)
}

fn fmt_unit(v: f64) -> String {
    format!("{v:.2}")
}

/// Response text the oracle produces for `bundle`.
pub fn mock_oracle_response(bundle: &PromptBundle, oracle: &OracleConfig) -> Result<String, String> {
    let (header, rows) = parse_final_block(&bundle.rendered_text)?;
    let name_of = |c: usize| {
        header
            .as_ref()
            .and_then(|h| h.get(c).cloned())
            .unwrap_or_else(|| format!("feature {}", c + 1))
    };
    if bundle.expected_output_format == OutputFormat::FreeText {
        return Ok(format!(
            "Keep your {} smooth and controlled through the whole repetition, and move at a steady pace.",
            name_of(0)
        ));
    }
    let exercise = &bundle.test_id.exercise_id;
    let rule = oracle
        .rule_for(exercise)
        .ok_or_else(|| format!("no oracle rule for exercise {exercise}"))?;
    let mean = column_mean(&rows, rule.feature)?;
    let label = rule.decide(mean);
    let side = if label == Label::Correct { "above" } else { "at or below" };
    let reasoning = format!(
        "The mean {} is {mean:.2}, {side} the reference value {}.",
        name_of(rule.feature),
        rule.threshold
    );
    let certainty = fmt_unit(oracle.certainty);
    Ok(match bundle.expected_output_format {
        OutputFormat::Label => label.token().to_string(),
        OutputFormat::LabelReasoning => format!("{label}, {reasoning}"),
        OutputFormat::ProbabilityOnly => {
            let p = if label == Label::Correct {
                oracle.certainty
            } else {
                1.0 - oracle.certainty
            };
            fmt_unit(p)
        }
        OutputFormat::LabelCertainty => format!("{label}, {certainty}"),
        OutputFormat::LabelCertaintyReasoning => format!("{label}, {certainty}, {reasoning}"),
        OutputFormat::FreeText => unreachable!(),
    })
}

pub fn mock_oracle_complete(bundle: &PromptBundle, oracle: &OracleConfig) -> Result<CompletionRecord, GatewayError> {
    let started = Instant::now();
    let response_text = mock_oracle_response(bundle, oracle).map_err(GatewayError::Oracle)?;
    Ok(CompletionRecord {
        prompt_hash: prompt_hash(&bundle.rendered_text, MOCK_MODEL_NAME, 0.0),
        response_text,
        latency_ms: started.elapsed().as_millis() as u64,
        timestamp: now_millis(),
        transport_status: TransportStatus::Ok,
    })
}

#[derive(Debug, Clone)]
pub struct MockOracle {
    config: OracleConfig,
}

impl MockOracle {
    pub fn new(config: OracleConfig) -> Self {
        Self { config }
    }
}

impl Backend for MockOracle {
    fn send(&self, bundle: &PromptBundle, _: &ModelEndpointConfig) -> Result<String, BackendError> {
        mock_oracle_response(bundle, &self.config).map_err(BackendError::Oracle)
    }

    fn is_network(&self) -> bool {
        false
    }
}
