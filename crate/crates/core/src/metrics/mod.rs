//! Binary classification metrics over parsed outcomes.

pub mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::AssessmentOutcome;
use crate::prompt::TechniqueKind;
use crate::skeleton::Label;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples to score")]
    EmptyInput,
    #[error("{0} is undefined for this input")]
    UndefinedMetric(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: Label, truth: Label, positive: Label) {
        match (predicted == positive, truth == positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

/// Counts predictions against truth. An outcome without a label (a failed
/// parse) is counted as predicting the opposite of the truth.
pub fn confusion(outcomes: &[(AssessmentOutcome, Label)], positive: Label) -> Result<ConfusionCounts, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for (o, truth) in outcomes {
        let predicted = o.scored_label().unwrap_or_else(|| truth.opposite());
        c.add(predicted, *truth, positive);
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the ratio was 0/0 and reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

pub fn basic_metrics(c: &ConfusionCounts) -> BasicMetrics {
    assert!(c.total() > 0, "basic_metrics needs at least one sample");
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BasicMetrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
    }
}

fn oriented(scores: &[(f64, Label)], positive: Label) -> Vec<(f64, bool)> {
    // Scores are probabilities of Correct; flip them when Incorrect is positive.
    scores
        .iter()
        .map(|&(p, l)| (if positive == Label::Correct { p } else { 1.0 - p }, l == positive))
        .collect()
}

/// Sorted copy, ascending by score.
fn sorted(scores: &[(f64, bool)]) -> Vec<(f64, bool)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Groups of equal scores in ascending order as (negatives, positives).
fn tie_groups(scores: &[(f64, bool)]) -> Vec<(u64, u64)> {
    let mut groups = Vec::new();
    let v = sorted(scores);
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        let (mut neg, mut pos) = (0, 0);
        while j < v.len() && v[j].0 == v[i].0 {
            if v[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        groups.push((neg, pos));
        i = j;
    }
    groups
}

fn class_totals(scores: &[(f64, bool)]) -> (u64, u64) {
    let pos = scores.iter().filter(|s| s.1).count() as u64;
    (scores.len() as u64 - pos, pos)
}

/// Area under the ROC curve by the rank-sum statistic with midranks for ties.
pub fn auc_roc(scores: &[(f64, Label)], positive: Label) -> Result<f64, MetricsError> {
    let s = oriented(scores, positive);
    let (n_neg, n_pos) = class_totals(&s);
    if n_neg == 0 || n_pos == 0 {
        return Err(MetricsError::UndefinedMetric("AUC-ROC"));
    }
    // Twice the rank sum keeps midranks integral.
    let mut twice_rank_sum: u64 = 0;
    let mut below = 0;
    for (neg, pos) in tie_groups(&s) {
        let size = neg + pos;
        let twice_midrank = 2 * below + size + 1;
        twice_rank_sum += pos * twice_midrank;
        below += size;
    }
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUC-ROC by trapezoidal integration of the ROC curve swept over distinct
/// thresholds from high to low.
pub fn auc_roc_trapezoid(scores: &[(f64, Label)], positive: Label) -> Result<f64, MetricsError> {
    let s = oriented(scores, positive);
    let (n_neg, n_pos) = class_totals(&s);
    if n_neg == 0 || n_pos == 0 {
        return Err(MetricsError::UndefinedMetric("AUC-ROC"));
    }
    // Integer area accumulated as 2 * sum(dFP * (TP_prev + TP_next)).
    let (mut tp, mut fp, mut twice_area) = (0u64, 0u64, 0u64);
    for (neg, pos) in tie_groups(&s).into_iter().rev() {
        twice_area += neg * (2 * tp + pos);
        tp += pos;
        fp += neg;
    }
    debug_assert_eq!((tp, fp), (n_pos, n_neg));
    Ok(twice_area as f64 / (2 * n_pos * n_neg) as f64)
}

/// Average precision: the precision-recall step curve swept over distinct
/// thresholds from high to low, ties entering together.
pub fn auc_pr(scores: &[(f64, Label)], positive: Label) -> Result<f64, MetricsError> {
    let s = oriented(scores, positive);
    let (_, n_pos) = class_totals(&s);
    if n_pos == 0 {
        return Err(MetricsError::UndefinedMetric("AUC-PR"));
    }
    let (mut tp, mut seen, mut area) = (0u64, 0u64, 0.0);
    for (neg, pos) in tie_groups(&s).into_iter().rev() {
        tp += pos;
        seen += neg + pos;
        if pos > 0 {
            area += (pos as f64 / n_pos as f64) * (tp as f64 / seen as f64);
        }
    }
    Ok(area)
}

/// Identity of an experiment cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub exercise_id: String,
    pub technique: TechniqueKind,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cell: CellKey,
    pub model_name: String,
    pub positive_class: Label,
    pub n_samples: usize,
    pub confusion: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub auc_roc: Option<f64>,
    pub auc_pr: Option<f64>,
    pub parse_failure_rate: f64,
}

/// Score used for ranking metrics. A failed parse gets the worst possible
/// score for its true class.
pub fn ranking_score(outcome: &AssessmentOutcome, truth: Label) -> f64 {
    match (outcome.scored_label(), outcome.probability_correct) {
        (Some(_), Some(p)) => p,
        _ => match truth {
            Label::Correct => 0.0,
            Label::Incorrect => 1.0,
        },
    }
}

impl MetricsReport {
    /// Scores one cell. AUC fields are filled only when `probabilities` is
    /// set and both classes are present.
    pub fn compute(
        cell: CellKey,
        model_name: &str,
        outcomes: &[(AssessmentOutcome, Label)],
        probabilities: bool,
        positive: Label,
    ) -> Result<Self, MetricsError> {
        let c = confusion(outcomes, positive)?;
        let m = basic_metrics(&c);
        let (auc_roc_v, auc_pr_v) = if probabilities {
            let scores: Vec<(f64, Label)> = outcomes.iter().map(|(o, t)| (ranking_score(o, *t), *t)).collect();
            (auc_roc(&scores, positive).ok(), auc_pr(&scores, positive).ok())
        } else {
            (None, None)
        };
        let failed = outcomes.iter().filter(|(o, _)| o.scored_label().is_none()).count();
        Ok(Self {
            cell,
            model_name: model_name.to_string(),
            positive_class: positive,
            n_samples: outcomes.len(),
            confusion: c,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            precision_undefined: m.precision_undefined,
            recall_undefined: m.recall_undefined,
            auc_roc: auc_roc_v,
            auc_pr: auc_pr_v,
            parse_failure_rate: failed as f64 / outcomes.len() as f64,
        })
    }
}
