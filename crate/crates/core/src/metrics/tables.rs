//! Plain-text report tables with published reference values alongside.
//!
//! Reference values come from a proprietary model run and are printed for
//! comparison only.

use std::fmt::Write as _;

use super::MetricsReport;
use crate::prompt::TechniqueKind;
use crate::skeleton::DatasetId;

/// Accuracy, precision, recall, F1.
pub type Quad = [f64; 4];

/// Published k-shot classification results for k = 0..=5.
pub fn reference_shot_rows(dataset: DatasetId) -> Option<[Quad; 6]> {
    match dataset {
        DatasetId::Uiprmd => Some([
            [0.57, 0.55, 0.75, 0.64],
            [0.59, 0.57, 0.72, 0.63],
            [0.66, 0.62, 0.84, 0.71],
            [0.68, 0.74, 0.79, 0.76],
            [0.42, 0.43, 0.50, 0.46],
            [0.63, 0.64, 0.60, 0.62],
        ]),
        DatasetId::Rehab24 => Some([
            [0.53, 0.54, 0.73, 0.62],
            [0.58, 0.58, 0.77, 0.66],
            [0.61, 0.59, 0.81, 0.68],
            [0.63, 0.60, 0.85, 0.70],
            [0.57, 0.68, 0.72, 0.65],
            [0.56, 0.62, 0.61, 0.60],
        ]),
        DatasetId::Generic => None,
    }
}

/// Published three-shot results per technique: four basic metrics plus
/// AUC-ROC and AUC-PR where probabilities were elicited.
pub fn reference_technique_row(dataset: DatasetId, technique: TechniqueKind) -> Option<(Quad, Option<[f64; 2]>)> {
    use TechniqueKind::*;
    let row = match (dataset, technique) {
        (DatasetId::Uiprmd, Classification) => ([0.68, 0.74, 0.79, 0.76], None),
        (DatasetId::Uiprmd, ChainOfThought) => ([0.72, 0.75, 0.67, 0.71], None),
        (DatasetId::Uiprmd, Certainty) => ([0.76, 0.72, 0.87, 0.79], None),
        (DatasetId::Uiprmd, Probability) => ([0.68, 0.65, 0.79, 0.71], Some([0.70, 0.68])),
        (DatasetId::Uiprmd, ChainOfThoughtPlusCertainty) => ([0.64, 0.59, 0.90, 0.72], None),
        (DatasetId::Rehab24, Classification) => ([0.63, 0.60, 0.85, 0.70], None),
        (DatasetId::Rehab24, ChainOfThought) => ([0.70, 0.71, 0.67, 0.69], None),
        (DatasetId::Rehab24, Certainty) => ([0.70, 0.67, 0.80, 0.73], None),
        (DatasetId::Rehab24, Probability) => ([0.67, 0.63, 0.80, 0.71], Some([0.72, 0.68])),
        (DatasetId::Rehab24, ChainOfThoughtPlusCertainty) => ([0.67, 0.63, 0.80, 0.71], None),
        _ => return None,
    };
    Some(row)
}

/// Published per-exercise results with certainty elicitation at k = 3.
pub fn reference_exercise(exercise_id: &str) -> Option<Quad> {
    Some(match exercise_id {
        "ex1" => [0.67, 0.71, 0.75, 0.73],
        "ex5" => [0.74, 0.69, 0.90, 0.78],
        "ex6" => [0.75, 0.78, 0.70, 0.74],
        "m07" => [0.76, 0.76, 0.84, 0.80],
        "m03" => [0.67, 0.64, 0.76, 0.70],
        "m01" => [0.76, 0.69, 0.95, 0.80],
        _ => return None,
    })
}

const NOTE: &str = "ref = published reference value, printed for comparison only";

fn num(v: f64, undefined: bool) -> String {
    if undefined {
        format!("{v:.2}*")
    } else {
        format!("{v:.2}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.2}"))
}

fn quad(r: &MetricsReport) -> [String; 4] {
    [
        num(r.accuracy, false),
        num(r.precision, r.precision_undefined),
        num(r.recall, r.recall_undefined),
        num(r.f1, false),
    ]
}

fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |row: &[String]| {
        let mut s = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {cell:>w$}", w = width[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (cols - 1)));
    for row in rows {
        out.push('\n');
        out.push_str(&line(row));
    }
    out.push('\n');
    out
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn footer(reports: impl Iterator<Item = bool>) -> String {
    let mut s = String::new();
    if reports.into_iter().any(|b| b) {
        s.push_str("* 0/0, reported as 0\n");
    }
    s.push_str(NOTE);
    s.push('\n');
    s
}

fn any_undefined(r: &MetricsReport) -> bool {
    r.precision_undefined || r.recall_undefined
}

/// Shot-count table: one row per k.
pub fn shot_table(title: &str, dataset: DatasetId, rows: &[(usize, MetricsReport)]) -> String {
    let reference = reference_shot_rows(dataset);
    let header = headers(&[
        "Setting", "Accuracy", "Precision", "Recall", "F1", "ref Acc", "ref Prec", "ref Rec", "ref F1",
    ]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(k, r)| {
            let mut row = vec![format!("{k}-shot")];
            row.extend(quad(r));
            let refs = reference.as_ref().and_then(|t| t.get(*k));
            for i in 0..4 {
                row.push(opt(refs.map(|q| q[i])));
            }
            row
        })
        .collect();
    format!(
        "{title}\n{}{}",
        grid(&header, &body),
        footer(rows.iter().map(|(_, r)| any_undefined(r)))
    )
}

/// Technique comparison table. AUC columns show "-" unless probabilities
/// were elicited.
pub fn technique_table(title: &str, dataset: DatasetId, rows: &[(TechniqueKind, MetricsReport)]) -> String {
    let header = headers(&[
        "Setting", "Accuracy", "Precision", "Recall", "F1", "AUC-ROC", "AUC-PR", "ref Acc", "ref F1", "ref AUC-ROC",
    ]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(t, r)| {
            let name = if *t == TechniqueKind::Classification {
                format!("{}-shot", r.cell.k)
            } else {
                t.display_name().to_string()
            };
            let mut row = vec![name];
            row.extend(quad(r));
            row.push(opt(r.auc_roc));
            row.push(opt(r.auc_pr));
            let refs = reference_technique_row(dataset, *t);
            row.push(opt(refs.map(|(q, _)| q[0])));
            row.push(opt(refs.map(|(q, _)| q[3])));
            row.push(opt(refs.and_then(|(_, a)| a.map(|a| a[0]))));
            row
        })
        .collect();
    format!(
        "{title}\n{}{}",
        grid(&header, &body),
        footer(rows.iter().map(|(_, r)| any_undefined(r)))
    )
}

/// Per-exercise table: one column per exercise, one row per metric, each
/// cell "value (ref)".
pub fn exercise_table(title: &str, reports: &[MetricsReport]) -> String {
    let mut header = vec!["Exercise".to_string()];
    header.extend(reports.iter().map(|r| r.cell.exercise_id.clone()));
    let names = ["Accuracy", "Precision", "Recall", "F1"];
    let body: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = vec![name.to_string()];
            for r in reports {
                let v = &quad(r)[i];
                let refv = reference_exercise(&r.cell.exercise_id).map(|q| q[i]);
                row.push(format!("{v} ({})", opt(refv).replace('-', "ref -")));
            }
            row
        })
        .collect();
    format!(
        "{title}\n{}{}",
        grid(&header, &body),
        footer(reports.iter().map(any_undefined))
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{CellKey, ConfusionCounts};
    use crate::skeleton::Label;

    fn report(ex: &str, technique: TechniqueKind, k: usize, auc: Option<f64>) -> MetricsReport {
        MetricsReport {
            cell: CellKey {
                exercise_id: ex.into(),
                technique,
                k,
                seed: 0,
            },
            model_name: "mock".into(),
            positive_class: Label::Correct,
            n_samples: 10,
            confusion: ConfusionCounts::default(),
            accuracy: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            precision_undefined: false,
            recall_undefined: false,
            auc_roc: auc,
            auc_pr: auc,
            parse_failure_rate: 0.0,
        }
    }

    #[test]
    fn shot_table_prints_reference() {
        let rows: Vec<_> = (0..6)
            .map(|k| (k, report("ALL", TechniqueKind::Classification, k, None)))
            .collect();
        let t = shot_table("UI-PRMD", DatasetId::Uiprmd, &rows);
        let line = t.lines().find(|l| l.starts_with("3-shot")).unwrap();
        assert!(line.contains("0.68"));
        assert_eq!(t.lines().filter(|l| l.contains("-shot")).count(), 6);
    }

    #[test]
    fn technique_table_dashes() {
        let rows = vec![
            (TechniqueKind::Certainty, report("ALL", TechniqueKind::Certainty, 3, None)),
            (TechniqueKind::Probability, report("ALL", TechniqueKind::Probability, 3, Some(0.9))),
        ];
        let t = technique_table("UI-PRMD", DatasetId::Uiprmd, &rows);
        let cert = t.lines().find(|l| l.starts_with("Certainty")).unwrap();
        assert!(cert.contains("0.76"));
        let cols: Vec<&str> = cert.split_whitespace().collect();
        assert_eq!(&cols[5..7], ["-", "-"]);
        let prob = t.lines().find(|l| l.starts_with("Probability")).unwrap();
        assert!(prob.contains("0.90"));
    }

    #[test]
    fn exercise_table_columns() {
        let reports: Vec<_> = ["m07", "m03", "m01"]
            .iter()
            .map(|e| report(e, TechniqueKind::Certainty, 3, None))
            .collect();
        let t = exercise_table("Per exercise", &reports);
        let header = t.lines().nth(1).unwrap();
        assert_eq!(header.split_whitespace().count(), 4);
        assert!(t.lines().find(|l| l.starts_with("Recall")).unwrap().contains("(0.95)"));
    }
}
