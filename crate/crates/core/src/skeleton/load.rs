use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::Deserialize;
use tracing::warn;

use super::{DataError, Label, RepetitionSample, Side, SkeletonSpec};
use crate::matrix::Matrix;

/// Longest run of missing frames that is filled by interpolation.
pub const MAX_REPAIRABLE_GAP: usize = 5;

pub const UIPRMD_FRAME_RATE_HZ: f64 = 30.0;
pub const REHAB24_FRAME_RATE_HZ: f64 = 30.0;

/// Folder pairs searched under a UI-PRMD root, in order. The first pair is the
/// published release layout, the second a flattened copy.
const UIPRMD_LAYOUTS: [(&str, &str); 2] = [
    (
        "Segmented Movements/Kinect/Positions",
        "Incorrect Segmented Movements/Kinect/Positions",
    ),
    ("correct", "incorrect"),
];

/// One annotated repetition inside a REHAB24-6 recording. `recording` is a
/// path relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RepetitionAnnotation {
    pub exercise_id: String,
    pub recording: String,
    pub subject_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(deserialize_with = "de_label")]
    pub correctness: Label,
    #[serde(default)]
    pub dominant_side: Side,
}

fn de_label<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Label, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "correct" | "1" | "true" => Ok(Label::Correct),
        "incorrect" | "0" | "false" => Ok(Label::Incorrect),
        other => Err(serde::de::Error::custom(format!(
            "unknown correctness value {other:?}"
        ))),
    }
}

/// Reads a comma-separated annotation table with header
/// `exercise_id,recording,subject_id,start_frame,end_frame,correctness[,dominant_side]`,
/// keeping rows for `exercise_id` (all rows when `None`).
pub fn load_annotation_table(
    path: &Path,
    exercise_id: Option<&str>,
) -> Result<Vec<RepetitionAnnotation>, DataError> {
    if !path.exists() {
        return Err(DataError::NotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<RepetitionAnnotation>().enumerate() {
        let ann = row.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        if exercise_id.is_none_or(|ex| ex == ann.exercise_id) {
            out.push(ann);
        }
    }
    Ok(out)
}

/// Parses a plain-text position file: one frame per line, numbers separated by
/// commas and/or whitespace. Blank lines are skipped; non-finite tokens such
/// as `NaN` are kept for gap repair.
pub(crate) fn read_position_file(path: &Path, spec: &SkeletonSpec) -> Result<Matrix, DataError> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::NotFound(path.to_path_buf()),
        _ => DataError::Io(e),
    })?;
    let width = spec.row_width();
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for tok in line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("not a number: {tok:?}"),
            })?;
            data.push(v);
            count += 1;
        }
        if count != width {
            return Err(DataError::Schema(format!(
                "{}:{}: {count} values, skeleton expects {width}",
                path.display(),
                lineno + 1
            )));
        }
        rows += 1;
    }
    Ok(Matrix::from_flat(rows, width, data).expect("row widths checked"))
}

/// Fills rows containing non-finite values by linear interpolation between
/// the nearest complete rows. Leading and trailing gaps copy the nearest
/// complete row. Returns the number of repaired rows.
pub fn repair_gaps(frames: &mut Matrix) -> Result<usize, DataError> {
    let n = frames.rows();
    let bad: Vec<bool> = frames
        .iter_rows()
        .map(|r| r.iter().any(|v| !v.is_finite()))
        .collect();
    if !bad.iter().any(|&b| b) {
        return Ok(0);
    }
    if bad.iter().all(|&b| b) {
        return Err(DataError::UnrepairableGap { start: 0, len: n });
    }
    let mut repaired = 0;
    let mut i = 0;
    while i < n {
        if !bad[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && bad[i] {
            i += 1;
        }
        let len = i - start;
        if len > MAX_REPAIRABLE_GAP {
            return Err(DataError::UnrepairableGap { start, len });
        }
        let before = start.checked_sub(1);
        let after = (i < n).then_some(i);
        for r in start..i {
            let row: Vec<f64> = match (before, after) {
                (Some(b), Some(a)) => {
                    let t = (r - b) as f64 / (a - b) as f64;
                    frames
                        .row(b)
                        .iter()
                        .zip(frames.row(a))
                        .map(|(&x0, &x1)| x0 + (x1 - x0) * t)
                        .collect()
                }
                (Some(b), None) => frames.row(b).to_vec(),
                (None, Some(a)) => frames.row(a).to_vec(),
                (None, None) => unreachable!("at least one complete row exists"),
            };
            frames.row_mut(r).copy_from_slice(&row);
        }
        repaired += len;
    }
    Ok(repaired)
}

struct UiprmdFile {
    path: PathBuf,
    subject_id: String,
    episode: usize,
    label: Label,
}

fn uiprmd_files(root: &Path, exercise_id: &str) -> Result<Vec<UiprmdFile>, DataError> {
    if !root.is_dir() {
        return Err(DataError::NotFound(root.to_path_buf()));
    }
    let pattern = Regex::new(r"^(m\d+)_(s\d+)_e(\d+)_positions(_inc)?\.txt$").expect("valid regex");
    let mut found = Vec::new();
    let mut any_layout = false;
    for (correct_dir, incorrect_dir) in UIPRMD_LAYOUTS {
        for (dir, label) in [(correct_dir, Label::Correct), (incorrect_dir, Label::Incorrect)] {
            let dir = root.join(dir);
            if !dir.is_dir() {
                continue;
            }
            any_layout = true;
            for entry in fs::read_dir(&dir)? {
                let path = entry?.path();
                let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                    continue;
                };
                let Some(caps) = pattern.captures(name) else {
                    continue;
                };
                if &caps[1] != exercise_id {
                    continue;
                }
                let episode: usize = caps[3].parse().expect("digits");
                found.push(UiprmdFile {
                    subject_id: caps[2].to_string(),
                    episode,
                    label,
                    path,
                });
            }
        }
        if any_layout {
            break;
        }
    }
    if !any_layout {
        return Err(DataError::NotFound(root.join(UIPRMD_LAYOUTS[0].0)));
    }
    found.sort_by(|a, b| {
        (a.label, &a.subject_id, a.episode, &a.path).cmp(&(b.label, &b.subject_id, b.episode, &b.path))
    });
    Ok(found)
}

/// Loads every UI-PRMD positions file of `exercise_id`. Each episode file is
/// one repetition; the label comes from the folder it sits in. Samples whose
/// gaps cannot be repaired are skipped with a warning.
pub fn load_uiprmd(
    root: &Path,
    exercise_id: &str,
    spec: &SkeletonSpec,
) -> Result<Vec<RepetitionSample>, DataError> {
    let mut samples = Vec::new();
    for file in uiprmd_files(root, exercise_id)? {
        let mut frames = read_position_file(&file.path, spec)?;
        if let Err(e) = repair_gaps(&mut frames) {
            warn!(file = %file.path.display(), error = %e, "rejecting sample");
            continue;
        }
        let sample = RepetitionSample {
            exercise_id: exercise_id.to_string(),
            subject_id: file.subject_id,
            repetition_index: file.episode.saturating_sub(1),
            label: file.label,
            frames,
            frame_rate_hz: UIPRMD_FRAME_RATE_HZ,
            dominant_side: Side::Unknown,
        };
        sample.validate(spec)?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Slices REHAB24-6 recordings into repetitions according to `annotations`,
/// returned in annotation order. Repetition indices count per subject.
pub fn load_rehab24(
    root: &Path,
    exercise_id: &str,
    spec: &SkeletonSpec,
    annotations: &[RepetitionAnnotation],
) -> Result<Vec<RepetitionSample>, DataError> {
    if !root.is_dir() {
        return Err(DataError::NotFound(root.to_path_buf()));
    }
    let mut recordings: HashMap<&str, Matrix> = HashMap::new();
    let mut per_subject: HashMap<&str, usize> = HashMap::new();
    let mut spans: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    let mut samples = Vec::with_capacity(annotations.len());

    for ann in annotations {
        if !recordings.contains_key(ann.recording.as_str()) {
            let m = read_position_file(&root.join(&ann.recording), spec)?;
            recordings.insert(ann.recording.as_str(), m);
        }
        let rec = &recordings[ann.recording.as_str()];
        if ann.end_frame <= ann.start_frame || ann.end_frame > rec.rows() {
            return Err(DataError::Range(format!(
                "annotation [{}, {}) outside recording {} of {} frames",
                ann.start_frame,
                ann.end_frame,
                ann.recording,
                rec.rows()
            )));
        }
        let seen = spans.entry(ann.recording.as_str()).or_default();
        if seen
            .iter()
            .any(|&(s, e)| ann.start_frame < e && s < ann.end_frame)
        {
            warn!(
                recording = %ann.recording,
                start = ann.start_frame,
                end = ann.end_frame,
                "overlapping repetition annotations"
            );
        }
        seen.push((ann.start_frame, ann.end_frame));

        let rep = per_subject.entry(ann.subject_id.as_str()).or_insert(0);
        let repetition_index = *rep;
        *rep += 1;

        let mut frames = rec.slice_rows(ann.start_frame, ann.end_frame);
        if let Err(e) = repair_gaps(&mut frames) {
            warn!(recording = %ann.recording, start = ann.start_frame, error = %e, "rejecting sample");
            continue;
        }
        let sample = RepetitionSample {
            exercise_id: exercise_id.to_string(),
            subject_id: ann.subject_id.clone(),
            repetition_index,
            label: ann.correctness,
            frames,
            frame_rate_hz: REHAB24_FRAME_RATE_HZ,
            dominant_side: ann.dominant_side,
        };
        sample.validate(spec)?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    fn pose_line(width: usize, base: f64) -> String {
        let mut s = String::new();
        for j in 0..width {
            if j > 0 {
                s.push(',');
            }
            write!(s, "{}", base + j as f64 * 0.01).unwrap();
        }
        s
    }

    fn write_file(path: &Path, lines: &[String]) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, lines.join("\n")).unwrap();
    }

    #[test]
    fn uiprmd_labels_come_from_folders() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SkeletonSpec::uiprmd();
        let lines: Vec<String> = (0..5).map(|i| pose_line(66, i as f64)).collect();
        let pos = dir.path().join("Segmented Movements/Kinect/Positions");
        let inc = dir.path().join("Incorrect Segmented Movements/Kinect/Positions");
        write_file(&pos.join("m01_s01_e01_positions.txt"), &lines);
        write_file(&pos.join("m01_s01_e02_positions.txt"), &lines);
        write_file(&pos.join("m02_s01_e01_positions.txt"), &lines);
        write_file(&inc.join("m01_s01_e01_positions_inc.txt"), &lines);

        let samples = load_uiprmd(dir.path(), "m01", &spec).unwrap();
        assert_eq!(samples.len(), 3);
        let correct: Vec<_> = samples.iter().filter(|s| s.label == Label::Correct).collect();
        assert_eq!(correct.len(), 2);
        assert!(samples.iter().all(|s| s.exercise_id == "m01"));
        assert!(samples.iter().all(|s| s.frame_rate_hz == 30.0));
        assert_eq!(samples[0].num_frames(), 5);

        let again = load_uiprmd(dir.path(), "m01", &spec).unwrap();
        assert_eq!(samples, again);
    }

    #[test]
    fn uiprmd_error_paths() {
        let spec = SkeletonSpec::uiprmd();
        assert!(matches!(
            load_uiprmd(Path::new("/nonexistent/uiprmd"), "m01", &spec),
            Err(DataError::NotFound(_))
        ));

        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("correct/m01_s01_e01_positions.txt");
        write_file(&f, &[pose_line(66, 0.0), pose_line(65, 0.0)]);
        assert!(matches!(load_uiprmd(dir.path(), "m01", &spec), Err(DataError::Schema(_))));

        write_file(&f, &[pose_line(66, 0.0), "1,2,abc".to_string()]);
        match load_uiprmd(dir.path(), "m01", &spec) {
            Err(DataError::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert!(path.ends_with("m01_s01_e01_positions.txt"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn gap_repair_interpolates_short_gaps() {
        let mut m = Matrix::from_rows(
            2,
            &[
                vec![0.0, 10.0],
                vec![f64::NAN, 0.0],
                vec![f64::NAN, f64::INFINITY],
                vec![3.0, 40.0],
            ],
        )
        .unwrap();
        assert_eq!(repair_gaps(&mut m).unwrap(), 2);
        assert_eq!(m.row(1), &[1.0, 20.0]);
        assert_eq!(m.row(2), &[2.0, 30.0]);

        let mut edge = Matrix::from_rows(1, &[vec![f64::NAN], vec![5.0], vec![f64::NAN]]).unwrap();
        repair_gaps(&mut edge).unwrap();
        assert_eq!(edge.as_slice(), &[5.0, 5.0, 5.0]);

        let mut rows = vec![vec![0.0]];
        rows.extend((0..6).map(|_| vec![f64::NAN]));
        rows.push(vec![1.0]);
        let mut long = Matrix::from_rows(1, &rows).unwrap();
        assert!(matches!(
            repair_gaps(&mut long),
            Err(DataError::UnrepairableGap { start: 1, len: 6 })
        ));
    }

    #[test]
    fn unrepairable_uiprmd_file_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SkeletonSpec::uiprmd();
        let nan_line = vec!["NaN"; 66].join(",");
        let mut lines = vec![pose_line(66, 0.0)];
        lines.extend(std::iter::repeat_n(nan_line, 7));
        lines.push(pose_line(66, 1.0));
        write_file(&dir.path().join("correct/m01_s01_e01_positions.txt"), &lines);
        write_file(
            &dir.path().join("correct/m01_s02_e01_positions.txt"),
            &[pose_line(66, 0.0), pose_line(66, 1.0)],
        );
        let samples = load_uiprmd(dir.path(), "m01", &spec).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].subject_id, "s02");
    }

    fn annotation(start: usize, end: usize, label: Label) -> RepetitionAnnotation {
        RepetitionAnnotation {
            exercise_id: "ex1".into(),
            recording: "ex1/rec1.txt".into(),
            subject_id: "p01".into(),
            start_frame: start,
            end_frame: end,
            correctness: label,
            dominant_side: Side::Right,
        }
    }

    fn rehab_root() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let lines: Vec<String> = (0..500).map(|i| pose_line(78, i as f64 * 0.001)).collect();
        write_file(&dir.path().join("ex1/rec1.txt"), &lines);
        dir
    }

    #[test]
    fn rehab24_slices_annotations() {
        let dir = rehab_root();
        let spec = SkeletonSpec::rehab24();
        let anns = [
            annotation(100, 220, Label::Correct),
            annotation(220, 300, Label::Incorrect),
            annotation(300, 480, Label::Correct),
        ];
        let samples = load_rehab24(dir.path(), "ex1", &spec, &anns).unwrap();
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[0].num_frames(), 120);
        assert_eq!(samples[0].label, Label::Correct);
        assert_eq!(samples[1].label, Label::Incorrect);
        assert_eq!(
            samples.iter().map(|s| s.repetition_index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(samples[0].dominant_side, Side::Right);
    }

    #[test]
    fn rehab24_rejects_out_of_range_annotation() {
        let dir = rehab_root();
        let spec = SkeletonSpec::rehab24();
        let err = load_rehab24(dir.path(), "ex1", &spec, &[annotation(480, 520, Label::Correct)]);
        assert!(matches!(err, Err(DataError::Range(_))));
    }

    #[test]
    fn rehab24_accepts_overlaps() {
        let dir = rehab_root();
        let spec = SkeletonSpec::rehab24();
        let anns = [annotation(0, 100, Label::Correct), annotation(50, 150, Label::Correct)];
        assert_eq!(load_rehab24(dir.path(), "ex1", &spec, &anns).unwrap().len(), 2);
    }

    #[test]
    fn annotation_table_parses_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.csv");
        fs::write(
            &path,
            "exercise_id,recording,subject_id,start_frame,end_frame,correctness,dominant_side\n\
             ex1,ex1/rec1.txt,p01,0,10,correct,Left\n\
             ex2,ex2/rec1.txt,p01,5,10,0,Unknown\n\
             ex1,ex1/rec1.txt,p02,10,20,Incorrect,Right\n",
        )
        .unwrap();
        let anns = load_annotation_table(&path, Some("ex1")).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[1].correctness, Label::Incorrect);
        assert_eq!(anns[0].dominant_side, Side::Left);
        assert_eq!(load_annotation_table(&path, None).unwrap().len(), 3);
    }
}
