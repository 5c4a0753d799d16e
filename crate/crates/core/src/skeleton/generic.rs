//! Normalized interchange format.
//!
//! A UTF-8 JSON Lines file: the first line is the header object, every
//! following line is one repetition record.
//!
//! ```text
//! {"schema_version":1,"dataset_id":"UIPRMD","exercise_id":"m01","joint_names":[...],"frame_rate_hz":30.0,"units":"millimeters"}
//! {"subject_id":"s01","repetition_index":0,"label":"Correct","dominant_side":"Unknown","frames":[[...],[...]]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, DatasetId, Label, RepetitionSample, Side, SkeletonSpec, Units};
use crate::geometry::Vec3;
use crate::matrix::Matrix;

pub const GENERIC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericHeader {
    pub schema_version: u32,
    pub dataset_id: DatasetId,
    pub exercise_id: String,
    pub joint_names: Vec<String>,
    pub frame_rate_hz: f64,
    pub units: Units,
}

impl GenericHeader {
    pub fn new(spec: &SkeletonSpec, exercise_id: &str, frame_rate_hz: f64) -> Self {
        Self {
            schema_version: GENERIC_SCHEMA_VERSION,
            dataset_id: spec.dataset_id(),
            exercise_id: exercise_id.to_string(),
            joint_names: spec.joint_names().to_vec(),
            frame_rate_hz,
            units: spec.units(),
        }
    }

    /// Skeleton described by the header. Known datasets keep their built-in
    /// up axis; generic files are taken as y-up.
    pub fn skeleton_spec(&self) -> Result<SkeletonSpec, DataError> {
        let up = SkeletonSpec::for_dataset(self.dataset_id)
            .map(|s| s.up_axis())
            .unwrap_or(Vec3::new(0.0, 1.0, 0.0));
        SkeletonSpec::new(self.dataset_id, self.joint_names.clone(), up, self.units)
    }
}

#[derive(Serialize, Deserialize)]
struct Record {
    subject_id: String,
    repetition_index: usize,
    label: Label,
    dominant_side: Side,
    frames: Vec<Vec<f64>>,
}

pub fn save_generic(
    path: &Path,
    header: &GenericHeader,
    samples: &[RepetitionSample],
) -> Result<(), DataError> {
    let width = header.joint_names.len() * super::CHANNELS;
    for s in samples {
        if s.exercise_id != header.exercise_id {
            return Err(DataError::Schema(format!(
                "sample {} does not belong to exercise {}",
                s.id(),
                header.exercise_id
            )));
        }
        if s.frames.cols() != width {
            return Err(DataError::Schema(format!(
                "sample {} has {} columns, header implies {width}",
                s.id(),
                s.frames.cols()
            )));
        }
        if s.frame_rate_hz != header.frame_rate_hz {
            return Err(DataError::Schema(format!(
                "sample {} frame rate {} differs from header {}",
                s.id(),
                s.frame_rate_hz,
                header.frame_rate_hz
            )));
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut out, header).map_err(|e| DataError::Schema(e.to_string()))?;
    out.write_all(b"\n")?;
    for s in samples {
        let rec = Record {
            subject_id: s.subject_id.clone(),
            repetition_index: s.repetition_index,
            label: s.label,
            dominant_side: s.dominant_side,
            frames: s.frames.to_rows(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(|e| DataError::Schema(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_generic(path: &Path) -> Result<(GenericHeader, Vec<RepetitionSample>), DataError> {
    let file = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::NotFound(path.to_path_buf()),
        _ => DataError::Io(e),
    })?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let parse_err = |line: usize, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header_line = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(DataError::Schema(format!("{}: missing header", path.display()))),
    };
    let raw: serde_json::Value =
        serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(GENERIC_SCHEMA_VERSION as u64) {
        return Err(DataError::Schema(format!(
            "{}: schema_version {:?}, expected {GENERIC_SCHEMA_VERSION}",
            path.display(),
            version
        )));
    }
    let header: GenericHeader =
        serde_json::from_value(raw).map_err(|e| parse_err(1, e.to_string()))?;
    let spec = header.skeleton_spec()?;

    let mut samples = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        let frames = Matrix::from_rows(spec.row_width(), &rec.frames).ok_or_else(|| {
            DataError::Schema(format!(
                "{}:{}: frame width differs from {} joints",
                path.display(),
                i + 1,
                spec.joint_count()
            ))
        })?;
        let sample = RepetitionSample {
            exercise_id: header.exercise_id.clone(),
            subject_id: rec.subject_id,
            repetition_index: rec.repetition_index,
            label: rec.label,
            frames,
            frame_rate_hz: header.frame_rate_hz,
            dominant_side: rec.dominant_side,
        };
        sample.validate(&spec)?;
        samples.push(sample);
    }
    Ok((header, samples))
}
