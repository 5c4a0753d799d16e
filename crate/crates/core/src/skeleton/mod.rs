//! Body-joint data: skeleton layouts, per-repetition samples, dataset loaders
//! and support/test splitting.
//!
//! Two dataset layouts are supported directly:
//!
//! - UI-PRMD Kinect positions (22 joints, 30 Hz), one file per episode, see
//!   [`load_uiprmd`].
//! - REHAB24-6 per-frame joint positions (26 joints) sliced by a repetition
//!   annotation table, see [`load_rehab24`].
//!
//! Anything else goes through the normalized interchange format handled by
//! [`load_generic`] / [`save_generic`].

mod generic;
mod load;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::matrix::Matrix;

pub use generic::{load_generic, save_generic, GenericHeader, GENERIC_SCHEMA_VERSION};
pub use load::{
    load_annotation_table, load_rehab24, load_uiprmd, repair_gaps, RepetitionAnnotation,
    MAX_REPAIRABLE_GAP,
};
pub use split::{split_support_and_test, SplitPolicy};

/// Coordinate channels per joint (x, y, z).
pub const CHANNELS: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not found: {0}")]
    NotFound(PathBuf),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("not enough samples: {0}")]
    Capacity(String),
    #[error("unrepairable gap of {len} frames starting at frame {start}")]
    UnrepairableGap { start: usize, len: usize },
    #[error("invalid skeleton spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DatasetId {
    #[serde(rename = "UIPRMD")]
    Uiprmd,
    #[serde(rename = "REHAB24_6")]
    Rehab24,
    #[serde(rename = "GENERIC")]
    Generic,
}

impl DatasetId {
    /// Capture modality named in the prompt task sentence.
    pub fn sensor_name(self) -> &'static str {
        match self {
            DatasetId::Uiprmd => "Kinect",
            DatasetId::Rehab24 => "inertial sensor",
            DatasetId::Generic => "motion capture",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Uiprmd => "UIPRMD",
            DatasetId::Rehab24 => "REHAB24_6",
            DatasetId::Generic => "GENERIC",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Meters,
    Millimeters,
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn opposite(self) -> Label {
        match self {
            Label::Correct => Label::Incorrect,
            Label::Incorrect => Label::Correct,
        }
    }

    /// Lower-case token used in prompts and model responses.
    pub fn token(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::Incorrect => "incorrect",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    #[default]
    Unknown,
}

/// Joint layout of one capture system.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpec {
    dataset_id: DatasetId,
    joint_names: Vec<String>,
    name_to_index: HashMap<String, usize>,
    up_axis: Vec3,
    units: Units,
}

const UIPRMD_JOINTS: [&str; 22] = [
    "waist",
    "spine",
    "chest",
    "neck",
    "head",
    "head_tip",
    "left_collar",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_collar",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "left_toe",
    "right_hip",
    "right_knee",
    "right_ankle",
    "right_toe",
];

const REHAB24_JOINTS: [&str; 26] = [
    "pelvis",
    "spine",
    "chest",
    "neck",
    "head",
    "head_end",
    "left_collar",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "left_hand_end",
    "right_collar",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "right_hand_end",
    "left_hip",
    "left_knee",
    "left_ankle",
    "left_toe",
    "left_toe_end",
    "right_hip",
    "right_knee",
    "right_ankle",
    "right_toe",
    "right_toe_end",
];

impl SkeletonSpec {
    pub fn new(
        dataset_id: DatasetId,
        joint_names: Vec<String>,
        up_axis: Vec3,
        units: Units,
    ) -> Result<Self, DataError> {
        if joint_names.is_empty() {
            return Err(DataError::InvalidSpec("no joints".into()));
        }
        let mut name_to_index = HashMap::with_capacity(joint_names.len());
        for (i, name) in joint_names.iter().enumerate() {
            if name_to_index.insert(name.clone(), i).is_some() {
                return Err(DataError::InvalidSpec(format!("duplicate joint {name:?}")));
            }
        }
        if (up_axis.norm() - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidSpec(format!(
                "up axis {up_axis:?} is not unit length"
            )));
        }
        let expected = match dataset_id {
            DatasetId::Uiprmd => Some(UIPRMD_JOINTS.len()),
            DatasetId::Rehab24 => Some(REHAB24_JOINTS.len()),
            DatasetId::Generic => None,
        };
        if let Some(n) = expected {
            if joint_names.len() != n {
                return Err(DataError::InvalidSpec(format!(
                    "{dataset_id} skeleton needs {n} joints, got {}",
                    joint_names.len()
                )));
            }
        }
        Ok(Self {
            dataset_id,
            joint_names,
            name_to_index,
            up_axis,
            units,
        })
    }

    /// Kinect layout of UI-PRMD; y is up.
    pub fn uiprmd() -> Self {
        Self::new(
            DatasetId::Uiprmd,
            UIPRMD_JOINTS.iter().map(|s| s.to_string()).collect(),
            Vec3::new(0.0, 1.0, 0.0),
            Units::Millimeters,
        )
        .expect("built-in UI-PRMD layout is valid")
    }

    /// REHAB24-6 layout; y is up.
    pub fn rehab24() -> Self {
        Self::new(
            DatasetId::Rehab24,
            REHAB24_JOINTS.iter().map(|s| s.to_string()).collect(),
            Vec3::new(0.0, 1.0, 0.0),
            Units::Meters,
        )
        .expect("built-in REHAB24-6 layout is valid")
    }

    pub fn for_dataset(id: DatasetId) -> Option<Self> {
        match id {
            DatasetId::Uiprmd => Some(Self::uiprmd()),
            DatasetId::Rehab24 => Some(Self::rehab24()),
            DatasetId::Generic => None,
        }
    }

    pub fn dataset_id(&self) -> DatasetId {
        self.dataset_id
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn channel_count(&self) -> usize {
        CHANNELS
    }

    /// Number of values per frame row.
    pub fn row_width(&self) -> usize {
        self.joint_count() * CHANNELS
    }

    pub fn index_of(&self, joint: &str) -> Option<usize> {
        self.name_to_index.get(joint).copied()
    }

    pub fn up_axis(&self) -> Vec3 {
        self.up_axis
    }

    pub fn units(&self) -> Units {
        self.units
    }
}

/// Stable identity of a repetition. The label is part of the identity because
/// UI-PRMD reuses subject/episode numbers across its correct and incorrect
/// folders.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub exercise_id: String,
    pub subject_id: String,
    pub source: Label,
    pub repetition_index: usize,
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.exercise_id, self.subject_id, self.source, self.repetition_index
        )
    }
}

/// One exercise repetition: `num_frames` rows of `joint_count * 3` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionSample {
    pub exercise_id: String,
    pub subject_id: String,
    pub repetition_index: usize,
    pub label: Label,
    pub frames: Matrix,
    pub frame_rate_hz: f64,
    pub dominant_side: Side,
}

impl RepetitionSample {
    pub fn id(&self) -> SampleId {
        SampleId {
            exercise_id: self.exercise_id.clone(),
            subject_id: self.subject_id.clone(),
            source: self.label,
            repetition_index: self.repetition_index,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    /// Position of joint `joint` at `frame`.
    pub fn joint(&self, frame: usize, joint: usize) -> Vec3 {
        let row = self.frames.row(frame);
        let o = joint * CHANNELS;
        Vec3::new(row[o], row[o + 1], row[o + 2])
    }

    /// Checks the sample invariants against `spec`.
    pub fn validate(&self, spec: &SkeletonSpec) -> Result<(), DataError> {
        if self.frames.cols() != spec.row_width() {
            return Err(DataError::Schema(format!(
                "sample {} has {} columns, skeleton expects {}",
                self.id(),
                self.frames.cols(),
                spec.row_width()
            )));
        }
        if self.num_frames() < 2 {
            return Err(DataError::Schema(format!(
                "sample {} has {} frames, need at least 2",
                self.id(),
                self.num_frames()
            )));
        }
        if self.frames.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(DataError::Schema(format!(
                "sample {} contains non-finite coordinates",
                self.id()
            )));
        }
        if !(self.frame_rate_hz.is_finite() && self.frame_rate_hz > 0.0) {
            return Err(DataError::Schema(format!(
                "sample {} has invalid frame rate {}",
                self.id(),
                self.frame_rate_hz
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_specs_have_expected_joint_counts() {
        let ui = SkeletonSpec::uiprmd();
        assert_eq!(ui.joint_count(), 22);
        assert_eq!(ui.row_width(), 66);
        let rh = SkeletonSpec::rehab24();
        assert_eq!(rh.joint_count(), 26);
        for spec in [ui, rh] {
            for (i, name) in spec.joint_names().iter().enumerate() {
                assert_eq!(spec.index_of(name), Some(i));
            }
            assert!((spec.up_axis().norm() - 1.0).abs() <= 1e-9);
            assert_eq!(spec.channel_count(), 3);
        }
    }

    #[test]
    fn spec_rejects_wrong_joint_count_and_duplicates() {
        let names: Vec<String> = (0..21).map(|i| format!("j{i}")).collect();
        assert!(matches!(
            SkeletonSpec::new(DatasetId::Uiprmd, names, Vec3::new(0.0, 1.0, 0.0), Units::Meters),
            Err(DataError::InvalidSpec(_))
        ));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(SkeletonSpec::new(DatasetId::Generic, dup, Vec3::new(0.0, 0.0, 1.0), Units::Meters)
            .is_err());
        let ok = vec!["a".to_string()];
        assert!(SkeletonSpec::new(DatasetId::Generic, ok, Vec3::new(0.0, 2.0, 0.0), Units::Meters)
            .is_err());
    }

    #[test]
    fn validate_catches_bad_samples() {
        let spec = SkeletonSpec::uiprmd();
        let mut s = RepetitionSample {
            exercise_id: "m01".into(),
            subject_id: "s01".into(),
            repetition_index: 0,
            label: Label::Correct,
            frames: Matrix::zeros(3, 66),
            frame_rate_hz: 30.0,
            dominant_side: Side::Unknown,
        };
        assert!(s.validate(&spec).is_ok());
        s.frames.set(1, 4, f64::NAN);
        assert!(s.validate(&spec).is_err());
        s.frames = Matrix::zeros(1, 66);
        assert!(s.validate(&spec).is_err());
        s.frames = Matrix::zeros(3, 65);
        assert!(s.validate(&spec).is_err());
    }
}
