//! Exercise-specific kinematic features.
//!
//! Each exercise has a [`FeatureSpec`] listing three to five [`FeatureDef`]s.
//! A feature maps one geometric [`Primitive`] over named joints, frame by
//! frame, producing a `num_frames × num_features` [`FeatureSequence`].
//!
//! Joint references may use the side placeholders `ACTIVE_<joint>` and
//! `PASSIVE_<joint>`; they resolve to `left_<joint>` / `right_<joint>` through
//! [`resolve_active_side`].

mod config;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, GeometryError, Vec3};
use crate::matrix::Matrix;
use crate::skeleton::{Label, RepetitionSample, SampleId, Side, SkeletonSpec};

pub use config::{
    load_feature_specs_dir, shipped_feature_spec, shipped_feature_specs, FeatureSpec,
    MAX_FEATURES, MIN_FEATURES,
};

const ACTIVE: &str = "ACTIVE_";
const PASSIVE: &str = "PASSIVE_";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature config: {0}")]
    Config(String),
    #[error("feature {feature:?} at frame {frame}: {source}")]
    Degenerate {
        feature: String,
        frame: usize,
        #[source]
        source: GeometryError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Primitive {
    JointAngle,
    SegmentVerticalAngle,
    PlaneDeviation,
    PairSymmetry,
    PelvicTilt,
    HorizontalDistance,
    VerticalDisplacement,
    StabilityRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureUnits {
    Degrees,
    /// Skeleton length units.
    Length,
}

/// What range a feature column lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueKind {
    /// `[0, 180]` degrees.
    Angle,
    /// `[-90, 90]` degrees.
    SignedAngle,
    Length,
}

impl ValueKind {
    pub fn units(self) -> FeatureUnits {
        match self {
            ValueKind::Angle | ValueKind::SignedAngle => FeatureUnits::Degrees,
            ValueKind::Length => FeatureUnits::Length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub primitive: Primitive,
    #[serde(default)]
    pub joint_refs: Vec<String>,
    pub units: FeatureUnits,
    /// Signal summarised by `StabilityRange`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<FeatureDef>>,
    /// Left/right joint pair spanning the frontal plane together with the up
    /// axis. When set, a `JointAngle` is measured after projecting onto it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontal_refs: Option<Vec<String>>,
    /// Report `180 - angle` (0 for a straight limb).
    #[serde(default)]
    pub deviation_from_straight: bool,
}

impl FeatureDef {
    pub fn value_kind(&self) -> ValueKind {
        match self.primitive {
            Primitive::JointAngle | Primitive::SegmentVerticalAngle => ValueKind::Angle,
            Primitive::PelvicTilt => ValueKind::SignedAngle,
            Primitive::PlaneDeviation
            | Primitive::PairSymmetry
            | Primitive::HorizontalDistance
            | Primitive::VerticalDisplacement => ValueKind::Length,
            Primitive::StabilityRange => match self.inner.as_deref().map(FeatureDef::value_kind) {
                Some(ValueKind::Length) => ValueKind::Length,
                _ => ValueKind::Angle,
            },
        }
    }

    /// Whether the value depends on the world up axis, i.e. is only invariant
    /// under rigid motions that keep the up axis fixed.
    pub fn uses_vertical(&self) -> bool {
        match self.primitive {
            Primitive::JointAngle => self.frontal_refs.is_some(),
            Primitive::PlaneDeviation => false,
            Primitive::StabilityRange => self.inner.as_deref().is_some_and(FeatureDef::uses_vertical),
            _ => true,
        }
    }

    fn all_refs(&self) -> Vec<&str> {
        let mut refs: Vec<&str> = self.joint_refs.iter().map(String::as_str).collect();
        if let Some(f) = &self.frontal_refs {
            refs.extend(f.iter().map(String::as_str));
        }
        if let Some(inner) = &self.inner {
            refs.extend(inner.all_refs());
        }
        refs
    }
}

/// Per-frame feature values for one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub exercise_id: String,
    pub subject_id: String,
    pub repetition_index: usize,
    pub label: Label,
    pub feature_names: Vec<String>,
    pub units: Vec<FeatureUnits>,
    pub values: Matrix,
}

impl FeatureSequence {
    pub fn id(&self) -> SampleId {
        SampleId {
            exercise_id: self.exercise_id.clone(),
            subject_id: self.subject_id.clone(),
            source: self.label,
            repetition_index: self.repetition_index,
        }
    }

    pub fn num_frames(&self) -> usize {
        self.values.rows()
    }

    pub fn num_features(&self) -> usize {
        self.values.cols()
    }

    /// Column means, in feature order.
    pub fn column_means(&self) -> Vec<f64> {
        (0..self.num_features())
            .map(|c| self.values.column(c).sum::<f64>() / self.num_frames() as f64)
            .collect()
    }

    /// Raw joint coordinates presented as a feature table, one column per
    /// joint channel (`<joint>_x`, `<joint>_y`, `<joint>_z`).
    pub fn from_raw_joints(sample: &RepetitionSample, spec: &SkeletonSpec) -> Self {
        let feature_names: Vec<String> = spec
            .joint_names()
            .iter()
            .flat_map(|j| ["x", "y", "z"].map(|c| format!("{j}_{c}")))
            .collect();
        Self {
            exercise_id: sample.exercise_id.clone(),
            subject_id: sample.subject_id.clone(),
            repetition_index: sample.repetition_index,
            label: sample.label,
            units: vec![FeatureUnits::Length; feature_names.len()],
            feature_names,
            values: sample.frames.clone(),
        }
    }
}

fn side_prefix(side: Side) -> &'static str {
    match side {
        Side::Right => "right_",
        _ => "left_",
    }
}

/// Substitutes side placeholders for the given active side.
fn resolve_ref(name: &str, active: Side) -> String {
    let passive = if active == Side::Right { Side::Left } else { Side::Right };
    if let Some(rest) = name.strip_prefix(ACTIVE) {
        format!("{}{rest}", side_prefix(active))
    } else if let Some(rest) = name.strip_prefix(PASSIVE) {
        format!("{}{rest}", side_prefix(passive))
    } else {
        name.to_string()
    }
}

fn total_path_length(sample: &RepetitionSample, joint: usize) -> f64 {
    (1..sample.num_frames())
        .map(|f| sample.joint(f, joint).distance(sample.joint(f - 1, joint)))
        .sum()
}

/// Side that `ACTIVE_*` placeholders resolve to.
///
/// Uses the sample's dominant side when known. Otherwise compares the total
/// frame-to-frame path length of every placeholder-referenced joint on each
/// side and picks the larger; ties go to `Left`.
pub fn resolve_active_side(
    sample: &RepetitionSample,
    spec: &SkeletonSpec,
    feature_spec: &FeatureSpec,
) -> Side {
    if sample.dominant_side != Side::Unknown {
        return sample.dominant_side;
    }
    let mut suffixes: Vec<&str> = feature_spec
        .features
        .iter()
        .flat_map(FeatureDef::all_refs)
        .filter_map(|r| r.strip_prefix(ACTIVE).or_else(|| r.strip_prefix(PASSIVE)))
        .collect();
    suffixes.sort_unstable();
    suffixes.dedup();
    let side_motion = |prefix: &str| -> f64 {
        suffixes
            .iter()
            .filter_map(|s| spec.index_of(&format!("{prefix}{s}")))
            .map(|j| total_path_length(sample, j))
            .sum()
    };
    if side_motion("right_") > side_motion("left_") {
        Side::Right
    } else {
        Side::Left
    }
}

/// A feature with its joint references resolved to column indices.
struct Bound<'a> {
    def: &'a FeatureDef,
    joints: Vec<usize>,
    frontal: Option<[usize; 2]>,
    inner: Option<Box<Bound<'a>>>,
}

fn bind<'a>(def: &'a FeatureDef, spec: &SkeletonSpec, side: Side) -> Result<Bound<'a>, FeatureError> {
    let lookup = |name: &str| {
        let resolved = resolve_ref(name, side);
        spec.index_of(&resolved).ok_or_else(|| {
            FeatureError::Config(format!(
                "feature {:?}: joint {resolved:?} not in {} skeleton",
                def.name,
                spec.dataset_id()
            ))
        })
    };
    let joints = def
        .joint_refs
        .iter()
        .map(|r| lookup(r))
        .collect::<Result<Vec<_>, _>>()?;
    let frontal = match &def.frontal_refs {
        Some(r) => Some([lookup(&r[0])?, lookup(&r[1])?]),
        None => None,
    };
    let inner = match &def.inner {
        Some(i) => Some(Box::new(bind(i, spec, side)?)),
        None => None,
    };
    Ok(Bound {
        def,
        joints,
        frontal,
        inner,
    })
}

impl Bound<'_> {
    fn degenerate(&self, frame: usize, source: GeometryError) -> FeatureError {
        FeatureError::Degenerate {
            feature: self.def.name.clone(),
            frame,
            source,
        }
    }

    fn series(&self, sample: &RepetitionSample, up: Vec3) -> Result<Vec<f64>, FeatureError> {
        let n = sample.num_frames();
        let p = |f: usize, i: usize| sample.joint(f, self.joints[i]);
        let per_frame = |g: &dyn Fn(usize) -> Result<f64, GeometryError>| {
            (0..n)
                .map(|f| g(f).map_err(|e| self.degenerate(f, e)))
                .collect::<Result<Vec<f64>, FeatureError>>()
        };
        match self.def.primitive {
            Primitive::JointAngle => per_frame(&|f| {
                let (a, b, c) = (p(f, 0), p(f, 1), p(f, 2));
                let angle = match self.frontal {
                    None => geometry::joint_angle(a, b, c)?,
                    Some([l, r]) => {
                        let lateral = sample.joint(f, l) - sample.joint(f, r);
                        let forward = lateral.cross(up);
                        let len = forward.norm();
                        if len <= geometry::EPSILON {
                            return Err(GeometryError::Degenerate("frontal axis parallel to up"));
                        }
                        let n = forward * (1.0 / len);
                        geometry::joint_angle(
                            geometry::project_onto_plane(a - b, n),
                            Vec3::default(),
                            geometry::project_onto_plane(c - b, n),
                        )?
                    }
                };
                Ok(if self.def.deviation_from_straight {
                    180.0 - angle
                } else {
                    angle
                })
            }),
            Primitive::SegmentVerticalAngle => {
                per_frame(&|f| geometry::segment_vertical_angle(p(f, 0), p(f, 1), up))
            }
            Primitive::PelvicTilt => per_frame(&|f| geometry::pelvic_tilt(p(f, 0), p(f, 1), up)),
            Primitive::HorizontalDistance => {
                Ok((0..n).map(|f| geometry::horizontal_distance(p(f, 0), p(f, 1), up)).collect())
            }
            Primitive::VerticalDisplacement => {
                let start = p(0, 0);
                Ok((0..n).map(|f| geometry::vertical_displacement(p(f, 0), start, up)).collect())
            }
            Primitive::PlaneDeviation => {
                let tracked: Vec<Vec3> = (0..n).map(|f| p(f, 0)).collect();
                geometry::plane_deviation(&tracked, [p(0, 1), p(0, 2), p(0, 3)])
                    .map_err(|e| self.degenerate(0, e))
            }
            Primitive::PairSymmetry => {
                let peak = (0..n)
                    .map(|f| geometry::vertical_displacement(p(f, 0), p(f, 1), up).abs())
                    .fold(0.0, f64::max);
                Ok(vec![peak; n])
            }
            Primitive::StabilityRange => {
                let inner = self.inner.as_ref().expect("validated StabilityRange has inner");
                let signal = inner.series(sample, up)?;
                Ok(vec![geometry::stability_range(&signal); n])
            }
        }
    }
}

/// Computes the feature table of `sample` in `feature_spec` order.
pub fn extract_features(
    sample: &RepetitionSample,
    spec: &SkeletonSpec,
    feature_spec: &FeatureSpec,
) -> Result<FeatureSequence, FeatureError> {
    feature_spec.validate()?;
    sample
        .validate(spec)
        .map_err(|e| FeatureError::Config(e.to_string()))?;
    let side = resolve_active_side(sample, spec, feature_spec);
    let bound = feature_spec
        .features
        .iter()
        .map(|d| bind(d, spec, side))
        .collect::<Result<Vec<_>, _>>()?;

    let n = sample.num_frames();
    let mut values = Matrix::zeros(n, bound.len());
    for (c, b) in bound.iter().enumerate() {
        for (r, v) in b.series(sample, spec.up_axis())?.into_iter().enumerate() {
            values.set(r, c, v);
        }
    }
    Ok(FeatureSequence {
        exercise_id: sample.exercise_id.clone(),
        subject_id: sample.subject_id.clone(),
        repetition_index: sample.repetition_index,
        label: sample.label,
        feature_names: feature_spec.feature_names(),
        units: feature_spec.features.iter().map(|f| f.units).collect(),
        values,
    })
}
