//! Feature-config files and the shipped per-exercise catalog.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureDef, FeatureError, Primitive};
use crate::skeleton::DatasetId;

/// Smallest and largest feature count of a shipped exercise config.
pub const MIN_FEATURES: usize = 3;
pub const MAX_FEATURES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub exercise_id: String,
    pub dataset_id: DatasetId,
    /// Human-readable exercise name used in prompts, e.g. "deep squat".
    pub exercise_name: String,
    pub features: Vec<FeatureDef>,
}

impl FeatureSpec {
    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn from_toml(text: &str) -> Result<Self, FeatureError> {
        let spec: FeatureSpec =
            toml::from_str(text).map_err(|e| FeatureError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let text = fs::read_to_string(path)
            .map_err(|e| FeatureError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| FeatureError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(MIN_FEATURES..=MAX_FEATURES).contains(&self.features.len()) {
            return Err(FeatureError::Config(format!(
                "{} defines {} features, expected {MIN_FEATURES}..={MAX_FEATURES}",
                self.exercise_id,
                self.features.len()
            )));
        }
        for f in &self.features {
            f.validate()?;
            if f.name.contains("<Data") || f.name.contains(',') {
                return Err(FeatureError::Config(format!(
                    "feature name {:?} collides with prompt syntax",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

const SHIPPED: [&str; 16] = [
    include_str!("../../../../configs/features/uiprmd/m01.toml"),
    include_str!("../../../../configs/features/uiprmd/m02.toml"),
    include_str!("../../../../configs/features/uiprmd/m03.toml"),
    include_str!("../../../../configs/features/uiprmd/m04.toml"),
    include_str!("../../../../configs/features/uiprmd/m05.toml"),
    include_str!("../../../../configs/features/uiprmd/m06.toml"),
    include_str!("../../../../configs/features/uiprmd/m07.toml"),
    include_str!("../../../../configs/features/uiprmd/m08.toml"),
    include_str!("../../../../configs/features/uiprmd/m09.toml"),
    include_str!("../../../../configs/features/uiprmd/m10.toml"),
    include_str!("../../../../configs/features/rehab24/ex1.toml"),
    include_str!("../../../../configs/features/rehab24/ex2.toml"),
    include_str!("../../../../configs/features/rehab24/ex3.toml"),
    include_str!("../../../../configs/features/rehab24/ex4.toml"),
    include_str!("../../../../configs/features/rehab24/ex5.toml"),
    include_str!("../../../../configs/features/rehab24/ex6.toml"),
];

/// The 16 built-in exercise configs (m01–m10, ex1–ex6).
pub fn shipped_feature_specs() -> Vec<FeatureSpec> {
    SHIPPED
        .iter()
        .map(|t| FeatureSpec::from_toml(t).expect("shipped feature config is valid"))
        .collect()
}

pub fn shipped_feature_spec(exercise_id: &str) -> Option<FeatureSpec> {
    shipped_feature_specs()
        .into_iter()
        .find(|s| s.exercise_id == exercise_id)
}

/// Loads every `*.toml` below `dir`, recursively, sorted by path.
pub fn load_feature_specs_dir(dir: &Path) -> Result<Vec<FeatureSpec>, FeatureError> {
    let mut paths = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries =
            fs::read_dir(&d).map_err(|e| FeatureError::Config(format!("{}: {e}", d.display())))?;
        for entry in entries {
            let p = entry
                .map_err(|e| FeatureError::Config(e.to_string()))?
                .path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "toml") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths.iter().map(|p| FeatureSpec::load(p)).collect()
}

impl FeatureDef {
    pub(crate) fn validate(&self) -> Result<(), FeatureError> {
        let n = self.joint_refs.len();
        let bad = |msg: String| Err(FeatureError::Config(format!("{}: {msg}", self.name)));
        let arity_ok = match self.primitive {
            Primitive::JointAngle => n == 3,
            Primitive::SegmentVerticalAngle
            | Primitive::PelvicTilt
            | Primitive::HorizontalDistance
            | Primitive::PairSymmetry => n == 2,
            Primitive::VerticalDisplacement => n == 1,
            Primitive::PlaneDeviation => n == 4,
            Primitive::StabilityRange => n == 0,
        };
        if !arity_ok {
            return bad(format!("{:?} does not take {n} joint refs", self.primitive));
        }
        match (self.primitive, &self.inner) {
            (Primitive::StabilityRange, None) => return bad("StabilityRange needs an inner feature".into()),
            (Primitive::StabilityRange, Some(inner)) => {
                if inner.primitive == Primitive::StabilityRange {
                    return bad("nested StabilityRange".into());
                }
                inner.validate()?;
            }
            (_, Some(_)) => return bad("only StabilityRange takes an inner feature".into()),
            _ => {}
        }
        if self.primitive == Primitive::PairSymmetry {
            let (a, b) = (&self.joint_refs[0], &self.joint_refs[1]);
            let mirrored = a.strip_prefix("left_").map(|s| format!("right_{s}")) == Some(b.clone())
                || a.strip_prefix("right_").map(|s| format!("left_{s}")) == Some(b.clone());
            if !mirrored {
                return bad(format!("PairSymmetry refs {a:?}/{b:?} are not a left/right pair"));
            }
        }
        if self.frontal_refs.is_some() && self.primitive != Primitive::JointAngle {
            return bad("frontal_refs only apply to JointAngle".into());
        }
        if self.frontal_refs.as_ref().is_some_and(|r| r.len() != 2) {
            return bad("frontal_refs needs exactly two joints".into());
        }
        if self.deviation_from_straight && self.primitive != Primitive::JointAngle {
            return bad("deviation_from_straight only applies to JointAngle".into());
        }
        if self.units != self.value_kind().units() {
            return bad(format!("{:?} reports {:?}", self.primitive, self.value_kind().units()));
        }
        Ok(())
    }
}
