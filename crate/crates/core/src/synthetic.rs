//! Synthetic skeleton data for offline runs, tests and benchmarks.
//!
//! [`synthetic_dataset`] animates a UI-PRMD skeleton through a deep squat
//! (`m01`) or a shoulder abduction (`m07`). Correct repetitions reach a large
//! peak joint excursion and incorrect ones a small one, so the mean of the
//! first feature column separates the classes around [`SyntheticRule::threshold`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec3;
use crate::matrix::Matrix;
use crate::skeleton::{Label, RepetitionSample, Side, SkeletonSpec};

/// Upright rest position of a joint, y up, subject facing +z, left at +x.
/// Unknown joint names sit at the pelvis.
fn rest_position(name: &str) -> Vec3 {
    let (side, base) = match name.split_once('_') {
        Some(("left", rest)) => (1.0, rest),
        Some(("right", rest)) => (-1.0, rest),
        _ => (0.0, name),
    };
    let (x, y, z) = match base {
        "waist" | "pelvis" => (0.0, 1.0, 0.0),
        "spine" => (0.0, 1.15, 0.0),
        "chest" => (0.0, 1.3, 0.0),
        "neck" => (0.0, 1.5, 0.0),
        "head" => (0.0, 1.6, 0.02),
        "head_tip" | "head_end" => (0.0, 1.75, 0.02),
        "collar" => (0.05, 1.46, 0.0),
        "shoulder" => (0.18, 1.45, 0.0),
        "elbow" => (0.19, 1.17, 0.0),
        "wrist" => (0.2, 0.92, 0.0),
        "hand_end" => (0.2, 0.84, 0.0),
        "hip" => (0.1, 0.95, 0.0),
        "knee" => (0.1, 0.52, 0.0),
        "ankle" => (0.1, 0.08, 0.0),
        "toe" => (0.1, 0.02, 0.12),
        "toe_end" => (0.1, 0.0, 0.2),
        _ => (0.0, 1.0, 0.0),
    };
    Vec3::new(if side == 0.0 { x } else { x * side }, y, z)
}

/// One frame row of the upright rest pose for `spec`.
pub fn standing_pose(spec: &SkeletonSpec) -> Vec<f64> {
    spec.joint_names()
        .iter()
        .flat_map(|j| rest_position(j).as_array())
        .collect()
}

/// Rest pose plus independent uniform noise of `amplitude` on every
/// coordinate of every frame.
pub fn random_sequence(spec: &SkeletonSpec, frames: usize, amplitude: f64, rng: &mut impl Rng) -> Matrix {
    let pose = standing_pose(spec);
    let mut m = Matrix::zeros(frames, spec.row_width());
    for f in 0..frames {
        for (dst, &p) in m.row_mut(f).iter_mut().zip(&pose) {
            *dst = p + rng.gen_range(-amplitude..=amplitude);
        }
    }
    m
}

/// Rotate `p` about the x axis through `pivot` by `angle` radians (positive
/// tips +y towards +z).
fn rotate_x(p: Vec3, pivot: Vec3, angle: f64) -> Vec3 {
    let d = p - pivot;
    let (s, c) = angle.sin_cos();
    pivot + Vec3::new(d.x, d.y * c - d.z * s, d.y * s + d.z * c)
}

/// Threshold rule that labels the synthetic data: the mean of feature column
/// `feature` is above `threshold` exactly for correct repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticRule {
    pub feature: usize,
    pub threshold: f64,
}

pub const SYNTHETIC_EXERCISES: [&str; 2] = ["m01", "m07"];

pub fn synthetic_rule(exercise_id: &str) -> Option<SyntheticRule> {
    match exercise_id {
        "m01" => Some(SyntheticRule {
            feature: 0,
            threshold: 41.0,
        }),
        "m07" => Some(SyntheticRule {
            feature: 0,
            threshold: 85.0,
        }),
        _ => None,
    }
}

fn squat_frame(spec: &SkeletonSpec, flexion_deg: f64) -> Vec<f64> {
    let half = (flexion_deg / 2.0).to_radians();
    let (shank, thigh) = (0.44, 0.43);
    let mut out = Vec::with_capacity(spec.row_width());
    // Legs first so the pelvis displacement is known for the upper body.
    let leg = |ankle: Vec3| {
        let knee = ankle + Vec3::new(0.0, half.cos(), half.sin()) * shank;
        let hip = knee + Vec3::new(0.0, half.cos(), -half.sin()) * thigh;
        (knee, hip)
    };
    let (_, hip_l) = leg(rest_position("left_ankle"));
    let hip_shift = hip_l - rest_position("left_hip");
    let pelvis = rest_position("waist") + hip_shift;
    let lean = -(flexion_deg / 3.0).to_radians();
    for name in spec.joint_names() {
        let rest = rest_position(name);
        let base = name.split_once('_').map_or(name.as_str(), |(_, b)| b);
        let p = match base {
            "ankle" | "toe" | "toe_end" => rest,
            "knee" => leg(rest_position(&name.replace("knee", "ankle"))).0,
            "hip" => leg(rest_position(&name.replace("hip", "ankle"))).1,
            _ => rotate_x(rest + hip_shift, pelvis, lean),
        };
        out.extend(p.as_array());
    }
    out
}

fn abduction_frame(spec: &SkeletonSpec, elevation_deg: f64, side: Side) -> Vec<f64> {
    let prefix = if side == Side::Left { "left_" } else { "right_" };
    let outward = if side == Side::Left { 1.0 } else { -1.0 };
    let shoulder = rest_position(&format!("{prefix}shoulder"));
    let t = elevation_deg.to_radians();
    let dir = Vec3::new(outward * t.sin(), -t.cos(), 0.0);
    let mut out = Vec::with_capacity(spec.row_width());
    for name in spec.joint_names() {
        let p = match name.strip_prefix(prefix) {
            Some("elbow") => shoulder + dir * 0.28,
            Some("wrist") => shoulder + dir * 0.53,
            Some("hand_end") => shoulder + dir * 0.61,
            _ => rest_position(name),
        };
        out.extend(p.as_array());
    }
    out
}

/// `n_reps` labelled repetitions (half correct) of a supported exercise on
/// the UI-PRMD layout, spread over five subjects. Returns `None` for
/// exercises without a generator.
pub fn synthetic_dataset(exercise_id: &str, n_reps: usize, seed: u64) -> Option<Vec<RepetitionSample>> {
    synthetic_rule(exercise_id)?;
    let spec = SkeletonSpec::uiprmd();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_reps);
    for i in 0..n_reps {
        let label = if i % 2 == 0 { Label::Correct } else { Label::Incorrect };
        let frames = rng.gen_range(45..=75);
        let peak = match (exercise_id, label) {
            ("m01", Label::Correct) => rng.gen_range(80.0..110.0),
            ("m01", Label::Incorrect) => rng.gen_range(25.0..50.0),
            (_, Label::Correct) => rng.gen_range(150.0..170.0),
            (_, Label::Incorrect) => rng.gen_range(70.0..100.0),
        };
        let mut m = Matrix::zeros(frames, spec.row_width());
        for f in 0..frames {
            let phase = (std::f64::consts::PI * f as f64 / (frames - 1) as f64).sin();
            let row = if exercise_id == "m01" {
                squat_frame(&spec, peak * phase)
            } else {
                abduction_frame(&spec, peak * phase, Side::Right)
            };
            for (dst, v) in m.row_mut(f).iter_mut().zip(row) {
                *dst = v + rng.gen_range(-0.002..0.002);
            }
        }
        out.push(RepetitionSample {
            exercise_id: exercise_id.to_string(),
            subject_id: format!("s{:02}", i % 5 + 1),
            repetition_index: i / 2,
            label,
            frames: m,
            frame_rate_hz: 30.0,
            dominant_side: Side::Unknown,
        });
    }
    Some(out)
}
