use criterion::{black_box, criterion_group, criterion_main, Criterion};
use exercise_llm::features::{extract_features, shipped_feature_specs, FeatureSequence};
use exercise_llm::metrics::{auc_pr, auc_roc};
use exercise_llm::prompt::{render_prompt, PromptTechnique, SerializationPolicy, TechniqueKind};
use exercise_llm::skeleton::{Label, SkeletonSpec};
use exercise_llm::synthetic::synthetic_dataset;

fn squat_features() -> Vec<FeatureSequence> {
    let spec = shipped_feature_specs().into_iter().find(|s| s.exercise_id == "m01").unwrap();
    let skel = SkeletonSpec::uiprmd();
    synthetic_dataset("m01", 40, 0)
        .unwrap()
        .iter()
        .map(|s| extract_features(s, &skel, &spec).unwrap())
        .collect()
}

fn features(c: &mut Criterion) {
    let spec = shipped_feature_specs().into_iter().find(|s| s.exercise_id == "m01").unwrap();
    let skel = SkeletonSpec::uiprmd();
    let samples = synthetic_dataset("m01", 40, 0).unwrap();
    c.bench_function("extract_features/m01 x40", |b| {
        b.iter(|| {
            for s in &samples {
                black_box(extract_features(s, &skel, &spec).unwrap());
            }
        })
    });
}

fn prompts(c: &mut Criterion) {
    let seqs = squat_features();
    let correct = seqs.iter().filter(|s| s.label == Label::Correct).take(5);
    let incorrect = seqs.iter().filter(|s| s.label == Label::Incorrect).take(5);
    let support: Vec<FeatureSequence> = correct.chain(incorrect).cloned().collect();
    let test = seqs.last().unwrap();
    let policy = SerializationPolicy::default();
    let technique = PromptTechnique::new(TechniqueKind::ChainOfThoughtPlusCertainty, 5);
    c.bench_function("render_prompt/5-shot", |b| {
        b.iter(|| black_box(render_prompt(&technique, &support, test, "squat", "Vicon", &policy).unwrap()))
    });
}

fn metrics(c: &mut Criterion) {
    let scored: Vec<(f64, Label)> = (0..1000)
        .map(|i| {
            let label = if i % 3 == 0 { Label::Incorrect } else { Label::Correct };
            (((i * 37) % 101) as f64 / 100.0, label)
        })
        .collect();
    c.bench_function("auc_roc/1000", |b| b.iter(|| black_box(auc_roc(&scored, Label::Correct).unwrap())));
    c.bench_function("auc_pr/1000", |b| b.iter(|| black_box(auc_pr(&scored, Label::Correct).unwrap())));
}

criterion_group!(benches, features, prompts, metrics);
criterion_main!(benches);
