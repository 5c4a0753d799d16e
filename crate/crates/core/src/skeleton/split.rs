use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Label, RepetitionSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SplitPolicy {
    /// Support subjects never appear in the test set.
    SubjectDisjoint,
    #[default]
    Any,
}

/// Picks `k` Correct and `k` Incorrect support samples deterministically from
/// `seed`.
///
/// Support is returned grouped by class (Correct first), ordered by sample
/// identity within a class. Under [`SplitPolicy::Any`] the test set is every
/// remaining sample in input order. Under [`SplitPolicy::SubjectDisjoint`]
/// whole subjects are drawn into a support pool until it can supply `k` per
/// class; the test set is every sample from subjects outside the pool, so
/// unused pool samples are left out of both sets.
pub fn split_support_and_test(
    samples: &[RepetitionSample],
    k: usize,
    seed: u64,
    policy: SplitPolicy,
) -> Result<(Vec<RepetitionSample>, Vec<RepetitionSample>), DataError> {
    let count = |label| samples.iter().filter(|s| s.label == label).count();
    let (n_correct, n_incorrect) = (count(Label::Correct), count(Label::Incorrect));
    if n_correct < k || n_incorrect < k {
        return Err(DataError::Capacity(format!(
            "need {k} per class, have {n_correct} correct and {n_incorrect} incorrect"
        )));
    }
    if k == 0 {
        return Ok((Vec::new(), samples.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let eligible: Vec<usize> = match policy {
        SplitPolicy::Any => (0..samples.len()).collect(),
        SplitPolicy::SubjectDisjoint => {
            let subjects: BTreeSet<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
            let mut subjects: Vec<&str> = subjects.into_iter().collect();
            subjects.shuffle(&mut rng);
            let mut pool = BTreeSet::new();
            let (mut c, mut i) = (0, 0);
            for subject in &subjects {
                if c >= k && i >= k {
                    break;
                }
                pool.insert(*subject);
                for s in samples.iter().filter(|s| s.subject_id == *subject) {
                    match s.label {
                        Label::Correct => c += 1,
                        Label::Incorrect => i += 1,
                    }
                }
            }
            if c < k || i < k || pool.len() == subjects.len() {
                return Err(DataError::Capacity(format!(
                    "cannot hold out a subject while drawing {k} support samples per class"
                )));
            }
            (0..samples.len())
                .filter(|&j| pool.contains(samples[j].subject_id.as_str()))
                .collect()
        }
    };

    let mut chosen = Vec::with_capacity(2 * k);
    for label in [Label::Correct, Label::Incorrect] {
        let mut idx: Vec<usize> = eligible
            .iter()
            .copied()
            .filter(|&j| samples[j].label == label)
            .collect();
        idx.shuffle(&mut rng);
        let mut picked: Vec<usize> = idx.into_iter().take(k).collect();
        picked.sort_by_key(|&j| samples[j].id());
        chosen.extend(picked);
    }

    let support = chosen.iter().map(|&j| samples[j].clone()).collect();
    let test = match policy {
        SplitPolicy::Any => (0..samples.len())
            .filter(|j| !chosen.contains(j))
            .map(|j| samples[j].clone())
            .collect(),
        SplitPolicy::SubjectDisjoint => samples
            .iter()
            .enumerate()
            .filter(|(j, _)| !eligible.contains(j))
            .map(|(_, s)| s.clone())
            .collect(),
    };
    Ok((support, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::skeleton::Side;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn make(n_correct: usize, n_incorrect: usize, subjects: usize) -> Vec<RepetitionSample> {
        let mut out = Vec::new();
        for (label, n) in [(Label::Correct, n_correct), (Label::Incorrect, n_incorrect)] {
            for i in 0..n {
                out.push(RepetitionSample {
                    exercise_id: "m01".into(),
                    subject_id: format!("s{:02}", i % subjects),
                    repetition_index: i,
                    label,
                    frames: Matrix::zeros(2, 3),
                    frame_rate_hz: 30.0,
                    dominant_side: Side::Unknown,
                });
            }
        }
        out
    }

    #[test]
    fn two_shot_over_twenty() {
        let samples = make(10, 10, 5);
        let (support, test) = split_support_and_test(&samples, 2, 1, SplitPolicy::Any).unwrap();
        assert_eq!(support.len(), 4);
        assert_eq!(test.len(), 16);
        assert_eq!(support[0].label, Label::Correct);
        assert_eq!(support[1].label, Label::Correct);
        assert_eq!(support[2].label, Label::Incorrect);
    }

    #[test]
    fn zero_shot_keeps_everything_for_test() {
        let samples = make(3, 4, 2);
        let (support, test) = split_support_and_test(&samples, 0, 9, SplitPolicy::Any).unwrap();
        assert!(support.is_empty());
        assert_eq!(test, samples);
    }

    #[test]
    fn same_seed_same_split() {
        let samples = make(10, 10, 5);
        for policy in [SplitPolicy::Any, SplitPolicy::SubjectDisjoint] {
            let a = split_support_and_test(&samples, 3, 42, policy).unwrap();
            let b = split_support_and_test(&samples, 3, 42, policy).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn capacity_errors() {
        let samples = make(1, 5, 2);
        assert!(matches!(
            split_support_and_test(&samples, 2, 0, SplitPolicy::Any),
            Err(DataError::Capacity(_))
        ));
        // One subject only: nothing can be held out.
        let samples = make(4, 4, 1);
        assert!(matches!(
            split_support_and_test(&samples, 1, 0, SplitPolicy::SubjectDisjoint),
            Err(DataError::Capacity(_))
        ));
    }

    proptest! {
        #[test]
        fn split_properties(
            n_c in 0usize..12, n_i in 0usize..12, subjects in 1usize..6,
            k in 0usize..5, seed: u64, disjoint: bool,
        ) {
            let samples = make(n_c, n_i, subjects);
            let policy = if disjoint { SplitPolicy::SubjectDisjoint } else { SplitPolicy::Any };
            match split_support_and_test(&samples, k, seed, policy) {
                Ok((support, test)) => {
                    prop_assert_eq!(support.len(), 2 * k);
                    prop_assert_eq!(support.iter().filter(|s| s.label == Label::Correct).count(), k);
                    let sup: HashSet<_> = support.iter().map(|s| s.id()).collect();
                    prop_assert!(test.iter().all(|s| !sup.contains(&s.id())));
                    if disjoint && k > 0 {
                        let subj: HashSet<_> = support.iter().map(|s| &s.subject_id).collect();
                        prop_assert!(test.iter().all(|s| !subj.contains(&s.subject_id)));
                        prop_assert!(!test.is_empty());
                    } else {
                        prop_assert_eq!(support.len() + test.len(), samples.len());
                    }
                }
                Err(DataError::Capacity(_)) => {
                    prop_assert!(n_c < k || n_i < k || (disjoint && k > 0));
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
