use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::corpus::{Corpus, Gender};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    SubjectDisjoint,
    ImageLevel,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SubjectDisjoint => "subject_disjoint",
            Self::ImageLevel => "image_level",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub trial_index: usize,
    pub seed: u64,
    pub mode: SplitMode,
    pub train_image_ids: Vec<String>,
    pub test_image_ids: Vec<String>,
}

fn train_count(fraction: f64, n: usize) -> usize {
    // tolerate representation error in products like 0.8 * 5
    let k = (fraction * n as f64 + 1e-9).floor() as usize;
    k.clamp(1, n - 1)
}

/// Keeps corpus order inside each side so plans read naturally.
fn in_corpus_order(corpus: &Corpus, ids: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut v: Vec<String> = ids.into_iter().collect();
    v.sort_by_key(|id| corpus.position(id));
    v
}

fn check_fraction(fraction: f64) -> Result<(), ProtocolError> {
    if fraction > 0.0 && fraction < 1.0 {
        Ok(())
    } else {
        Err(ProtocolError::InvalidConfig {
            field: "train_fraction",
            message: format!("{fraction} is outside (0, 1)"),
        })
    }
}

/// Gender-stratified subject split: `floor(fraction * n)` subjects of each
/// gender go to training and every image follows its subject.
pub fn split_subject_disjoint(corpus: &Corpus, fraction: f64, seed: u64) -> Result<SplitPlan, ProtocolError> {
    check_fraction(fraction)?;
    let subjects = corpus.subjects();
    let mut by_gender: BTreeMap<Gender, Vec<&str>> = BTreeMap::new();
    for (&subject, ids) in &subjects {
        let gender = corpus.entry(ids[0]).unwrap().image.gender;
        by_gender.entry(gender).or_default().push(subject);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for gender in [Gender::Male, Gender::Female] {
        let mut list = by_gender.remove(&gender).unwrap_or_default();
        if list.len() < 2 {
            return Err(ProtocolError::TooFewSubjects {
                gender,
                found: list.len(),
            });
        }
        list.shuffle(&mut rng);
        let k = train_count(fraction, list.len());
        for (i, subject) in list.iter().enumerate() {
            let side = if i < k { &mut train } else { &mut test };
            side.extend(subjects[subject].iter().map(|s| s.to_string()));
        }
    }
    Ok(SplitPlan {
        trial_index: 0,
        seed,
        mode: SplitMode::SubjectDisjoint,
        train_image_ids: in_corpus_order(corpus, train),
        test_image_ids: in_corpus_order(corpus, test),
    })
}

/// Gender-stratified image split that ignores subjects. Only useful to
/// show how much identity leakage inflates accuracy.
pub fn split_image_level(corpus: &Corpus, fraction: f64, seed: u64) -> Result<SplitPlan, ProtocolError> {
    check_fraction(fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for gender in [Gender::Male, Gender::Female] {
        let mut ids: Vec<&str> = corpus
            .images()
            .filter(|im| im.gender == gender)
            .map(|im| im.image_id.as_str())
            .collect();
        if ids.len() < 2 {
            return Err(ProtocolError::TooFewImages {
                gender,
                found: ids.len(),
            });
        }
        ids.shuffle(&mut rng);
        let k = train_count(fraction, ids.len());
        train.extend(ids[..k].iter().map(|s| s.to_string()));
        test.extend(ids[k..].iter().map(|s| s.to_string()));
    }
    Ok(SplitPlan {
        trial_index: 0,
        seed,
        mode: SplitMode::ImageLevel,
        train_image_ids: in_corpus_order(corpus, train),
        test_image_ids: in_corpus_order(corpus, test),
    })
}

/// Subjects with images on both sides of the plan, sorted.
pub fn verify_disjoint(plan: &SplitPlan, corpus: &Corpus) -> Vec<String> {
    let subject_of = |id: &String| corpus.entry(id).map(|e| e.image.subject_id.clone());
    let train: HashSet<String> = plan.train_image_ids.iter().filter_map(subject_of).collect();
    let mut both: Vec<String> = plan
        .test_image_ids
        .iter()
        .filter_map(subject_of)
        .filter(|s| train.contains(s))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    both.sort();
    both
}

/// Subsamples the majority gender down to the minority count, then
/// shuffles.
pub fn balance_by_gender(image_ids: &[String], corpus: &Corpus, seed: u64) -> Result<Vec<String>, ProtocolError> {
    let gender_of = |id: &String| {
        corpus
            .entry(id)
            .map(|e| e.image.gender)
            .ok_or_else(|| ProtocolError::UnknownImage(id.clone()))
    };
    let (mut males, mut females) = (Vec::new(), Vec::new());
    for id in image_ids {
        match gender_of(id)? {
            Gender::Male => males.push(id.clone()),
            Gender::Female => females.push(id.clone()),
        }
    }
    if males.is_empty() || females.is_empty() {
        return Err(ProtocolError::SingleClassInput);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = males.len().min(females.len());
    let mut out: Vec<String> = males.choose_multiple(&mut rng, n).cloned().collect();
    out.extend(females.choose_multiple(&mut rng, n).cloned());
    out.shuffle(&mut rng);
    Ok(out)
}
