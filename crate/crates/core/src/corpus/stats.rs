use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Corpus, Cosmetics, CosmeticsGroup, EyeSide, Gender};

/// Image counts by gender, cosmetics group and eye side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub male: usize,
    pub female: usize,
    pub male_subjects: usize,
    pub female_subjects: usize,
    /// Males, females with no cosmetics, females with cosmetics.
    pub group_male: usize,
    pub group_fnc: usize,
    pub group_fwc: usize,
    /// Females whose cosmetics annotation is `unknown` (in no group).
    pub female_unknown_cosmetics: usize,
    /// Male images annotated with cosmetics; counted in `group_male` but
    /// flagged since they break the usual Male/FWC separation.
    pub male_with_cosmetics: usize,
    pub left: usize,
    pub right: usize,
    /// images-per-subject -> number of subjects
    pub images_per_subject: BTreeMap<usize, usize>,
}

impl CorpusSummary {
    pub fn group_count(&self, group: CosmeticsGroup) -> usize {
        match group {
            CosmeticsGroup::Male => self.group_male,
            CosmeticsGroup::Fnc => self.group_fnc,
            CosmeticsGroup::Fwc => self.group_fwc,
        }
    }

    /// Fraction of female images showing cosmetics, among annotated ones.
    pub fn female_cosmetics_fraction(&self) -> Option<f64> {
        let annotated = self.group_fnc + self.group_fwc;
        (annotated > 0).then(|| self.group_fwc as f64 / annotated as f64)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusSummary {
    let mut s = CorpusSummary::default();
    let mut male_subjects = BTreeSet::new();
    let mut female_subjects = BTreeSet::new();
    for img in corpus.images() {
        s.total += 1;
        match img.gender {
            Gender::Male => {
                s.male += 1;
                male_subjects.insert(img.subject_id.as_str());
                if img.cosmetics.is_present() {
                    s.male_with_cosmetics += 1;
                }
            }
            Gender::Female => {
                s.female += 1;
                female_subjects.insert(img.subject_id.as_str());
            }
        }
        match img.group() {
            Some(CosmeticsGroup::Male) => s.group_male += 1,
            Some(CosmeticsGroup::Fnc) => s.group_fnc += 1,
            Some(CosmeticsGroup::Fwc) => s.group_fwc += 1,
            None => {
                debug_assert_eq!(img.cosmetics, Cosmetics::Unknown);
                s.female_unknown_cosmetics += 1;
            }
        }
        match img.eye_side {
            EyeSide::Left => s.left += 1,
            EyeSide::Right => s.right += 1,
        }
    }
    s.male_subjects = male_subjects.len();
    s.female_subjects = female_subjects.len();
    for ids in corpus.subjects().values() {
        *s.images_per_subject.entry(ids.len()).or_default() += 1;
    }
    s
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images: {}", self.total)?;
        writeln!(
            f,
            "gender: male {} ({} subjects), female {} ({} subjects)",
            self.male, self.male_subjects, self.female, self.female_subjects
        )?;
        writeln!(
            f,
            "groups: Male {}, FNC {}, FWC {}, female-unknown {}",
            self.group_male, self.group_fnc, self.group_fwc, self.female_unknown_cosmetics
        )?;
        if self.male_with_cosmetics > 0 {
            writeln!(
                f,
                "warning: {} male images annotated with cosmetics",
                self.male_with_cosmetics
            )?;
        }
        writeln!(f, "eye side: left {}, right {}", self.left, self.right)?;
        let hist: Vec<String> = self
            .images_per_subject
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect();
        write!(f, "images per subject: {}", hist.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::image;
    use crate::corpus::{CorpusEntry, CorpusSource};

    fn corpus(images: Vec<crate::corpus::EyeImage>) -> Corpus {
        Corpus::new(
            images
                .into_iter()
                .map(|image| CorpusEntry {
                    image,
                    geometry: None,
                    occlusion: None,
                })
                .collect(),
            CorpusSource::Synthetic,
        )
        .unwrap()
    }

    #[test]
    fn three_groups() {
        let c = corpus(vec![
            image("m", "M", Gender::Male, Cosmetics::None),
            image("f1", "F1", Gender::Female, Cosmetics::Mascara),
            image("f2", "F2", Gender::Female, Cosmetics::None),
        ]);
        let s = corpus_stats(&c);
        assert_eq!((s.group_male, s.group_fwc, s.group_fnc), (1, 1, 1));
        assert_eq!(s.total, 3);
        assert_eq!(s.left + s.right, s.total);
    }

    #[test]
    fn empty_corpus() {
        let s = corpus_stats(&Corpus::empty(CorpusSource::Manifest));
        assert_eq!(s, CorpusSummary::default());
    }

    #[test]
    fn gfi_sized_corpus() {
        let mut imgs = Vec::new();
        for i in 0..750 {
            imgs.push(image(&format!("m{i}"), &format!("M{i}"), Gender::Male, Cosmetics::None));
            imgs.push(image(
                &format!("f{i}"),
                &format!("F{i}"),
                Gender::Female,
                Cosmetics::None,
            ));
        }
        let s = corpus_stats(&corpus(imgs));
        assert_eq!((s.male, s.female), (750, 750));
        assert_eq!((s.male_subjects, s.female_subjects), (750, 750));
        assert_eq!(s.images_per_subject.get(&1), Some(&1500));
    }

    #[test]
    fn flags_male_cosmetics_and_unknown() {
        let c = corpus(vec![
            image("m", "M", Gender::Male, Cosmetics::Eyeliner),
            image("f", "F", Gender::Female, Cosmetics::Unknown),
        ]);
        let s = corpus_stats(&c);
        assert_eq!(s.male_with_cosmetics, 1);
        assert_eq!(s.group_male, 1);
        assert_eq!(s.female_unknown_cosmetics, 1);
        assert_eq!(
            s.group_male + s.group_fnc + s.group_fwc + s.female_unknown_cosmetics,
            s.total
        );
    }
}
