//! Eye-image data model, manifest ingestion, corpus statistics and the
//! synthetic eye generator.

mod manifest;
pub mod pgm;
mod stats;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GrayImage, Mask};
use crate::unwrap::IrisGeometry;

pub use manifest::{load_manifest, write_corpus, MANIFEST_HEADER};
pub use stats::{corpus_stats, CorpusSummary};
pub use synth::{generate_synthetic, GenderSignal, SynthConfig};

/// Smallest accepted eye image.
pub const MIN_WIDTH: usize = 30;
pub const MIN_HEIGHT: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error("subject {subject} is labelled both male and female")]
    LabelConflict { subject: String },
    #[error("duplicate image_id {0}")]
    DuplicateImage(String),
    #[error("invalid image {id}: {message}")]
    InvalidImage { id: String, message: String },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("malformed PGM {path}: {message}")]
    Pgm { path: PathBuf, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest CSV error: {0}")]
    Csv(#[from] csv::Error),
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($name), " {:?}"),
                        other
                    )),
                }
            }
        }
    };
}

label_enum!(EyeSide { Left => "left", Right => "right" });
label_enum!(Gender { Male => "male", Female => "female" });
label_enum!(
    /// Eye-makeup annotation. `Unknown` is allowed for real data and is
    /// excluded from the FWC/FNC breakdown.
    Cosmetics {
        None => "none",
        Mascara => "mascara",
        Eyeliner => "eyeliner",
        Both => "both",
        Unknown => "unknown",
    }
);

impl Gender {
    /// Binary class label used by every classifier: female = 1.
    pub fn label(self) -> u8 {
        match self {
            Gender::Male => 0,
            Gender::Female => 1,
        }
    }

    pub fn from_label(label: u8) -> Self {
        if label == 0 {
            Gender::Male
        } else {
            Gender::Female
        }
    }
}

impl Cosmetics {
    pub fn is_present(self) -> bool {
        matches!(self, Cosmetics::Mascara | Cosmetics::Eyeliner | Cosmetics::Both)
    }

    pub fn has_mascara(self) -> bool {
        matches!(self, Cosmetics::Mascara | Cosmetics::Both)
    }

    pub fn has_eyeliner(self) -> bool {
        matches!(self, Cosmetics::Eyeliner | Cosmetics::Both)
    }
}

/// Evaluation breakdown group: Male, Female with No Cosmetics, Female With
/// Cosmetics (mascara, eyeliner or both).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CosmeticsGroup {
    Male,
    Fnc,
    Fwc,
}

impl CosmeticsGroup {
    pub const ALL: [CosmeticsGroup; 3] = [Self::Male, Self::Fnc, Self::Fwc];

    /// `None` for females whose cosmetics annotation is unknown.
    pub fn of(gender: Gender, cosmetics: Cosmetics) -> Option<Self> {
        match (gender, cosmetics) {
            (Gender::Male, _) => Some(Self::Male),
            (Gender::Female, Cosmetics::None) => Some(Self::Fnc),
            (Gender::Female, Cosmetics::Unknown) => None,
            (Gender::Female, _) => Some(Self::Fwc),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Male => "male",
            Self::Fnc => "fnc",
            Self::Fwc => "fwc",
        }
    }
}

/// One grayscale eye image with its subject-level labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EyeImage {
    pub image_id: String,
    pub subject_id: String,
    pub eye_side: EyeSide,
    pub gender: Gender,
    pub cosmetics: Cosmetics,
    pub pixels: GrayImage,
}

impl EyeImage {
    #[inline]
    pub fn width(&self) -> usize {
        self.pixels.cols()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.pixels.rows()
    }

    pub fn group(&self) -> Option<CosmeticsGroup> {
        CosmeticsGroup::of(self.gender, self.cosmetics)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.width() < MIN_WIDTH || self.height() < MIN_HEIGHT {
            return Err(CorpusError::InvalidImage {
                id: self.image_id.clone(),
                message: format!(
                    "{}x{} is below the {}x{} minimum",
                    self.width(),
                    self.height(),
                    MIN_WIDTH,
                    MIN_HEIGHT
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Manifest,
    Synthetic,
}

/// An image together with its optional segmentation ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub image: EyeImage,
    pub geometry: Option<IrisGeometry>,
    /// Cartesian occlusion mask, same size as the image (`true` = occluded).
    pub occlusion: Option<Mask>,
}

/// Validated, immutable collection of eye images.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    entries: Vec<CorpusEntry>,
    index: HashMap<String, usize>,
    source: CorpusSource,
}

impl Corpus {
    /// Checks per-image invariants, image_id uniqueness and gender
    /// consistency per subject.
    pub fn new(entries: Vec<CorpusEntry>, source: CorpusSource) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(entries.len());
        let mut subject_gender: HashMap<&str, Gender> = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            let image = &entry.image;
            image.validate()?;
            if let Some(mask) = &entry.occlusion {
                if mask.dims() != image.pixels.dims() {
                    return Err(CorpusError::InvalidImage {
                        id: image.image_id.clone(),
                        message: "occlusion mask size differs from image".into(),
                    });
                }
            }
            if index.insert(image.image_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateImage(image.image_id.clone()));
            }
            match subject_gender.get(image.subject_id.as_str()) {
                Some(&g) if g != image.gender => {
                    return Err(CorpusError::LabelConflict {
                        subject: image.subject_id.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    subject_gender.insert(&image.subject_id, image.gender);
                }
            }
        }
        Ok(Self { entries, index, source })
    }

    pub fn empty(source: CorpusSource) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            source,
        }
    }

    pub fn source(&self) -> CorpusSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn images(&self) -> impl Iterator<Item = &EyeImage> {
        self.entries.iter().map(|e| &e.image)
    }

    pub fn entry(&self, image_id: &str) -> Option<&CorpusEntry> {
        self.index.get(image_id).map(|&i| &self.entries[i])
    }

    pub fn position(&self, image_id: &str) -> Option<usize> {
        self.index.get(image_id).copied()
    }

    /// Image ids grouped by subject, both in stable (sorted) order.
    pub fn subjects(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.image.subject_id.as_str())
                .or_default()
                .push(e.image.image_id.as_str());
        }
        for ids in map.values_mut() {
            ids.sort_unstable();
        }
        map
    }

    pub fn subject_gender(&self, subject_id: &str) -> Option<Gender> {
        self.entries
            .iter()
            .find(|e| e.image.subject_id == subject_id)
            .map(|e| e.image.gender)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    pub(crate) fn image(id: &str, subject: &str, gender: Gender, cosmetics: Cosmetics) -> EyeImage {
        EyeImage {
            image_id: id.into(),
            subject_id: subject.into(),
            eye_side: EyeSide::Left,
            gender,
            cosmetics,
            pixels: Grid::filled(MIN_HEIGHT, MIN_WIDTH, 128),
        }
    }

    fn entry(image: EyeImage) -> CorpusEntry {
        CorpusEntry {
            image,
            geometry: None,
            occlusion: None,
        }
    }

    #[test]
    fn rejects_gender_conflict() {
        let err = Corpus::new(
            vec![
                entry(image("a1", "A", Gender::Male, Cosmetics::None)),
                entry(image("a2", "A", Gender::Female, Cosmetics::None)),
            ],
            CorpusSource::Synthetic,
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::LabelConflict { subject } if subject == "A"));
    }

    #[test]
    fn rejects_duplicate_ids_and_small_images() {
        let dup = Corpus::new(
            vec![
                entry(image("x", "A", Gender::Male, Cosmetics::None)),
                entry(image("x", "B", Gender::Male, Cosmetics::None)),
            ],
            CorpusSource::Synthetic,
        );
        assert!(matches!(dup, Err(CorpusError::DuplicateImage(_))));

        let mut small = image("s", "A", Gender::Male, Cosmetics::None);
        small.pixels = Grid::filled(19, 30, 0);
        let err = Corpus::new(vec![entry(small)], CorpusSource::Synthetic);
        assert!(matches!(err, Err(CorpusError::InvalidImage { .. })));
    }

    #[test]
    fn cosmetics_groups() {
        assert_eq!(
            CosmeticsGroup::of(Gender::Male, Cosmetics::Mascara),
            Some(CosmeticsGroup::Male)
        );
        assert_eq!(
            CosmeticsGroup::of(Gender::Female, Cosmetics::Eyeliner),
            Some(CosmeticsGroup::Fwc)
        );
        assert_eq!(
            CosmeticsGroup::of(Gender::Female, Cosmetics::None),
            Some(CosmeticsGroup::Fnc)
        );
        assert_eq!(CosmeticsGroup::of(Gender::Female, Cosmetics::Unknown), None);
        assert!("glitter".parse::<Cosmetics>().is_err());
        assert_eq!("Both".parse::<Cosmetics>(), Ok(Cosmetics::Both));
    }
}
