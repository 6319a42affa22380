//! CSV manifest ingestion and corpus export.
//!
//! ```text
//! image_id,subject_id,eye_side,gender,cosmetics,path,pupil_x,pupil_y,pupil_r,iris_x,iris_y,iris_r
//! ```
//!
//! `path` is relative to the manifest's directory. Geometry columns may be
//! blank (all six) when no segmentation is available. An occlusion mask is
//! picked up from `<image stem>_mask.pgm` next to the image when present.

use std::fs;
use std::path::{Path, PathBuf};

use super::{pgm, Corpus, CorpusEntry, CorpusError, CorpusSource, EyeImage};
use crate::unwrap::{Circle, IrisGeometry};

pub const MANIFEST_HEADER: [&str; 12] = [
    "image_id",
    "subject_id",
    "eye_side",
    "gender",
    "cosmetics",
    "path",
    "pupil_x",
    "pupil_y",
    "pupil_r",
    "iris_x",
    "iris_y",
    "iris_r",
];

const GEOMETRY_COLUMNS: usize = 6;

fn mask_path_for(image_path: &Path) -> PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}_mask.pgm"))
}

fn bad_row(line: u64, message: impl Into<String>) -> CorpusError {
    CorpusError::BadRow {
        line,
        message: message.into(),
    }
}

fn parse_geometry(line: u64, fields: &[&str]) -> Result<Option<IrisGeometry>, CorpusError> {
    let blank = fields.iter().filter(|f| f.trim().is_empty()).count();
    if blank == GEOMETRY_COLUMNS {
        return Ok(None);
    }
    if blank != 0 {
        return Err(bad_row(line, "geometry columns must be all present or all blank"));
    }
    let mut v = [0.0f64; GEOMETRY_COLUMNS];
    for (slot, (text, name)) in v.iter_mut().zip(fields.iter().zip(&MANIFEST_HEADER[6..])) {
        *slot = text
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| bad_row(line, format!("{name}: not a number: {text:?}")))?;
    }
    let geom = IrisGeometry {
        pupil: Circle::new(v[0], v[1], v[2]),
        limbus: Circle::new(v[3], v[4], v[5]),
    };
    geom.validate().map_err(|e| bad_row(line, format!("geometry: {e}")))?;
    Ok(Some(geom))
}

/// Reads and validates a manifest and every image it references.
pub fn load_manifest(path: &Path) -> Result<Corpus, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;

    let header = reader.headers()?.clone();
    let header: Vec<&str> = header.iter().map(str::trim).collect();
    if header.len() < 6 || header[..6] != MANIFEST_HEADER[..6] {
        return Err(bad_row(1, format!("unexpected header {header:?}")));
    }
    if header.len() != 6 && header[..] != MANIFEST_HEADER[..] {
        return Err(bad_row(1, format!("unexpected geometry header {:?}", &header[6..])));
    }

    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = record.iter().collect();
        if fields.len() != 6 && fields.len() != MANIFEST_HEADER.len() {
            return Err(bad_row(
                line,
                format!("expected 6 or 12 fields, found {}", fields.len()),
            ));
        }
        let image_id = fields[0].trim();
        let subject_id = fields[1].trim();
        if image_id.is_empty() || subject_id.is_empty() {
            return Err(bad_row(line, "image_id and subject_id must be non-empty"));
        }
        let eye_side = fields[2].parse().map_err(|e: String| bad_row(line, e))?;
        let gender = fields[3].parse().map_err(|e: String| bad_row(line, e))?;
        let cosmetics = fields[4].parse().map_err(|e: String| bad_row(line, e))?;
        let image_path = base.join(fields[5].trim());
        let geometry = if fields.len() == MANIFEST_HEADER.len() {
            parse_geometry(line, &fields[6..])?
        } else {
            None
        };

        let pixels = pgm::read(&image_path)?;
        let mask_path = mask_path_for(&image_path);
        let occlusion = if mask_path.is_file() {
            Some(pgm::image_to_mask(&pgm::read(&mask_path)?))
        } else {
            None
        };
        entries.push(CorpusEntry {
            image: EyeImage {
                image_id: image_id.to_string(),
                subject_id: subject_id.to_string(),
                eye_side,
                gender,
                cosmetics,
                pixels,
            },
            geometry,
            occlusion,
        });
    }
    Corpus::new(entries, CorpusSource::Manifest)
}

/// Writes `manifest.csv` plus `images/<id>.pgm` (and `<id>_mask.pgm` when an
/// occlusion mask exists) under `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(io(&images_dir))?;

    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)?;
    writer.write_record(MANIFEST_HEADER)?;
    for entry in corpus.entries() {
        let img = &entry.image;
        let rel = format!("images/{}.pgm", img.image_id);
        pgm::write(&dir.join(&rel), &img.pixels)?;
        if let Some(mask) = &entry.occlusion {
            let mask_rel = format!("images/{}_mask.pgm", img.image_id);
            pgm::write(&dir.join(mask_rel), &pgm::mask_to_image(mask))?;
        }
        let geometry: [String; GEOMETRY_COLUMNS] = match &entry.geometry {
            Some(g) => [
                g.pupil.cx.to_string(),
                g.pupil.cy.to_string(),
                g.pupil.r.to_string(),
                g.limbus.cx.to_string(),
                g.limbus.cy.to_string(),
                g.limbus.r.to_string(),
            ],
            None => Default::default(),
        };
        let mut row = vec![
            img.image_id.clone(),
            img.subject_id.clone(),
            img.eye_side.to_string(),
            img.gender.to_string(),
            img.cosmetics.to_string(),
            rel,
        ];
        row.extend(geometry);
        writer.write_record(&row)?;
    }
    writer.flush().map_err(io(&manifest_path))?;
    Ok(manifest_path)
}
