//! Binary (P5) 8-bit PGM reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::CorpusError;
use crate::grid::{GrayImage, Grid, Mask};

/// Encodes an 8-bit grayscale image as binary PGM.
pub fn encode(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.cols(), image.rows()).into_bytes();
    out.extend_from_slice(image.as_slice());
    out
}

/// Decodes a binary PGM with maxval 255. Header comments are skipped.
pub fn decode(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "non-ASCII header")?);
    }
    if fields[0] != "P5" {
        return Err(format!("unsupported magic {:?} (expected P5)", fields[0]));
    }
    let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
    let width = parse(fields[1], "width")?;
    let height = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval} (expected 255)"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(format!(
            "raster has {} bytes, expected {}",
            bytes.len().saturating_sub(pos),
            need
        ));
    }
    Ok(Grid::from_vec(height, width, bytes[pos..pos + need].to_vec()))
}

pub fn read(path: &Path) -> Result<GrayImage, CorpusError> {
    let bytes = fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    decode(&bytes).map_err(|message| CorpusError::Pgm {
        path: path.to_path_buf(),
        message,
    })
}

pub fn write(path: &Path, image: &GrayImage) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode(image)).map_err(io)
}

/// Occlusion mask as PGM image: 0 = occluded, 255 = visible iris.
pub fn mask_to_image(mask: &Mask) -> GrayImage {
    mask.map(|&occluded| if occluded { 0 } else { 255 })
}

/// Inverse of [`mask_to_image`]; values below 128 count as occluded.
pub fn image_to_mask(image: &GrayImage) -> Mask {
    image.map(|&v| v < 128)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_with_comment() {
        let img = Grid::from_fn(3, 4, |r, c| (r * 40 + c) as u8);
        let bytes = encode(&img);
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        assert_eq!(decode(&bytes).unwrap(), img);

        let mut commented = b"P5\n# made by hand\n4 3\n255\n".to_vec();
        commented.extend_from_slice(img.as_slice());
        assert_eq!(decode(&commented).unwrap(), img);
    }

    #[test]
    fn rejects_ascii_and_short_raster() {
        assert!(decode(b"P2\n1 1\n255\n0").is_err());
        assert!(decode(b"P5\n2 2\n255\n\x00\x01").is_err());
        assert!(decode(b"P5\n2 2\n65535\n").is_err());
    }
}
