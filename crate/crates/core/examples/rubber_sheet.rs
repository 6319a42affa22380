//! Unwrap one synthetic eye into a normalized iris and draw it as text.
//!
//! Masked cells (eyelid or eyelash occlusion) print as `#`.

use iclab::corpus::{generate_synthetic, Cosmetics, SynthConfig};
use iclab::unwrap::{resample, rubber_sheet};

const SHADES: &[u8] = b" .:-=+*%@";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        n_subjects: 6,
        ..SynthConfig::preset("mascara").unwrap()
    };
    let corpus = generate_synthetic(&cfg, 3)?;
    for want in [Cosmetics::None, Cosmetics::Mascara] {
        let Some(e) = corpus.entries().iter().find(|e| e.image.cosmetics == want) else {
            continue;
        };
        let geom = e.geometry.as_ref().expect("synthetic corpora carry geometry");
        let n = rubber_sheet(&e.image.pixels, geom, e.occlusion.as_ref(), 40, 240)?;
        let occluded = n.mask.as_slice().iter().filter(|&&m| m).count() as f64 / n.mask.len() as f64;
        println!(
            "{} ({}, cosmetics {}): pupil r {:.1}, limbus r {:.1}, {:.1}% of 40x240 occluded",
            e.image.image_id,
            e.image.gender.as_str(),
            want.as_str(),
            geom.pupil.r,
            geom.limbus.r,
            100.0 * occluded
        );
        let small = resample(&n, 10, 72)?;
        for r in 0..small.rows() {
            let line: String = (0..small.cols())
                .map(|c| {
                    if *small.mask.get(r, c) {
                        '#'
                    } else {
                        let v = small.texture.get(r, c) / 256.0;
                        SHADES[((v * SHADES.len() as f64) as usize).min(SHADES.len() - 1)] as char
                    }
                })
                .collect();
            println!("  |{line}|");
        }
    }
    Ok(())
}
