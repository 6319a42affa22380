//! Procedural NIR-like eye images with controllable confounds.
//!
//! Each eye is rendered as skin, a sclera opening between two parabolic
//! eyelids, an iris disc carrying a sum of angular sinusoids, a dark pupil
//! and a set of eyelash strokes hanging from the upper lid. Cosmetics
//! change only the lashes (mascara: x1.5 width, -60 gray levels) and the
//! upper lid margin (eyeliner). Lash pixels dark enough to be "detected"
//! enter the ground-truth occlusion mask, so mascara also enlarges masks.
//!
//! All randomness flows from `(seed, subject, image)` ChaCha streams, so a
//! corpus is a pure function of its config and seed.

use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusEntry, CorpusError, CorpusSource, Cosmetics, EyeImage, EyeSide, Gender};
use crate::grid::{GrayImage, Grid, Mask};
use crate::unwrap::{Circle, IrisGeometry};

/// How gender shows up in the iris texture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderSignal {
    /// Texture independent of gender.
    None,
    /// Texture independent of gender; mascara is the intended signal.
    MascaraOnly,
    /// Dominant angular frequency shifted between genders.
    IrisTexture,
}

impl std::str::FromStr for GenderSignal {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(Self::None),
            "mascara_only" => Ok(Self::MascaraOnly),
            "iris_texture" => Ok(Self::IrisTexture),
            other => Err(format!("unknown gender_signal {other:?}")),
        }
    }
}

impl GenderSignal {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::MascaraOnly => "mascara_only",
            Self::IrisTexture => "iris_texture",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub images_per_subject: usize,
    pub female_fraction: f64,
    pub mascara_rate_female: f64,
    pub mascara_rate_male: f64,
    /// Share of cosmetics wearers who also wear eyeliner (`both`).
    pub eyeliner_share: f64,
    pub gender_signal: GenderSignal,
    pub iris_signal_strength: f64,
    pub occlusion_severity: f64,
    /// (width, height) in pixels.
    pub image_size: (usize, usize),
    /// 1 = every image of a subject shares one texture and geometry,
    /// 0 = each image is drawn independently.
    pub subject_texture_stability: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            images_per_subject: 2,
            female_fraction: 0.5,
            mascara_rate_female: 0.0,
            mascara_rate_male: 0.0,
            eyeliner_share: 0.0,
            gender_signal: GenderSignal::None,
            iris_signal_strength: 0.0,
            occlusion_severity: 0.5,
            image_size: (96, 72),
            subject_texture_stability: 0.5,
        }
    }
}

/// Names accepted by [`SynthConfig::preset`].
pub const PRESETS: [&str; 4] = ["null", "mascara", "iris-signal", "leakage"];

impl SynthConfig {
    /// The four reference corpora.
    ///
    /// - `null`: no gender information at all; images independent.
    /// - `mascara`: 60% of females wear cosmetics, texture gender-blind.
    /// - `iris-signal`: genuine texture difference, no cosmetics.
    /// - `leakage`: many near-identical images per subject, no gender signal.
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        Some(match name {
            "null" => Self {
                images_per_subject: 5,
                subject_texture_stability: 0.0,
                ..base
            },
            "mascara" => Self {
                images_per_subject: 4,
                mascara_rate_female: 0.6,
                eyeliner_share: 0.25,
                gender_signal: GenderSignal::MascaraOnly,
                subject_texture_stability: 0.5,
                ..base
            },
            "iris-signal" => Self {
                images_per_subject: 2,
                gender_signal: GenderSignal::IrisTexture,
                iris_signal_strength: 0.8,
                subject_texture_stability: 0.7,
                ..base
            },
            "leakage" => Self {
                n_subjects: 100,
                images_per_subject: 6,
                subject_texture_stability: 0.95,
                ..base
            },
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidConfig(m));
        let rates = [
            ("female_fraction", self.female_fraction),
            ("mascara_rate_female", self.mascara_rate_female),
            ("mascara_rate_male", self.mascara_rate_male),
            ("eyeliner_share", self.eyeliner_share),
            ("iris_signal_strength", self.iris_signal_strength),
            ("occlusion_severity", self.occlusion_severity),
            ("subject_texture_stability", self.subject_texture_stability),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if self.n_subjects < 2 {
            return bad(format!("n_subjects = {} (need at least 2)", self.n_subjects));
        }
        if self.images_per_subject == 0 {
            return bad("images_per_subject must be at least 1".into());
        }
        if self.female_fraction > 0.0 && self.female_fraction < 1.0 {
            let females = self.female_count();
            if females == 0 || females == self.n_subjects {
                return bad(format!(
                    "female_fraction {} with {} subjects leaves a gender empty",
                    self.female_fraction, self.n_subjects
                ));
            }
        }
        let (w, h) = self.image_size;
        if w < super::MIN_WIDTH || h < super::MIN_HEIGHT {
            return bad(format!("image_size {w}x{h} is below 30x20"));
        }
        if self.gender_signal == GenderSignal::MascaraOnly && self.mascara_rate_female == self.mascara_rate_male {
            return bad("mascara_only needs different mascara rates for the two genders".into());
        }
        Ok(())
    }

    fn female_count(&self) -> usize {
        (self.female_fraction * self.n_subjects as f64).round() as usize
    }
}

const SUBJECT_STREAM: u64 = 1;
const IMAGE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const ASSIGN_STREAM: u64 = 4;

fn stream(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    rng.set_stream(stream);
    rng
}

const LASH_GRAY: f64 = 70.0;
const MASCARA_DARKENING: f64 = 60.0;
const MASCARA_WIDTH_FACTOR: f64 = 1.5;
const EYELINER_DARKENING: f64 = 60.0;
/// Lash strokes at or below this gray level are picked up by segmentation.
const LASH_DETECTION_GRAY: f64 = 40.0;
const BASE_ANGULAR_FREQUENCY: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Component {
    amplitude: f64,
    frequency: f64,
    phase: f64,
    twist: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TextureParams {
    base: f64,
    components: Vec<Component>,
}

impl TextureParams {
    fn sample(rng: &mut impl Rng, dominant: f64) -> Self {
        let k = rng.random_range(3..=6);
        let components = (0..k)
            .map(|_| Component {
                amplitude: rng.random_range(6.0..14.0),
                frequency: (dominant * rng.random_range(0.8..1.25)).round().max(1.0),
                phase: rng.random_range(0.0..TAU),
                twist: rng.random_range(-PI..PI),
            })
            .collect();
        Self {
            base: rng.random_range(100.0..125.0),
            components,
        }
    }

    fn eval(&self, rho: f64, theta: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * (c.frequency * theta + c.phase + c.twist * rho).sin())
            .sum()
    }
}

/// A lash stroke: segment from `(x0, y0)` to `(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lash {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub width: f64,
}

/// Everything needed to render one eye; cosmetics are applied at render
/// time so the same eye can be drawn with and without makeup.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeParams {
    pub width: usize,
    pub height: usize,
    pub geometry: IrisGeometry,
    subject_texture: TextureParams,
    image_texture: TextureParams,
    subject_weight: f64,
    image_weight: f64,
    upper_apex: f64,
    lower_apex: f64,
    eye_half_width: f64,
    corner_y: f64,
    pub lashes: Vec<Lash>,
    illumination: f64,
    noise_seed: u64,
}

#[derive(Debug, Clone)]
struct SubjectDraw {
    gender: Gender,
    cosmetics: Cosmetics,
    texture: TextureParams,
    dx: f64,
    dy: f64,
    limbus_scale: f64,
    pupil_ratio: f64,
    upper_droop: f64,
    lower_droop: f64,
    lash_anchors: Vec<f64>,
    lash_angles: Vec<f64>,
    lash_lengths: Vec<f64>,
}

fn dominant_frequency(cfg: &SynthConfig, gender: Gender) -> f64 {
    match cfg.gender_signal {
        GenderSignal::IrisTexture => {
            let shift = 0.25 * cfg.iris_signal_strength;
            match gender {
                Gender::Female => BASE_ANGULAR_FREQUENCY * (1.0 + shift),
                Gender::Male => BASE_ANGULAR_FREQUENCY * (1.0 - shift),
            }
        }
        GenderSignal::None | GenderSignal::MascaraOnly => BASE_ANGULAR_FREQUENCY,
    }
}

fn lash_count(severity: f64) -> usize {
    (16.0 + 24.0 * severity).round() as usize
}

fn draw_subject(cfg: &SynthConfig, seed: u64, index: usize, gender: Gender, cosmetics: Cosmetics) -> SubjectDraw {
    let mut rng = stream(seed, SUBJECT_STREAM, index as u64, 0);
    let texture = TextureParams::sample(&mut rng, dominant_frequency(cfg, gender));
    let sev = cfg.occlusion_severity;
    let n_lashes = lash_count(sev);
    let mut lash_anchors = Vec::with_capacity(n_lashes);
    let mut lash_angles = Vec::with_capacity(n_lashes);
    let mut lash_lengths = Vec::with_capacity(n_lashes);
    for i in 0..n_lashes {
        let u = (i as f64 + rng.random_range(0.2..0.8)) / n_lashes as f64;
        lash_anchors.push(-0.8 + 1.6 * u);
        let down = i % 2 == 0;
        let tilt = rng.random_range(-0.45..0.45);
        lash_angles.push(if down { tilt } else { PI + tilt });
        lash_lengths.push(rng.random_range(0.25..0.5) * (0.5 + sev));
    }
    SubjectDraw {
        gender,
        cosmetics,
        texture,
        dx: rng.random_range(-0.04..0.04),
        dy: rng.random_range(-0.04..0.04),
        limbus_scale: rng.random_range(0.9..1.1),
        pupil_ratio: rng.random_range(0.3..0.5),
        upper_droop: rng.random_range(0.0..1.0) * sev,
        lower_droop: rng.random_range(0.0..1.0) * sev,
        lash_anchors,
        lash_angles,
        lash_lengths,
    }
}

fn blend(stability: f64, subject: f64, fresh: f64) -> f64 {
    stability * subject + (1.0 - stability) * fresh
}

fn draw_image(
    cfg: &SynthConfig,
    seed: u64,
    subject_index: usize,
    image_index: usize,
    subject: &SubjectDraw,
) -> EyeParams {
    let mut rng = stream(seed, IMAGE_STREAM, subject_index as u64, image_index as u64 + 1);
    let s = cfg.subject_texture_stability;
    let (w, h) = cfg.image_size;
    let (wf, hf) = (w as f64, h as f64);

    // fresh draws, consumed in a fixed order regardless of stability
    let fresh_texture = TextureParams::sample(&mut rng, dominant_frequency(cfg, subject.gender));
    let fresh_dx = rng.random_range(-0.04..0.04);
    let fresh_dy = rng.random_range(-0.04..0.04);
    let fresh_scale = rng.random_range(0.9..1.1);
    let fresh_ratio = rng.random_range(0.3..0.5);
    let fresh_upper = rng.random_range(0.0..1.0) * cfg.occlusion_severity;
    let fresh_lower = rng.random_range(0.0..1.0) * cfg.occlusion_severity;
    let jitter_x = rng.random_range(-0.3..0.3);
    let jitter_y = rng.random_range(-0.3..0.3);
    let illumination = rng.random_range(-6.0..6.0);
    let pupil_dx = rng.random_range(-0.02..0.02);
    let pupil_dy = rng.random_range(-0.02..0.02);

    let limbus_r = 0.28 * hf * blend(s, subject.limbus_scale, fresh_scale);
    let cx = wf / 2.0 + wf * blend(s, subject.dx, fresh_dx) + jitter_x;
    let cy = hf / 2.0 + hf * blend(s, subject.dy, fresh_dy) + jitter_y;
    let pupil_r = limbus_r * blend(s, subject.pupil_ratio, fresh_ratio);
    let geometry = IrisGeometry {
        pupil: Circle::new(cx + pupil_dx * limbus_r, cy + pupil_dy * limbus_r, pupil_r),
        limbus: Circle::new(cx, cy, limbus_r),
    };

    let upper_droop = blend(s, subject.upper_droop, fresh_upper);
    let lower_droop = blend(s, subject.lower_droop, fresh_lower);
    let upper_apex = cy - limbus_r * (1.15 - 0.6 * upper_droop);
    let lower_apex = cy + limbus_r * (1.1 - 0.35 * lower_droop);
    let eye_half_width = 2.0 * limbus_r;
    let corner_y = cy + 0.1 * limbus_r;

    let lid_y = |x: f64| {
        let t = (x - cx) / eye_half_width;
        upper_apex + (corner_y - upper_apex) * t * t
    };
    let lashes = subject
        .lash_anchors
        .iter()
        .zip(&subject.lash_angles)
        .zip(&subject.lash_lengths)
        .map(|((&anchor, &angle), &length)| {
            let a = anchor + (1.0 - s) * rng.random_range(-0.05..0.05);
            let ang = angle + (1.0 - s) * rng.random_range(-0.2..0.2);
            let len = limbus_r * length * (1.0 + (1.0 - s) * rng.random_range(-0.2..0.2));
            let x0 = cx + a * eye_half_width;
            let y0 = lid_y(x0);
            Lash {
                x0,
                y0,
                x1: x0 + len * ang.sin(),
                y1: y0 + len * ang.cos(),
                width: 1.2,
            }
        })
        .collect();

    let w_s = s / (s * s + (1.0 - s) * (1.0 - s)).sqrt();
    let w_f = (1.0 - s) / (s * s + (1.0 - s) * (1.0 - s)).sqrt();
    EyeParams {
        width: w,
        height: h,
        geometry,
        subject_texture: subject.texture.clone(),
        image_texture: fresh_texture,
        subject_weight: w_s,
        image_weight: w_f,
        upper_apex,
        lower_apex,
        eye_half_width,
        corner_y,
        lashes,
        illumination,
        noise_seed: rng.random(),
    }
}

fn segment_distance(px: f64, py: f64, l: &Lash) -> f64 {
    let (vx, vy) = (l.x1 - l.x0, l.y1 - l.y0);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((px - l.x0) * vx + (py - l.y0) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (px - (l.x0 + t * vx)).hypot(py - (l.y0 + t * vy))
}

impl EyeParams {
    fn upper_lid(&self, x: f64) -> f64 {
        let t = (x - self.geometry.limbus.cx) / self.eye_half_width;
        self.upper_apex + (self.corner_y - self.upper_apex) * t * t
    }

    fn lower_lid(&self, x: f64) -> f64 {
        let t = (x - self.geometry.limbus.cx) / self.eye_half_width;
        self.lower_apex + (self.corner_y - self.lower_apex) * t * t
    }

    fn texture_base(&self) -> f64 {
        self.subject_weight * self.subject_texture.base + self.image_weight * self.image_texture.base
    }

    /// Renders the eye and its ground-truth occlusion mask.
    pub fn render(&self, cosmetics: Cosmetics) -> (GrayImage, Mask) {
        let (w, h) = (self.width, self.height);
        let g = &self.geometry;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        noise_rng.set_stream(NOISE_STREAM);
        let pixel_noise = Normal::new(0.0, 3.0).expect("valid sigma");
        let iris_noise = Normal::new(0.0, 4.0).expect("valid sigma");
        let base = self.texture_base();

        let mut values = Grid::filled(h, w, 0.0f64);
        let mut mask = Grid::filled(h, w, false);
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let n_pixel = pixel_noise.sample(&mut noise_rng);
                let n_iris = iris_noise.sample(&mut noise_rng);
                let inside_eye = (xf - g.limbus.cx).abs() < self.eye_half_width
                    && yf > self.upper_lid(xf)
                    && yf < self.lower_lid(xf);
                let d_pupil = (xf - g.pupil.cx).hypot(yf - g.pupil.cy);
                let d_limbus = (xf - g.limbus.cx).hypot(yf - g.limbus.cy);
                let in_iris = d_limbus <= g.limbus.r && d_pupil > g.pupil.r;
                let mut v = if !inside_eye {
                    if in_iris || d_pupil <= g.pupil.r {
                        mask.set(y, x, true);
                    }
                    150.0
                } else if d_pupil <= g.pupil.r {
                    25.0
                } else if in_iris {
                    let rho = ((d_pupil - g.pupil.r) / (g.limbus.r - g.pupil.r)).clamp(0.0, 1.0);
                    let theta = (g.limbus.cy - yf).atan2(xf - g.limbus.cx);
                    base + self.subject_weight * self.subject_texture.eval(rho, theta)
                        + self.image_weight * self.image_texture.eval(rho, theta)
                        + n_iris
                } else {
                    185.0
                };
                if cosmetics.has_eyeliner()
                    && (xf - g.limbus.cx).abs() < self.eye_half_width
                    && (yf - self.upper_lid(xf)).abs() <= 1.5
                {
                    v -= EYELINER_DARKENING;
                }
                values.set(y, x, v + self.illumination + n_pixel);
            }
        }

        let (lash_gray, width_factor) = if cosmetics.has_mascara() {
            (LASH_GRAY - MASCARA_DARKENING, MASCARA_WIDTH_FACTOR)
        } else {
            (LASH_GRAY, 1.0)
        };
        for lash in &self.lashes {
            let half = 0.5 * lash.width * width_factor;
            let x_lo = (lash.x0.min(lash.x1) - half).floor().max(0.0) as usize;
            let x_hi = ((lash.x0.max(lash.x1) + half).ceil().max(0.0) as usize).min(w - 1);
            let y_lo = (lash.y0.min(lash.y1) - half).floor().max(0.0) as usize;
            let y_hi = ((lash.y0.max(lash.y1) + half).ceil().max(0.0) as usize).min(h - 1);
            for y in y_lo..=y_hi {
                for x in x_lo..=x_hi {
                    if segment_distance(x as f64, y as f64, lash) <= half {
                        let v = values.get_mut(y, x);
                        *v = v.min(lash_gray + self.illumination);
                        if lash_gray <= LASH_DETECTION_GRAY {
                            mask.set(y, x, true);
                        }
                    }
                }
            }
        }
        let pixels = values.map(|&v| v.round().clamp(0.0, 255.0) as u8);
        (pixels, mask)
    }
}

/// Chooses exactly `round(rate * n)` of `candidates`.
fn choose_quota(rng: &mut impl Rng, candidates: &[usize], rate: f64) -> Vec<usize> {
    let mut picked = candidates.to_vec();
    picked.shuffle(rng);
    picked.truncate((rate * candidates.len() as f64).round() as usize);
    picked
}

/// `(image_id, subject_id, gender, cosmetics, render parameters)`.
pub type SampledEye = (String, String, Gender, Cosmetics, EyeParams);

/// Per-subject labels plus the render parameters of every image, in corpus
/// order. Exposed so the same eyes can be re-rendered with other cosmetics.
pub fn sample_eyes(cfg: &SynthConfig, seed: u64) -> Result<Vec<SampledEye>, CorpusError> {
    cfg.validate()?;
    let n = cfg.n_subjects;
    let mut assign = stream(seed, ASSIGN_STREAM, 0, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut assign);
    let n_female = cfg.female_count();
    let mut genders = vec![Gender::Male; n];
    for &i in &order[..n_female] {
        genders[i] = Gender::Female;
    }
    let females: Vec<usize> = (0..n).filter(|&i| genders[i] == Gender::Female).collect();
    let males: Vec<usize> = (0..n).filter(|&i| genders[i] == Gender::Male).collect();
    let mut cosmetics = vec![Cosmetics::None; n];
    for (group, rate) in [(&females, cfg.mascara_rate_female), (&males, cfg.mascara_rate_male)] {
        let wearers = choose_quota(&mut assign, group, rate);
        let with_liner = (cfg.eyeliner_share * wearers.len() as f64).round() as usize;
        for (k, &i) in wearers.iter().enumerate() {
            cosmetics[i] = if k < with_liner {
                Cosmetics::Both
            } else {
                Cosmetics::Mascara
            };
        }
    }

    let mut eyes = Vec::with_capacity(n * cfg.images_per_subject);
    for subject in 0..n {
        let draw = draw_subject(cfg, seed, subject, genders[subject], cosmetics[subject]);
        for k in 0..cfg.images_per_subject {
            let params = draw_image(cfg, seed, subject, k, &draw);
            eyes.push((
                format!("s{subject:04}_{k:02}"),
                format!("s{subject:04}"),
                draw.gender,
                draw.cosmetics,
                params,
            ));
        }
    }
    Ok(eyes)
}

/// Generates a synthetic corpus with ground-truth geometry and masks.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Corpus, CorpusError> {
    let eyes = sample_eyes(cfg, seed)?;
    let entries = eyes
        .into_iter()
        .enumerate()
        .map(|(i, (image_id, subject_id, gender, cosmetics, params))| {
            let (pixels, mask) = params.render(cosmetics);
            CorpusEntry {
                image: EyeImage {
                    image_id,
                    subject_id,
                    eye_side: if i % 2 == 0 { EyeSide::Left } else { EyeSide::Right },
                    gender,
                    cosmetics,
                    pixels,
                },
                geometry: Some(params.geometry),
                occlusion: Some(mask),
            }
        })
        .collect();
    Corpus::new(entries, CorpusSource::Synthetic)
}
