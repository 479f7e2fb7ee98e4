use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ImageRecord;
use crate::error::{invalid, Result};
use crate::model::ScoreDistribution;
use crate::tensor::{Dims, Tensor};

/// Generator settings for the aspect-ratio dataset.
///
/// Each image has a short side of `min_side` and a long side of
/// `min_side * 2^|t|` with `t = log2(h / w)` uniform in
/// `[-max_log2_ratio, max_log2_ratio]`. Content is drawn in coordinates
/// normalized to `[-1, 1]` on both axes, so a square warp of any image looks
/// like a square rendering of the same scene: the ratio is invisible after
/// warping.
///
/// The label is a discretized Gaussian over the bins with mean
/// `label_center + label_slope * log2(h / w)` and spread `label_sigma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub min_side: usize,
    pub max_log2_ratio: f64,
    pub channels: usize,
    pub label_center: f64,
    pub label_slope: f64,
    pub label_sigma: f64,
    /// Disc radius range in normalized units.
    pub radius: (f64, f64),
    /// Width of the disc's soft edge in normalized units.
    pub edge_width: f64,
    pub background: (f64, f64),
    pub contrast: (f64, f64),
    /// Amplitude of each smooth cosine noise component.
    pub wave_amplitude: f64,
    pub waves: usize,
    /// Independent per-pixel noise; zero keeps the ratio hidden.
    pub pixel_noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            min_side: 48,
            max_log2_ratio: 1.0,
            channels: 1,
            label_center: 5.5,
            label_slope: 2.5,
            label_sigma: 1.2,
            radius: (0.35, 0.75),
            edge_width: 0.08,
            background: (0.15, 0.35),
            contrast: (0.3, 0.5),
            wave_amplitude: 0.04,
            waves: 3,
            pixel_noise: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_side >= 2
            && self.max_log2_ratio >= 0.0
            && self.max_log2_ratio.is_finite()
            && (self.channels == 1 || self.channels == 3)
            && self.label_sigma > 0.0
            && self.radius.0 > 0.0
            && self.radius.0 <= self.radius.1
            && self.edge_width > 0.0
            && self.background.0 <= self.background.1
            && self.contrast.0 <= self.contrast.1
            && self.wave_amplitude >= 0.0
            && self.pixel_noise >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid synthetic dataset spec: {self:?}")))
        }
    }

    /// Label for an image of original size `h x w`.
    pub fn label_for(&self, h: usize, w: usize) -> Result<ScoreDistribution> {
        let t = (h as f64 / w as f64).log2();
        let mean = (self.label_center + self.label_slope * t).clamp(1.0, 10.0);
        ScoreDistribution::discretized_gaussian(mean, self.label_sigma)
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// `n` records drawn from `rng` in sequence.
pub fn synth_dataset(n: usize, rng: &mut impl Rng, spec: &SynthSpec) -> Result<Vec<ImageRecord>> {
    if n == 0 {
        return Err(invalid("synthetic dataset needs n >= 1"));
    }
    spec.validate()?;
    (0..n).map(|_| synth_image(rng, spec)).collect()
}

/// Random draws for one image, independent of its pixel size.
#[derive(Clone, Debug)]
struct Scene {
    radius: f64,
    bg: f64,
    fg: f64,
    waves: Vec<(f64, f64, f64)>,
    tints: Vec<f64>,
}

impl Scene {
    fn draw(rng: &mut impl Rng, spec: &SynthSpec) -> Self {
        let radius = uniform(rng, spec.radius);
        let bg = uniform(rng, spec.background);
        let fg = bg + uniform(rng, spec.contrast);
        let waves = (0..spec.waves)
            .map(|_| {
                let fu = rng.gen_range(-2.0..2.0);
                let fv = rng.gen_range(-2.0..2.0);
                (fu, fv, rng.gen_range(0.0..2.0 * PI))
            })
            .collect();
        let tints = (0..spec.channels).map(|_| uniform(rng, (0.9, 1.0))).collect();
        Scene {
            radius,
            bg,
            fg,
            waves,
            tints,
        }
    }

    fn render(&self, spec: &SynthSpec, h: usize, w: usize, rng: &mut impl Rng) -> Result<Tensor<f32>> {
        let mut values = Vec::with_capacity(self.tints.len() * h * w);
        for &tint in &self.tints {
            for y in 0..h {
                let v = (y as f64 + 0.5) / h as f64 * 2.0 - 1.0;
                for x in 0..w {
                    let u = (x as f64 + 0.5) / w as f64 * 2.0 - 1.0;
                    let rho = (u * u + v * v).sqrt();
                    let inside = 1.0 / (1.0 + ((rho - self.radius) / spec.edge_width).exp());
                    let mut p = self.bg + (self.fg - self.bg) * inside;
                    for &(fu, fv, phase) in &self.waves {
                        p += spec.wave_amplitude * (PI * (fu * u + fv * v) + phase).cos();
                    }
                    if spec.pixel_noise > 0.0 {
                        p += spec.pixel_noise * rng.gen_range(-1.0..1.0);
                    }
                    values.push((p * tint).clamp(0.0, 1.0) as f32);
                }
            }
        }
        Tensor::new(Dims::new(1, self.tints.len(), h, w), values)
    }
}

fn synth_image(rng: &mut impl Rng, spec: &SynthSpec) -> Result<ImageRecord> {
    let m = spec.max_log2_ratio;
    let t = uniform(rng, (-m, m));
    let long = (spec.min_side as f64 * t.abs().exp2()).round() as usize;
    let (h, w) = if t >= 0.0 { (long, spec.min_side) } else { (spec.min_side, long) };
    let scene = Scene::draw(rng, spec);
    let pixels = scene.render(spec, h, w, rng)?;
    ImageRecord::new(pixels, spec.label_for(h, w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::square_warp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fnv(records: &[ImageRecord]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |b: &[u8]| {
            for &x in b {
                h ^= x as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for r in records {
            for v in r.pixels.values() {
                eat(&v.to_le_bytes());
            }
            for p in r.label.as_array() {
                eat(&p.to_le_bytes());
            }
        }
        h
    }

    #[test]
    fn labels_follow_ratio() {
        let spec = SynthSpec::default();
        assert!((spec.label_for(48, 48).unwrap().mean() - 5.5).abs() < 1e-12);
        let tall = spec.label_for(96, 48).unwrap().mean();
        let wide = spec.label_for(48, 96).unwrap().mean();
        assert!((tall - 5.5 - (5.5 - wide)).abs() < 1e-12);
        assert!(tall > 7.5);
    }

    #[test]
    fn records_are_valid_and_reproducible() {
        let spec = SynthSpec::default();
        let a = synth_dataset(12, &mut ChaCha8Rng::seed_from_u64(5), &spec).unwrap();
        let b = synth_dataset(12, &mut ChaCha8Rng::seed_from_u64(5), &spec).unwrap();
        assert_eq!(fnv(&a), fnv(&b));
        for r in &a {
            let s: f64 = r.label.as_array().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(r.ratio.value() <= 2.0 + 1e-12);
            assert_eq!(r.pixels.dims().height.min(r.pixels.dims().width), 48);
        }
        assert!(synth_dataset(0, &mut ChaCha8Rng::seed_from_u64(5), &spec).is_err());
    }

    #[test]
    fn golden_hash() {
        let spec = SynthSpec::default();
        let a = synth_dataset(4, &mut ChaCha8Rng::seed_from_u64(2024), &spec).unwrap();
        assert_eq!(fnv(&a), GOLDEN);
    }

    const GOLDEN: u64 = 2801911487025231879;

    #[test]
    fn warped_content_is_ratio_free() {
        let spec = SynthSpec::default();
        let scene = Scene::draw(&mut ChaCha8Rng::seed_from_u64(1), &spec);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let warp = |h, w, rng: &mut ChaCha8Rng| {
            let px = scene.render(&spec, h, w, rng).unwrap();
            let rec = ImageRecord::new(px, ScoreDistribution::uniform()).unwrap();
            square_warp(&rec, 40).unwrap().pixels
        };
        let square = warp(48, 48, &mut rng);
        for (h, w) in [(96, 48), (48, 96), (67, 48)] {
            let d = warp(h, w, &mut rng).max_abs_diff(&square).unwrap();
            assert!(d < 0.02, "{h}x{w}: {d}");
        }
    }
}
