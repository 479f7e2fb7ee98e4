use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::netpbm::decode_netpbm;
use crate::afdc::{compute_ratio, AspectRatio};
use crate::error::{invalid, Error, Result};
use crate::model::ScoreDistribution;
use crate::tensor::{format, resize_bilinear, Tensor};

/// One image with the aspect ratio of its original dimensions. Warping
/// replaces `pixels` and keeps `ratio`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub pixels: Tensor<f32>,
    pub ratio: AspectRatio,
    pub label: ScoreDistribution,
}

impl ImageRecord {
    /// Record whose ratio comes from the pixel dims themselves.
    pub fn new(pixels: Tensor<f32>, label: ScoreDistribution) -> Result<Self> {
        let d = pixels.dims();
        if d.batch != 1 {
            return Err(invalid(format!("image record needs a single image, got {d}")));
        }
        if pixels.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("image pixels must lie in [0, 1]"));
        }
        Ok(ImageRecord {
            ratio: compute_ratio(d.height, d.width)?,
            pixels,
            label,
        })
    }
}

/// Loads a PGM/PPM or raw tensor file, dispatching on the magic bytes. The
/// label defaults to uniform; manifests supply the real one.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRecord> {
    let bytes = std::fs::read(path.as_ref())?;
    let pixels = if bytes.starts_with(format::MAGIC) {
        format::decode(&bytes)?.into_real::<f32>()
    } else {
        decode_netpbm(&bytes)?
    };
    ImageRecord::new(pixels, ScoreDistribution::uniform())
}

/// Inclusive range of square warp sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpRange {
    pub min: usize,
    pub max: usize,
}

impl Default for WarpRange {
    fn default() -> Self {
        WarpRange { min: 32, max: 64 }
    }
}

impl WarpRange {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        let r = WarpRange { min, max };
        r.validate()?;
        Ok(r)
    }

    pub fn fixed(size: usize) -> Self {
        WarpRange { min: size, max: size }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.max {
            return Err(invalid(format!("bad warp range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }

    /// One uniform draw from `[min, max]`.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.gen_range(self.min..=self.max)
    }
}

/// Bilinear warp of the whole image to `size x size`.
pub fn square_warp(record: &ImageRecord, size: usize) -> Result<ImageRecord> {
    let d = record.pixels.dims();
    if d.height == 0 || d.width == 0 {
        return Err(Error::InvalidArgument(format!("cannot warp degenerate image {d}")));
    }
    Ok(ImageRecord {
        pixels: resize_bilinear(&record.pixels, size, size)?,
        ratio: record.ratio,
        label: record.label,
    })
}

pub fn random_square_warp(record: &ImageRecord, range: WarpRange, rng: &mut impl Rng) -> Result<ImageRecord> {
    range.validate()?;
    square_warp(record, range.sample(rng))
}

/// Warps every record to one size drawn once for the whole batch.
pub fn warp_batch(records: &[ImageRecord], range: WarpRange, rng: &mut impl Rng) -> Result<Vec<ImageRecord>> {
    range.validate()?;
    let s = range.sample(rng);
    records.iter().map(|r| square_warp(r, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::afdc::Orientation;
    use crate::tensor::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(h: usize, w: usize) -> ImageRecord {
        let px = Tensor::from_fn(Dims::new(1, 1, h, w), |_, _, y, x| ((y + x) % 7) as f32 / 7.0);
        ImageRecord::new(px, ScoreDistribution::uniform()).unwrap()
    }

    #[test]
    fn warp_keeps_ratio() {
        let r = record(60, 40);
        let w = square_warp(&r, 64).unwrap();
        assert_eq!(w.pixels.dims(), Dims::new(1, 1, 64, 64));
        assert_eq!(w.ratio.value(), 1.5);
        assert_eq!(w.ratio.orientation(), Orientation::Tall);
        let sq = square_warp(&record(20, 20), 33).unwrap();
        assert_eq!(sq.ratio.value(), 1.0);
    }

    #[test]
    fn seeded_sizes_are_reproducible() {
        let range = WarpRange::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..8).map(|_| range.sample(&mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert!(draw(3).iter().all(|s| (32..=64).contains(s)));
        assert!(WarpRange::new(10, 5).is_err());
    }

    #[test]
    fn batch_shares_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rs = [record(30, 10), record(10, 10), record(12, 20)];
        let out = warp_batch(&rs, WarpRange::new(16, 24).unwrap(), &mut rng).unwrap();
        let d = out[0].pixels.dims();
        assert!(out.iter().all(|r| r.pixels.dims() == d));
        assert!(out.iter().zip(&rs).all(|(a, b)| a.ratio == b.ratio));
    }

    #[test]
    fn load_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = dir.path().join("a.pgm");
        std::fs::write(&pgm, [b"P5\n3 2\n255\n".as_slice(), &[0, 51, 102, 153, 204, 255]].concat()).unwrap();
        let r = load_image(&pgm).unwrap();
        assert_eq!(r.ratio.value(), 1.5);
        assert_eq!(r.ratio.orientation(), Orientation::Wide);
        let raw = dir.path().join("a.afdt");
        format::save(&r.pixels, &raw).unwrap();
        assert_eq!(load_image(&raw).unwrap(), r);
        std::fs::write(&pgm, b"P5\n3 2\n255\n\0").unwrap();
        assert!(load_image(&pgm).is_err());
    }
}
