//! Dataset manifests: one CSV row `path,orig_h,orig_w,p1..p10` per image,
//! paths relative to the manifest's directory.

use std::path::{Path, PathBuf};

use super::{load_image, ImageRecord};
use crate::afdc::compute_ratio;
use crate::error::{Error, Result};
use crate::model::{ScoreDistribution, SCORE_BINS};
use crate::tensor::format;

pub const MANIFEST_FILE: &str = "manifest.csv";

fn header() -> Vec<String> {
    let mut h = vec!["path".to_string(), "orig_h".into(), "orig_w".into()];
    h.extend((1..=SCORE_BINS).map(|i| format!("p{i}")));
    h
}

fn csv_err(e: csv::Error) -> Error {
    Error::Decode(format!("manifest: {e}"))
}

/// Writes each record as a raw tensor file plus `manifest.csv` into `dir`.
pub fn write_dataset(dir: impl AsRef<Path>, records: &[ImageRecord]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(csv_err)?;
    w.write_record(header()).map_err(csv_err)?;
    for (i, r) in records.iter().enumerate() {
        let name = format!("img_{i:05}.afdt");
        format::save(&r.pixels, dir.join(&name))?;
        let mut row = vec![name, r.ratio.orig_h().to_string(), r.ratio.orig_w().to_string()];
        row.extend(r.label.as_array().iter().map(|p| p.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(manifest)
}

/// Loads every row; the stored `orig_h`/`orig_w` define the ratio even when
/// the image file itself was already warped.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let bad = |what: &str| Error::Decode(format!("manifest row {}: bad {what}", line + 1));
        if row.len() != 3 + SCORE_BINS {
            return Err(bad("column count"));
        }
        let num = |i: usize| row[i].trim().parse::<usize>().map_err(|_| bad("dimension"));
        let (h, w) = (num(1)?, num(2)?);
        let p: Vec<f64> = (3..3 + SCORE_BINS)
            .map(|i| row[i].trim().parse::<f64>().map_err(|_| bad("probability")))
            .collect::<Result<_>>()?;
        let mut rec = load_image(base.join(&row[0]))?;
        rec.ratio = compute_ratio(h, w)?;
        rec.label = ScoreDistribution::from_slice(&p)?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{synth_dataset, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = synth_dataset(3, &mut ChaCha8Rng::seed_from_u64(9), &SynthSpec::default()).unwrap();
        let m = write_dataset(dir.path(), &recs).unwrap();
        let text = std::fs::read_to_string(&m).unwrap();
        assert!(text.starts_with("path,orig_h,orig_w,p1,"));
        assert_eq!(read_manifest(&m).unwrap(), recs);
    }

    #[test]
    fn bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join(MANIFEST_FILE);
        std::fs::write(&m, "path,orig_h,orig_w\nx,1,2\n").unwrap();
        assert!(read_manifest(&m).is_err());
    }
}
