use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Height greater than width.
    Tall,
    /// Width greater than height.
    Wide,
    Square,
}

/// Aspect ratio of an image's original (pre-warp) dimensions.
///
/// `value()` is always `max(h, w) / min(h, w) >= 1`; the orientation records
/// which side was longer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AspectRatio {
    orig_h: usize,
    orig_w: usize,
}

impl AspectRatio {
    pub fn orig_h(&self) -> usize {
        self.orig_h
    }

    pub fn orig_w(&self) -> usize {
        self.orig_w
    }

    pub fn value(&self) -> f64 {
        let (h, w) = (self.orig_h as f64, self.orig_w as f64);
        h.max(w) / h.min(w)
    }

    pub fn orientation(&self) -> Orientation {
        use std::cmp::Ordering::*;
        match self.orig_h.cmp(&self.orig_w) {
            Greater => Orientation::Tall,
            Less => Orientation::Wide,
            Equal => Orientation::Square,
        }
    }

    /// `log2(h / w)`: positive for tall images, negative for wide ones.
    pub fn signed_log2(&self) -> f64 {
        (self.orig_h as f64 / self.orig_w as f64).log2()
    }
}

impl std::fmt::Display for AspectRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} {:?} ({}x{})", self.value(), self.orientation(), self.orig_h, self.orig_w)
    }
}

pub fn compute_ratio(orig_h: usize, orig_w: usize) -> Result<AspectRatio> {
    if orig_h == 0 || orig_w == 0 {
        return Err(invalid(format!("image dimensions must be positive, got {orig_h}x{orig_w}")));
    }
    Ok(AspectRatio { orig_h, orig_w })
}
