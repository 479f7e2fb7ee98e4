use super::{Dims, Real, Tensor};
use crate::error::{invalid, Result};

fn check(out_h: usize, out_w: usize, input: &Tensor<impl Real>, op: &str) -> Result<()> {
    if out_h == 0 || out_w == 0 {
        return Err(invalid(format!("{op}: output size must be at least 1x1")));
    }
    if input.dims().height == 0 || input.dims().width == 0 {
        return Err(invalid(format!("{op}: empty input")));
    }
    Ok(())
}

/// Nearest-neighbour resize: `out(y, x) = in(floor(y * in_h / out_h), floor(x * in_w / out_w))`.
pub fn resize_nearest<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    check(out_h, out_w, input, "resize_nearest")?;
    let d = input.dims();
    Ok(Tensor::from_fn(
        Dims::new(d.batch, d.channels, out_h, out_w),
        |n, c, y, x| input.at(n, c, y * d.height / out_h, x * d.width / out_w),
    ))
}

/// Source taps along one axis for half-pixel-centre sampling.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel centres (`align_corners = false`).
///
/// Source coordinate is `(dst + 0.5) * in / out - 0.5`, clamped to the image.
/// Interpolation is evaluated as `a + t * (b - a)` so constant images stay
/// exactly constant.
pub fn resize_bilinear<T: Real>(input: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    check(out_h, out_w, input, "resize_bilinear")?;
    let d = input.dims();
    if (out_h, out_w) == (d.height, d.width) {
        return Tensor::new(d, input.values().to_vec());
    }
    let ty = taps(d.height, out_h);
    let tx = taps(d.width, out_w);
    Ok(Tensor::from_fn(
        Dims::new(d.batch, d.channels, out_h, out_w),
        |n, c, y, x| {
            let (y0, y1, fy) = ty[y];
            let (x0, x1, fx) = tx[x];
            let (fy, fx) = (T::cast(fy), T::cast(fx));
            let top = lerp(input.at(n, c, y0, x0), input.at(n, c, y0, x1), fx);
            let bottom = lerp(input.at(n, c, y1, x0), input.at(n, c, y1, x1), fx);
            lerp(top, bottom, fy)
        },
    ))
}

#[inline]
fn lerp<T: Real>(a: T, b: T, t: T) -> T {
    a + t * (b - a)
}
