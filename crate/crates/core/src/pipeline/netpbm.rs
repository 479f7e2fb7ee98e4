//! Binary PGM (`P5`) and PPM (`P6`) with maxval 255.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Tensor};

fn decode_err(msg: impl Into<String>) -> Error {
    Error::Decode(msg.into())
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(decode_err("not a binary PGM/PPM file (expected P5 or P6)")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(decode_err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err(format!("malformed header at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err("header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(decode_err("missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(decode_err(format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(decode_err(format!("degenerate image {width}x{height}")));
    }
    Ok(Header {
        channels,
        width,
        height,
        data_start: pos,
    })
}

/// Decodes to a `(1, C, H, W)` tensor with values `byte / 255`.
pub fn decode_netpbm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let h = parse_header(bytes)?;
    let n = h.channels * h.width * h.height;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| decode_err(format!("truncated payload: need {n} bytes")))?;
    let dims = Dims::new(1, h.channels, h.height, h.width);
    // interleaved RGB to planar
    Ok(Tensor::from_fn(dims, |_, c, y, x| {
        data[(y * h.width + x) * h.channels + c] as f32 / 255.0
    }))
}

/// Encodes a single-image tensor with 1 or 3 channels, clamping to `[0, 1]`
/// and rounding to 8 bits.
pub fn encode_netpbm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let d = image.dims();
    let magic = match (d.batch, d.channels) {
        (1, 1) => "P5",
        (1, 3) => "P6",
        _ => {
            return Err(Error::InvalidArgument(format!(
                "netpbm needs a 1x1xHxW or 1x3xHxW tensor, got {d}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", d.width, d.height).into_bytes();
    for y in 0..d.height {
        for x in 0..d.width {
            for c in 0..d.channels {
                let v = image.at(0, c, y, x).clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
    }
    Ok(out)
}

pub fn save_netpbm(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_netpbm(image)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p5_checkerboard() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 255, 0]);
        let t = decode_netpbm(&bytes).unwrap();
        assert_eq!(t.values(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(encode_netpbm(&t).unwrap(), bytes);
    }

    #[test]
    fn p6_gray_with_comment() {
        let mut bytes = b"P6 # gray\n3 2\n255 ".to_vec();
        bytes.extend([128u8; 18]);
        let t = decode_netpbm(&bytes).unwrap();
        assert_eq!(t.dims(), Dims::new(1, 3, 2, 3));
        assert!(t.values().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn rejects_bad_input() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 255]);
        assert!(matches!(decode_netpbm(&bytes), Err(Error::Decode(m)) if m.contains("truncated")));
        assert!(decode_netpbm(b"P5\n2 2\n65535\n\0\0\0\0\0\0\0\0").is_err());
        assert!(decode_netpbm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_netpbm(b"P5\n2").is_err());
        assert!(decode_netpbm(b"P5\n0 2\n255\n").is_err());
    }

    #[test]
    fn rgb_planar_order() {
        let bytes = [b"P6\n1 1\n255\n".as_slice(), &[255, 0, 51]].concat();
        let t = decode_netpbm(&bytes).unwrap();
        assert_eq!(t.values(), &[1.0, 0.0, 0.2]);
        assert_eq!(encode_netpbm(&t).unwrap(), bytes);
    }
}
