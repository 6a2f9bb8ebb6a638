//! RGB rasters and resizing.

use crate::{Error, Result};

/// An 8-bit RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        RgbImage {
            width,
            height,
            data: fill.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Binary PPM (`P6`, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("PPM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII header"))?);
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(bad("only P6 with maxval 255 is supported"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
        let (width, height) = (num(fields[1])?, num(fields[2])?);
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?.to_vec();
        if data.len() != width * height * 3 {
            return Err(bad("pixel data length does not match dimensions"));
        }
        Ok(RgbImage { width, height, data })
    }
}

/// Rec. 601 luma.
pub fn luminance(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(u32::from);
    f64::from(299 * r + 587 * g + 114 * b) / 1000.0
}

/// Bilinear resize with half-pixel centres and clamped edges. Returns
/// interleaved RGB values in `[0, 255]`.
pub fn bilinear_rgb(src: &[u8], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dh * dw * 3);
    let coord = |d: usize, dn: usize, sn: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * sn as f64 / dn as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(sn - 1);
        let i1 = (i0 + 1).min(sn - 1);
        (i0, i1, s - i0 as f64)
    };
    for y in 0..dh {
        let (y0, y1, fy) = coord(y, dh, sh);
        for x in 0..dw {
            let (x0, x1, fx) = coord(x, dw, sw);
            for c in 0..3 {
                let p = |yy: usize, xx: usize| f64::from(src[(yy * sw + xx) * 3 + c]);
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    out
}

/// Resizes one RGB frame: box averaging when both factors are integral
/// shrinks, bilinear otherwise. Values stay in `[0, 255]`.
pub fn resize_rgb(src: &[u8], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    if (sh, sw) == (dh, dw) {
        return src.iter().map(|&v| f64::from(v)).collect();
    }
    if !sh.is_multiple_of(dh) || !sw.is_multiple_of(dw) {
        return bilinear_rgb(src, sh, sw, dh, dw);
    }
    let (fy, fx) = (sh / dh, sw / dw);
    let norm = 1.0 / (fy * fx) as f64;
    let mut out = Vec::with_capacity(dh * dw * 3);
    for y in 0..dh {
        for x in 0..dw {
            for c in 0..3 {
                let mut s = 0.0;
                for yy in y * fy..(y + 1) * fy {
                    for xx in x * fx..(x + 1) * fx {
                        s += f64::from(src[(yy * sw + xx) * 3 + c]);
                    }
                }
                out.push(s * norm);
            }
        }
    }
    out
}
