//! Contact-sheet rendering: every frame shrunk to a small tile, its index in
//! the top-left corner, boundary frames marked with a coloured bar.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::container::FrameContainer;
use super::image::{bilinear_rgb, luminance, RgbImage};
use super::shots::ShotAnnotation;
use crate::{Error, Result};

pub const PINK: [u8; 3] = [255, 0, 255];
pub const CYAN: [u8; 3] = [0, 255, 255];
pub const LIGHT: [u8; 3] = [255, 255, 255];
pub const DIGIT_LIGHT: [u8; 3] = [240, 240, 240];
pub const DIGIT_DARK: [u8; 3] = [16, 16, 16];

/// Rows of the 3×5 digit glyphs, most significant bit on the left.
const FONT: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailConfig {
    pub tile_width: usize,
    pub tile_height: usize,
    pub per_row: usize,
    /// Pixels between tiles (not around the sheet).
    pub gutter: usize,
    pub background: [u8; 3],
    /// Width of the boundary bar drawn along a tile's right edge.
    pub mark_width: usize,
    /// Luminance below which the index is drawn in the light colour.
    pub luma_threshold: f64,
}

impl Default for ThumbnailConfig {
    fn default() -> Self {
        ThumbnailConfig {
            tile_width: 48,
            tile_height: 27,
            per_row: 10,
            gutter: 2,
            background: [0, 0, 0],
            mark_width: 3,
            luma_threshold: 128.0,
        }
    }
}

impl ThumbnailConfig {
    /// Sheet size for `frames` tiles.
    pub fn sheet_size(&self, frames: usize) -> (usize, usize) {
        let cols = frames.min(self.per_row);
        let rows = frames.div_ceil(self.per_row);
        let span = |n: usize, tile: usize| n * tile + n.saturating_sub(1) * self.gutter;
        (span(cols, self.tile_width), span(rows, self.tile_height))
    }
}

/// Boundary colour of a frame: ground truth only, both, or prediction only.
pub fn mark_color(in_truth: bool, predicted: bool) -> Option<[u8; 3]> {
    match (in_truth, predicted) {
        (true, true) => Some(LIGHT),
        (true, false) => Some(PINK),
        (false, true) => Some(CYAN),
        (false, false) => None,
    }
}

/// Pixel extent of `text` in the digit font.
fn text_extent(text: &str) -> (usize, usize) {
    (text.len() * 4 - 1, 5)
}

/// Draws `text` with its top-left corner at `(x0, y0)`, clipped to the
/// given limits.
fn draw_digits(img: &mut RgbImage, text: &str, x0: usize, y0: usize, xmax: usize, ymax: usize, color: [u8; 3]) {
    for (k, ch) in text.bytes().enumerate() {
        let glyph = FONT[usize::from(ch - b'0')];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    let (x, y) = (x0 + k * 4 + col, y0 + row);
                    if x < xmax && y < ymax {
                        img.put(x, y, color);
                    }
                }
            }
        }
    }
}

/// Renders a contact sheet of every frame in `video`. Frames inside a ground
/// truth transition span and frames listed in `predictions` get a bar.
pub fn render_thumbnail(
    video: &FrameContainer,
    cfg: &ThumbnailConfig,
    annotation: Option<&ShotAnnotation>,
    predictions: Option<&[u64]>,
) -> Result<RgbImage> {
    if video.frames() == 0 {
        return Err(Error::InvalidArgument("cannot render a thumbnail of an empty video".into()));
    }
    if cfg.tile_width == 0 || cfg.tile_height == 0 || cfg.per_row == 0 {
        return Err(Error::InvalidArgument("thumbnail tiles must be non-empty".into()));
    }
    let truth: BTreeSet<u64> = annotation
        .map(|a| a.transitions().iter().flat_map(|s| s.lo..=s.hi).collect())
        .unwrap_or_default();
    let predicted: BTreeSet<u64> = predictions.map(|p| p.iter().copied().collect()).unwrap_or_default();

    let (sw, sh) = cfg.sheet_size(video.frames());
    let mut img = RgbImage::new(sw, sh, cfg.background);
    let (tw, th) = (cfg.tile_width, cfg.tile_height);
    for t in 0..video.frames() {
        let ox = (t % cfg.per_row) * (tw + cfg.gutter);
        let oy = (t / cfg.per_row) * (th + cfg.gutter);
        let tile = bilinear_rgb(video.frame(t), video.height(), video.width(), th, tw);
        for y in 0..th {
            for x in 0..tw {
                let i = (y * tw + x) * 3;
                let px = [0, 1, 2].map(|c| tile[i + c].round().clamp(0.0, 255.0) as u8);
                img.put(ox + x, oy + y, px);
            }
        }

        let label = t.to_string();
        let (lw, lh) = text_extent(&label);
        let (x1, y1) = ((ox + 1 + lw).min(ox + tw), (oy + 1 + lh).min(oy + th));
        let mut luma = 0.0;
        for y in oy + 1..y1 {
            for x in ox + 1..x1 {
                luma += luminance(img.pixel(x, y));
            }
        }
        let area = ((x1 - ox - 1) * (y1 - oy - 1)).max(1);
        let color = if luma / (area as f64) < cfg.luma_threshold { DIGIT_LIGHT } else { DIGIT_DARK };
        draw_digits(&mut img, &label, ox + 1, oy + 1, ox + tw, oy + th, color);

        let frame = t as u64;
        if let Some(c) = mark_color(truth.contains(&frame), predicted.contains(&frame)) {
            for y in oy..oy + th {
                for x in ox + tw - cfg.mark_width.min(tw)..ox + tw {
                    img.put(x, y, c);
                }
            }
        }
    }
    Ok(img)
}
