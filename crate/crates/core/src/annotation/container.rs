//! `SBDF` raw frame container: the magic bytes, `T`, `H`, `W` as
//! little-endian `u32`, then `T·H·W·3` bytes of RGB, frame-major.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use super::image::resize_rgb;
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"SBDF";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameContainer {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl FrameContainer {
    pub fn new(frames: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Format("frame size must be positive".into()));
        }
        let expected = frames * height * width * 3;
        if data.len() != expected {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {frames}x{height}x{width}x3 = {expected}",
                data.len()
            )));
        }
        Ok(FrameContainer {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.data[t * self.frame_len()..(t + 1) * self.frame_len()]
    }

    /// Frames `range` resized to `height × width`, scaled to `[0, 1]`, as a
    /// `[1, len, height, width, 3]` tensor.
    pub fn to_tensor(&self, range: Range<usize>, height: usize, width: usize) -> Result<Tensor> {
        if range.end > self.frames || range.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "frame range {range:?} outside a {}-frame video",
                self.frames
            )));
        }
        let mut out = Vec::with_capacity(range.len() * height * width * 3);
        for t in range.clone() {
            let f = resize_rgb(self.frame(t), self.height, self.width, height, width);
            out.extend(f.iter().map(|&v| v / 255.0));
        }
        Tensor::new(vec![1, range.len(), height, width, 3], out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FRAME_MAGIC)?;
        for v in [self.frames, self.height, self.width] {
            let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.data)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("file too short for a frame container header".into()))?;
        if &magic != FRAME_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected SBDF")));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| Error::Format("truncated frame container header".into()))?;
            *d = u32::from_le_bytes(b) as usize;
        }
        let [t, h, w] = dims;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        Self::new(t, h, w, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.data.len());
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
