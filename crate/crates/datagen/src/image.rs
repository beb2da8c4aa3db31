//! RGB images in `[0, 1]` and binary PPM (P6) IO.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved `[H, W, 3]` RGB image, the same layout as the network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Image {
            height,
            width,
            data: vec![value; height * width * 3],
        }
    }

    pub fn from_data(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::InvalidSample(format!(
                "{} values for a {height}x{width} RGB image",
                data.len()
            )));
        }
        Ok(Image { height, width, data })
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * 3 + c
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        let i = self.idx(y, x, c);
        self.data[i] = v;
    }

    /// Mean Rec. 601 luma.
    pub fn mean_luminance(&self) -> f64 {
        let n = self.height * self.width;
        if n == 0 {
            return 0.0;
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .sum::<f64>()
            / n as f64
    }

    pub fn clamp01(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    /// 8-bit quantisation: `round(255 * clamp(v, 0, 1))`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_data(height, width, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Round trip through 8 bits.
    pub fn quantized(&self) -> Self {
        Self::from_bytes(self.height, self.width, &self.to_bytes()).expect("same size")
    }

    /// Centre crop to `h x w`.
    pub fn center_crop(&self, h: usize, w: usize) -> Result<Self> {
        if h > self.height || w > self.width {
            return Err(Error::InvalidSample(format!(
                "cannot crop {}x{} image to {h}x{w}",
                self.height, self.width
            )));
        }
        let (oy, ox) = ((self.height - h) / 2, (self.width - w) / 2);
        let mut out = Image::new(h, w);
        for y in 0..h {
            let src = self.idx(oy + y, ox, 0);
            let dst = out.idx(y, 0, 0);
            out.data[dst..dst + 3 * w].copy_from_slice(&self.data[src..src + 3 * w]);
        }
        Ok(out)
    }
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.to_bytes());
    out
}

pub fn write_ppm(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_ppm(img))?;
    Ok(())
}

pub fn decode_ppm(bytes: &[u8], name: &str) -> Result<Image> {
    let bad = |msg: &str| Error::Image {
        path: name.to_string(),
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
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
    if fields[0] != "P6" {
        return Err(bad("not a binary PPM (P6)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let raster = bytes.get(pos + 1..).ok_or_else(|| bad("missing raster"))?;
    if raster.len() != w * h * 3 {
        return Err(bad(&format!(
            "expected {} raster bytes, found {}",
            w * h * 3,
            raster.len()
        )));
    }
    Image::from_bytes(h, w, raster)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    decode_ppm(&std::fs::read(path)?, &path.display().to_string())
}
