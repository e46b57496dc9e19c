//! 8-bit images and binary masks.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("pixel buffer has {len} samples, expected {expected}")]
    BadLength { len: usize, expected: usize },
    #[error("unsupported channel count {0}")]
    BadChannels(u8),
    #[error("dimension mismatch: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
}

/// Row-major 8-bit raster with 1 (intensity) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
    pub timestamp: Option<f64>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::BadChannels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(RasterError::BadLength {
                len: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
            timestamp: None,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Self {
        Self::new(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
        .expect("valid by construction")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.pixels[o..o + self.channels as usize]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, value: &[u8]) {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        self.pixels[o..o + c].copy_from_slice(&value[..c]);
    }

    /// RGB triple; grayscale images replicate the intensity.
    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let p = self.pixel(x, y);
        if self.channels == 1 {
            [p[0]; 3]
        } else {
            [p[0], p[1], p[2]]
        }
    }

    /// Intensity; RGB images use integer BT.601 luma.
    pub fn gray(&self, x: u32, y: u32) -> u8 {
        let p = self.pixel(x, y);
        if self.channels == 1 {
            p[0]
        } else {
            luma(p[0], p[1], p[2])
        }
    }

    pub fn to_gray(&self) -> RasterImage {
        if self.channels == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        RasterImage {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels,
            timestamp: self.timestamp,
        }
    }

    /// Bilinear intensity at a continuous coordinate (pixel centers at
    /// integers); `None` outside the convex hull of pixel centers.
    pub fn sample_gray_bilinear(&self, u: f64, v: f64) -> Option<f64> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (w, h) = (self.width as f64, self.height as f64);
        if u > w - 1.0 || v > h - 1.0 {
            return None;
        }
        let x0 = (u.floor() as u32).min(self.width.saturating_sub(2));
        let y0 = (v.floor() as u32).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let g = |x, y| self.gray(x, y) as f64;
        Some(
            g(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + g(x1, y0) * fx * (1.0 - fy)
                + g(x0, y1) * (1.0 - fx) * fy
                + g(x1, y1) * fx * fy,
        )
    }

    pub fn crop(&self, rect: &PixelRect) -> RasterImage {
        let c = self.channels as usize;
        let mut pixels = Vec::with_capacity(rect.w as usize * rect.h as usize * c);
        for y in rect.v0..rect.v0 + rect.h {
            let o = self.offset(rect.u0, y);
            pixels.extend_from_slice(&self.pixels[o..o + rect.w as usize * c]);
        }
        RasterImage {
            width: rect.w,
            height: rect.h,
            channels: self.channels,
            pixels,
            timestamp: self.timestamp,
        }
    }
}

fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

/// Image-aligned rectangle `(u0, v0, w, h)` in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub u0: u32,
    pub v0: u32,
    pub w: u32,
    pub h: u32,
}

impl PixelRect {
    pub fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u0 && v >= self.v0 && u < self.u0 + self.w && v < self.v0 + self.h
    }
}

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Samples at or above this value are foreground when binarizing.
pub const MASK_THRESHOLD: u8 = 128;

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self, RasterError> {
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(RasterError::BadLength {
                len: bits.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Foreground where the intensity is at least [`MASK_THRESHOLD`].
    pub fn from_image(image: &RasterImage) -> Self {
        Self::from_fn(image.width(), image.height(), |x, y| {
            image.gray(x, y) >= MASK_THRESHOLD
        })
    }

    pub fn to_image(&self) -> RasterImage {
        RasterImage::new(
            self.width,
            self.height,
            1,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
        .expect("valid by construction")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Out-of-bounds coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u64) < self.width as u64
            && (y as u64) < self.height as u64
            && self.get(x as u32, y as u32)
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn crop(&self, rect: &PixelRect) -> BinaryMask {
        BinaryMask::from_fn(rect.w, rect.h, |x, y| self.get(rect.u0 + x, rect.v0 + y))
    }

    /// Foreground pixel coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Bilinear occupancy in `[0, 1]`; outside pixels read as 0.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> f64 {
        let x0 = u.floor();
        let y0 = v.floor();
        let fx = u - x0;
        let fy = v - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let g = |x, y| if self.get_signed(x, y) { 1.0 } else { 0.0 };
        g(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + g(x0 + 1, y0) * fx * (1.0 - fy)
            + g(x0, y0 + 1) * (1.0 - fx) * fy
            + g(x0 + 1, y0 + 1) * fx * fy
    }

    /// Square-structuring-element dilation by `radius` pixels.
    pub fn dilate(&self, radius: u32) -> BinaryMask {
        let r = radius as i64;
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            (-r..=r).any(|dy| (-r..=r).any(|dx| self.get_signed(x as i64 + dx, y as i64 + dy)))
        })
    }

    pub fn or_assign(&mut self, other: &BinaryMask, at: (u32, u32)) {
        for y in 0..other.height {
            for x in 0..other.width {
                if other.get(x, y) {
                    self.set(at.0 + x, at.1 + y, true);
                }
            }
        }
    }
}
