//! Grayscale images and Netpbm I/O (binary PGM in, PGM/PPM out).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Blend factor used for overlays.
pub const OVERLAY_ALPHA: f64 = 0.5;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T = f64> {
    height: usize,
    width: usize,
    pixels: Vec<T>,
}

impl<T: Real> GrayImage<T> {
    pub fn new(height: usize, width: usize, pixels: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(i) = pixels
            .iter()
            .position(|p| !p.is_finite() || *p < T::zero() || *p > T::one())
        {
            return Err(Error::validation(format!(
                "pixel {i} = {} outside [0,1]",
                pixels[i]
            )));
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub(crate) fn from_parts_unchecked(height: usize, width: usize, pixels: Vec<T>) -> Self {
        debug_assert_eq!(pixels.len(), height * width);
        GrayImage {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> T {
        self.pixels[row * self.width + col]
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::from_parts_unchecked(vec![self.height, self.width], self.pixels.clone())
    }

    /// Builds an image from an `H×W` tensor, rejecting values outside `[0,1]`.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        match t.dims() {
            &[h, w] => Self::new(h, w, t.data().to_vec()),
            d => Err(Error::shape(format!("expected H×W tensor, got {d:?}"))),
        }
    }

    pub fn cast<U: Real>(&self) -> GrayImage<U> {
        GrayImage {
            height: self.height,
            width: self.width,
            pixels: self
                .pixels
                .iter()
                .map(|p| U::lit(p.to_f64_lossless()))
                .collect(),
        }
    }

    pub fn mean(&self) -> T {
        self.pixels.iter().copied().sum::<T>() / T::lit(self.pixels.len() as f64)
    }

    /// Parses a binary (P5) PGM.
    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let mut hdr = HeaderReader::new(bytes);
        let magic = hdr.magic()?;
        if magic != *b"P5" {
            return Err(Error::format(
                0,
                format!(
                    "unsupported Netpbm magic {:?}, expected P5",
                    String::from_utf8_lossy(&magic)
                ),
            ));
        }
        let width = hdr.number()?;
        let height = hdr.number()?;
        let maxval = hdr.number()?;
        if width == 0 || height == 0 {
            return Err(Error::format(hdr.pos as u64, "zero image dimension"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(Error::format(
                hdr.pos as u64,
                format!("maxval {maxval} outside 1..=65535"),
            ));
        }
        hdr.single_whitespace()?;
        let start = hdr.pos;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let count = width * height;
        let raster = bytes.get(start..start + count * bpp).ok_or_else(|| {
            Error::io(
                "<pgm raster>",
                std::io::Error::new(
                    std::io::ErrorKind::UnexpectedEof,
                    format!(
                        "raster needs {} bytes, {} available",
                        count * bpp,
                        bytes.len().saturating_sub(start)
                    ),
                ),
            )
        })?;
        let scale = T::lit(maxval as f64);
        let mut pixels = Vec::with_capacity(count);
        for i in 0..count {
            let v = if bpp == 1 {
                raster[i] as usize
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
            };
            if v > maxval {
                return Err(Error::format(
                    (start + i * bpp) as u64,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            pixels.push(T::lit(v as f64) / scale);
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    /// Reads a binary PGM. A short raster surfaces as an I/O error naming the file.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Encodes as P5 with the given maxval (255 → 8-bit, otherwise 16-bit big-endian).
    pub fn to_pgm_bytes(&self, maxval: u16) -> Vec<u8> {
        let maxval = maxval.max(1);
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, maxval).into_bytes();
        for &p in &self.pixels {
            let q = quantize(p.to_f64_lossless(), maxval as f64);
            if maxval > 255 {
                out.extend_from_slice(&(q as u16).to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
        out
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm_bytes(255)).map_err(|e| Error::io(path, e))
    }

    /// Blends an `H×W×3` overlay (channels in `[0,1]`) onto the image.
    ///
    /// Per pixel with overlay peak `m = max(r,g,b)`:
    /// `out_c = (1 − α·m)·gray + α·overlay_c` with α = 0.5. A zero overlay leaves
    /// the gray value untouched; a saturated color mixes half-and-half.
    pub fn blend_overlay(&self, overlay: &Tensor<T>) -> Result<Vec<u8>> {
        if overlay.dims() != [self.height, self.width, 3] {
            return Err(Error::validation(format!(
                "overlay dims {:?} do not match image {}x{}x3",
                overlay.dims(),
                self.height,
                self.width
            )));
        }
        let od = overlay.data();
        if let Some(i) = od.iter().position(|v| *v < T::zero() || *v > T::one()) {
            return Err(Error::validation(format!(
                "overlay value {} at flat index {i} outside [0,1]",
                od[i]
            )));
        }
        let mut rgb = Vec::with_capacity(self.pixels.len() * 3);
        for (i, &g) in self.pixels.iter().enumerate() {
            let g = g.to_f64_lossless();
            let o = [
                od[3 * i].to_f64_lossless(),
                od[3 * i + 1].to_f64_lossless(),
                od[3 * i + 2].to_f64_lossless(),
            ];
            let m = o[0].max(o[1]).max(o[2]);
            for c in o {
                let v = (1.0 - OVERLAY_ALPHA * m) * g + OVERLAY_ALPHA * c;
                rgb.push(quantize(v, 255.0) as u8);
            }
        }
        Ok(rgb)
    }

    /// Writes the overlay blend as a binary PPM.
    pub fn write_ppm(&self, overlay: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
        let rgb = self.blend_overlay(overlay)?;
        write_ppm_rgb(self.height, self.width, &rgb, path)
    }
}

/// Encodes an 8-bit RGB raster as P6.
pub fn ppm_bytes(height: usize, width: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    if rgb.len() != height * width * 3 {
        return Err(Error::validation(format!(
            "rgb buffer has {} bytes, {}x{}x3 expected",
            rgb.len(),
            height,
            width
        )));
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(rgb);
    Ok(out)
}

pub fn write_ppm_rgb(height: usize, width: usize, rgb: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ppm_bytes(height, width, rgb)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a binary PPM into `(height, width, rgb)`. Only maxval 255 is accepted.
pub fn read_ppm_rgb(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut hdr = HeaderReader::new(bytes);
    let magic = hdr.magic()?;
    if magic != *b"P6" {
        return Err(Error::format(0, "expected P6"));
    }
    let width = hdr.number()?;
    let height = hdr.number()?;
    let maxval = hdr.number()?;
    if maxval != 255 {
        return Err(Error::format(hdr.pos as u64, "only maxval 255 supported"));
    }
    hdr.single_whitespace()?;
    let raster = bytes
        .get(hdr.pos..hdr.pos + width * height * 3)
        .ok_or_else(|| Error::format(hdr.pos as u64, "truncated raster"))?;
    Ok((height, width, raster.to_vec()))
}

fn quantize(v: f64, maxval: f64) -> u32 {
    (v.clamp(0.0, 1.0) * maxval).round() as u32
}

/// Netpbm header tokenizer: whitespace and `#` comments between fields.
struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        HeaderReader { bytes, pos: 0 }
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        let m = self
            .bytes
            .get(0..2)
            .ok_or_else(|| Error::format(0, "missing magic"))?;
        self.pos = 2;
        Ok([m[0], m[1]])
    }

    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start as u64, "expected decimal header field"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start as u64, "header field out of range"))
    }

    fn single_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::format(
                self.pos as u64,
                "expected whitespace before raster",
            )),
        }
    }
}
