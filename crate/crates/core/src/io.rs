//! Grayscale raster files: binary PGM (P5, 8 or 16 bit) and grayscale PNG.
//!
//! Probability maps are read as `sample / maxval`, masks as `sample > 0`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ProbabilityMap};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Raw grayscale samples as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || samples.len() != width * height {
            return Err(Error::Format(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::Format("maxval must be positive".into()));
        }
        if let Some(v) = samples.iter().find(|&&v| v > maxval) {
            return Err(Error::Format(format!("sample {v} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            maxval,
            samples,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn to_probability_map(&self) -> ProbabilityMap {
        let scale = f64::from(self.maxval);
        let values = self.samples.iter().map(|&v| f64::from(v) / scale).collect();
        ProbabilityMap::new(self.width, self.height, values).expect("validated samples")
    }

    pub fn to_mask(&self) -> BinaryMask {
        let values = self.samples.iter().map(|&v| v > 0).collect();
        BinaryMask::new(self.width, self.height, values).expect("validated samples")
    }

    /// 0 for background, 255 for bud.
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let samples = mask
            .values()
            .iter()
            .map(|&v| if v { 255 } else { 0 })
            .collect();
        Self {
            width: mask.width(),
            height: mask.height(),
            maxval: 255,
            samples,
        }
    }

    /// Quantizes to 8 bits with rounding.
    pub fn from_probability_map(map: &ProbabilityMap) -> Self {
        let samples = map
            .values()
            .iter()
            .map(|&v| (v * 255.0).round() as u16)
            .collect();
        Self {
            width: map.width(),
            height: map.height(),
            maxval: 255,
            samples,
        }
    }
}

/// Reads a PGM or PNG file, detected from its leading bytes.
pub fn read_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        Err(Error::Format("not a binary PGM (P5) or PNG file".into()))
    }
}

pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    Ok(read_gray(path)?.to_probability_map())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(read_gray(path)?.to_mask())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    write_pgm(path, &GrayImage::from_mask(mask))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Skip whitespace and comments.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Format("PGM header value out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("missing whitespace after PGM maxval".into()));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("PGM maxval {maxval} out of range")));
    }
    let depth = if maxval < 256 { 1 } else { 2 };
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(depth))
        .ok_or_else(|| Error::Format("PGM dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PGM raster needs {need} bytes")))?;
    let samples = if depth == 1 {
        raster.iter().map(|&b| u16::from(b)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    };
    GrayImage::new(width, height, maxval as u16, samples)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", image.width, image.height, image.maxval).into_bytes();
    if image.maxval < 256 {
        out.extend(image.samples.iter().map(|&v| v as u8));
    } else {
        out.extend(image.samples.iter().flat_map(|v| v.to_be_bytes()));
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&encode_pgm(image))?;
    w.flush()?;
    Ok(())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => GrayImage::new(
            width,
            height,
            255,
            buf.into_raw().into_iter().map(u16::from).collect(),
        ),
        image::DynamicImage::ImageLuma16(buf) => {
            GrayImage::new(width, height, 65535, buf.into_raw())
        }
        other => Err(Error::Format(format!(
            "PNG must be single-channel grayscale, found {:?}",
            other.color()
        ))),
    }
}
