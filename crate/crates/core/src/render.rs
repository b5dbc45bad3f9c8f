//! Binary PGM (P5) and PPM (P6) images of scalar fields.
//!
//! Fields map linearly from their minimum (pixel 0) to their maximum
//! (pixel 255); a constant field renders as uniform mid-gray (128). The
//! colour variant indexes [`colormap`], a diverging blue-white-red ramp.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cfd::FlowSnapshot;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Gray level used for every pixel of a constant field.
pub const FLAT_GRAY: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    U,
    V,
    P,
    /// Velocity magnitude `sqrt(u² + v²)`.
    Magnitude,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::V => "v",
            Field::P => "p",
            Field::Magnitude => "mag",
        }
    }

    pub fn extract(self, snap: &FlowSnapshot) -> Tensor<f64> {
        match self {
            Field::U => snap.u.clone(),
            Field::V => snap.v.clone(),
            Field::P => snap.p.clone(),
            Field::Magnitude => snap.u.zip_map(&snap.v, "magnitude", f64::hypot).expect("u and v share a grid"),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u" => Ok(Field::U),
            "v" => Ok(Field::V),
            "p" => Ok(Field::P),
            "mag" => Ok(Field::Magnitude),
            _ => Err(Error::invalid(format!("unknown field `{s}` (expected u, v, p or mag)"))),
        }
    }
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    /// Linear min→0, max→255 quantization of a `(h, w)` field.
    pub fn from_field<T: Real>(field: &Tensor<T>) -> Result<Self> {
        let (h, w) = plane_shape(field)?;
        let (lo, hi) = range(field.data());
        Ok(Image {
            width: w,
            height: h,
            pixels: quantize(field.data(), lo, hi),
        })
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// The same levels through [`colormap`].
    pub fn to_ppm(&self) -> Vec<u8> {
        let map = colormap();
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for &p in &self.pixels {
            out.extend_from_slice(&map[p as usize]);
        }
        out
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    /// Places images left to right separated by `gap` columns of white.
    pub fn hstack(images: &[Image], gap: usize) -> Result<Image> {
        let height = images.first().map_or(0, |i| i.height);
        if images.iter().any(|i| i.height != height) {
            return Err(Error::invalid("images in a row must share a height"));
        }
        let width = images.iter().map(|i| i.width).sum::<usize>() + gap * images.len().saturating_sub(1);
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for (k, img) in images.iter().enumerate() {
                if k > 0 {
                    pixels.extend(std::iter::repeat_n(255u8, gap));
                }
                pixels.extend_from_slice(&img.pixels[r * img.width..(r + 1) * img.width]);
            }
        }
        Ok(Image { width, height, pixels })
    }
}

fn plane_shape<T: Real>(field: &Tensor<T>) -> Result<(usize, usize)> {
    match field.shape() {
        &[h, w] if h > 0 && w > 0 => Ok((h, w)),
        s => Err(Error::invalid(format!("images need a non-empty (h, w) field, got {s:?}"))),
    }
}

fn range<T: Real>(data: &[T]) -> (f64, f64) {
    data.iter()
        .map(|v| v.as_f64())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn quantize<T: Real>(data: &[T], lo: f64, hi: f64) -> Vec<u8> {
    if !(hi > lo) {
        return vec![FLAT_GRAY; data.len()];
    }
    data.iter()
        .map(|v| ((v.as_f64() - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Truth, prediction and absolute error side by side. Truth and prediction
/// share one scale so equal values render equally; the error has its own.
pub fn triptych<T: Real>(truth: &Tensor<T>, pred: &Tensor<T>) -> Result<Image> {
    let (h, w) = plane_shape(truth)?;
    truth.expect_same_shape(pred, "triptych")?;
    let (lt, ht) = range(truth.data());
    let (lp, hp) = range(pred.data());
    let (lo, hi) = (lt.min(lp), ht.max(hp));
    let err = truth.zip_map(pred, "triptych", |a, b| (a - b).abs())?;
    let panel = |pixels| Image {
        width: w,
        height: h,
        pixels,
    };
    Image::hstack(
        &[
            panel(quantize(truth.data(), lo, hi)),
            panel(quantize(pred.data(), lo, hi)),
            Image::from_field(&err)?,
        ],
        2,
    )
}

/// 256 RGB entries: blue `(0, 0, 255)` at 0 through white at 127.5 to red
/// `(255, 0, 0)` at 255, linear in each half.
pub fn colormap() -> [[u8; 3]; 256] {
    let mut map = [[0u8; 3]; 256];
    for (i, rgb) in map.iter_mut().enumerate() {
        let t = i as f64 / 255.0;
        let s = |x: f64| (x * 255.0).round() as u8;
        *rgb = if t < 0.5 {
            let a = t / 0.5;
            [s(a), s(a), 255]
        } else {
            let a = (1.0 - t) / 0.5;
            [255, s(a), s(a)]
        };
    }
    map
}

/// Parses a binary PGM (P5, maxval 255).
pub fn parse_pgm(bytes: &[u8], origin: &Path) -> Result<Image> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(origin, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::format(origin, "not a binary PGM (P5)"));
    }
    let mut num = || -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::format(origin, "bad number in PGM header"))
    };
    let (width, height, maxval) = (num()?, num()?, num()?);
    if maxval != 255 {
        return Err(Error::format(origin, format!("unsupported PGM maxval {maxval}")));
    }
    let body = &bytes[pos + 1..];
    if body.len() != width * height {
        return Err(Error::format(
            origin,
            format!("expected {} pixel bytes, found {}", width * height, body.len()),
        ));
    }
    Ok(Image {
        width,
        height,
        pixels: body.to_vec(),
    })
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, path)
}
