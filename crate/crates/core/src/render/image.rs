//! Image buffers and their on-disk formats: binary PPM (P6) for RGB and a
//! raw `f32` plane dump with a 16-byte header (`C4DI`, H, W, C as `u32`).

use std::path::Path;

use crate::binio::ByteReader;
use crate::error::{Error, Result};
use crate::real::Real;

pub const RAW_MAGIC: &[u8; 4] = b"C4DI";

/// Row-major `height × width × channels` buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![T::zero(); width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, value: &[T]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self { width, height, channels: value.len(), data }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!("{} values for a {height}x{width}x{channels} image", data.len())));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[T] {
        let at = (row * self.width + col) * self.channels;
        &self.data[at..at + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [T] {
        let at = (row * self.width + col) * self.channels;
        &mut self.data[at..at + self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn map<U: Real>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image { width: self.width, height: self.height, channels: self.channels, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_f32(&self) -> Image<f32> {
        self.map(|v| v.to_f32().unwrap_or(f32::NAN))
    }
}

pub fn encode_ppm<T: Real>(img: &Image<T>) -> Result<Vec<u8>> {
    if img.channels != 3 {
        return Err(Error::Shape(format!("PPM needs 3 channels, image has {}", img.channels)));
    }
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn write_ppm<T: Real>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_ppm(img)?)?;
    Ok(())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image<f64>> {
    // header: magic, width, height, maxval separated by whitespace, then one whitespace byte
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(pos as u64, "truncated PPM header"));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P6" {
        return Err(Error::format(0, format!("expected P6 magic, found {:?}", fields[0].1)));
    }
    let num = |i: usize| -> Result<usize> {
        fields[i].1.parse().map_err(|_| Error::format(fields[i].0 as u64, format!("bad PPM number {:?}", fields[i].1)))
    };
    let (w, h, maxval) = (num(1)?, num(2)?, num(3)?);
    if maxval != 255 {
        return Err(Error::format(fields[3].0 as u64, "only 8-bit PPM is supported"));
    }
    pos += 1;
    let need = w * h * 3;
    if bytes.len() < pos + need {
        return Err(Error::format(bytes.len() as u64, "truncated PPM pixel data"));
    }
    let data = bytes[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(w, h, 3, data)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image<f64>> {
    decode_ppm(&std::fs::read(path)?)
}

pub fn encode_raw<T: Real>(img: &Image<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.data.len() * 4);
    out.extend_from_slice(RAW_MAGIC);
    for d in [img.height, img.width, img.channels] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &img.data {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Image<f32>> {
    let mut r = ByteReader::new(bytes);
    r.magic(RAW_MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let c = r.u32("channels")? as usize;
    let body = r.take(w * h * c * 4, "plane data")?;
    let data = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Image::from_vec(w, h, c, data)
}

pub fn write_raw<T: Real>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_raw(img))?;
    Ok(())
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Image<f32>> {
    decode_raw(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_quantizes_to_bytes() {
        let img = Image::from_vec(2, 1, 3, vec![0.0, 0.5, 1.0, 1.5, -0.2, 0.25]).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        assert!(bytes.starts_with(b"P6\n2 1\n255\n"));
        let back = decode_ppm(&bytes).unwrap();
        let expect = [0.0, 128.0 / 255.0, 1.0, 1.0, 0.0, 64.0 / 255.0];
        for (a, b) in back.data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_header_is_sixteen_bytes() {
        let img = Image::from_vec(3, 2, 1, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = encode_raw(&img);
        assert_eq!(bytes.len(), 16 + 6 * 4);
        assert_eq!(&bytes[..4], b"C4DI");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        let back = decode_raw(&bytes).unwrap();
        assert_eq!(back.data, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(decode_raw(&bytes[..20]).is_err());
    }
}
