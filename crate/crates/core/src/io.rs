//! File formats: binary PGM, raw-float images (`FFLT`), raw-float sinograms
//! (`FSIN`) and JSON documents.
//!
//! Raw-float layouts are little-endian:
//!
//! ```text
//! FFLT | u32 width | u32 height | 4 reserved bytes | width*height f64
//! FSIN | u32 n_angles | u32 n_offsets | u8 angle flag | 7 padding bytes | n_angles*n_offsets f64
//! ```
//!
//! Sinogram files do not store the offset spacing; readers assume the
//! detector spans the image diagonal (see [`default_offset_spacing`]).

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{default_offset_spacing, AngleRange, Image, Sinogram};
use crate::scalar::Real;

pub const IMAGE_MAGIC: &[u8; 4] = b"FFLT";
pub const SINOGRAM_MAGIC: &[u8; 4] = b"FSIN";
const IMAGE_HEADER: usize = 16;
const SINOGRAM_HEADER: usize = 20;

fn format_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format { offset: offset as u64, message: message.into() })
}

/// Little-endian cursor that reports the byte offset of every failure.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return format_err(self.pos, format!("truncated input while reading {what}"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return format_err(0, format!("unsupported magic {:?}", String::from_utf8_lossy(got)));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let start = self.pos;
        let need = n.checked_mul(8).ok_or_else(|| Error::Format {
            offset: start as u64,
            message: "payload size overflows".into(),
        })?;
        let b = self.take(need, "payload")?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return format_err(self.pos, format!("{} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

pub(crate) fn put_f64s<T: Real>(out: &mut Vec<u8>, values: &[T]) {
    for v in values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

/// Encodes an image in the raw-float format.
pub fn encode_image<T: Real>(image: &Image<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(IMAGE_HEADER + 8 * image.pixels().len());
    out.extend_from_slice(IMAGE_MAGIC);
    out.extend_from_slice(&(image.width() as u32).to_le_bytes());
    out.extend_from_slice(&(image.height() as u32).to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    put_f64s(&mut out, image.pixels());
    out
}

/// Decodes either a raw-float image or a binary PGM, by magic.
pub fn decode_image<T: Real>(bytes: &[u8]) -> Result<Image<T>> {
    if bytes.is_empty() {
        return format_err(0, "empty input");
    }
    if bytes.starts_with(b"P5") {
        return decode_pgm(bytes);
    }
    let mut r = Reader::new(bytes);
    r.magic(IMAGE_MAGIC)?;
    let w = r.u32("width")? as usize;
    let h = r.u32("height")? as usize;
    r.take(4, "reserved header bytes")?;
    if w != h {
        return format_err(4, format!("non-square image {w}x{h}"));
    }
    let payload_at = r.pos();
    let values = r.f64s(w * h)?;
    r.finish()?;
    let pixels = values.into_iter().map(T::lit).collect();
    Image::new(w, pixels).map_err(|e| Error::Format { offset: payload_at as u64, message: e.to_string() })
}

fn decode_pgm<T: Real>(bytes: &[u8]) -> Result<Image<T>> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return format_err(pos, format!("truncated PGM header before {name}")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return format_err(start, format!("expected PGM {name}"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *slot = text.parse().map_err(|_| Error::Format { offset: start as u64, message: format!("bad PGM {name}") })?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return format_err(pos, "expected single whitespace after PGM maxval"),
    }
    let [w, h, maxval] = header;
    if maxval == 0 || maxval > 65535 {
        return format_err(pos, format!("PGM maxval {maxval} out of range"));
    }
    if w != h {
        return format_err(3, format!("non-square PGM {w}x{h}"));
    }
    let bpp = if maxval < 256 { 1 } else { 2 };
    let need = w * h * bpp;
    if bytes.len() - pos < need {
        return format_err(bytes.len(), format!("truncated PGM payload: need {need} bytes after offset {pos}"));
    }
    let scale = 1.0 / maxval as f64;
    let data = &bytes[pos..pos + need];
    let pixels: Vec<T> = if bpp == 1 {
        data.iter().map(|&b| T::lit(b as f64 * scale)).collect()
    } else {
        data.chunks_exact(2)
            .map(|c| T::lit(u16::from_be_bytes([c[0], c[1]]) as f64 * scale))
            .collect()
    };
    Image::new(w, pixels).map_err(|e| Error::Format { offset: pos as u64, message: e.to_string() })
}

/// Encodes a 16-bit binary PGM; values are clamped to `[0, 1]`.
pub fn encode_pgm16<T: Real>(image: &Image<T>) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for v in image.pixels() {
        let q = (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn encode_sinogram<T: Real>(sino: &Sinogram<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(SINOGRAM_HEADER + 8 * sino.len());
    out.extend_from_slice(SINOGRAM_MAGIC);
    out.extend_from_slice(&(sino.n_angles() as u32).to_le_bytes());
    out.extend_from_slice(&(sino.n_offsets() as u32).to_le_bytes());
    out.push(sino.angle_range().flag());
    out.extend_from_slice(&[0u8; 7]);
    put_f64s(&mut out, sino.values());
    out
}

pub fn decode_sinogram<T: Real>(bytes: &[u8]) -> Result<Sinogram<T>> {
    if bytes.is_empty() {
        return format_err(0, "empty input");
    }
    let mut r = Reader::new(bytes);
    r.magic(SINOGRAM_MAGIC)?;
    let n_angles = r.u32("n_angles")? as usize;
    let n_offsets = r.u32("n_offsets")? as usize;
    let flag_at = r.pos();
    let flag = r.take(1, "angle range flag")?[0];
    let range = AngleRange::from_flag(flag)
        .ok_or_else(|| Error::Format { offset: flag_at as u64, message: format!("unknown angle range flag {flag}") })?;
    r.take(7, "header padding")?;
    let payload_at = r.pos();
    let values = r.f64s(n_angles * n_offsets)?;
    r.finish()?;
    Sinogram::new(
        n_angles,
        n_offsets,
        values.into_iter().map(T::lit).collect(),
        range,
        T::lit(default_offset_spacing(n_offsets)),
    )
    .map_err(|e| Error::Format { offset: payload_at as u64, message: e.to_string() })
}

pub fn read_image<T: Real>(path: impl AsRef<Path>) -> Result<Image<T>> {
    decode_image(&fs::read(path)?)
}

/// Writes the raw-float format, or 16-bit PGM when the extension is `.pgm`.
pub fn write_image<T: Real>(image: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
        encode_pgm16(image)
    } else {
        encode_image(image)
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_sinogram<T: Real>(path: impl AsRef<Path>) -> Result<Sinogram<T>> {
    decode_sinogram(&fs::read(path)?)
}

pub fn write_sinogram<T: Real>(sino: &Sinogram<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_sinogram(sino))?;
    Ok(())
}

pub fn read_json<D: DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return format_err(0, "empty JSON document");
    }
    serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        offset: byte_offset(&bytes, e.line(), e.column()) as u64,
        message: e.to_string(),
    })
}

pub fn write_json<S: Serialize + ?Sized>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes.split(|&b| b == b'\n').take(line - 1).map(|l| l.len() + 1).sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_length_is_format_error_at_zero() {
        assert!(matches!(decode_image::<f64>(&[]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_sinogram::<f64>(&[]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(decode_image::<f64>(b"XXXX\0\0\0\0"), Err(Error::Format { offset: 0, .. })));
        let x = Image::<f64>::zeros(8).unwrap();
        let bytes = encode_image(&x);
        assert_eq!(bytes.len(), 16 + 8 * 64);
        match decode_image::<f64>(&bytes[..100]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_16bit_scaled_to_unit_range() {
        let mut bytes = b"P5\n# comment\n2 2\n65535\n".to_vec();
        for v in [0u16, 65535, 32768, 1] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let img: Image<f64> = decode_image(&bytes).unwrap();
        assert_eq!(img.pixels()[0], 0.0);
        assert_eq!(img.pixels()[1], 1.0);
        assert!((img.pixels()[2] - 32768.0 / 65535.0).abs() < 1e-15);
        // lossless re-encode of the payload
        let re = encode_pgm16(&img);
        assert_eq!(&re[re.len() - 8..], &bytes[bytes.len() - 8..]);
    }

    #[test]
    fn pgm_8bit() {
        let mut bytes = b"P5 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0, 255, 51, 102]);
        let img: Image<f64> = decode_image(&bytes).unwrap();
        assert!((img.pixels()[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sinogram_header_layout() {
        let s = Sinogram::<f64>::new(2, 3, vec![1.0; 6], AngleRange::FullTurn, default_offset_spacing(3)).unwrap();
        let b = encode_sinogram(&s);
        assert_eq!(&b[..4], b"FSIN");
        assert_eq!(b[12], 1);
        assert_eq!(b.len(), 20 + 48);
        let back: Sinogram<f64> = decode_sinogram(&b).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn raw_float_round_trip_bit_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::ZERO, 64)) {
            let x = Image::new(8, vals).unwrap();
            let back: Image<f64> = decode_image(&encode_image(&x)).unwrap();
            prop_assert!(x.pixels().iter().zip(back.pixels()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn json_errors_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.json");
        fs::write(&p, b"").unwrap();
        assert!(matches!(read_json::<serde_json::Value>(&p), Err(Error::Format { offset: 0, .. })));
        fs::write(&p, b"{\n  \"a\": ]").unwrap();
        assert!(matches!(read_json::<serde_json::Value>(&p), Err(Error::Format { .. })));
    }
}
