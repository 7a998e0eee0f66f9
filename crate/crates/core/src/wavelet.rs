//! Orthonormal separable 2-D Haar transform.
//!
//! For a 2×2 block `(a b; c d)` (top row first) one level produces
//!
//! ```text
//! approx     (a + b + c + d) / 2
//! β = 1  H   (a + b - c - d) / 2
//! β = 2  V   (a - b + c - d) / 2
//! β = 3  D   (a - b - c + d) / 2
//! ```
//!
//! Level `ℓ = 1` is the finest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Image;
use crate::io::{put_f64s, Reader};
use crate::scalar::Real;

pub const WAVELET_MAGIC: &[u8; 4] = b"FWVT";

/// Detail orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Horizontal,
    Vertical,
    Diagonal,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Horizontal, Orientation::Vertical, Orientation::Diagonal];

    /// 1, 2 or 3.
    pub fn beta(self) -> usize {
        self as usize + 1
    }
}

/// Which coefficient block: the coarse approximation or a detail band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    Approx,
    Detail { level: usize, orientation: Orientation },
}

/// Index of one frame element: band plus row-major position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lambda {
    pub band: Band,
    pub index: usize,
}

/// Haar coefficients of a `size × size` image.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletField<T> {
    size: usize,
    levels: usize,
    approx: Vec<T>,
    /// `details[ℓ - 1][β - 1]`.
    details: Vec<[Vec<T>; 3]>,
}

impl<T: Real> WaveletField<T> {
    pub fn zeros(size: usize, levels: usize) -> Result<Self> {
        check_levels(size, levels)?;
        let side = size >> levels;
        Ok(WaveletField {
            size,
            levels,
            approx: vec![T::zero(); side * side],
            details: (1..=levels)
                .map(|l| {
                    let n = (size >> l) * (size >> l);
                    [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]]
                })
                .collect(),
        })
    }

    /// Rebuilds a field from the flat layout of [`WaveletField::to_vec`].
    pub fn from_vec(size: usize, levels: usize, values: Vec<T>) -> Result<Self> {
        let mut w = Self::zeros(size, levels)?;
        if values.len() != size * size {
            return invalid(format!("expected {} coefficients, got {}", size * size, values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite coefficient at index {i}"));
        }
        let mut it = values.into_iter();
        for v in w.approx.iter_mut() {
            *v = it.next().expect("length checked");
        }
        for level in w.details.iter_mut() {
            for band in level.iter_mut() {
                for v in band.iter_mut() {
                    *v = it.next().expect("length checked");
                }
            }
        }
        Ok(w)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn approx(&self) -> &[T] {
        &self.approx
    }

    pub fn detail(&self, level: usize, orientation: Orientation) -> &[T] {
        &self.details[level - 1][orientation.beta() - 1]
    }

    pub fn band(&self, band: Band) -> &[T] {
        match band {
            Band::Approx => &self.approx,
            Band::Detail { level, orientation } => self.detail(level, orientation),
        }
    }

    pub fn band_mut(&mut self, band: Band) -> &mut [T] {
        match band {
            Band::Approx => &mut self.approx,
            Band::Detail { level, orientation } => &mut self.details[level - 1][orientation.beta() - 1],
        }
    }

    /// All bands in storage order: approx, then details fine to coarse,
    /// orientations 1, 2, 3 within a level.
    pub fn bands(&self) -> Vec<Band> {
        let mut out = vec![Band::Approx];
        for level in 1..=self.levels {
            for orientation in Orientation::ALL {
                out.push(Band::Detail { level, orientation });
            }
        }
        out
    }

    pub fn get(&self, lambda: Lambda) -> T {
        self.band(lambda.band)[lambda.index]
    }

    pub fn set(&mut self, lambda: Lambda, value: T) {
        self.band_mut(lambda.band)[lambda.index] = value;
    }

    pub fn len(&self) -> usize {
        self.size * self.size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat coefficients in storage order.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.approx);
        for level in &self.details {
            for band in level {
                out.extend_from_slice(band);
            }
        }
        out
    }

    /// Applies `f(band, value)` to every coefficient.
    pub fn map_bands(&self, f: impl Fn(Band, T) -> T) -> Self {
        let mut out = self.clone();
        for band in self.bands() {
            for v in out.band_mut(band) {
                *v = f(band, *v);
            }
        }
        out
    }

    pub fn norm(&self) -> T {
        self.to_vec().iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.to_vec().iter().zip(other.to_vec()).map(|(&a, b)| a * b).sum()
    }
}

fn check_levels(size: usize, levels: usize) -> Result<()> {
    if size == 0 || !size.is_power_of_two() {
        return invalid(format!("size {size} is not a power of two"));
    }
    let p = size.trailing_zeros() as usize;
    if levels == 0 || levels > p {
        return invalid(format!("levels must be in 1..={p} for size {size}, got {levels}"));
    }
    Ok(())
}

/// `J`-level orthonormal Haar decomposition.
pub fn haar_analysis<T: Real>(x: &Image<T>, levels: usize) -> Result<WaveletField<T>> {
    let mut w = WaveletField::zeros(x.size(), levels)?;
    let half = T::lit(0.5);
    let mut cur = x.pixels().to_vec();
    let mut m = x.size();
    for level in 0..levels {
        let k = m / 2;
        let mut ll = vec![T::zero(); k * k];
        let [bh, bv, bd] = &mut w.details[level];
        for i in 0..k {
            for j in 0..k {
                let a = cur[2 * i * m + 2 * j];
                let b = cur[2 * i * m + 2 * j + 1];
                let c = cur[(2 * i + 1) * m + 2 * j];
                let d = cur[(2 * i + 1) * m + 2 * j + 1];
                let o = i * k + j;
                ll[o] = (a + b + c + d) * half;
                bh[o] = (a + b - c - d) * half;
                bv[o] = (a - b + c - d) * half;
                bd[o] = (a - b - c + d) * half;
            }
        }
        cur = ll;
        m = k;
    }
    w.approx = cur;
    Ok(w)
}

/// Inverse of [`haar_analysis`].
pub fn haar_synthesis<T: Real>(w: &WaveletField<T>) -> Image<T> {
    let half = T::lit(0.5);
    let mut cur = w.approx.clone();
    let mut k = w.size >> w.levels;
    for level in (0..w.levels).rev() {
        let m = 2 * k;
        let mut next = vec![T::zero(); m * m];
        let [bh, bv, bd] = &w.details[level];
        for i in 0..k {
            for j in 0..k {
                let o = i * k + j;
                let (s, h, v, d) = (cur[o], bh[o], bv[o], bd[o]);
                next[2 * i * m + 2 * j] = (s + h + v + d) * half;
                next[2 * i * m + 2 * j + 1] = (s + h - v - d) * half;
                next[(2 * i + 1) * m + 2 * j] = (s - h + v - d) * half;
                next[(2 * i + 1) * m + 2 * j + 1] = (s - h - v + d) * half;
            }
        }
        cur = next;
        k = m;
    }
    Image::new(w.size, cur).expect("synthesis preserves shape")
}

/// The synthesis atom `u_λ` as an image.
pub fn haar_atom<T: Real>(size: usize, levels: usize, lambda: Lambda) -> Result<Image<T>> {
    let mut w = WaveletField::zeros(size, levels)?;
    if lambda.index >= w.band(lambda.band).len() {
        return invalid(format!("coefficient index {} out of range", lambda.index));
    }
    w.set(lambda, T::one());
    Ok(haar_synthesis(&w))
}

/// `FWVT | u32 size | u32 levels | coefficients (f64 LE, storage order)`.
pub fn encode_wavelet<T: Real>(w: &WaveletField<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * w.len());
    out.extend_from_slice(WAVELET_MAGIC);
    out.extend_from_slice(&(w.size as u32).to_le_bytes());
    out.extend_from_slice(&(w.levels as u32).to_le_bytes());
    put_f64s(&mut out, &w.to_vec());
    out
}

pub fn decode_wavelet<T: Real>(bytes: &[u8]) -> Result<WaveletField<T>> {
    if bytes.is_empty() {
        return Err(Error::Format { offset: 0, message: "empty input".into() });
    }
    let mut r = Reader::new(bytes);
    r.magic(WAVELET_MAGIC)?;
    let size = r.u32("size")? as usize;
    let levels = r.u32("levels")? as usize;
    check_levels(size, levels).map_err(|e| Error::Format { offset: 4, message: e.to_string() })?;
    let values = r.f64s(size * size)?;
    r.finish()?;
    WaveletField::from_vec(size, levels, values.into_iter().map(T::lit).collect())
        .map_err(|e| Error::Format { offset: 12, message: e.to_string() })
}

pub fn read_wavelet<T: Real>(path: impl AsRef<Path>) -> Result<WaveletField<T>> {
    decode_wavelet(&fs::read(path)?)
}

pub fn write_wavelet<T: Real>(w: &WaveletField<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_wavelet(w))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(n: usize, seed: u64) -> Image<f64> {
        let mut r = RngSeed(seed).rng();
        Image::from_fn(n, |_, _| r.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn constant_image_collapses_to_one_coefficient() {
        let c: f64 = 0.37;
        let x = Image::from_fn(16, |_, _| c).unwrap();
        let w = haar_analysis(&x, 4).unwrap();
        assert_eq!(w.approx().len(), 1);
        assert!((w.approx()[0] - c * 16.0).abs() < 1e-12);
        assert!(w.to_vec()[1..].iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn block_formulas() {
        // a b / c d = 1 2 / 3 4
        let x = Image::new(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = haar_analysis(&x, 1).unwrap();
        assert_eq!(w.approx()[0], 5.0);
        assert_eq!(w.detail(1, Orientation::Horizontal)[0], -2.0);
        assert_eq!(w.detail(1, Orientation::Vertical)[0], -1.0);
        assert_eq!(w.detail(1, Orientation::Diagonal)[0], 0.0);
    }

    #[test]
    fn too_many_levels_rejected() {
        let x = Image::<f64>::zeros(8).unwrap();
        assert!(haar_analysis(&x, 4).is_err());
        assert!(haar_analysis(&x, 0).is_err());
    }

    #[test]
    fn zero_field_gives_zero_image() {
        let w = WaveletField::<f64>::zeros(16, 3).unwrap();
        assert!(haar_synthesis(&w).pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn atoms_have_unit_norm() {
        for band in WaveletField::<f64>::zeros(32, 3).unwrap().bands() {
            let atom = haar_atom::<f64>(32, 3, Lambda { band, index: 1 }).unwrap();
            assert!((atom.norm() - 1.0).abs() < 1e-12, "{band:?}");
        }
    }

    #[test]
    fn flat_layout_round_trip_and_file_format() {
        let x = random_image(16, 3);
        let w = haar_analysis(&x, 2).unwrap();
        let back = WaveletField::from_vec(16, 2, w.to_vec()).unwrap();
        assert_eq!(back, w);
        let bytes = encode_wavelet(&w);
        assert_eq!(&bytes[..4], b"FWVT");
        assert_eq!(bytes.len(), 12 + 8 * 256);
        // approx block leads the payload
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), w.approx()[0]);
        assert_eq!(decode_wavelet::<f64>(&bytes).unwrap(), w);
        assert!(matches!(decode_wavelet::<f64>(&[]), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_wavelet::<f64>(&bytes[..40]), Err(Error::Format { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn parseval_and_perfect_reconstruction(seed in any::<u64>(), p in 3usize..7, j in 1usize..7) {
            let n = 1 << p;
            let j = j.min(p);
            let x = random_image(n, seed);
            let w = haar_analysis(&x, j).unwrap();
            prop_assert!((w.norm() - x.norm()).abs() <= 1e-10 * x.norm());
            let y = haar_synthesis(&w);
            let err = x.pixels().iter().zip(y.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-12);
        }
    }
}
