//! Image and sinogram grids.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Square raster on the world square `[-1, 1]²`, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
    pixel_size: T,
}

impl<T: Real> Image<T> {
    /// Builds an image from row-major pixels. The side must be a power of two
    /// and every value finite.
    pub fn new(size: usize, pixels: Vec<T>) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return invalid(format!("image side {size} is not a power of two"));
        }
        if pixels.len() != size * size {
            return invalid(format!(
                "expected {} pixels for a {size}x{size} image, got {}",
                size * size,
                pixels.len()
            ));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite pixel at index {i}"));
        }
        Ok(Image {
            width: size,
            height: size,
            pixels,
            pixel_size: T::lit(2.0) / T::from_len(size),
        })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![T::zero(); size * size])
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut pixels = Vec::with_capacity(size * size);
        for iy in 0..size {
            for ix in 0..size {
                pixels.push(f(ix, iy));
            }
        }
        Self::new(size, pixels)
    }

    /// Builds an image by sampling a function of world coordinates at pixel centres.
    pub fn from_world_fn(size: usize, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        let h = T::lit(2.0) / T::from_len(size);
        let half = T::lit(0.5);
        Self::from_fn(size, |ix, iy| {
            let x = -T::one() + (T::from_len(ix) + half) * h;
            let y = T::one() - (T::from_len(iy) + half) * h;
            f(x, y)
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Side length in pixels.
    pub fn size(&self) -> usize {
        self.width
    }

    pub fn pixel_size(&self) -> T {
        self.pixel_size
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> T {
        self.pixels[iy * self.width + ix]
    }

    /// World coordinates of the centre of pixel `(ix, iy)`.
    pub fn pixel_center(&self, ix: usize, iy: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            -T::one() + (T::from_len(ix) + half) * self.pixel_size,
            T::one() - (T::from_len(iy) + half) * self.pixel_size,
        )
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image { pixels: self.pixels.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    pub fn norm(&self) -> T {
        self.pixels.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn sum(&self) -> T {
        self.pixels.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.pixels.iter().zip(&other.pixels).map(|(&a, &b)| a * b).sum()
    }

    /// Lossy precision conversion (e.g. `f64` to `f32`).
    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| U::lit(v.as_f64())).collect(),
            pixel_size: U::lit(self.pixel_size.as_f64()),
        }
    }
}

/// Angular coverage of a parallel-beam sinogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleRange {
    /// Angles `π a / n` for `a = 0..n`.
    #[default]
    HalfTurn,
    /// Angles `2π a / n` for `a = 0..n`.
    FullTurn,
}

impl AngleRange {
    pub fn span(self) -> f64 {
        match self {
            AngleRange::HalfTurn => std::f64::consts::PI,
            AngleRange::FullTurn => 2.0 * std::f64::consts::PI,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            AngleRange::HalfTurn => 0,
            AngleRange::FullTurn => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(AngleRange::HalfTurn),
            1 => Some(AngleRange::FullTurn),
            _ => None,
        }
    }
}

/// Offset spacing for a detector of `n_offsets` samples spanning `[-√2, √2]`,
/// i.e. the whole diagonal of the image square.
pub fn default_offset_spacing(n_offsets: usize) -> f64 {
    if n_offsets <= 1 {
        2.0 * std::f64::consts::SQRT_2
    } else {
        2.0 * std::f64::consts::SQRT_2 / (n_offsets - 1) as f64
    }
}

/// Parallel-beam data, angle-major: `values[a * n_offsets + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram<T> {
    n_angles: usize,
    n_offsets: usize,
    values: Vec<T>,
    angle_range: AngleRange,
    offset_spacing: T,
}

impl<T: Real> Sinogram<T> {
    pub fn new(
        n_angles: usize,
        n_offsets: usize,
        values: Vec<T>,
        angle_range: AngleRange,
        offset_spacing: T,
    ) -> Result<Self> {
        if n_angles == 0 || n_offsets == 0 {
            return invalid("sinogram dimensions must be positive");
        }
        if values.len() != n_angles * n_offsets {
            return invalid(format!(
                "expected {} sinogram values, got {}",
                n_angles * n_offsets,
                values.len()
            ));
        }
        if !(offset_spacing > T::zero()) {
            return invalid("offset spacing must be positive");
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite sinogram value at index {i}"));
        }
        Ok(Sinogram { n_angles, n_offsets, values, angle_range, offset_spacing })
    }

    pub fn zeros(n_angles: usize, n_offsets: usize, angle_range: AngleRange, offset_spacing: T) -> Result<Self> {
        Self::new(n_angles, n_offsets, vec![T::zero(); n_angles * n_offsets], angle_range, offset_spacing)
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_offsets(&self) -> usize {
        self.n_offsets
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn angle_range(&self) -> AngleRange {
        self.angle_range
    }

    pub fn offset_spacing(&self) -> T {
        self.offset_spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn angle(&self, a: usize) -> T {
        T::lit(self.angle_range.span() * a as f64 / self.n_angles as f64)
    }

    /// Signed offset of detector bin `i`; the grid is symmetric about zero.
    pub fn offset(&self, i: usize) -> T {
        (T::from_len(i) - T::from_len(self.n_offsets - 1) * T::lit(0.5)) * self.offset_spacing
    }

    pub fn row(&self, a: usize) -> &[T] {
        &self.values[a * self.n_offsets..(a + 1) * self.n_offsets]
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize) -> T {
        self.values[a * self.n_offsets + i]
    }

    /// Same geometry, new payload.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.n_angles, self.n_offsets, values, self.angle_range, self.offset_spacing)
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_angles == other.n_angles
            && self.n_offsets == other.n_offsets
            && self.angle_range == other.angle_range
    }
}

/// Mean squared difference of two equally sized images.
pub fn mse<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    if a.width != b.width || a.height != b.height {
        return invalid(format!(
            "mse of {}x{} and {}x{} images",
            a.width, a.height, b.width, b.height
        ));
    }
    let n = T::from_len(a.pixels.len());
    let sum: T = a.pixels.iter().zip(&b.pixels).map(|(&x, &y)| (x - y) * (x - y)).sum();
    Ok(sum / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mse_identity_is_zero() {
        let x = Image::<f64>::from_fn(8, |i, j| (i * 3 + j) as f64 * 0.1).unwrap();
        assert_eq!(mse(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn mse_zeros_vs_ones() {
        let a = Image::<f64>::new(2, vec![0.0; 4]).unwrap();
        let b = Image::<f64>::new(2, vec![1.0; 4]).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn mse_constant_shift() {
        let x = Image::<f64>::from_fn(16, |i, j| ((i * 7 + j * 3) % 5) as f64).unwrap();
        let c = 0.37;
        let y = x.map(|v| v + c);
        assert!((mse(&x, &y).unwrap() - c * c).abs() < 1e-14);
    }

    #[test]
    fn mse_dimension_mismatch() {
        let a = Image::<f64>::zeros(8).unwrap();
        let b = Image::<f64>::zeros(16).unwrap();
        assert!(matches!(mse(&a, &b), Err(crate::Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_non_power_of_two_and_non_finite() {
        assert!(Image::<f64>::zeros(100).is_err());
        assert!(Image::<f64>::new(2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn offsets_symmetric() {
        let s = Sinogram::<f64>::zeros(4, 7, AngleRange::HalfTurn, 0.5).unwrap();
        assert_eq!(s.offset(3), 0.0);
        assert_eq!(s.offset(0), -1.5);
        assert_eq!(s.offset(6), 1.5);
    }

    proptest! {
        #[test]
        fn mse_symmetric_nonnegative(a in proptest::collection::vec(-10.0f64..10.0, 16),
                                     b in proptest::collection::vec(-10.0f64..10.0, 16)) {
            let x = Image::new(4, a.clone()).unwrap();
            let y = Image::new(4, b.clone()).unwrap();
            let m1 = mse(&x, &y).unwrap();
            let m2 = mse(&y, &x).unwrap();
            prop_assert_eq!(m1, m2);
            prop_assert!(m1 >= 0.0);
            prop_assert_eq!(m1 == 0.0, a == b);
        }
    }
}
