//! Single-channel images and gradient fields.
//!
//! Pixels are addressed as `(row, col)` and stored row-major.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::{self, Real};

/// A dense single-channel plane.
///
/// Used both for intensity images (nominally in `[0, 1]`) and for the
/// individual channels of a [`GradientImage`], which may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{width}x{height} image needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    /// Replicate-padded access.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> T {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            })
        }
    }

    /// Copies the `width x height` block whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || row + height > self.height || col + width > self.width {
            return Err(Error::Dimensions(format!(
                "crop {width}x{height} at ({row}, {col}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(width, height, |r, c| self.get(row + r, col + c)))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::count(self.len())
    }

    pub fn sum_squares(&self) -> T {
        scalar::sum_sq(&self.data)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        Ok(scalar::dot(&self.data, &other.data))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn max_value(&self) -> T {
        self.data.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Image<T> {
    type Output = T;

    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[row * self.width + col]
    }
}

impl<T> IndexMut<(usize, usize)> for Image<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        &mut self.data[row * self.width + col]
    }
}

/// Horizontal and vertical gradient channels of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientImage<T> {
    gx: Image<T>,
    gy: Image<T>,
}

impl<T: Real> GradientImage<T> {
    pub fn new(gx: Image<T>, gy: Image<T>) -> Result<Self> {
        gx.check_same_shape(&gy)?;
        Ok(Self { gx, gy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            gx: Image::zeros(width, height),
            gy: Image::zeros(width, height),
        }
    }

    #[inline]
    pub fn gx(&self) -> &Image<T> {
        &self.gx
    }

    #[inline]
    pub fn gy(&self) -> &Image<T> {
        &self.gy
    }

    pub fn gx_mut(&mut self) -> &mut Image<T> {
        &mut self.gx
    }

    pub fn gy_mut(&mut self) -> &mut Image<T> {
        &mut self.gy
    }

    pub fn channels(&self) -> [&Image<T>; 2] {
        [&self.gx, &self.gy]
    }

    pub fn into_channels(self) -> (Image<T>, Image<T>) {
        (self.gx, self.gy)
    }

    pub fn width(&self) -> usize {
        self.gx.width()
    }

    pub fn height(&self) -> usize {
        self.gx.height()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.gx.same_shape(&other.gx)
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        self.gx.check_same_shape(&other.gx)
    }

    pub fn map_channels(&self, mut f: impl FnMut(&Image<T>) -> Image<T>) -> Self {
        Self {
            gx: f(&self.gx),
            gy: f(&self.gy),
        }
    }

    pub fn try_map_channels(
        &self,
        mut f: impl FnMut(&Image<T>) -> Result<Image<T>>,
    ) -> Result<Self> {
        Self::new(f(&self.gx)?, f(&self.gy)?)
    }

    pub fn is_zero(&self) -> bool {
        self.gx.data().iter().chain(self.gy.data()).all(|v| v.is_zero())
    }

    pub fn sum_squares(&self) -> T {
        self.gx.sum_squares() + self.gy.sum_squares()
    }

    pub fn crop(&self, row: usize, col: usize, width: usize, height: usize) -> Result<Self> {
        Self::new(
            self.gx.crop(row, col, width, height)?,
            self.gy.crop(row, col, width, height)?,
        )
    }

    pub fn cast<U: Real>(&self) -> GradientImage<U> {
        GradientImage {
            gx: self.gx.cast(),
            gy: self.gy.cast(),
        }
    }
}

/// Forward differences; the last column of `gx` and last row of `gy` are zero.
pub fn gradients<T: Real>(img: &Image<T>) -> GradientImage<T> {
    let (w, h) = (img.width(), img.height());
    let gx = Image::from_fn(w, h, |r, c| {
        if c + 1 < w {
            img.get(r, c + 1) - img.get(r, c)
        } else {
            T::zero()
        }
    });
    let gy = Image::from_fn(w, h, |r, c| {
        if r + 1 < h {
            img.get(r + 1, c) - img.get(r, c)
        } else {
            T::zero()
        }
    });
    GradientImage { gx, gy }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::<f64>::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0f64; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        let a = Image::<f64>::zeros(3, 3);
        let b = Image::<f64>::zeros(3, 4);
        assert!(GradientImage::new(a, b).is_err());
    }

    #[test]
    fn constant_image_has_zero_gradients() {
        let img = Image::filled(7, 5, 0.42f64);
        assert!(gradients(&img).is_zero());
    }

    #[test]
    fn horizontal_step_gives_single_column() {
        let h = 0.3;
        let img = Image::from_fn(6, 4, |_, c| if c >= 3 { h } else { 0.0f64 });
        let g = gradients(&img);
        assert!(g.gy().data().iter().all(|&v| v == 0.0));
        for r in 0..4 {
            for c in 0..6 {
                let expected = if c == 2 { h } else { 0.0 };
                assert_eq!(g.gx()[(r, c)], expected);
            }
        }
    }

    #[test]
    fn matches_difference_loop() {
        let vals = [
            0.1, 0.7, 0.3, 0.9, 0.2, 0.5, 0.5, 0.8, 0.0, 1.0, 0.4, 0.6, 0.2, 0.3, 0.7, 0.9, 0.1,
            0.0, 0.8, 0.6, 0.35, 0.45, 0.55, 0.65, 0.75,
        ];
        let img = Image::new(5, 5, vals.to_vec()).unwrap();
        let g = gradients(&img);
        for r in 0..5 {
            for c in 0..5 {
                let ex = if c < 4 { vals[r * 5 + c + 1] - vals[r * 5 + c] } else { 0.0 };
                let ey = if r < 4 { vals[(r + 1) * 5 + c] - vals[r * 5 + c] } else { 0.0 };
                assert_eq!(g.gx()[(r, c)], ex);
                assert_eq!(g.gy()[(r, c)], ey);
            }
        }
    }

    #[test]
    fn crop_and_clamp() {
        let img = Image::from_fn(4, 3, |r, c| (r * 10 + c) as f64);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[11.0, 12.0, 21.0, 22.0]);
        assert_eq!(img.get_clamped(-5, 10), 3.0);
        assert!(img.crop(2, 0, 4, 2).is_err());
    }
}
