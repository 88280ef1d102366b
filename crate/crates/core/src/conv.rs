//! Convolution, its adjoint, and the interior-cropped data term.
//!
//! Every energy in the crate is evaluated on an interior crop of the image
//! that excludes a band of `margin` pixels on each side. Inside that crop a
//! convolution never reads past the image edge, so the operator
//! `x -> crop(k * x)` is exact and its adjoint is a zero-boundary
//! correlation. The same-size [`convolve`] uses replicate padding for the
//! band itself.

use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::image::{GradientImage, Image};
use crate::kernel::BlurKernel;
use crate::scalar::Real;

/// Kernels with more taps than this along either side use the FFT path.
pub const SPATIAL_MAX_TAPS: usize = 31;

/// Replicate padding for convolution, energies restricted to the interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BoundaryPolicy {
    margin: usize,
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Region {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            row0: 0,
            row1: height,
            col0: 0,
            col1: width,
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row0..self.row1).contains(&row) && (self.col0..self.col1).contains(&col)
    }

    pub fn pixel_count(&self) -> usize {
        (self.row1 - self.row0) * (self.col1 - self.col0)
    }
}

impl BoundaryPolicy {
    pub fn new(margin: usize) -> Self {
        Self { margin }
    }

    pub fn for_kernel<T: Real>(k: &BlurKernel<T>) -> Self {
        Self::new(k.radius())
    }

    /// Margin of the largest kernel among `kernels`.
    pub fn for_kernels<'a, T: Real + 'a>(kernels: impl IntoIterator<Item = &'a BlurKernel<T>>) -> Self {
        Self::new(kernels.into_iter().map(|k| k.radius()).max().unwrap_or(0))
    }

    /// Margin for odd kernel sizes given as `(width, height)`.
    pub fn for_sizes(sizes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self::new(
            sizes
                .into_iter()
                .map(|(w, h)| (w / 2).max(h / 2))
                .max()
                .unwrap_or(0),
        )
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn widen(self, other: Self) -> Self {
        Self::new(self.margin.max(other.margin))
    }

    pub fn interior(&self, width: usize, height: usize) -> Result<Region> {
        let m = self.margin;
        if 2 * m >= width || 2 * m >= height {
            return Err(Error::Dimensions(format!(
                "margin {m} leaves no interior in a {width}x{height} image"
            )));
        }
        Ok(Region {
            row0: m,
            row1: height - m,
            col0: m,
            col1: width - m,
        })
    }

    /// Zeroes everything outside the interior.
    pub fn mask<T: Real>(&self, img: &Image<T>) -> Result<Image<T>> {
        let reg = self.interior(img.width(), img.height())?;
        Ok(Image::from_fn(img.width(), img.height(), |r, c| {
            if reg.contains(r, c) {
                img.get(r, c)
            } else {
                T::zero()
            }
        }))
    }
}

/// Nonzero taps as `(dy, dx, weight)` offsets from the kernel center, so
/// that `(k * x)(i, j) = sum w * x(i - dy, j - dx)`.
#[derive(Debug, Clone)]
pub(crate) struct Taps<T> {
    entries: Vec<(isize, isize, T)>,
    radius: usize,
    kernel: BlurKernel<T>,
}

impl<T: Real> Taps<T> {
    pub(crate) fn new(k: &BlurKernel<T>) -> Self {
        let (cy, cx) = (k.height() as isize / 2, k.width() as isize / 2);
        let mut entries = Vec::new();
        for u in 0..k.height() {
            for v in 0..k.width() {
                let w = k.get(u, v);
                if w != T::zero() {
                    entries.push((u as isize - cy, v as isize - cx, w));
                }
            }
        }
        Self {
            entries,
            radius: k.radius(),
            kernel: k.clone(),
        }
    }

    fn use_fft(&self) -> bool {
        self.kernel.width() > SPATIAL_MAX_TAPS || self.kernel.height() > SPATIAL_MAX_TAPS
    }
}

fn check_fits<T: Real>(img: &Image<T>, k: &BlurKernel<T>) -> Result<()> {
    if k.width() > img.width() || k.height() > img.height() {
        return Err(Error::KernelTooLarge {
            kernel_width: k.width(),
            kernel_height: k.height(),
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(())
}

/// Same-size convolution with replicate padding.
pub fn convolve<T: Real>(channel: &Image<T>, k: &BlurKernel<T>) -> Result<Image<T>> {
    check_fits(channel, k)?;
    let taps = Taps::new(k);
    if taps.use_fft() {
        return Ok(convolve_replicate_fft(channel, k));
    }
    Ok(convolve_replicate_spatial(channel, &taps))
}

fn convolve_replicate_spatial<T: Real>(x: &Image<T>, taps: &Taps<T>) -> Image<T> {
    let (w, h) = (x.width(), x.height());
    let r = taps.radius;
    let mut out = Image::zeros(w, h);
    for i in 0..h {
        let inner_row = i >= r && i + r < h;
        for j in 0..w {
            let mut acc = T::zero();
            if inner_row && j >= r && j + r < w {
                for &(dy, dx, wt) in &taps.entries {
                    let (ii, jj) = ((i as isize - dy) as usize, (j as isize - dx) as usize);
                    acc = acc + wt * x.get(ii, jj);
                }
            } else {
                for &(dy, dx, wt) in &taps.entries {
                    acc = acc + wt * x.get_clamped(i as isize - dy, j as isize - dx);
                }
            }
            out.set(i, j, acc);
        }
    }
    out
}

fn convolve_replicate_fft<T: Real>(x: &Image<T>, k: &BlurKernel<T>) -> Image<T> {
    let (w, h) = (x.width(), x.height());
    let (ry, rx) = (k.height() / 2, k.width() / 2);
    let padded = Image::from_fn(w + 2 * rx, h + 2 * ry, |r, c| {
        x.get_clamped(r as isize - ry as isize, c as isize - rx as isize)
    });
    let full = linear_convolve_fft(&padded, k);
    // full has the padded geometry plus the kernel extent; the sample aligned
    // with padded pixel (r, c) sits at (r + ry, c + rx).
    Image::from_fn(w, h, |r, c| full.get(r + 2 * ry, c + 2 * rx))
}

/// Full linear convolution (output size `w + kw - 1` by `h + kh - 1`).
fn linear_convolve_fft<T: Real>(x: &Image<T>, k: &BlurKernel<T>) -> Image<T> {
    let fw = x.width() + k.width() - 1;
    let fh = x.height() + k.height() - 1;
    let mut a = vec![Complex::new(T::zero(), T::zero()); fw * fh];
    let mut b = a.clone();
    for r in 0..x.height() {
        for c in 0..x.width() {
            a[r * fw + c].re = x.get(r, c);
        }
    }
    for r in 0..k.height() {
        for c in 0..k.width() {
            b[r * fw + c].re = k.get(r, c);
        }
    }
    fft2(&mut a, fw, fh, false);
    fft2(&mut b, fw, fh, false);
    for (p, q) in a.iter_mut().zip(&b) {
        *p = *p * *q;
    }
    fft2(&mut a, fw, fh, true);
    let scale = T::count(fw * fh);
    Image::from_fn(fw, fh, |r, c| a[r * fw + c].re / scale)
}

/// Zero-boundary correlation, the adjoint of convolution restricted to the
/// interior when the argument vanishes outside it.
pub fn correlate<T: Real>(channel: &Image<T>, k: &BlurKernel<T>) -> Result<Image<T>> {
    check_fits(channel, k)?;
    let taps = Taps::new(k);
    let full = Region::full(channel.width(), channel.height());
    if taps.use_fft() {
        return Ok(correlate_zero_fft(channel, k));
    }
    let mut out = Image::zeros(channel.width(), channel.height());
    scatter_adjoint(channel, &taps, full, &mut out);
    Ok(out)
}

fn correlate_zero_fft<T: Real>(y: &Image<T>, k: &BlurKernel<T>) -> Image<T> {
    let flipped = k.flipped();
    let full = linear_convolve_fft(y, &flipped);
    let (ry, rx) = (k.height() / 2, k.width() / 2);
    Image::from_fn(y.width(), y.height(), |r, c| full.get(r + ry, c + rx))
}

/// `out(p) += sum_taps w * y(p + d)` restricted to `y` inside `reg`,
/// accumulated by scattering so it is the exact transpose of
/// [`conv_interior`] over the same region.
fn scatter_adjoint<T: Real>(y: &Image<T>, taps: &Taps<T>, reg: Region, out: &mut Image<T>) {
    let (w, h) = (y.width() as isize, y.height() as isize);
    for i in reg.row0..reg.row1 {
        for j in reg.col0..reg.col1 {
            let v = y.get(i, j);
            if v == T::zero() {
                continue;
            }
            for &(dy, dx, wt) in &taps.entries {
                let (ii, jj) = (i as isize - dy, j as isize - dx);
                if ii >= 0 && ii < h && jj >= 0 && jj < w {
                    let (ii, jj) = (ii as usize, jj as usize);
                    out.set(ii, jj, out.get(ii, jj) + wt * v);
                }
            }
        }
    }
}

/// Linear operator `x -> crop(k * x)` and its transpose for one kernel on one
/// image geometry.
#[derive(Debug, Clone)]
pub(crate) struct BlurOperator<T> {
    taps: Taps<T>,
    region: Region,
    width: usize,
    height: usize,
}

impl<T: Real> BlurOperator<T> {
    pub(crate) fn new(
        k: &BlurKernel<T>,
        width: usize,
        height: usize,
        bp: &BoundaryPolicy,
    ) -> Result<Self> {
        if k.width() > width || k.height() > height {
            return Err(Error::KernelTooLarge {
                kernel_width: k.width(),
                kernel_height: k.height(),
                width,
                height,
            });
        }
        if bp.margin() < k.radius() {
            return Err(Error::MarginTooSmall {
                margin: bp.margin(),
                radius: k.radius(),
            });
        }
        let region = bp.interior(width, height)?;
        Ok(Self {
            taps: Taps::new(k),
            region,
            width,
            height,
        })
    }

    pub(crate) fn region(&self) -> Region {
        self.region
    }

    /// Interior samples of `k * x`; zero outside the interior.
    pub(crate) fn forward(&self, x: &[T], out: &mut [T]) {
        let w = self.width;
        out.iter_mut().for_each(|v| *v = T::zero());
        if self.taps.use_fft() {
            let img = Image::new(w, self.height, x.to_vec()).expect("operator input");
            let full = linear_convolve_fft(&img, &self.taps.kernel);
            let (ry, rx) = (self.taps.kernel.height() / 2, self.taps.kernel.width() / 2);
            for i in self.region.row0..self.region.row1 {
                for j in self.region.col0..self.region.col1 {
                    out[i * w + j] = full.get(i + ry, j + rx);
                }
            }
            return;
        }
        for i in self.region.row0..self.region.row1 {
            for j in self.region.col0..self.region.col1 {
                let mut acc = T::zero();
                for &(dy, dx, wt) in &self.taps.entries {
                    let idx = (i as isize - dy) as usize * w + (j as isize - dx) as usize;
                    acc = acc + wt * x[idx];
                }
                out[i * w + j] = acc;
            }
        }
    }

    /// Transpose of [`Self::forward`]; reads `y` only inside the interior.
    pub(crate) fn adjoint(&self, y: &[T], out: &mut [T]) {
        let w = self.width;
        out.iter_mut().for_each(|v| *v = T::zero());
        if self.taps.use_fft() {
            let masked = Image::from_fn(w, self.height, |r, c| {
                if self.region.contains(r, c) {
                    y[r * w + c]
                } else {
                    T::zero()
                }
            });
            let corr = correlate_zero_fft(&masked, &self.taps.kernel);
            out.copy_from_slice(corr.data());
            return;
        }
        for i in self.region.row0..self.region.row1 {
            for j in self.region.col0..self.region.col1 {
                let v = y[i * w + j];
                if v == T::zero() {
                    continue;
                }
                for &(dy, dx, wt) in &self.taps.entries {
                    let idx = (i as isize - dy) as usize * w + (j as isize - dx) as usize;
                    out[idx] = out[idx] + wt * v;
                }
            }
        }
    }

    /// Sum of squared interior residuals `crop(k * x) - crop(b)`.
    pub(crate) fn residual_energy(&self, x: &[T], b: &[T], scratch: &mut [T]) -> T {
        self.forward(x, scratch);
        let w = self.width;
        let mut acc = T::zero();
        for i in self.region.row0..self.region.row1 {
            for j in self.region.col0..self.region.col1 {
                let d = scratch[i * w + j] - b[i * w + j];
                acc = acc + d * d;
            }
        }
        acc
    }
}

/// Interior-cropped `k * x` with zeros outside the interior.
pub fn conv_interior<T: Real>(
    x: &Image<T>,
    k: &BlurKernel<T>,
    bp: &BoundaryPolicy,
) -> Result<Image<T>> {
    let op = BlurOperator::new(k, x.width(), x.height(), bp)?;
    let mut out = vec![T::zero(); x.len()];
    op.forward(x.data(), &mut out);
    Image::new(x.width(), x.height(), out)
}

/// `||k*l_x - b_x||^2 + ||k*l_y - b_y||^2` over the interior.
pub fn data_term<T: Real>(
    k: &BlurKernel<T>,
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    bp: &BoundaryPolicy,
) -> Result<T> {
    l.check_same_shape(b)?;
    let op = BlurOperator::new(k, l.width(), l.height(), bp)?;
    let mut scratch = vec![T::zero(); l.width() * l.height()];
    let ex = op.residual_energy(l.gx().data(), b.gx().data(), &mut scratch);
    let ey = op.residual_energy(l.gy().data(), b.gy().data(), &mut scratch);
    Ok(ex + ey)
}

/// Convolves both gradient channels with replicate padding.
pub fn convolve_gradients<T: Real>(g: &GradientImage<T>, k: &BlurKernel<T>) -> Result<GradientImage<T>> {
    g.try_map_channels(|ch| convolve(ch, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn loop_convolve(x: &Image<f64>, k: &BlurKernel<f64>) -> Image<f64> {
        let (cy, cx) = (k.height() as isize / 2, k.width() as isize / 2);
        Image::from_fn(x.width(), x.height(), |i, j| {
            let mut acc = 0.0;
            for u in 0..k.height() as isize {
                for v in 0..k.width() as isize {
                    let r = (i as isize + cy - u).clamp(0, x.height() as isize - 1);
                    let c = (j as isize + cx - v).clamp(0, x.width() as isize - 1);
                    acc += k.get(u as usize, v as usize) * x.get(r as usize, c as usize);
                }
            }
            acc
        })
    }

    #[test]
    fn delta_is_identity() {
        let x = Image::new(6, 5, pseudo(30, 1)).unwrap();
        let d = BlurKernel::delta(3, 3);
        assert_eq!(convolve(&x, &d).unwrap(), x);
        assert_eq!(correlate(&x, &d).unwrap(), x);
    }

    #[test]
    fn impulse_response_orientation() {
        let k = BlurKernel::new(3, 3, (1..=9).map(|v| v as f64).collect()).unwrap();
        let mut x = Image::zeros(7, 7);
        x.set(3, 3, 1.0);
        let conv = convolve(&x, &k).unwrap();
        let corr = correlate(&x, &k).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                // convolution places k as-is, correlation rotates it by 180 degrees
                assert_eq!(conv.get(2 + a, 2 + b), k.get(a, b));
                assert_eq!(corr.get(2 + a, 2 + b), k.get(2 - a, 2 - b));
            }
        }
    }

    #[test]
    fn three_tap_uniform_matches_loop() {
        let x = Image::new(6, 6, pseudo(36, 7)).unwrap();
        let k = BlurKernel::new(3, 1, vec![1.0 / 3.0; 3]).unwrap();
        let got = convolve(&x, &k).unwrap();
        let want = loop_convolve(&x, &k);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_oversized_kernel() {
        let x = Image::<f64>::zeros(4, 4);
        let k = BlurKernel::delta(5, 3);
        assert!(matches!(convolve(&x, &k), Err(Error::KernelTooLarge { .. })));
        assert!(correlate(&x, &k).is_err());
    }

    #[test]
    fn fft_path_agrees_with_spatial() {
        let (w, h) = (48, 44);
        let x = Image::new(w, h, pseudo(w * h, 3)).unwrap();
        let taps: Vec<f64> = pseudo(33 * 33, 4).iter().map(|v| v.abs()).collect();
        let k = BlurKernel::new(33, 33, taps).unwrap();
        let fast = convolve(&x, &k).unwrap();
        let slow = convolve_replicate_spatial(&x, &Taps::new(&k));
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        let cf = correlate(&x, &k).unwrap();
        let mut cs = Image::zeros(w, h);
        scatter_adjoint(&x, &Taps::new(&k), Region::full(w, h), &mut cs);
        for (a, b) in cf.data().iter().zip(cs.data()) {
            assert!((a - b).abs() < 1e-8);
        }
        let bp = BoundaryPolicy::for_kernel(&k);
        let op = BlurOperator::new(&k, w, h, &bp).unwrap();
        let mut out = vec![0.0; w * h];
        op.forward(x.data(), &mut out);
        let reg = bp.interior(w, h).unwrap();
        for i in reg.row0..reg.row1 {
            for j in reg.col0..reg.col1 {
                assert!((out[i * w + j] - slow.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn data_term_examples() {
        let b = GradientImage::new(
            Image::new(5, 5, pseudo(25, 11)).unwrap(),
            Image::new(5, 5, pseudo(25, 12)).unwrap(),
        )
        .unwrap();
        let d = BlurKernel::delta(1, 1);
        assert_eq!(data_term(&d, &b, &b, &BoundaryPolicy::default()).unwrap(), 0.0);

        let k = BlurKernel::new(3, 3, pseudo(9, 13).iter().map(|v| v.abs()).collect()).unwrap();
        let bp = BoundaryPolicy::for_kernel(&k);
        let l = b.clone();
        let kb = convolve_gradients(&l, &k).unwrap();
        assert!(data_term(&k, &l, &kb, &bp).unwrap() < 1e-24);

        // loop oracle
        let got = data_term(&k, &l, &b, &bp).unwrap();
        let mut want = 0.0;
        for (lc, bc) in [(l.gx(), b.gx()), (l.gy(), b.gy())] {
            let conv = loop_convolve(lc, &k);
            for i in 1..4 {
                for j in 1..4 {
                    want += (conv.get(i, j) - bc.get(i, j)).powi(2);
                }
            }
        }
        assert!((got - want).abs() < 1e-10);

        let other = GradientImage::<f64>::zeros(4, 5);
        assert!(data_term(&k, &l, &other, &bp).is_err());
        assert!(matches!(
            data_term(&k, &l, &b, &BoundaryPolicy::new(0)),
            Err(Error::MarginTooSmall { .. })
        ));
    }

    proptest! {
        #[test]
        fn adjoint_identity(seed in 0u64..10_000) {
            let x = Image::new(8, 8, pseudo(64, seed)).unwrap();
            let y = Image::new(8, 8, pseudo(64, seed + 1)).unwrap();
            let k = BlurKernel::new(3, 3, pseudo(9, seed + 2)).unwrap();
            let bp = BoundaryPolicy::for_kernel(&k);
            let lhs = bp.mask(&convolve(&x, &k).unwrap()).unwrap().dot(&y).unwrap();
            let rhs = x.dot(&correlate(&bp.mask(&y).unwrap(), &k).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn linearity(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let x = Image::new(7, 6, pseudo(42, seed)).unwrap();
            let y = Image::new(7, 6, pseudo(42, seed + 5)).unwrap();
            let k = BlurKernel::new(3, 5, pseudo(15, seed + 9)).unwrap();
            let combo = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
            let lhs = convolve(&combo, &k).unwrap();
            let cx = convolve(&x, &k).unwrap();
            let cy = convolve(&y, &k).unwrap();
            for i in 0..lhs.len() {
                let rhs = a * cx.data()[i] + b * cy.data()[i];
                prop_assert!((lhs.data()[i] - rhs).abs() < 1e-12);
            }
        }

        #[test]
        fn data_term_shift_consistency(seed in 0u64..10_000) {
            let mk = |s| Image::new(9, 9, pseudo(81, s)).unwrap();
            let l = GradientImage::new(mk(seed), mk(seed + 1)).unwrap();
            let b = GradientImage::new(mk(seed + 2), mk(seed + 3)).unwrap();
            let delta = GradientImage::new(mk(seed + 4), mk(seed + 5)).unwrap();
            let k = BlurKernel::new(3, 3, pseudo(9, seed + 6).iter().map(|v| v.abs()).collect()).unwrap();
            let bp = BoundaryPolicy::for_kernel(&k);
            let base = data_term(&k, &l, &b, &bp).unwrap();
            let kd = convolve_gradients(&delta, &k).unwrap();
            let l2 = GradientImage::new(
                l.gx().zip_map(delta.gx(), |p, q| p - q).unwrap(),
                l.gy().zip_map(delta.gy(), |p, q| p - q).unwrap(),
            ).unwrap();
            let b2 = GradientImage::new(
                b.gx().zip_map(kd.gx(), |p, q| p - q).unwrap(),
                b.gy().zip_map(kd.gy(), |p, q| p - q).unwrap(),
            ).unwrap();
            let shifted = data_term(&k, &l2, &b2, &bp).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-9 * base.max(1.0));
        }
    }
}
