//! Blur kernels and the kernel step.

use crate::cg::{conjugate_gradient, CgReport};
use crate::conv::BoundaryPolicy;
use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};
use crate::scalar::Real;

/// A small 2-D tap grid with odd dimensions so it has a center tap.
///
/// Taps are only guaranteed non-negative and unit-sum after
/// [`project_kernel`]; unconstrained solver output is also representable.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel<T> {
    width: usize,
    height: usize,
    taps: Vec<T>,
}

impl<T: Real> BlurKernel<T> {
    pub fn new(width: usize, height: usize, taps: Vec<T>) -> Result<Self> {
        if width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::Dimensions(format!(
                "kernel dimensions must be odd, got {width}x{height}"
            )));
        }
        if taps.len() != width * height {
            return Err(Error::Dimensions(format!(
                "{width}x{height} kernel needs {} taps, got {}",
                width * height,
                taps.len()
            )));
        }
        if taps.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel"));
        }
        Ok(Self {
            width,
            height,
            taps,
        })
    }

    /// Unit impulse centered in a `width x height` grid.
    ///
    /// # Panics
    /// If a dimension is even.
    pub fn delta(width: usize, height: usize) -> Self {
        assert!(width % 2 == 1 && height % 2 == 1, "kernel dimensions must be odd");
        let mut taps = vec![T::zero(); width * height];
        taps[(height / 2) * width + width / 2] = T::one();
        Self {
            width,
            height,
            taps,
        }
    }

    /// Normalized horizontal box of `len` taps.
    pub fn horizontal_box(len: usize) -> Result<Self> {
        Self::new(len, 1, vec![T::one() / T::count(len); len])
    }

    pub fn from_image(img: &Image<T>) -> Result<Self> {
        Self::new(img.width(), img.height(), img.data().to_vec())
    }

    pub fn to_image(&self) -> Image<T> {
        Image::new(self.width, self.height, self.taps.clone()).expect("kernel is a valid image")
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
    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.taps[row * self.width + col]
    }

    /// Larger of the half-width and half-height.
    pub fn radius(&self) -> usize {
        (self.width / 2).max(self.height / 2)
    }

    pub fn sum(&self) -> T {
        self.taps.iter().fold(T::zero(), |a, &v| a + v)
    }

    pub fn is_delta(&self) -> bool {
        let center = (self.height / 2) * self.width + self.width / 2;
        self.taps
            .iter()
            .enumerate()
            .all(|(i, &v)| if i == center { v == T::one() } else { v == T::zero() })
    }

    /// Non-negative and summing to one within `tol`.
    pub fn is_normalized(&self, tol: T) -> bool {
        self.taps.iter().all(|&v| v >= T::zero()) && (self.sum() - T::one()).abs() <= tol
    }

    /// Rotated by 180 degrees.
    pub fn flipped(&self) -> Self {
        let mut taps = self.taps.clone();
        taps.reverse();
        Self {
            width: self.width,
            height: self.height,
            taps,
        }
    }

    /// Zero-pads (centered) to a larger odd size.
    pub fn padded_to(&self, width: usize, height: usize) -> Result<Self> {
        if width < self.width || height < self.height || width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::Dimensions(format!(
                "cannot pad {}x{} kernel to {width}x{height}",
                self.width, self.height
            )));
        }
        let (oy, ox) = ((height - self.height) / 2, (width - self.width) / 2);
        let mut taps = vec![T::zero(); width * height];
        for r in 0..self.height {
            for c in 0..self.width {
                taps[(r + oy) * width + c + ox] = self.get(r, c);
            }
        }
        Self::new(width, height, taps)
    }

    /// Center of mass `(row, col)` of the absolute tap values.
    pub fn center_of_mass(&self) -> (T, T) {
        let mut m = T::zero();
        let (mut sr, mut sc) = (T::zero(), T::zero());
        for r in 0..self.height {
            for c in 0..self.width {
                let v = self.get(r, c).abs();
                m = m + v;
                sr = sr + v * T::count(r);
                sc = sc + v * T::count(c);
            }
        }
        if m == T::zero() {
            return (T::count(self.height / 2), T::count(self.width / 2));
        }
        (sr / m, sc / m)
    }

    pub fn cast<U: Real>(&self) -> BlurKernel<U> {
        BlurKernel {
            width: self.width,
            height: self.height,
            taps: self.taps.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }
}

/// Clamps negative taps to zero and rescales to unit sum; falls back to a
/// same-size delta when no positive mass remains.
pub fn project_kernel<T: Real>(k: &BlurKernel<T>) -> BlurKernel<T> {
    let clamped: Vec<T> = k.taps().iter().map(|&v| v.max(T::zero())).collect();
    let mass = clamped.iter().fold(T::zero(), |a, &v| a + v);
    if !(mass > T::zero()) {
        return BlurKernel::delta(k.width(), k.height());
    }
    BlurKernel {
        width: k.width(),
        height: k.height(),
        taps: clamped.into_iter().map(|v| v / mass).collect(),
    }
}

/// Nearest odd integer to `x`, at least 1. Halfway cases round up.
pub fn nearest_odd(x: f64) -> usize {
    if !(x > 1.0) {
        return 1;
    }
    let half = ((x - 1.0) / 2.0).round();
    2 * half as usize + 1
}

/// Bilinear resampling by `scale` to the nearest odd size, then projection.
pub fn resize_kernel<T: Real>(k: &BlurKernel<T>, scale: T) -> Result<BlurKernel<T>> {
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(Error::InvalidParam(format!("scale must be positive, got {scale}")));
    }
    let s = scale.as_f64();
    let w = nearest_odd(k.width() as f64 * s);
    let h = nearest_odd(k.height() as f64 * s);
    resample_kernel(k, w, h, scale)
}

/// Bilinear resampling onto an explicit odd `width x height` grid where one
/// source tap spans `scale` destination taps, followed by projection.
pub fn resample_kernel<T: Real>(
    k: &BlurKernel<T>,
    width: usize,
    height: usize,
    scale: T,
) -> Result<BlurKernel<T>> {
    if width.is_multiple_of(2) || height.is_multiple_of(2) {
        return Err(Error::Dimensions(format!(
            "kernel dimensions must be odd, got {width}x{height}"
        )));
    }
    if !(scale > T::zero()) {
        return Err(Error::InvalidParam(format!("scale must be positive, got {scale}")));
    }
    let (scy, scx) = (T::count(k.height() / 2), T::count(k.width() / 2));
    let (dcy, dcx) = (height as isize / 2, width as isize / 2);
    let sample = |y: T, x: T| -> T {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let mut acc = T::zero();
        for (oy, wy) in [(0isize, T::one() - fy), (1, fy)] {
            for (ox, wx) in [(0isize, T::one() - fx), (1, fx)] {
                let (r, c) = (y0.to_isize().unwrap() + oy, x0.to_isize().unwrap() + ox);
                if r >= 0 && c >= 0 && (r as usize) < k.height() && (c as usize) < k.width() {
                    acc = acc + wy * wx * k.get(r as usize, c as usize);
                }
            }
        }
        acc
    };
    let mut taps = Vec::with_capacity(width * height);
    for r in 0..height as isize {
        for c in 0..width as isize {
            let y = scy + T::lit((r - dcy) as f64) / scale;
            let x = scx + T::lit((c - dcx) as f64) / scale;
            taps.push(sample(y, x));
        }
    }
    Ok(project_kernel(&BlurKernel::new(width, height, taps)?))
}

/// Maximum normalized cross-correlation over all integer translations.
///
/// Zero-padding makes the search exhaustive, so the result does not depend
/// on where either kernel sits inside its grid.
pub fn kernel_similarity<T: Real>(a: &BlurKernel<T>, b: &BlurKernel<T>) -> T {
    let na = a.taps().iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    let nb = b.taps().iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
    if na == T::zero() || nb == T::zero() {
        return T::zero();
    }
    let (ah, aw) = (a.height() as isize, a.width() as isize);
    let (bh, bw) = (b.height() as isize, b.width() as isize);
    let mut best = T::neg_infinity();
    for ty in -(bh - 1)..ah {
        for tx in -(bw - 1)..aw {
            let mut acc = T::zero();
            for r in ty.max(0)..(ty + bh).min(ah) {
                for c in tx.max(0)..(tx + bw).min(aw) {
                    acc = acc
                        + a.get(r as usize, c as usize)
                            * b.get((r - ty) as usize, (c - tx) as usize);
                }
            }
            best = best.max(acc);
        }
    }
    (best / (na * nb)).max(-T::one()).min(T::one())
}

/// Normal equations `(G + lambda_k I) k = r` of the kernel step, with `G`
/// summed over both gradient channels on the interior crop.
#[derive(Debug, Clone)]
pub struct KernelSystem<T> {
    pub width: usize,
    pub height: usize,
    /// Row-major `n x n` Gram matrix, `n = width * height`.
    pub gram: Vec<T>,
    pub rhs: Vec<T>,
    pub lambda_k: T,
}

impl<T: Real> KernelSystem<T> {
    pub fn taps(&self) -> usize {
        self.width * self.height
    }

    pub fn apply(&self, x: &[T], out: &mut [T]) {
        let n = self.taps();
        for i in 0..n {
            let row = &self.gram[i * n..(i + 1) * n];
            let mut acc = self.lambda_k * x[i];
            for (g, &v) in row.iter().zip(x) {
                acc = acc + *g * v;
            }
            out[i] = acc;
        }
    }

    /// `||k*l - b||^2 + lambda_k ||k||^2` up to the constant `||b||^2`.
    pub fn objective_shifted(&self, k: &[T]) -> T {
        let mut gk = vec![T::zero(); k.len()];
        self.apply(k, &mut gk);
        let quad = k.iter().zip(&gk).fold(T::zero(), |a, (&x, &y)| a + x * y);
        let lin = k.iter().zip(&self.rhs).fold(T::zero(), |a, (&x, &y)| a + x * y);
        quad - T::lit(2.0) * lin
    }
}

/// Builds the kernel-step normal equations.
///
/// Gram entries for taps at offsets `d, d'` are sums of `l(p) l(p + d - d')`
/// over a shifted copy of the interior, so one integral image per offset
/// difference yields every entry in constant time.
pub fn kernel_normal_equations<T: Real>(
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    width: usize,
    height: usize,
    lambda_k: T,
    bp: &BoundaryPolicy,
) -> Result<KernelSystem<T>> {
    l.check_same_shape(b)?;
    if width.is_multiple_of(2) || height.is_multiple_of(2) {
        return Err(Error::Dimensions(format!(
            "kernel dimensions must be odd, got {width}x{height}"
        )));
    }
    let radius = (width / 2).max(height / 2);
    if bp.margin() < radius {
        return Err(Error::MarginTooSmall {
            margin: bp.margin(),
            radius,
        });
    }
    if width > l.width() || height > l.height() {
        return Err(Error::KernelTooLarge {
            kernel_width: width,
            kernel_height: height,
            width: l.width(),
            height: l.height(),
        });
    }
    let (iw, ih) = (l.width(), l.height());
    let reg = bp.interior(iw, ih)?;
    let (cy, cx) = ((height / 2) as isize, (width / 2) as isize);
    let n = width * height;
    let offset = |a: usize| -> (isize, isize) { ((a / width) as isize - cy, (a % width) as isize - cx) };

    let mut gram = vec![T::zero(); n * n];
    let mut integral = vec![T::zero(); (iw + 1) * (ih + 1)];
    let chans = [(l.gx(), b.gx()), (l.gy(), b.gy())];
    for ey in -(height as isize - 1)..=(height as isize - 1) {
        for ex in -(width as isize - 1)..=(width as isize - 1) {
            // integral image of P(p) = sum_c l_c(p) l_c(p + e)
            for v in integral.iter_mut().take(iw + 1) {
                *v = T::zero();
            }
            for r in 0..ih {
                let mut row_acc = T::zero();
                integral[(r + 1) * (iw + 1)] = T::zero();
                for c in 0..iw {
                    let (r2, c2) = (r as isize + ey, c as isize + ex);
                    if r2 >= 0 && c2 >= 0 && (r2 as usize) < ih && (c2 as usize) < iw {
                        for (lc, _) in &chans {
                            row_acc = row_acc + lc.get(r, c) * lc.get(r2 as usize, c2 as usize);
                        }
                    }
                    integral[(r + 1) * (iw + 1) + c + 1] =
                        integral[r * (iw + 1) + c + 1] + row_acc;
                }
            }
            let rect = |r0: usize, r1: usize, c0: usize, c1: usize| -> T {
                integral[r1 * (iw + 1) + c1] - integral[r0 * (iw + 1) + c1]
                    - integral[r1 * (iw + 1) + c0]
                    + integral[r0 * (iw + 1) + c0]
            };
            for a in 0..n {
                let (dy, dx) = offset(a);
                // d' = d - e
                let (dy2, dx2) = (dy - ey, dx - ex);
                if dy2.abs() > cy || dx2.abs() > cx {
                    continue;
                }
                let a2 = ((dy2 + cy) as usize) * width + (dx2 + cx) as usize;
                let r0 = (reg.row0 as isize - dy) as usize;
                let r1 = (reg.row1 as isize - dy) as usize;
                let c0 = (reg.col0 as isize - dx) as usize;
                let c1 = (reg.col1 as isize - dx) as usize;
                gram[a * n + a2] = rect(r0, r1, c0, c1);
            }
        }
    }

    let mut rhs = vec![T::zero(); n];
    for (a, slot) in rhs.iter_mut().enumerate() {
        let (dy, dx) = offset(a);
        let mut acc = T::zero();
        for (lc, bc) in &chans {
            for i in reg.row0..reg.row1 {
                for j in reg.col0..reg.col1 {
                    acc = acc
                        + bc.get(i, j)
                            * lc.get((i as isize - dy) as usize, (j as isize - dx) as usize);
                }
            }
        }
        *slot = acc;
    }

    Ok(KernelSystem {
        width,
        height,
        gram,
        rhs,
        lambda_k,
    })
}

/// Unconstrained kernel-step solution, obtained by conjugate gradient on the
/// normal equations starting from a delta.
#[derive(Debug, Clone)]
pub struct KernelSolve<T> {
    pub raw: BlurKernel<T>,
    pub report: CgReport<T>,
    pub system: KernelSystem<T>,
}

pub(crate) const KERNEL_CG_TOL: f64 = 1e-10;

pub fn solve_kernel_unconstrained<T: Real>(
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    width: usize,
    height: usize,
    lambda_k: T,
    bp: &BoundaryPolicy,
) -> Result<KernelSolve<T>> {
    if lambda_k < T::zero() {
        return Err(Error::InvalidParam("lambda_k must be non-negative".into()));
    }
    if l.is_zero() {
        return Err(Error::Degenerate(
            "latent gradients are all zero; the kernel step is rank-deficient".into(),
        ));
    }
    let system = kernel_normal_equations(l, b, width, height, lambda_k, bp)?;
    let n = system.taps();
    let mut x = BlurKernel::<T>::delta(width, height).taps().to_vec();
    let max_iters = (4 * n).clamp(200, 2000);
    let report = conjugate_gradient(
        |v: &[T], out: &mut [T]| system.apply(v, out),
        &system.rhs,
        &mut x,
        T::lit(KERNEL_CG_TOL),
        max_iters,
        None,
    );
    let raw = BlurKernel::new(width, height, x)?;
    Ok(KernelSolve {
        raw,
        report,
        system,
    })
}

/// Ridge-regularized least-squares kernel of the given odd size, projected
/// to be non-negative with unit sum.
pub fn estimate_kernel<T: Real>(
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    width: usize,
    height: usize,
    lambda_k: T,
    bp: &BoundaryPolicy,
) -> Result<BlurKernel<T>> {
    let solve = solve_kernel_unconstrained(l, b, width, height, lambda_k, bp)?;
    Ok(project_kernel(&solve.raw))
}

/// Euclidean projection onto the probability simplex
/// `{x : x >= 0, sum x = 1}` (sort-based, exact).
pub fn project_simplex<T: Real>(v: &[T]) -> Vec<T> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut acc = T::zero();
    let mut theta = T::zero();
    for (i, &ui) in u.iter().enumerate() {
        acc = acc + ui;
        let t = (acc - T::one()) / T::count(i + 1);
        if ui - t > T::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

impl<T: Real> KernelSystem<T> {
    /// Largest eigenvalue of `G + lambda_k I` by power iteration.
    fn spectral_bound(&self) -> T {
        let n = self.taps();
        let mut x = vec![T::one() / T::count(n).sqrt(); n];
        let mut y = vec![T::zero(); n];
        let mut est = T::zero();
        for _ in 0..60 {
            self.apply(&x, &mut y);
            let norm = y.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            if norm == T::zero() {
                return self.lambda_k.max(T::min_positive_value());
            }
            est = norm;
            for (xi, &yi) in x.iter_mut().zip(&y) {
                *xi = yi / norm;
            }
        }
        est
    }
}

/// Feasible set for [`solve_kernel_constrained`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelConstraint {
    NonNegative,
    /// Non-negative with unit sum.
    Simplex,
}

impl KernelConstraint {
    fn project<T: Real>(self, v: &[T]) -> Vec<T> {
        match self {
            KernelConstraint::NonNegative => v.iter().map(|&x| x.max(T::zero())).collect(),
            KernelConstraint::Simplex => project_simplex(v),
        }
    }
}

/// Minimizes the kernel-step objective over the constraint set by
/// accelerated projected gradient with monotone restarts, starting from
/// `init` (projected first).
pub fn solve_kernel_constrained<T: Real>(
    system: &KernelSystem<T>,
    init: &[T],
    constraint: KernelConstraint,
    max_iters: usize,
) -> Vec<T> {
    let n = system.taps();
    // gradient of k'Gk - 2 r'k is 2 (G k - r); a small margin on the
    // power-iteration estimate keeps the step safe
    let step = T::one() / (T::lit(2.02) * system.spectral_bound());
    let mut x = constraint.project(init);
    let mut fx = system.objective_shifted(&x);
    let mut y = x.clone();
    let mut t = T::one();
    let mut g = vec![T::zero(); n];
    let tol = T::lit(1e-12);
    for _ in 0..max_iters {
        system.apply(&y, &mut g);
        let z: Vec<T> = y
            .iter()
            .zip(g.iter().zip(&system.rhs))
            .map(|(&yi, (&gi, &ri))| yi - step * T::lit(2.0) * (gi - ri))
            .collect();
        let z = constraint.project(&z);
        let fz = system.objective_shifted(&z);
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) / T::lit(2.0);
        let prev = x.clone();
        if fz <= fx {
            let decrease = fx - fz;
            x = z.clone();
            fx = fz;
            for i in 0..n {
                y[i] = x[i] + (t - T::one()) / t_next * (x[i] - prev[i]);
            }
            t = t_next;
            if decrease <= tol * fx.abs().max(T::one()) {
                break;
            }
        } else {
            // restart the momentum from the best point
            y.copy_from_slice(&x);
            if t == T::one() {
                break;
            }
            t = T::one();
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::convolve_gradients;
    use proptest::prelude::*;

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn rejects_even_or_mismatched() {
        assert!(BlurKernel::<f64>::new(2, 3, vec![0.0; 6]).is_err());
        assert!(BlurKernel::<f64>::new(3, 3, vec![0.0; 8]).is_err());
        assert!(BlurKernel::<f64>::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn projection_examples() {
        let valid = BlurKernel::new(3, 1, vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(project_kernel(&valid), valid);

        let neg = BlurKernel::new(3, 3, vec![-1.0f64; 9]).unwrap();
        assert!(project_kernel(&neg).is_delta());

        let mixed = vec![0.4, -0.2, 0.1, 0.0, 0.7, -0.3, 0.2, 0.05, -0.01];
        let got = project_kernel(&BlurKernel::new(3, 3, mixed.clone()).unwrap());
        let pos: f64 = mixed.iter().filter(|v| **v > 0.0).sum();
        for (g, m) in got.taps().iter().zip(&mixed) {
            let want = if *m > 0.0 { m / pos } else { 0.0 };
            assert_eq!(*g, want);
        }
    }

    #[test]
    fn nearest_odd_rounding() {
        assert_eq!(nearest_odd(0.3), 1);
        assert_eq!(nearest_odd(1.0), 1);
        assert_eq!(nearest_odd(2.0), 3);
        assert_eq!(nearest_odd(4.5), 5);
        assert_eq!(nearest_odd(6.9), 7);
        assert_eq!(nearest_odd(15.0 / 2f64.sqrt()), 11);
    }

    #[test]
    fn resize_identity_and_delta_upscale() {
        let k = project_kernel(&BlurKernel::new(5, 3, pseudo(15, 2).iter().map(|v| v.abs()).collect()).unwrap());
        let same = resize_kernel(&k, 1.0).unwrap();
        for (a, b) in same.taps().iter().zip(k.taps()) {
            assert!((a - b).abs() < 1e-12);
        }
        let up = resize_kernel(&BlurKernel::<f64>::delta(1, 1), 2.0).unwrap();
        assert_eq!((up.width(), up.height()), (3, 3));
        assert!((up.sum() - 1.0).abs() < 1e-12);
        assert!(up.get(1, 1) > up.get(0, 1));
    }

    #[test]
    fn gaussian_round_trip_stays_correlated() {
        let g = BlurKernel::new(
            9,
            9,
            (0..81)
                .map(|i| {
                    let (r, c) = ((i / 9) as f64 - 4.0, (i % 9) as f64 - 4.0);
                    (-(r * r + c * c) / (2.0 * 2.0 * 2.0)).exp()
                })
                .collect(),
        )
        .unwrap();
        let g = project_kernel(&g);
        let down = resize_kernel(&g, 0.5).unwrap();
        let up = resample_kernel(&down, 9, 9, 2.0).unwrap();
        assert!(kernel_similarity(&g, &up) >= 0.98);
    }

    #[test]
    fn similarity_examples() {
        let k = project_kernel(&BlurKernel::new(5, 5, pseudo(25, 5).iter().map(|v| v.abs()).collect()).unwrap());
        assert!((kernel_similarity(&k, &k) - 1.0).abs() < 1e-12);
        let shifted = BlurKernel::new(
            7,
            7,
            (0..49)
                .map(|i| {
                    let (r, c) = (i / 7, i % 7);
                    if r < 5 && c >= 2 {
                        k.get(r, c - 2)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
        assert!((kernel_similarity(&k, &shifted) - 1.0).abs() < 1e-12);

        // Loop oracle: <delta, box> / (|delta| |box|) at the best alignment.
        let bx = BlurKernel::<f64>::horizontal_box(9).unwrap();
        let norm_box = (9.0f64 * (1.0 / 81.0)).sqrt();
        let oracle = (1.0 / 9.0) / norm_box;
        assert!((kernel_similarity(&BlurKernel::delta(1, 1), &bx) - oracle).abs() < 1e-12);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
    }

    fn rich_latent(w: usize, h: usize, seed: u64) -> GradientImage<f64> {
        GradientImage::new(
            Image::new(w, h, pseudo(w * h, seed)).unwrap(),
            Image::new(w, h, pseudo(w * h, seed + 1)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn delta_recovered_for_unit_size() {
        let l = rich_latent(10, 10, 3);
        let k = estimate_kernel(&l, &l, 1, 1, 0.0, &BoundaryPolicy::default()).unwrap();
        assert!((k.taps()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_latent_rejected() {
        let l = GradientImage::<f64>::zeros(9, 9);
        let b = rich_latent(9, 9, 1);
        assert!(matches!(
            estimate_kernel(&l, &b, 3, 3, 0.001, &BoundaryPolicy::new(1)),
            Err(Error::Degenerate(_))
        ));
    }

    /// Brute-force Gram matrix and Gaussian elimination, independent of the
    /// integral-image construction and of conjugate gradient.
    fn dense_oracle(
        l: &GradientImage<f64>,
        b: &GradientImage<f64>,
        w: usize,
        h: usize,
        lambda: f64,
        margin: usize,
    ) -> Vec<f64> {
        let n = w * h;
        let (cy, cx) = ((h / 2) as isize, (w / 2) as isize);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        for (lc, bc) in [(l.gx(), b.gx()), (l.gy(), b.gy())] {
            for i in margin..l.height() - margin {
                for j in margin..l.width() - margin {
                    let mut row = vec![0.0; n];
                    for u in 0..h {
                        for v in 0..w {
                            let r = i as isize - (u as isize - cy);
                            let c = j as isize - (v as isize - cx);
                            row[u * w + v] = lc.get(r as usize, c as usize);
                        }
                    }
                    cols.push(row);
                    y.push(bc.get(i, j));
                }
            }
        }
        let mut m = vec![vec![0.0; n + 1]; n];
        for (row, &t) in cols.iter().zip(&y) {
            for a in 0..n {
                for c in 0..n {
                    m[a][c] += row[a] * row[c];
                }
                m[a][n] += row[a] * t;
            }
        }
        for (a, mrow) in m.iter_mut().enumerate() {
            mrow[a] += lambda;
        }
        #[allow(clippy::needless_range_loop)]
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&p, &q| m[p][col].abs().partial_cmp(&m[q][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            let p = m[col][col];
            for j in col..=n {
                m[col][j] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = m[i][col];
                    for j in col..=n {
                        m[i][j] -= f * m[col][j];
                    }
                }
            }
        }
        m.iter().map(|r| r[n]).collect()
    }

    #[test]
    fn recovers_true_kernel_and_matches_dense_oracle() {
        let l = rich_latent(24, 22, 17);
        let truth = project_kernel(
            &BlurKernel::new(5, 5, pseudo(25, 99).iter().map(|v| v.abs() + 0.01).collect()).unwrap(),
        );
        let b = convolve_gradients(&l, &truth).unwrap();
        let bp = BoundaryPolicy::for_kernel(&truth);
        let solve = solve_kernel_unconstrained(&l, &b, 5, 5, 0.0, &bp).unwrap();
        for (got, want) in solve.raw.taps().iter().zip(truth.taps()) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
        let oracle = dense_oracle(&l, &b, 5, 5, 0.0, 2);
        for (got, want) in solve.raw.taps().iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-8);
        }
        // regularized case against the same oracle
        let solve = solve_kernel_unconstrained(&l, &b, 5, 3, 0.5, &bp).unwrap();
        let oracle = dense_oracle(&l, &b, 5, 3, 0.5, 2);
        for (got, want) in solve.raw.taps().iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn large_ridge_shrinks_before_projection() {
        let l = rich_latent(16, 16, 8);
        let b = rich_latent(16, 16, 9);
        let bp = BoundaryPolicy::new(1);
        let solve = solve_kernel_unconstrained(&l, &b, 3, 3, 1e9, &bp).unwrap();
        assert!(solve.raw.taps().iter().all(|v| v.abs() < 1e-6));
        let k = estimate_kernel(&l, &b, 3, 3, 1e9, &bp).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn estimate_is_valid_and_no_worse_than_delta(seed in 0u64..1000) {
            let l = rich_latent(12, 12, seed);
            let b = rich_latent(12, 12, seed + 7);
            let bp = BoundaryPolicy::new(1);
            let solve = solve_kernel_unconstrained(&l, &b, 3, 3, 0.001, &bp).unwrap();
            let delta = BlurKernel::<f64>::delta(3, 3);
            let f_raw = solve.system.objective_shifted(solve.raw.taps());
            let f_delta = solve.system.objective_shifted(delta.taps());
            prop_assert!(f_raw <= f_delta + 1e-9);
            let k = project_kernel(&solve.raw);
            prop_assert!(k.is_normalized(1e-12));
        }

        #[test]
        fn similarity_symmetric(seed in 0u64..1000) {
            let a = BlurKernel::new(3, 5, pseudo(15, seed)).unwrap();
            let b = BlurKernel::new(7, 3, pseudo(21, seed + 3)).unwrap();
            let s1 = kernel_similarity(&a, &b);
            let s2 = kernel_similarity(&b, &a);
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s1));
        }
    }
}
