//! Deterministic synthetic scenes and blur kernels.
//!
//! Scenes mix hard-edged shapes with a fine texture layer so that, as in
//! natural photographs, the sharp image carries many small gradients that
//! blur suppresses. Every generator is seeded; identical seeds give
//! bit-identical output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::convolve;
use crate::error::{Error, Result};
use crate::image::{gradients, GradientImage, Image};
use crate::kernel::{project_kernel, BlurKernel};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SceneStyle {
    /// Many overlapping shapes plus texture.
    StepRich,
    /// Few shapes, stronger texture.
    Textured,
    /// Almost no edges: a faint ramp and low-amplitude texture.
    NearFlat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    pub shapes: usize,
    /// Range of the intensity change across a shape boundary.
    pub contrast: (f64, f64),
    /// Standard deviation of the texture layer before smoothing.
    pub texture: f64,
}

impl SceneStyle {
    pub fn params(self) -> SceneParams {
        match self {
            SceneStyle::StepRich => SceneParams {
                shapes: 14,
                contrast: (0.08, 0.4),
                texture: 0.02,
            },
            SceneStyle::Textured => SceneParams {
                shapes: 5,
                contrast: (0.05, 0.3),
                texture: 0.035,
            },
            SceneStyle::NearFlat => SceneParams {
                shapes: 0,
                contrast: (0.0, 0.0),
                texture: 0.006,
            },
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Renders a sharp scene in `[0, 1]`.
pub fn scene<T: Real>(width: usize, height: usize, style: SceneStyle, seed: u64) -> Image<T> {
    scene_with(width, height, style.params(), seed)
}

pub fn scene_with<T: Real>(width: usize, height: usize, sp: SceneParams, seed: u64) -> Image<T> {
    let mut rng = rng(seed);
    let (w, h) = (width as f64, height as f64);
    let mut canvas = vec![0.0f64; width * height];
    let base = rng.random_range(0.3..0.7);
    let (gy, gx) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    for r in 0..height {
        for c in 0..width {
            canvas[r * width + c] = base + gy * (r as f64 / h - 0.5) + gx * (c as f64 / w - 0.5);
        }
    }

    for _ in 0..sp.shapes {
        let delta = rng.random_range(sp.contrast.0..=sp.contrast.1)
            * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let kind = rng.random_range(0..3u8);
        let (cy, cx) = (rng.random_range(0.0..h), rng.random_range(0.0..w));
        let size = rng.random_range(0.08..0.35) * w.min(h);
        match kind {
            0 => {
                let (hh, hw) = (size * rng.random_range(0.4..1.0), size * rng.random_range(0.4..1.0));
                for r in 0..height {
                    for c in 0..width {
                        if (r as f64 - cy).abs() < hh && (c as f64 - cx).abs() < hw {
                            canvas[r * width + c] += delta;
                        }
                    }
                }
            }
            1 => {
                for r in 0..height {
                    for c in 0..width {
                        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                        if dy * dy + dx * dx < size * size {
                            canvas[r * width + c] += delta;
                        }
                    }
                }
            }
            _ => {
                // half-plane clipped to a disc: a straight edge of arbitrary angle
                let ang: f64 = rng.random_range(0.0..std::f64::consts::PI);
                let (ny, nx) = (ang.sin(), ang.cos());
                let reach = 1.8 * size;
                for r in 0..height {
                    for c in 0..width {
                        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                        if dy * ny + dx * nx > 0.0 && dy * dy + dx * dx < reach * reach {
                            canvas[r * width + c] += delta;
                        }
                    }
                }
            }
        }
    }

    if sp.texture > 0.0 {
        let noise: Vec<f64> = (0..width * height)
            .map(|_| gaussian_sample(&mut rng) * sp.texture)
            .collect();
        // light 3x3 binomial smoothing keeps the texture fine-grained
        let weights = [1.0, 2.0, 1.0];
        for r in 0..height {
            for c in 0..width {
                let mut acc = 0.0;
                for (i, wy) in weights.iter().enumerate() {
                    for (j, wx) in weights.iter().enumerate() {
                        let rr = (r as isize + i as isize - 1).clamp(0, height as isize - 1) as usize;
                        let cc = (c as isize + j as isize - 1).clamp(0, width as isize - 1) as usize;
                        acc += wy * wx * noise[rr * width + cc];
                    }
                }
                canvas[r * width + c] += acc / 16.0 * 2.0;
            }
        }
    }

    Image::from_fn(width, height, |r, c| T::lit(canvas[r * width + c].clamp(0.0, 1.0)))
}

fn gaussian_sample(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// A sharp/blurred pair with the blur applied away from the borders.
#[derive(Debug, Clone)]
pub struct BlurredPair<T> {
    pub sharp: Image<T>,
    pub blurred: Image<T>,
    pub kernel: BlurKernel<T>,
}

impl<T: Real> BlurredPair<T> {
    pub fn blurred_gradients(&self) -> GradientImage<T> {
        gradients(&self.blurred)
    }

    pub fn sharp_gradients(&self) -> GradientImage<T> {
        gradients(&self.sharp)
    }
}

/// Renders a scene on a padded canvas, blurs it and crops both to
/// `width x height`, so the crop is free of padding artifacts.
pub fn blurred_pair<T: Real>(
    width: usize,
    height: usize,
    style: SceneStyle,
    kernel: &BlurKernel<T>,
    seed: u64,
) -> Result<BlurredPair<T>> {
    let pad = kernel.radius() + 2;
    let canvas: Image<T> = scene(width + 2 * pad, height + 2 * pad, style, seed);
    blur_and_crop(&canvas, kernel, pad, width, height)
}

pub fn blur_and_crop<T: Real>(
    canvas: &Image<T>,
    kernel: &BlurKernel<T>,
    pad: usize,
    width: usize,
    height: usize,
) -> Result<BlurredPair<T>> {
    let blurred = convolve(canvas, kernel)?;
    Ok(BlurredPair {
        sharp: canvas.crop(pad, pad, width, height)?,
        blurred: blurred.crop(pad, pad, width, height)?,
        kernel: kernel.clone(),
    })
}

/// Adds zero-mean Gaussian noise.
pub fn add_noise<T: Real>(img: &Image<T>, sigma: f64, seed: u64) -> Image<T> {
    let mut rng = rng(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| v + T::lit(gaussian_sample(&mut rng) * sigma))
        .collect();
    Image::new(img.width(), img.height(), data).expect("same shape")
}

/// Horizontal motion kernel with a triangular intensity profile.
pub fn linear_motion<T: Real>(len: usize) -> Result<BlurKernel<T>> {
    if len.is_multiple_of(2) {
        return Err(Error::Dimensions(format!("kernel length must be odd, got {len}")));
    }
    let c = (len / 2) as f64;
    let taps = (0..len)
        .map(|i| T::lit(c + 1.0 - (i as f64 - c).abs()))
        .collect();
    Ok(project_kernel(&BlurKernel::new(len, 1, taps)?))
}

/// Isotropic Gaussian on a `size x size` grid.
pub fn gaussian<T: Real>(size: usize, sigma: f64) -> Result<BlurKernel<T>> {
    let c = (size / 2) as f64;
    let taps = (0..size * size)
        .map(|i| {
            let (r, q) = ((i / size) as f64 - c, (i % size) as f64 - c);
            T::lit((-(r * r + q * q) / (2.0 * sigma * sigma)).exp())
        })
        .collect();
    Ok(project_kernel(&BlurKernel::new(size, size, taps)?))
}

/// Anti-aliased disc of the given radius (pixel-area coverage estimated on
/// a 16x16 sub-grid per tap). Radius 0 is the delta kernel.
pub fn disk<T: Real>(radius: f64) -> Result<BlurKernel<T>> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParam(format!("disk radius must be >= 0, got {radius}")));
    }
    if radius == 0.0 {
        return Ok(BlurKernel::delta(1, 1));
    }
    let half = (radius + 0.5).ceil() as usize;
    let size = 2 * half + 1;
    let sub = 16;
    let mut taps = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let mut inside = 0usize;
            for i in 0..sub {
                for j in 0..sub {
                    let y = r as f64 - half as f64 - 0.5 + (i as f64 + 0.5) / sub as f64;
                    let x = c as f64 - half as f64 - 0.5 + (j as f64 + 0.5) / sub as f64;
                    if x * x + y * y <= radius * radius {
                        inside += 1;
                    }
                }
            }
            taps.push(T::lit(inside as f64 / (sub * sub) as f64));
        }
    }
    Ok(project_kernel(&BlurKernel::new(size, size, taps)?))
}

/// Camera-shake-like kernel: a smooth random trajectory splatted into a
/// `size x size` grid with bilinear weights.
pub fn motion_path<T: Real>(size: usize, seed: u64) -> Result<BlurKernel<T>> {
    if size.is_multiple_of(2) {
        return Err(Error::Dimensions(format!("kernel size must be odd, got {size}")));
    }
    let mut rng = rng(seed);
    let steps = 12 * size;
    let extent = (size as f64 - 1.0) * 0.45;
    let mut pts = Vec::with_capacity(steps);
    let (mut y, mut x) = (0.0f64, 0.0f64);
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = 2.0 * extent / steps as f64 * 1.6;
    for _ in 0..steps {
        heading += gaussian_sample(&mut rng) * 0.12;
        y += speed * heading.sin();
        x += speed * heading.cos();
        pts.push((y, x));
    }
    // center on the mean and fit into the grid
    let (my, mx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), &(y, x)| (a + y, b + x));
    let (my, mx) = (my / steps as f64, mx / steps as f64);
    let reach = pts
        .iter()
        .map(|&(y, x)| (y - my).abs().max((x - mx).abs()))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let s = (extent / reach).min(1.0);
    let c = (size / 2) as f64;
    let mut taps = vec![0.0f64; size * size];
    for &(y, x) in &pts {
        let (fy, fx) = (c + (y - my) * s, c + (x - mx) * s);
        let (y0, x0) = (fy.floor(), fx.floor());
        let (ty, tx) = (fy - y0, fx - x0);
        for (oy, wy) in [(0usize, 1.0 - ty), (1, ty)] {
            for (ox, wx) in [(0usize, 1.0 - tx), (1, tx)] {
                let (r, q) = (y0 as usize + oy, x0 as usize + ox);
                if r < size && q < size {
                    taps[r * size + q] += wy * wx;
                }
            }
        }
    }
    Ok(project_kernel(&BlurKernel::new(
        size,
        size,
        taps.into_iter().map(T::lit).collect(),
    )?))
}

/// Lens PSF width applied by [`camera_shake`].
pub const SHAKE_OPTICS_SIGMA: f64 = 0.6;

/// [`motion_path`] blurred by a small Gaussian lens PSF. The trajectory
/// alone is an idealized one-pixel-wide curve; real shake kernels are the
/// trajectory seen through the optics.
pub fn camera_shake<T: Real>(size: usize, seed: u64) -> Result<BlurKernel<T>> {
    let path = motion_path::<f64>(size, seed)?;
    let s = SHAKE_OPTICS_SIGMA;
    let w: Vec<f64> = (-1..=1).map(|d: i32| (-(d * d) as f64 / (2.0 * s * s)).exp()).collect();
    let norm: f64 = w.iter().sum();
    let mut taps = vec![0.0f64; size * size];
    // separable 3x3 Gaussian with zero boundary
    for r in 0..size {
        for c in 0..size {
            let mut acc = 0.0;
            for (i, wy) in w.iter().enumerate() {
                for (j, wx) in w.iter().enumerate() {
                    let (rr, cc) = (r as isize + i as isize - 1, c as isize + j as isize - 1);
                    if rr >= 0 && cc >= 0 && (rr as usize) < size && (cc as usize) < size {
                        acc += wy * wx * path.get(rr as usize, cc as usize);
                    }
                }
            }
            taps[r * size + c] = acc / (norm * norm);
        }
    }
    Ok(project_kernel(&BlurKernel::new(size, size, taps.into_iter().map(T::lit).collect())?))
}

/// Noise level of the bundled set (a little over one grey level out of 255).
pub const BUNDLED_NOISE: f64 = 0.005;

/// Ten blurred test cases at 64x64: step-rich scenes blurred by a rotation
/// of motion, Gaussian and disc kernels, with mild sensor noise.
pub fn bundled_set<T: Real>() -> Result<Vec<(String, BlurredPair<T>)>> {
    bundled_set_with_noise(BUNDLED_NOISE)
}

pub fn bundled_set_with_noise<T: Real>(sigma: f64) -> Result<Vec<(String, BlurredPair<T>)>> {
    let mut out = Vec::with_capacity(10);
    for i in 0..10u64 {
        let (name, kernel) = match i % 5 {
            0 => ("motion7".to_string(), linear_motion::<T>(7)?),
            1 => (format!("path9-{i}"), motion_path::<T>(9, 100 + i)?),
            2 => ("gauss7".to_string(), gaussian::<T>(7, 1.2)?),
            3 => (format!("path7-{i}"), motion_path::<T>(7, 200 + i)?),
            _ => ("disk2".to_string(), disk::<T>(2.0)?),
        };
        let mut pair = blurred_pair(64, 64, SceneStyle::StepRich, &kernel, 1000 + i)?;
        if sigma > 0.0 {
            pair.blurred = add_noise(&pair.blurred, sigma, 5000 + i);
        }
        out.push((format!("img{i:02}-{name}"), pair));
    }
    Ok(out)
}

/// Image whose left half is blurred by one disc and right half by another.
///
/// Content is two-level: the shapes of a step-rich scene (no texture)
/// thresholded at the median, drawn with levels `{0.05, 0.45}` on the left and `{0.55, 0.95}`
/// on the right. The halves occupy disjoint intensity bands, so the region
/// boundary is also an edge of the scene. The right half is composited as
/// a foreground layer over the left one, as at a depth discontinuity.
#[derive(Debug, Clone)]
pub struct TwoRegionDefocus<T> {
    pub image: Image<T>,
    pub sharp: Image<T>,
    /// Columns `< split` carry `radii.0`, the rest `radii.1`.
    pub split: usize,
    pub radii: (f64, f64),
}

impl<T: Real> TwoRegionDefocus<T> {
    pub fn true_radius(&self, col: usize) -> f64 {
        if col < self.split {
            self.radii.0
        } else {
            self.radii.1
        }
    }
}

pub fn two_region_defocus<T: Real>(
    width: usize,
    height: usize,
    radii: (f64, f64),
    seed: u64,
) -> Result<TwoRegionDefocus<T>> {
    let (left, right) = (disk::<T>(radii.0)?, disk::<T>(radii.1)?);
    let pad = left.radius().max(right.radius()) + 2;
    let split = width / 2;
    let shapes = SceneParams {
        texture: 0.0,
        ..SceneStyle::StepRich.params()
    };
    let base: Image<f64> = scene_with(width + 2 * pad, height + 2 * pad, shapes, seed);
    let mut sorted = base.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let canvas = Image::from_fn(base.width(), base.height(), |r, c| {
        let high = if base.get(r, c) > median { 0.4 } else { 0.0 };
        let band = if c < split + pad { 0.05 } else { 0.55 };
        T::lit(band + high)
    });
    // Layered composite: the right half is a foreground layer whose blurred
    // alpha spills over the left background, as at an occlusion boundary.
    let alpha = Image::from_fn(canvas.width(), canvas.height(), |_, c| {
        if c < split + pad {
            T::zero()
        } else {
            T::one()
        }
    });
    let fg = convolve(&canvas.zip_map(&alpha, |v, a| v * a)?, &right)?;
    let cover = convolve(&alpha, &right)?;
    let bg = convolve(&canvas, &left)?;
    let image = Image::from_fn(canvas.width(), canvas.height(), |r, c| {
        fg.get(r, c) + (T::one() - cover.get(r, c)) * bg.get(r, c)
    });
    Ok(TwoRegionDefocus {
        image: image.crop(pad, pad, width, height)?,
        sharp: canvas.crop(pad, pad, width, height)?,
        split,
        radii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a: Image<f64> = scene(32, 24, SceneStyle::StepRich, 7);
        let b: Image<f64> = scene(32, 24, SceneStyle::StepRich, 7);
        assert_eq!(a, b);
        let c: Image<f64> = scene(32, 24, SceneStyle::StepRich, 8);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(motion_path::<f64>(9, 3).unwrap(), motion_path::<f64>(9, 3).unwrap());
    }

    #[test]
    fn kernels_are_normalized() {
        for k in [
            linear_motion::<f64>(7).unwrap(),
            gaussian::<f64>(9, 1.5).unwrap(),
            disk::<f64>(3.5).unwrap(),
            motion_path::<f64>(15, 1).unwrap(),
            camera_shake::<f64>(15, 1).unwrap(),
        ] {
            assert!(k.is_normalized(1e-12));
        }
        assert!(disk::<f64>(0.0).unwrap().is_delta());
        assert!(linear_motion::<f64>(6).is_err());
    }

    #[test]
    fn disk_is_symmetric_and_covers_area() {
        let k = disk::<f64>(4.0).unwrap();
        assert_eq!(k.width(), 11);
        for r in 0..11 {
            for c in 0..11 {
                assert!((k.get(r, c) - k.get(c, r)).abs() < 1e-15);
                assert!((k.get(r, c) - k.get(10 - r, c)).abs() < 1e-15);
            }
        }
        // interior taps are full, corners empty
        assert!(k.get(5, 5) > 0.0 && k.get(0, 0) == 0.0);
    }

    #[test]
    fn blurred_pair_matches_direct_convolution_inside() {
        let k = linear_motion::<f64>(5).unwrap();
        let pair = blurred_pair(20, 16, SceneStyle::StepRich, &k, 3).unwrap();
        let direct = convolve(&pair.sharp, &k).unwrap();
        for r in 0..16 {
            for c in 2..18 {
                assert!((direct.get(r, c) - pair.blurred.get(r, c)).abs() < 1e-12);
            }
        }
    }
}
