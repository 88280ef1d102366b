//! Naive MAP blind deconvolution: alternate the latent step and the kernel
//! step, at one scale or coarse to fine.
//!
//! Nothing beyond the energy itself steers the estimate away from the
//! no-blur solution; the kernel starts as a delta at the coarsest level.

use crate::conv::BoundaryPolicy;
use crate::energy::{evaluate_breakdown, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};
use crate::kernel::{
    nearest_odd, project_kernel, resample_kernel, solve_kernel_constrained, KernelConstraint, solve_kernel_unconstrained,
    BlurKernel,
};
use crate::latent::irls_latent;
use crate::prior::EnergyParams;
use crate::scalar::Real;

/// Default per-level scale factor.
pub const DEFAULT_RATIO: f64 = std::f64::consts::FRAC_1_SQRT_2;
pub const DEFAULT_ITERS_PER_LEVEL: usize = 10;
/// Smallest kernel extent (in taps, per non-trivial axis) at the coarsest level.
pub const MIN_KERNEL_TAPS: usize = 3;

/// Blurred gradients at several resolutions, coarsest first.
#[derive(Debug, Clone)]
pub struct Pyramid<T> {
    pub levels: Vec<GradientImage<T>>,
    pub ratio: f64,
}

impl<T: Real> Pyramid<T> {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn finest(&self) -> &GradientImage<T> {
        self.levels.last().expect("pyramid has at least one level")
    }

    /// Linear scale of level `i` relative to the finest level.
    pub fn scale(&self, i: usize) -> f64 {
        self.ratio.powi((self.levels.len() - 1 - i) as i32)
    }
}

/// Number of levels such that a kernel of extent `kernel_extent` still
/// spans at least `min_taps` at the coarsest one.
pub fn level_count(kernel_extent: usize, ratio: f64, min_taps: usize) -> usize {
    let mut n = 1;
    while kernel_extent as f64 * ratio.powi(n as i32) >= min_taps as f64 {
        n += 1;
    }
    n
}

/// Kernel dimensions at linear scale `s`: singleton axes stay singleton,
/// others are rounded to odd and kept at least `min_taps` wide.
pub fn scaled_kernel_size(size: (usize, usize), s: f64, min_taps: usize) -> (usize, usize) {
    let axis = |n: usize| {
        if n == 1 {
            1
        } else {
            nearest_odd(n as f64 * s).max(min_taps.min(n))
        }
    };
    (axis(size.0), axis(size.1))
}

fn binomial_blur<T: Real>(img: &Image<T>) -> Image<T> {
    let (w, h) = (img.width(), img.height());
    let q = T::lit(0.25);
    let half = T::lit(0.5);
    let horiz = Image::from_fn(w, h, |r, c| {
        let l = img.get(r, c.saturating_sub(1));
        let m = img.get(r, c);
        let rr = img.get(r, (c + 1).min(w - 1));
        q * l + half * m + q * rr
    });
    Image::from_fn(w, h, |r, c| {
        let u = horiz.get(r.saturating_sub(1), c);
        let m = horiz.get(r, c);
        let d = horiz.get((r + 1).min(h - 1), c);
        q * u + half * m + q * d
    })
}

/// Bilinear resampling of a channel onto a `width x height` grid with
/// pixel centers aligned (`x_src = (x_dst + 0.5) / s - 0.5`).
pub fn resample_channel<T: Real>(img: &Image<T>, width: usize, height: usize) -> Result<Image<T>> {
    let (sw, sh) = (img.width(), img.height());
    let (fx, fy) = (sw as f64 / width as f64, sh as f64 / height as f64);
    let data = (0..width * height)
        .map(|i| {
            let (r, c) = (i / width, i % width);
            let y = ((r as f64 + 0.5) * fy - 0.5).clamp(0.0, (sh - 1) as f64);
            let x = ((c as f64 + 0.5) * fx - 0.5).clamp(0.0, (sw - 1) as f64);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(sh - 1), (x0 + 1).min(sw - 1));
            let (ty, tx) = (T::lit(y - y0 as f64), T::lit(x - x0 as f64));
            let top = img.get(y0, x0) * (T::one() - tx) + img.get(y0, x1) * tx;
            let bot = img.get(y1, x0) * (T::one() - tx) + img.get(y1, x1) * tx;
            top * (T::one() - ty) + bot * ty
        })
        .collect();
    Image::new(width, height, data)
}

/// Downsamples gradient channels directly: binomial low-pass, bilinear
/// resampling, then multiplication by `1 / ratio` since each coarse pixel
/// difference spans `1 / ratio` fine pixels.
pub fn downsample_gradients<T: Real>(g: &GradientImage<T>, ratio: f64) -> Result<GradientImage<T>> {
    let w = ((g.width() as f64 * ratio).round() as usize).max(1);
    let h = ((g.height() as f64 * ratio).round() as usize).max(1);
    let gain = T::lit(1.0 / ratio);
    g.try_map_channels(|c| Ok(resample_channel(&binomial_blur(c), w, h)?.map(|v| v * gain)))
}

/// Builds `levels` pyramid levels, each `ratio` times the size of the next.
pub fn build_pyramid<T: Real>(b: &GradientImage<T>, ratio: f64, levels: usize) -> Result<Pyramid<T>> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidParam(format!("pyramid ratio must lie in (0, 1), got {ratio}")));
    }
    if levels == 0 {
        return Err(Error::InvalidParam("a pyramid needs at least one level".into()));
    }
    let mut out = vec![b.clone()];
    for _ in 1..levels {
        let next = downsample_gradients(out.last().unwrap(), ratio)?;
        out.push(next);
    }
    out.reverse();
    Ok(Pyramid { levels: out, ratio })
}

/// One alternation step as seen by the kernel update.
#[derive(Debug, Clone)]
pub struct TraceRecord<T> {
    pub level: usize,
    pub iteration: usize,
    /// `f(k, l)` with the fresh latent, before the kernel update.
    pub before_k_step: EnergyBreakdown<T>,
    /// `f(k', l)` with the same latent after the kernel update.
    pub after_k_step: EnergyBreakdown<T>,
    pub latent_converged: bool,
    pub kernel: BlurKernel<T>,
}

#[derive(Debug, Clone, Default)]
pub struct DeconvTrace<T> {
    pub records: Vec<TraceRecord<T>>,
}

impl<T: Real> DeconvTrace<T> {
    /// Largest relative increase across any kernel step (zero if none).
    pub fn worst_k_step_increase(&self) -> T {
        self.records.iter().fold(T::zero(), |acc, r| {
            let before = r.before_k_step.total;
            let rel = (r.after_k_step.total - before) / before.abs().max(T::min_positive_value());
            acc.max(rel)
        })
    }
}

#[derive(Debug, Clone)]
pub struct DeconvResult<T> {
    pub kernel: BlurKernel<T>,
    /// Latent gradients for the final kernel.
    pub latent: GradientImage<T>,
    /// `f^IRLS` of the final kernel on the finest level.
    pub energy: EnergyBreakdown<T>,
    pub converged: bool,
    pub trace: DeconvTrace<T>,
}

/// Kernel step: minimizes `||k*l - b||^2 + lambda_k ||k||^2` exactly over
/// kernels with non-negative taps. The clamped least-squares solution and
/// the current kernel both seed the solve; the current kernel is feasible,
/// so the step never raises `f(k, l)`.
///
/// The sum is left free during the alternation: a shrunken latent is
/// compensated by kernel mass, as in the unconstrained step. Kernels are
/// normalized on output.
fn kernel_step<T: Real>(
    k: &BlurKernel<T>,
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<BlurKernel<T>> {
    let solve = solve_kernel_unconstrained(l, b, k.width(), k.height(), params.lambda_k, bp)?;
    let sys = &solve.system;
    let clamped: Vec<T> = solve.raw.taps().iter().map(|&v| v.max(T::zero())).collect();
    let f_old = sys.objective_shifted(k.taps());
    let seed = if sys.objective_shifted(&clamped) < f_old {
        &clamped[..]
    } else {
        k.taps()
    };
    let taps = solve_kernel_constrained(sys, seed, KernelConstraint::NonNegative, KSTEP_MAX_ITERS);
    if taps.iter().any(|&v| v > T::zero()) && sys.objective_shifted(&taps) <= f_old {
        BlurKernel::new(k.width(), k.height(), taps)
    } else {
        Ok(k.clone())
    }
}

const KSTEP_MAX_ITERS: usize = 3000;

fn check_inputs<T: Real>(b: &GradientImage<T>, size: (usize, usize), iters: usize) -> Result<()> {
    if size.0.is_multiple_of(2) || size.1.is_multiple_of(2) {
        return Err(Error::Dimensions(format!(
            "kernel size must be odd, got {}x{}",
            size.0, size.1
        )));
    }
    if iters == 0 {
        return Err(Error::InvalidParam("at least one iteration is required".into()));
    }
    if b.is_zero() {
        return Err(Error::Degenerate(
            "blurred gradients are all zero; there is nothing to estimate".into(),
        ));
    }
    Ok(())
}

fn alternate<T: Real>(
    b: &GradientImage<T>,
    mut k: BlurKernel<T>,
    params: &EnergyParams<T>,
    iters: usize,
    level: usize,
    trace: &mut DeconvTrace<T>,
) -> Result<BlurKernel<T>> {
    let bp = BoundaryPolicy::for_kernel(&k);
    for iteration in 0..iters {
        // every l-step starts from the blurry gradients, so the recorded
        // energies are exactly f^IRLS
        let est = irls_latent(&k, b, params, &bp)?;
        if est.latent.is_zero() {
            // the prior flattened everything; the kernel step has no signal
            break;
        }
        let before = evaluate_breakdown(&k, &est.latent, b, params, &bp)?;
        let next = kernel_step(&k, &est.latent, b, params, &bp)?;
        let after = evaluate_breakdown(&next, &est.latent, b, params, &bp)?;
        trace.records.push(TraceRecord {
            level,
            iteration,
            before_k_step: before,
            after_k_step: after,
            latent_converged: est.converged,
            kernel: next.clone(),
        });
        k = next;
    }
    Ok(k)
}

fn finish<T: Real>(
    b: &GradientImage<T>,
    kernel: BlurKernel<T>,
    params: &EnergyParams<T>,
    trace: DeconvTrace<T>,
) -> Result<DeconvResult<T>> {
    let bp = BoundaryPolicy::for_kernel(&kernel);
    let est = irls_latent(&kernel, b, params, &bp)?;
    let energy = evaluate_breakdown(&kernel, &est.latent, b, params, &bp)?;
    Ok(DeconvResult {
        kernel,
        latent: est.latent,
        energy,
        converged: est.converged,
        trace,
    })
}

/// Alternating minimization at a single scale from `k = delta`.
///
/// `size` is `(width, height)` of the kernel in taps.
pub fn blind_deconv_single_scale<T: Real>(
    b: &GradientImage<T>,
    size: (usize, usize),
    params: &EnergyParams<T>,
    iters: usize,
) -> Result<DeconvResult<T>> {
    params.validate()?;
    check_inputs(b, size, iters)?;
    let mut trace = DeconvTrace::default();
    let k = alternate(b, BlurKernel::delta(size.0, size.1), params, iters, 0, &mut trace)?;
    finish(b, project_kernel(&k), params, trace)
}

/// Alternation at a single scale from a given initial kernel.
pub fn blind_deconv_from_kernel<T: Real>(
    b: &GradientImage<T>,
    init: &BlurKernel<T>,
    params: &EnergyParams<T>,
    iters: usize,
) -> Result<DeconvResult<T>> {
    params.validate()?;
    check_inputs(b, (init.width(), init.height()), iters)?;
    let mut trace = DeconvTrace::default();
    let k = alternate(b, init.clone(), params, iters, 0, &mut trace)?;
    finish(b, project_kernel(&k), params, trace)
}

/// Coarse-to-fine alternation. The number of levels is chosen so that the
/// coarsest kernel keeps at least [`MIN_KERNEL_TAPS`] taps along its longer
/// axis; the kernel is upsampled between levels.
pub fn blind_deconv_multiscale<T: Real>(
    b: &GradientImage<T>,
    size: (usize, usize),
    params: &EnergyParams<T>,
    iters_per_level: usize,
    ratio: f64,
) -> Result<DeconvResult<T>> {
    params.validate()?;
    check_inputs(b, size, iters_per_level)?;
    let levels = level_count(size.0.max(size.1), ratio, MIN_KERNEL_TAPS);
    let pyr = build_pyramid(b, ratio, levels)?;
    let mut trace = DeconvTrace::default();
    let mut k: Option<BlurKernel<T>> = None;
    for (i, level) in pyr.levels.iter().enumerate() {
        let (w, h) = if i + 1 == pyr.len() {
            size
        } else {
            scaled_kernel_size(size, pyr.scale(i), MIN_KERNEL_TAPS)
        };
        let init = match k {
            None => BlurKernel::delta(w, h),
            Some(prev) => resample_kernel(&prev, w, h, T::lit(1.0 / ratio))?,
        };
        k = Some(alternate(level, init, params, iters_per_level, i, &mut trace)?);
    }
    finish(b, project_kernel(&k.expect("at least one level")), params, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::gradients;
    use crate::kernel::kernel_similarity;
    use crate::synthetic::{blurred_pair, linear_motion, SceneStyle};

    #[test]
    fn level_arithmetic() {
        assert_eq!(level_count(15, DEFAULT_RATIO, 3), 5);
        assert_eq!(level_count(3, DEFAULT_RATIO, 3), 1);
        assert_eq!(level_count(1, 0.5, 3), 1);
        assert_eq!(scaled_kernel_size((15, 1), 0.5, 3), (7, 1));
        assert_eq!(scaled_kernel_size((15, 15), 0.3, 3), (5, 5));
        assert_eq!(scaled_kernel_size((15, 15), 0.1, 3), (3, 3));
    }

    #[test]
    fn pyramid_shapes() {
        let img: Image<f64> = Image::from_fn(64, 64, |r, c| ((r * 7 + c * 3) % 11) as f64 / 11.0);
        let g = gradients(&img);
        let p = build_pyramid(&g, 0.5, 2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!((p.levels[0].width(), p.levels[0].height()), (32, 32));
        assert_eq!(p.finest(), &g);
        let z = GradientImage::<f64>::zeros(40, 30);
        let pz = build_pyramid(&z, DEFAULT_RATIO, 3).unwrap();
        assert!(pz.levels.iter().all(|l| l.is_zero()));
        assert!(build_pyramid(&g, 1.0, 2).is_err());
    }

    #[test]
    fn downsampling_a_ramp_preserves_slope() {
        // intensity ramp with slope 0.01 per fine pixel: 0.02 per coarse pixel
        let img: Image<f64> = Image::from_fn(40, 40, |_, c| 0.01 * c as f64);
        let g = gradients(&img);
        let d = downsample_gradients(&g, 0.5).unwrap();
        for r in 2..18 {
            for c in 2..17 {
                assert!((d.gx().get(r, c) - 0.02).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let p = EnergyParams::<f64>::default();
        let z = GradientImage::<f64>::zeros(16, 16);
        assert!(matches!(
            blind_deconv_single_scale(&z, (3, 3), &p, 2),
            Err(Error::Degenerate(_))
        ));
        let g = gradients(&Image::from_fn(16, 16, |r, c| ((r + 2 * c) % 5) as f64));
        assert!(blind_deconv_single_scale(&g, (4, 3), &p, 2).is_err());
        assert!(blind_deconv_single_scale(&g, (3, 3), &p, 0).is_err());
    }

    #[test]
    fn single_iteration_does_not_raise_energy() {
        let k = linear_motion::<f64>(5).unwrap();
        let pair = blurred_pair(40, 40, SceneStyle::StepRich, &k, 11).unwrap();
        let b = pair.blurred_gradients();
        let p = EnergyParams::default();
        let r = blind_deconv_single_scale(&b, (5, 1), &p, 1).unwrap();
        let rec = &r.trace.records[0];
        assert!(rec.after_k_step.total <= rec.before_k_step.total * (1.0 + 1e-12));
        assert!(r.kernel.is_normalized(1e-12));
        assert!(kernel_similarity(&r.kernel, &k) > 0.0);
    }

    #[test]
    fn one_level_pyramid_matches_single_scale() {
        let k = linear_motion::<f64>(3).unwrap();
        let pair = blurred_pair(32, 32, SceneStyle::StepRich, &k, 5).unwrap();
        let b = pair.blurred_gradients();
        let p = EnergyParams::default();
        // a 3-tap kernel never gets a second level
        let single = blind_deconv_single_scale(&b, (3, 1), &p, 3).unwrap();
        let multi = blind_deconv_multiscale(&b, (3, 1), &p, 3, DEFAULT_RATIO).unwrap();
        assert_eq!(single.kernel, multi.kernel);
        assert_eq!(single.energy, multi.energy);
    }
}
