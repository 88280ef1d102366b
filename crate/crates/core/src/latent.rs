//! The latent step: sparse gradient estimation for a fixed kernel.
//!
//! [`irls_latent`] handles arbitrary kernels approximately. For the delta
//! kernel the problem separates per pixel and [`exact_noblur_latent`] solves
//! it to grid resolution by exhaustive search.

use crate::cg::conjugate_gradient;
use crate::conv::{BlurOperator, BoundaryPolicy};
use crate::error::Result;
use crate::image::{GradientImage, Image};
use crate::kernel::BlurKernel;
use crate::prior::{EnergyParams, IrlsWeighting, Penalty};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct LatentEstimate<T> {
    pub latent: GradientImage<T>,
    /// Every inner conjugate-gradient solve reached `cg_tol`.
    pub converged: bool,
    pub cg_iterations: usize,
    /// `f_l(latent; k)` summed over both channels.
    pub objective: T,
}

/// Quadratic weight for the previous iterate `l`. Values below `tau` get
/// the exact quadratic-branch coefficient `tau^(alpha-2)` under either rule.
#[inline]
fn irls_weight<T: Real>(l: T, pen: &Penalty<T>, rule: IrlsWeighting) -> T {
    let a = l.abs();
    if a < pen.tau() {
        return pen.quad_coeff();
    }
    let w = a.powf(pen.alpha() - T::lit(2.0));
    match rule {
        IrlsWeighting::ValueMatched => w,
        IrlsWeighting::Majorizing => T::lit(0.5) * pen.alpha() * w,
    }
}

fn channel_objective<T: Real>(
    op: &BlurOperator<T>,
    l: &[T],
    b: &[T],
    lambda: T,
    pen: &Penalty<T>,
    scratch: &mut [T],
) -> T {
    let data = op.residual_energy(l, b, scratch);
    let prior = l.iter().fold(T::zero(), |acc, &v| acc + pen.eval(v));
    data + lambda * prior
}

struct ChannelSolve<T> {
    latent: Vec<T>,
    objective: T,
    converged: bool,
    cg_iterations: usize,
}

/// Diagonal of `A^T A` for the cropped blur operator `A`: the adjoint of
/// the squared-tap operator applied to the all-ones interior.
fn normal_diagonal<T: Real>(k: &BlurKernel<T>, w: usize, h: usize, bp: &BoundaryPolicy) -> Result<Vec<T>> {
    let sq = BlurKernel::new(k.width(), k.height(), k.taps().iter().map(|&v| v * v).collect())?;
    let op = BlurOperator::new(&sq, w, h, bp)?;
    let reg = op.region();
    let ones: Vec<T> = (0..w * h)
        .map(|i| if reg.contains(i / w, i % w) { T::one() } else { T::zero() })
        .collect();
    let mut out = vec![T::zero(); w * h];
    op.adjoint(&ones, &mut out);
    Ok(out)
}

fn irls_channel<T: Real>(
    op: &BlurOperator<T>,
    diag: &[T],
    b: &[T],
    params: &EnergyParams<T>,
) -> ChannelSolve<T> {
    let n = b.len();
    let pen = Penalty::new(params);
    let lambda = params.lambda_l;
    let mut scratch = vec![T::zero(); n];
    let mut atb = vec![T::zero(); n];
    op.adjoint(b, &mut atb);

    let mut l = b.to_vec();
    let mut best = l.clone();
    let mut best_obj = channel_objective(op, &l, b, lambda, &pen, &mut scratch);
    let mut converged = true;
    let mut cg_iterations = 0;
    let mut weights = vec![T::zero(); n];
    let mut tmp = vec![T::zero(); n];
    let mut inv_diag = vec![T::zero(); n];

    for _ in 0..params.irls_iters {
        for (w, &v) in weights.iter_mut().zip(&l) {
            *w = lambda * irls_weight(v, &pen, params.weighting);
        }
        for ((d, &a), &w) in inv_diag.iter_mut().zip(diag).zip(&weights) {
            let s = a + w;
            *d = if s > T::zero() { s.recip() } else { T::one() };
        }
        let report = conjugate_gradient(
            |x: &[T], out: &mut [T]| {
                op.forward(x, &mut tmp);
                op.adjoint(&tmp, out);
                for ((o, &w), &xv) in out.iter_mut().zip(&weights).zip(x) {
                    *o = *o + w * xv;
                }
            },
            &atb,
            &mut l,
            params.cg_tol,
            params.cg_max_iters,
            Some(&inv_diag),
        );
        converged &= report.converged;
        cg_iterations += report.iterations;
        let obj = channel_objective(op, &l, b, lambda, &pen, &mut scratch);
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&l);
        }
    }

    ChannelSolve {
        latent: best,
        objective: best_obj,
        converged,
        cg_iterations,
    }
}

/// Approximate minimizer of `||k*l - b||^2 + lambda_l rho_l(l)` by iteratively
/// reweighted least squares, started from `l = b`.
///
/// The channels are solved independently. The returned iterate is the best
/// one seen (the initializer included), so the objective never exceeds that
/// of `l = b`.
pub fn irls_latent<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<LatentEstimate<T>> {
    params.validate()?;
    let (w, h) = (b.width(), b.height());
    let op = BlurOperator::new(k, w, h, bp)?;
    let diag = normal_diagonal(k, w, h, bp)?;
    let sx = irls_channel(&op, &diag, b.gx().data(), params);
    let sy = irls_channel(&op, &diag, b.gy().data(), params);
    Ok(LatentEstimate {
        objective: sx.objective + sy.objective,
        converged: sx.converged && sy.converged,
        cg_iterations: sx.cg_iterations + sy.cg_iterations,
        latent: GradientImage::new(Image::new(w, h, sx.latent)?, Image::new(w, h, sy.latent)?)?,
    })
}

/// `f_l(l; k) = ||k*l - b||^2 + lambda_l rho_l(l)` on the interior crop.
pub fn latent_objective<T: Real>(
    l: &GradientImage<T>,
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<T> {
    l.check_same_shape(b)?;
    let op = BlurOperator::new(k, b.width(), b.height(), bp)?;
    let pen = Penalty::new(params);
    let mut scratch = vec![T::zero(); b.width() * b.height()];
    let ox = channel_objective(&op, l.gx().data(), b.gx().data(), params.lambda_l, &pen, &mut scratch);
    let oy = channel_objective(&op, l.gy().data(), b.gy().data(), params.lambda_l, &pen, &mut scratch);
    Ok(ox + oy)
}

/// Per-pixel minimizer of `|l - b|^2 + lambda_l phi(l)`.
///
/// Exhaustive search over `noblur_grid` samples of `[-R, R]`,
/// `R = max(1, 2|b|)`, then a parabolic refinement around the best sample.
/// The closed-form minimizer of the quadratic branch is also considered.
/// Samples outside `[0, b]` (extended by one grid step) are skipped: moving
/// such a point toward the interval lowers both terms, so they cannot win.
pub fn scalar_shrink<T: Real>(b: T, params: &EnergyParams<T>) -> T {
    shrink_with(b, params.lambda_l, params.noblur_grid, &Penalty::new(params))
}

fn shrink_with<T: Real>(b: T, lambda: T, samples: usize, pen: &Penalty<T>) -> T {
    if lambda == T::zero() || b == T::zero() {
        return b;
    }
    let a = b.abs();
    let g = |x: T| (x - a) * (x - a) + lambda * pen.eval(x);

    let radius = T::one().max(T::lit(2.0) * a);
    let step = T::lit(2.0) * radius / T::count(samples - 1);
    let at = |j: usize| -radius + step * T::count(j);
    let lo = ((radius / step).floor().to_usize().unwrap_or(0)).saturating_sub(1);
    let hi = (((a + radius) / step).ceil().to_usize().unwrap_or(samples - 1) + 1).min(samples - 1);

    let mut best_j = lo;
    let mut best_g = g(at(lo));
    let mut vals = Vec::with_capacity(hi - lo + 1);
    vals.push(best_g);
    for j in lo + 1..=hi {
        let v = g(at(j));
        vals.push(v);
        if v < best_g {
            best_g = v;
            best_j = j;
        }
    }
    let mut best_x = at(best_j);

    if best_j > lo && best_j < hi {
        let (gm, g0, gp) = (vals[best_j - lo - 1], vals[best_j - lo], vals[best_j - lo + 1]);
        let curv = gm - T::lit(2.0) * g0 + gp;
        if curv > T::zero() {
            let x = best_x + step * T::lit(0.5) * (gm - gp) / curv;
            let v = g(x);
            if v < best_g {
                best_g = v;
                best_x = x;
            }
        }
    }

    let xq = a / (T::one() + lambda * pen.quad_coeff());
    if xq < pen.tau() {
        let v = g(xq);
        if v < best_g {
            best_x = xq;
        }
    }

    if b < T::zero() {
        -best_x
    } else {
        best_x
    }
}

/// Exact latent gradients for the delta kernel.
///
/// Inside the interior each pixel is [`scalar_shrink`] of `b`. Outside it
/// there is no data term, so the minimizer is zero.
pub fn exact_noblur_latent<T: Real>(
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<GradientImage<T>> {
    params.validate()?;
    let reg = bp.interior(b.width(), b.height())?;
    let pen = Penalty::new(params);
    b.try_map_channels(|ch| {
        Ok(Image::from_fn(ch.width(), ch.height(), |r, c| {
            if reg.contains(r, c) {
                shrink_with(ch.get(r, c), params.lambda_l, params.noblur_grid, &pen)
            } else {
                T::zero()
            }
        }))
    })
}
