//! The kernel-only energy `f(k)` obtained by minimizing the latent out.

use crate::conv::{data_term, BoundaryPolicy};
use crate::error::Result;
use crate::image::GradientImage;
use crate::kernel::BlurKernel;
use crate::latent::{exact_noblur_latent, irls_latent};
use crate::prior::{kernel_prior, sparsity_prior, EnergyParams};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub total: T,
    pub data: T,
    pub sparsity: T,
    pub kernel_prior: T,
}

impl<T: Real> EnergyBreakdown<T> {
    pub fn compose(data: T, sparsity: T, kernel_prior: T, params: &EnergyParams<T>) -> Self {
        Self {
            total: data + params.lambda_l * sparsity + params.lambda_k * kernel_prior,
            data,
            sparsity,
            kernel_prior,
        }
    }

    /// Relative gap between `total` and its recomposition from the parts.
    pub fn recomposition_error(&self, params: &EnergyParams<T>) -> T {
        let sum = self.data + params.lambda_l * self.sparsity + params.lambda_k * self.kernel_prior;
        (self.total - sum).abs() / sum.abs().max(T::min_positive_value())
    }
}

/// Energy at a kernel together with the latent estimate that produced it.
#[derive(Debug, Clone)]
pub struct EnergyEvaluation<T> {
    pub breakdown: EnergyBreakdown<T>,
    pub latent: GradientImage<T>,
    pub converged: bool,
}

/// Joint energy `f(k, l)` for a given latent.
pub fn evaluate_breakdown<T: Real>(
    k: &BlurKernel<T>,
    l: &GradientImage<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<EnergyBreakdown<T>> {
    let data = data_term(k, l, b, bp)?;
    Ok(EnergyBreakdown::compose(
        data,
        sparsity_prior(l, params),
        kernel_prior(k),
        params,
    ))
}

/// `f^IRLS(k)`: the latent is estimated by IRLS, then the energy evaluated.
pub fn energy<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<EnergyEvaluation<T>> {
    let est = irls_latent(k, b, params, bp)?;
    let breakdown = evaluate_breakdown(k, &est.latent, b, params, bp)?;
    Ok(EnergyEvaluation {
        breakdown,
        latent: est.latent,
        converged: est.converged,
    })
}

/// `f^opt(delta)`: exact energy of the no-blur solution.
pub fn energy_noblur_exact<T: Real>(
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
) -> Result<EnergyEvaluation<T>> {
    let latent = exact_noblur_latent(b, params, bp)?;
    let delta = BlurKernel::delta(1, 1);
    let breakdown = evaluate_breakdown(&delta, &latent, b, params, bp)?;
    Ok(EnergyEvaluation {
        breakdown,
        latent,
        converged: true,
    })
}

/// A kernel compared against the no-blur solution on a common interior.
#[derive(Debug, Clone)]
pub struct NoBlurComparison<T> {
    pub kernel: EnergyEvaluation<T>,
    pub delta_opt: EnergyEvaluation<T>,
    /// `f^IRLS(delta)`, only computed on request.
    pub delta_irls: Option<EnergyEvaluation<T>>,
    pub policy: BoundaryPolicy,
}

impl<T: Real> NoBlurComparison<T> {
    /// `f^IRLS(k) / f^opt(delta)`.
    pub fn energy_ratio(&self) -> T {
        self.kernel.breakdown.total / self.delta_opt.breakdown.total
    }

    /// `rho_l(l_k) / rho_l(l_delta^opt)`.
    pub fn prior_ratio(&self) -> T {
        self.kernel.breakdown.sparsity / self.delta_opt.breakdown.sparsity
    }
}

/// Evaluates `k` and the exact no-blur solution with the margin of `k`
/// (the larger of the two kernels).
pub fn compare_with_noblur<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    with_delta_irls: bool,
) -> Result<NoBlurComparison<T>> {
    let bp = BoundaryPolicy::for_kernel(k);
    compare_with_noblur_using(k, b, params, &bp, with_delta_irls)
}

pub fn compare_with_noblur_using<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
    bp: &BoundaryPolicy,
    with_delta_irls: bool,
) -> Result<NoBlurComparison<T>> {
    let kernel = energy(k, b, params, bp)?;
    let delta_opt = energy_noblur_exact(b, params, bp)?;
    let delta_irls = if with_delta_irls {
        Some(energy(&BlurKernel::delta(1, 1), b, params, bp)?)
    } else {
        None
    };
    Ok(NoBlurComparison {
        kernel,
        delta_opt,
        delta_irls,
        policy: *bp,
    })
}

/// `f^IRLS(k) / f^opt(delta)`; below one the sharp explanation is favored.
pub fn energy_ratio<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
) -> Result<T> {
    Ok(compare_with_noblur(k, b, params, false)?.energy_ratio())
}

/// `rho_l(l_k^IRLS) / rho_l(l_delta^opt)`.
pub fn prior_ratio<T: Real>(
    k: &BlurKernel<T>,
    b: &GradientImage<T>,
    params: &EnergyParams<T>,
) -> Result<T> {
    Ok(compare_with_noblur(k, b, params, false)?.prior_ratio())
}
