use crate::conv::BoundaryPolicy;
use crate::energy::{energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::image::{GradientImage, Image};
use crate::kernel::{project_kernel, BlurKernel};
use crate::prior::EnergyParams;
use crate::scalar::Real;

/// Converts an intensity patch into a kernel: the patch minimum is taken
/// as background and removed, then the result is clamped and normalized.
/// Returns `None` when nothing is left above the background.
pub fn patch_to_kernel<T: Real>(patch: &Image<T>) -> Result<Option<BlurKernel<T>>> {
    if patch.width().is_multiple_of(2) || patch.height().is_multiple_of(2) {
        return Err(Error::Dimensions(format!(
            "light-streak patch must have odd sides, got {}x{}",
            patch.width(),
            patch.height()
        )));
    }
    let floor = patch.min_value();
    let lifted = patch.map(|v| (v - floor).max(T::zero()));
    if !(lifted.sum() > T::zero()) {
        return Ok(None);
    }
    Ok(Some(project_kernel(&BlurKernel::from_image(&lifted)?)))
}

#[derive(Debug, Clone)]
pub struct RankedPatch<T> {
    /// Index into the input patch list.
    pub id: usize,
    pub kernel: BlurKernel<T>,
    pub energy: EnergyBreakdown<T>,
}

#[derive(Debug, Clone)]
pub struct StreakRanking<T> {
    /// Ascending energy; equal energies keep input order.
    pub ranked: Vec<RankedPatch<T>>,
    /// Patches with no mass above their background.
    pub excluded: Vec<usize>,
}

/// Ranks candidate light-streak patches by the energy of the kernel each
/// one implies. All candidates share the interior of the largest patch.
pub fn rank_light_streak_patches<T: Real>(
    b: &GradientImage<T>,
    patches: &[Image<T>],
    params: &EnergyParams<T>,
) -> Result<StreakRanking<T>> {
    if patches.is_empty() {
        return Err(Error::Empty("light-streak patches"));
    }
    let mut kernels = Vec::new();
    let mut excluded = Vec::new();
    for (id, p) in patches.iter().enumerate() {
        match patch_to_kernel(p)? {
            Some(k) => kernels.push((id, k)),
            None => excluded.push(id),
        }
    }
    let bp = BoundaryPolicy::for_kernels(kernels.iter().map(|(_, k)| k));
    let mut ranked = kernels
        .into_iter()
        .map(|(id, kernel)| {
            let energy = energy(&kernel, b, params, &bp)?.breakdown;
            Ok(RankedPatch { id, kernel, energy })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.energy.total.partial_cmp(&b.energy.total).unwrap_or(std::cmp::Ordering::Equal));
    Ok(StreakRanking { ranked, excluded })
}
