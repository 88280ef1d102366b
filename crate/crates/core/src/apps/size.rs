use crate::conv::BoundaryPolicy;
use crate::deconv::{blind_deconv_multiscale, DEFAULT_ITERS_PER_LEVEL, DEFAULT_RATIO};
use crate::energy::{energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::image::GradientImage;
use crate::kernel::BlurKernel;
use crate::prior::EnergyParams;
use crate::scalar::Real;

/// Blind deconvolution settings used for every candidate size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeSettings {
    pub iters_per_level: usize,
    pub ratio: f64,
}

impl Default for SizeSettings {
    fn default() -> Self {
        Self {
            iters_per_level: DEFAULT_ITERS_PER_LEVEL,
            ratio: DEFAULT_RATIO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SizeCandidate<T> {
    pub size: usize,
    pub kernel: BlurKernel<T>,
    /// `f^IRLS` on the interior shared by all candidates.
    pub energy: EnergyBreakdown<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeFailure {
    pub size: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SizeSelection<T> {
    pub best: usize,
    /// Candidates in increasing size.
    pub candidates: Vec<SizeCandidate<T>>,
    pub failures: Vec<SizeFailure>,
}

impl<T: Real> SizeSelection<T> {
    pub fn best_candidate(&self) -> &SizeCandidate<T> {
        self.candidates
            .iter()
            .find(|c| c.size == self.best)
            .expect("best is a candidate")
    }
}

/// Estimates a square kernel of every size and keeps the one with the
/// lowest energy. Ties go to the smaller size.
pub fn select_kernel_size<T: Real>(
    b: &GradientImage<T>,
    sizes: &[usize],
    params: &EnergyParams<T>,
    settings: SizeSettings,
) -> Result<SizeSelection<T>> {
    if sizes.is_empty() {
        return Err(Error::Empty("kernel sizes"));
    }
    if let Some(&bad) = sizes.iter().find(|&&s| s % 2 == 0) {
        return Err(Error::Dimensions(format!("kernel sizes must be odd, got {bad}")));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let bp = BoundaryPolicy::new(sizes[sizes.len() - 1] / 2);

    let mut candidates = Vec::new();
    let mut failures = Vec::new();
    for &size in &sizes {
        let run = || -> Result<SizeCandidate<T>> {
            let kernel = if size == 1 {
                BlurKernel::delta(1, 1)
            } else {
                blind_deconv_multiscale(b, (size, size), params, settings.iters_per_level, settings.ratio)?
                    .kernel
            };
            let energy = energy(&kernel, b, params, &bp)?.breakdown;
            Ok(SizeCandidate { size, kernel, energy })
        };
        match run() {
            Ok(c) => candidates.push(c),
            Err(e) => failures.push(SizeFailure {
                size,
                message: e.to_string(),
            }),
        }
    }
    let best = candidates
        .iter()
        .fold(None::<&SizeCandidate<T>>, |acc, c| match acc {
            Some(a) if a.energy.total <= c.energy.total => Some(a),
            _ => Some(c),
        })
        .ok_or_else(|| Error::Solver(format!("every kernel size failed: {failures:?}")))?
        .size;
    Ok(SizeSelection {
        best,
        candidates,
        failures,
    })
}
