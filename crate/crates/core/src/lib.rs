//! Gradient-domain MAP blind deconvolution.
//!
//! The latent image is represented by its gradients and minimized out of the
//! joint energy, leaving an energy `f(k)` of the blur kernel alone. For the
//! delta kernel that minimization separates per pixel and is solved exactly,
//! which gives a trustworthy reference for judging whether the energy
//! prefers a sharp explanation over the blurry one.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod apps;
pub mod cg;
pub mod conv;
pub mod deconv;
pub mod energy;
pub mod error;
mod fft;
pub mod image;
pub mod kernel;
pub mod latent;
pub mod poisson;
pub mod prior;
pub mod scalar;
pub mod synthetic;

pub use conv::{convolve, correlate, data_term, BoundaryPolicy};
pub use energy::{
    compare_with_noblur, energy, energy_noblur_exact, energy_ratio, prior_ratio, EnergyBreakdown,
    EnergyEvaluation, NoBlurComparison,
};
pub use error::{Error, Result};
pub use image::{gradients, GradientImage, Image};
pub use kernel::{
    estimate_kernel, kernel_similarity, project_kernel, resize_kernel, BlurKernel,
};
pub use latent::{exact_noblur_latent, irls_latent, scalar_shrink, LatentEstimate};
pub use poisson::poisson_reconstruct;
pub use prior::{kernel_prior, phi, sparsity_prior, EnergyParams};
pub use scalar::Real;

pub type Image64 = Image<f64>;
pub type Image32 = Image<f32>;
pub type GradientImage64 = GradientImage<f64>;
pub type GradientImage32 = GradientImage<f32>;
pub type BlurKernel64 = BlurKernel<f64>;
pub type BlurKernel32 = BlurKernel<f32>;
pub type EnergyParams64 = EnergyParams<f64>;
pub type EnergyParams32 = EnergyParams<f32>;
pub type EnergyBreakdown64 = EnergyBreakdown<f64>;
