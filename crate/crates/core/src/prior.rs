//! The two-branch sparsity penalty and the latent/kernel priors.

use crate::error::{Error, Result};
use crate::image::GradientImage;
use crate::kernel::BlurKernel;
use crate::scalar::Real;

/// Hyperparameters of the energy and controls for its solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams<T> {
    /// Sparseness exponent of the penalty, `0 < alpha <= 2`.
    pub alpha: T,
    /// Below this magnitude the penalty is quadratic.
    pub tau: T,
    /// Weight of the sparsity prior on the latent gradients.
    pub lambda_l: T,
    /// Weight of the squared-norm kernel prior.
    pub lambda_k: T,
    pub irls_iters: usize,
    /// Relative residual at which inner conjugate-gradient solves stop.
    pub cg_tol: T,
    pub cg_max_iters: usize,
    /// Number of samples in the exhaustive per-pixel search of the no-blur solver.
    pub noblur_grid: usize,
    pub weighting: IrlsWeighting,
}

/// How IRLS turns the previous iterate into quadratic weights above `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IrlsWeighting {
    /// `|l|^(alpha-2)`: the weighted square equals the penalty at the
    /// previous iterate.
    #[default]
    ValueMatched,
    /// `(alpha/2) |l|^(alpha-2)`: the tangent in `l^2`, so every surrogate
    /// upper-bounds the penalty and the objective never increases.
    Majorizing,
}

impl<T: Real> Default for EnergyParams<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.1),
            tau: T::lit(0.01),
            lambda_l: T::lit(0.00064),
            lambda_k: T::lit(0.001),
            irls_iters: 8,
            cg_tol: T::lit(1e-5),
            cg_max_iters: 100,
            noblur_grid: 2001,
            weighting: IrlsWeighting::ValueMatched,
        }
    }
}

impl<T: Real> EnergyParams<T> {
    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_weighting(mut self, weighting: IrlsWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn with_lambda_l(mut self, lambda_l: T) -> Self {
        self.lambda_l = lambda_l;
        self
    }

    pub fn with_lambda_k(mut self, lambda_k: T) -> Self {
        self.lambda_k = lambda_k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        let finite = [
            self.alpha,
            self.tau,
            self.lambda_l,
            self.lambda_k,
            self.cg_tol,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("energy parameters"));
        }
        if !(self.alpha > T::zero() && self.alpha <= T::lit(2.0)) {
            return bad(format!("alpha must lie in (0, 2], got {}", self.alpha));
        }
        if self.tau <= T::zero() {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.lambda_l < T::zero() || self.lambda_k < T::zero() {
            return bad("prior weights must be non-negative".into());
        }
        if self.irls_iters == 0 {
            return bad("irls_iters must be at least 1".into());
        }
        if self.cg_tol <= T::zero() {
            return bad("cg_tol must be positive".into());
        }
        if self.noblur_grid < 3 {
            return bad(format!("noblur_grid must be at least 3, got {}", self.noblur_grid));
        }
        Ok(())
    }
}

/// `|x|^alpha` for `|x| >= tau`, `tau^(alpha-2) x^2` below.
#[inline]
pub fn phi<T: Real>(x: T, params: &EnergyParams<T>) -> T {
    let a = x.abs();
    if a >= params.tau {
        a.powf(params.alpha)
    } else {
        params.tau.powf(params.alpha - T::lit(2.0)) * a * a
    }
}

/// Penalty with `tau^(alpha-2)` precomputed, for hot loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Penalty<T> {
    alpha: T,
    tau: T,
    quad: T,
}

impl<T: Real> Penalty<T> {
    pub(crate) fn new(params: &EnergyParams<T>) -> Self {
        Self {
            alpha: params.alpha,
            tau: params.tau,
            quad: params.tau.powf(params.alpha - T::lit(2.0)),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, x: T) -> T {
        let a = x.abs();
        if a >= self.tau {
            a.powf(self.alpha)
        } else {
            self.quad * a * a
        }
    }

    #[inline]
    pub(crate) fn tau(&self) -> T {
        self.tau
    }

    #[inline]
    pub(crate) fn alpha(&self) -> T {
        self.alpha
    }

    #[inline]
    pub(crate) fn quad_coeff(&self) -> T {
        self.quad
    }
}

/// Sum of the penalty over both gradient channels.
pub fn sparsity_prior<T: Real>(g: &GradientImage<T>, params: &EnergyParams<T>) -> T {
    let pen = Penalty::new(params);
    g.channels()
        .iter()
        .flat_map(|ch| ch.data().iter())
        .fold(T::zero(), |acc, &v| acc + pen.eval(v))
}

/// Squared L2 norm of the taps.
pub fn kernel_prior<T: Real>(k: &BlurKernel<T>) -> T {
    k.taps().iter().fold(T::zero(), |acc, &v| acc + v * v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use proptest::prelude::*;

    fn params() -> EnergyParams<f64> {
        EnergyParams::default()
    }

    #[test]
    fn phi_reference_values() {
        let p = params();
        assert_eq!(phi(0.0, &p), 0.0);
        assert!((phi(1.0, &p) - 1.0).abs() < 1e-15);
        // tau^(alpha-2) * x^2 evaluated independently: 0.01^-1.9 * 0.005^2
        let expected = 10f64.powf(3.8) * 2.5e-5;
        assert!((phi(0.005, &p) - expected).abs() < 1e-12);
        assert!((phi(0.005, &p) - 0.157739).abs() < 1e-6);
    }

    #[test]
    fn phi_is_continuous_at_tau() {
        let p = params();
        let eps = 1e-9;
        assert!((phi(0.01 - eps, &p) - phi(0.01 + eps, &p)).abs() < 1e-6);
    }

    #[test]
    fn validate_rejects_out_of_range() {
        assert!(params().validate().is_ok());
        assert!(params().with_alpha(0.0).validate().is_err());
        assert!(params().with_alpha(2.5).validate().is_err());
        assert!(params().with_lambda_l(-1.0).validate().is_err());
        let mut p = params();
        p.noblur_grid = 2;
        assert!(p.validate().is_err());
        p = params();
        p.tau = 0.0;
        assert!(p.validate().is_err());
        p = params();
        p.irls_iters = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sparsity_prior_examples() {
        let p = params();
        assert_eq!(sparsity_prior(&GradientImage::<f64>::zeros(4, 4), &p), 0.0);
        let mut gx = Image::zeros(4, 4);
        gx.set(2, 1, 1.0);
        let g = GradientImage::new(gx, Image::zeros(4, 4)).unwrap();
        assert!((sparsity_prior(&g, &p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sparsity_prior_matches_loop() {
        let vals: Vec<f64> = (0..32)
            .map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.013)
            .collect();
        let gx = Image::new(4, 4, vals[..16].to_vec()).unwrap();
        let gy = Image::new(4, 4, vals[16..].to_vec()).unwrap();
        let g = GradientImage::new(gx, gy).unwrap();
        let p = params();
        let mut oracle = 0.0;
        for &v in &vals {
            let a: f64 = v.abs();
            oracle += if a >= 0.01 { a.powf(0.1) } else { 0.01f64.powf(-1.9) * a * a };
        }
        assert!((sparsity_prior(&g, &p) - oracle).abs() < 1e-12);
    }

    #[test]
    fn kernel_prior_examples() {
        let d = BlurKernel::<f64>::delta(3, 3);
        assert_eq!(kernel_prior(&d), 1.0);
        let n = 9;
        let u = BlurKernel::new(n, 1, vec![1.0 / n as f64; n]).unwrap();
        assert!((kernel_prior(&u) - 1.0 / n as f64).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn phi_even_and_monotone(x in 0.0f64..3.0, y in 0.0f64..3.0) {
            let p = params();
            prop_assert_eq!(phi(x, &p), phi(-x, &p));
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(phi(lo, &p) <= phi(hi, &p));
        }

        #[test]
        fn phi_concave_above_tau(a in 0.01f64..5.0, b in 0.01f64..5.0, alpha in 0.05f64..=1.0) {
            let p = params().with_alpha(alpha);
            let mid = phi((a + b) / 2.0, &p);
            prop_assert!(mid >= (phi(a, &p) + phi(b, &p)) / 2.0 - 1e-12);
        }

        #[test]
        fn sparsity_prior_additive(vals in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let p = params();
            let whole = GradientImage::new(
                Image::new(4, 2, vals[..8].to_vec()).unwrap(),
                Image::new(4, 2, vals[8..].to_vec()).unwrap(),
            ).unwrap();
            let top = whole.crop(0, 0, 4, 1).unwrap();
            let bottom = whole.crop(1, 0, 4, 1).unwrap();
            let sum = sparsity_prior(&top, &p) + sparsity_prior(&bottom, &p);
            prop_assert!((sparsity_prior(&whole, &p) - sum).abs() < 1e-12);
        }
    }
}
