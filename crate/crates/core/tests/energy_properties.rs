//! End-to-end invariants of the energy on random inputs.

use mapdeblur::synthetic::{add_noise, scene, SceneStyle};
use mapdeblur::{
    compare_with_noblur, convolve, energy, energy_noblur_exact, gradients,
    project_kernel, scalar_shrink, BlurKernel, BoundaryPolicy, EnergyParams, GradientImage, Image,
};
use proptest::prelude::*;

fn image(w: usize, h: usize, vals: &[f64]) -> Image<f64> {
    Image::new(w, h, vals[..w * h].to_vec()).unwrap()
}

fn observation(seed: u64, w: usize, h: usize) -> GradientImage<f64> {
    gradients(&add_noise(&scene::<f64>(w, h, SceneStyle::StepRich, seed), 0.01, seed + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_noblur_never_above_irls_delta(seed in 0u64..10_000, lam in 1e-4f64..1e-1) {
        let b = observation(seed, 12, 10);
        let p = EnergyParams::default().with_lambda_l(lam);
        let delta = BlurKernel::delta(1, 1);
        let bp = BoundaryPolicy::for_kernel(&delta);
        let opt = energy_noblur_exact(&b, &p, &bp).unwrap().breakdown.total;
        let irls = energy(&delta, &b, &p, &bp).unwrap().breakdown.total;
        prop_assert!(opt <= irls + 1e-9, "{} > {}", opt, irls);
    }

    #[test]
    fn shrinkage_is_odd_and_between_zero_and_input(x in -2.0f64..2.0) {
        let p = EnergyParams::default();
        let s = scalar_shrink(x, &p);
        prop_assert!((s + scalar_shrink(-x, &p)).abs() <= 1e-12);
        prop_assert!(s * x >= 0.0);
        prop_assert!(s.abs() <= x.abs() + 1e-12);
    }

    #[test]
    fn breakdown_recomposes(seed in 0u64..10_000, len in 0usize..4) {
        let b = observation(seed, 16, 14);
        let k = BlurKernel::horizontal_box(2 * len + 1).unwrap();
        let p = EnergyParams::default();
        let e = energy(&k, &b, &p, &BoundaryPolicy::for_kernel(&k)).unwrap().breakdown;
        let direct = e.data + p.lambda_l * e.sparsity + p.lambda_k * e.kernel_prior;
        prop_assert!((e.total - direct).abs() <= 1e-9 * e.total.abs().max(1.0));
        prop_assert!(e.recomposition_error(&p) <= 1e-9);
    }

    #[test]
    fn comparison_shares_one_interior(seed in 0u64..10_000) {
        let b = observation(seed, 16, 16);
        let k = BlurKernel::new(3, 3, vec![0.0, 0.1, 0.0, 0.1, 0.6, 0.1, 0.0, 0.1, 0.0]).unwrap();
        let p = EnergyParams::default();
        let c = compare_with_noblur(&k, &b, &p, true).unwrap();
        let bp = BoundaryPolicy::for_kernel(&k);
        let alone = energy(&k, &b, &p, &bp).unwrap().breakdown.total;
        let opt = energy_noblur_exact(&b, &p, &bp).unwrap().breakdown.total;
        prop_assert_eq!(c.kernel.breakdown.total, alone);
        prop_assert_eq!(c.energy_ratio(), alone / opt);
        let irls = c.delta_irls.unwrap().breakdown.total;
        prop_assert!(opt <= irls + 1e-9);
    }

    #[test]
    fn projected_kernels_are_on_the_simplex(vals in prop::collection::vec(-1.0f64..1.0, 9)) {
        prop_assume!(vals.iter().any(|v| *v > 1e-6));
        let k = project_kernel(&BlurKernel::new(3, 3, vals).unwrap());
        prop_assert!(k.taps().iter().all(|t| *t >= 0.0));
        prop_assert!((k.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn delta_convolution_is_identity(vals in prop::collection::vec(-1.0f64..1.0, 30)) {
        let x = image(6, 5, &vals);
        let y = convolve(&x, &BlurKernel::delta(3, 3)).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn convolution_preserves_mass_for_unit_kernels(vals in prop::collection::vec(0.01f64..1.0, 9)) {
        // a constant image stays constant away from the border
        let ones = Image::filled(8, 8, 1.0f64);
        let k = project_kernel(&BlurKernel::new(3, 3, vals).unwrap());
        let y = convolve(&ones, &k).unwrap();
        for r in 1..7 {
            for c in 1..7 {
                prop_assert!((y.get(r, c) - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn f32_and_f64_energies_agree() {
    let b64 = observation(9, 16, 16);
    let b32 = b64.cast::<f32>();
    let k64 = BlurKernel::horizontal_box(3).unwrap();
    let k32 = k64.cast::<f32>();
    let e64 = energy(&k64, &b64, &EnergyParams::default(), &BoundaryPolicy::for_kernel(&k64))
        .unwrap()
        .breakdown
        .total;
    let e32 = energy(&k32, &b32, &EnergyParams::default(), &BoundaryPolicy::for_kernel(&k32))
        .unwrap()
        .breakdown
        .total;
    assert!(((e32 as f64) - e64).abs() <= 1e-3 * e64, "{e32} vs {e64}");
}
